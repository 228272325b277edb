//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion not listed in `KNOWN_UNATTAINABLE`
//! fails.

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use virtual_levels::bands::SyntheticDispersion;
use virtual_levels::birman_schwinger::{indefinite_split, BirmanSchwinger, BranchTable, LineFit};
use virtual_levels::config::RunConfig;
use virtual_levels::edge_model::gram_and_nu;
use virtual_levels::edge_model::weighted_blochs;
use virtual_levels::fiber::{cutoff_convergence, time_reversal_check, PlaneWaveBasis};
use virtual_levels::green::green_check;
use virtual_levels::lattice::{MomentumGrid, PerturbationSpec, PotentialSpec};
use virtual_levels::oracle::eigenfunction_compare;
use virtual_levels::predictor::{lieb_thirring_sum_degenerate, threshold_verdict, Law};
use virtual_levels::radial::{radial_levels, RadialOptions};
use virtual_levels::workflow::{self, Comparison, CouplingRun, EdgeModel, EdgeSetup};
use virtual_levels::{Error, Result};

/// Criteria that cannot be met as stated; see the decisions notes.
const KNOWN_UNATTAINABLE: &[usize] = &[];

fn config(name: &str) -> RunConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    RunConfig::from_path(&p).unwrap()
}

struct Pipeline {
    cfg: RunConfig,
    setup: EdgeSetup,
    model: EdgeModel,
    cmp: Comparison,
    runs: Vec<CouplingRun>,
    seconds: f64,
}

fn pipeline(cfg: RunConfig, with_vectors: bool) -> Result<Pipeline> {
    let t = Instant::now();
    let problem = cfg.problem()?;
    let (cmp, runs) = workflow::compare_runs(&cfg, &problem, with_vectors)?;
    let seconds = t.elapsed().as_secs_f64();
    let setup = workflow::edge_setup(&cfg, &problem)?;
    let model = workflow::edge_model(&cfg, &problem, &setup)?;
    Ok(Pipeline {
        cfg,
        setup,
        model,
        cmp,
        runs,
        seconds,
    })
}

fn lift(r: &Result<Pipeline>) -> Result<&Pipeline> {
    r.as_ref().map_err(|e| Error::InvalidInput(format!("pipeline failed: {e}")))
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn ratio_ok(r: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&r)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Depth of the deepest level below the box edge: oracle and pencil.
fn depths(run: &CouplingRun) -> (f64, f64) {
    let edge = run.boxed.gap.lambda_plus;
    let oracle = run.oracle.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let pencil = run.pencil.roots.iter().fold(f64::INFINITY, |m, r| m.min(r.lambda));
    (edge - oracle, edge - pencil)
}

/// Shallow-law check shared by the two d = 1 configurations.
fn shallow_law(p: &Pipeline, budget: f64) -> Result<Verdict> {
    let mut errs = Vec::new();
    let mut errs_pencil = Vec::new();
    for run in &p.runs {
        let pred = run.prediction.depths[0];
        let (orc, pen) = depths(run);
        errs.push((pred - orc) / orc);
        errs_pencil.push((pred - pen) / pen);
    }
    let last = errs.last().unwrap().abs();
    let last_pencil = errs_pencil.last().unwrap().abs();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let ratios_ok = ratios.iter().all(|r| ratio_ok(*r, 1.4, 2.6));
    let pass = last <= 0.08 && last_pencil <= 0.08 && ratios_ok && p.seconds <= budget;
    verdict(
        pass,
        format!(
            "rel err vs oracle {} (pencil {}), ratios {}, {:.1} s (budget {budget} s)",
            fmt_list(&errs),
            fmt_list(&errs_pencil),
            fmt_list(&ratios),
            p.seconds
        ),
    )
}

fn criterion_3(d2: &Pipeline) -> Result<Verdict> {
    let t = Instant::now();
    let EdgeModel::NonDegenerate(m) = &d2.model else {
        return Err(Error::InvalidInput("d = 2 edge should be non-degenerate".into()));
    };
    let w = d2.cfg.require_perturbation()?;
    let nu1 = m.nu[0];
    let target = 2.0 * std::f64::consts::PI / nu1;
    let half_integral = w.integrals().integral / 2.0;
    let mut errs = Vec::new();
    for g in [-0.4, -0.2, -0.1] {
        let lv = radial_levels(2, &w, g, 0, &RadialOptions::default())?;
        let depth = -lv.values[0];
        let c = g.abs() * (1.0 / depth).ln();
        errs.push((c - target).abs() / target);
    }
    let improving = errs.windows(2).all(|p| p[1] < p[0]);
    let secs = t.elapsed().as_secs_f64();
    let pass = errs[0] <= 0.15 && improving && secs <= 1200.0;
    verdict(
        pass,
        format!(
            "nu1 {nu1:.6} (int W / 2 = {half_integral:.6}), |gamma| ln(1/depth) vs 2pi/nu1 rel err {}, {secs:.1} s",
            fmt_list(&errs)
        ),
    )
}

fn criterion_4(pipes: &[&Pipeline]) -> Result<Verdict> {
    let mut pairs = 0;
    let mut worst = 0.0f64;
    let mut kernel_ok = true;
    for p in pipes {
        for r in &p.cmp.rows {
            if let (Some(a), Some(b)) = (r.rho_pencil, r.rho_oracle) {
                pairs += 1;
                worst = worst.max((a - b).abs());
                kernel_ok &= r.kernel_dimension == r.oracle_multiplicity;
            }
        }
        kernel_ok &= p.cmp.verdict.counts_match;
    }
    verdict(
        pairs >= 10 && worst <= 1e-8 && kernel_ok,
        format!("{pairs} pairs, max |pencil - oracle| {worst:.3e}, kernel dimensions match: {kernel_ok}"),
    )
}

/// Fit window of one decade in which the periodic box reproduces the
/// whole-line resolvent: `2 kappa L >= 20` with `kappa = sqrt(2 m delta)`.
fn resolved_decade(run: &CouplingRun, mass: f64) -> (f64, f64) {
    let l = run.boxed.h0.grid().half_width as f64;
    let lo = (10.0 / l).powi(2) / (2.0 * mass);
    (lo, 10.0 * lo)
}

fn deepest_run(p: &Pipeline) -> &CouplingRun {
    // smallest |gamma| has the largest box
    p.runs.iter().min_by(|a, b| a.gamma.abs().total_cmp(&b.gamma.abs())).unwrap()
}

fn criterion_5(d1: &[&Pipeline], d2: &Pipeline) -> Result<Verdict> {
    let tables: Vec<&BranchTable> = d1
        .iter()
        .chain(std::iter::once(&d2))
        .flat_map(|p| p.runs.iter().map(|r| &r.pencil.table))
        .collect();
    let defect = tables.iter().map(|t| t.monotonicity_defect()).fold(0.0, f64::max);
    let mut slopes = Vec::new();
    for p in d1 {
        let run = deepest_run(p);
        let (lo, hi) = resolved_decade(run, p.model.min_mass(&p.setup.edge));
        let fit: LineFit = run
            .pencil
            .table
            .divergence_exponent(1, lo, hi)
            .ok_or_else(|| Error::InvalidInput("no samples in the fit decade".into()))?;
        slopes.push((fit.slope, fit.points));
    }
    let run = deepest_run(d2);
    let (lo, hi) = resolved_decade(run, d2.model.min_mass(&d2.setup.edge));
    let log = run
        .pencil
        .table
        .log_fit(1, lo, hi)
        .ok_or_else(|| Error::InvalidInput("no samples in the d = 2 fit decade".into()))?;
    let slopes_ok = slopes.iter().all(|(s, n)| (s + 0.5).abs() <= 0.025 && *n >= 3);
    let pass = defect <= 1e-9 && slopes_ok && log.r_squared >= 0.999 && log.points >= 3;
    verdict(
        pass,
        format!(
            "monotonicity defect {defect:.2e}, d=1 slopes {:?}, d=2 log-fit R^2 {:.6} over [{lo:.3e}, {hi:.3e}] ({} pts)",
            slopes.iter().map(|(s, n)| format!("{s:.4} ({n} pts)")).collect::<Vec<_>>(),
            log.r_squared,
            log.points
        ),
    )
}

fn criterion_6(mathieu: &Pipeline) -> Result<Verdict> {
    // (i) definite W, gamma < 0: only levels near the upper edge
    let mut far = 0;
    for run in &mathieu.runs {
        let gap = run.boxed.gap;
        let lo = gap.lambda_plus - 0.1 * gap.width();
        far += run.oracle.values.iter().filter(|v| **v < lo).count();
    }
    // d = 3 free, int W = 1: sector counts under h and wall refinement
    let amp = (2.0 * std::f64::consts::PI).powf(-1.5);
    let w3 = PerturbationSpec::gaussian(vec![0.0; 3], 1.0, amp);
    let base = RadialOptions {
        h: 1.0 / 32.0,
        outer_radius: 1e3,
        ..Default::default()
    };
    let variants = [
        base,
        base.refined(),
        RadialOptions {
            outer_radius: 1e5,
            ..base
        },
    ];
    let mut free_count = 0;
    for g in [-0.05, -0.025] {
        for o in &variants {
            free_count += radial_levels(3, &w3, g, 0, o)?.values.len();
        }
    }
    let free3 = RunConfig::from_json(&format!(
        r#"{{"schema_version": 1, "dimension": 3,
            "perturbation": {{"kind": "gaussian", "terms": [{{"shape": "gaussian", "center": [0, 0, 0], "sigma": 1.0, "amplitude": {amp}}}]}},
            "bands": {{"n_bands": 1, "grid": 4}}, "edge": {{"gap": 0}}}}"#
    ))?;
    let free_setup = workflow::edge_setup(&free3, &free3.problem()?)?;
    let free_threshold = threshold_verdict(&free_setup.edge, &w3)?;

    // codim-3 symbol: the only sub-edge level is the box constant mode,
    // with depth |gamma| int W / |box| to leading order
    let sd = SyntheticDispersion::Quadratic {
        coefficients: [1.0, 0.5, 2.0],
        dim: 3,
    };
    let synth = RunConfig::from_json(&format!(
        r#"{{"schema_version": 1, "dimension": 3, "symbol": {},
            "perturbation": {{"kind": "gaussian", "terms": [{{"shape": "gaussian", "center": [0, 0, 0], "sigma": 1.0, "amplitude": {amp}}}]}},
            "discretization": {{"per_unit": 2, "half_width_min": 6}}}}"#,
        serde_json::to_string(&sd).unwrap()
    ))?;
    let problem = synth.problem()?;
    let setup = workflow::edge_setup(&synth, &problem)?;
    let synth_threshold = threshold_verdict(&setup.edge, &w3)?;
    let mut scaled = Vec::new();
    let mut synth_counts = Vec::new();
    for l in [6usize, 12] {
        let (h0, gap) = workflow::box_at(&synth, &problem, &setup, l)?;
        let samples = h0.sample_w(&w3)?;
        let integral: f64 = samples.iter().sum::<f64>() * h0.grid().cell_measure();
        let volume = (2.0 * l as f64).powi(3);
        for g in [-0.05, -0.025] {
            let r = virtual_levels::oracle::gap_spectrum_sampled(
                &h0,
                &samples,
                &gap,
                g,
                workflow::oracle_window(&gap, &w3, g),
                false,
            )?;
            synth_counts.push(r.values.len());
            if let Some(v) = r.values.first() {
                scaled.push((gap.lambda_plus - v) * volume / (g.abs() * integral));
            }
        }
    }
    let artifact_only = synth_counts.iter().all(|c| *c == 1) && scaled.iter().all(|s| (s - 1.0).abs() <= 0.1);
    let pass = far == 0
        && free_count == 0
        && free_threshold.no_virtuals_for_small_gamma
        && synth_threshold.no_virtuals_for_small_gamma
        && artifact_only;
    verdict(
        pass,
        format!(
            "levels beyond 10% of gap from edge: {far}; d=3 free sector levels: {free_count}; \
             codim-3 box levels per run {synth_counts:?} with depth*|box|/(|gamma| int W) {}",
            fmt_list(&scaled)
        ),
    )
}

fn criterion_7() -> Result<Verdict> {
    let t = Instant::now();
    let cfg = config("circle_model.json");
    let problem = cfg.problem()?;
    let w = cfg.require_perturbation()?;
    let setup = workflow::edge_setup(&cfg, &problem)?;
    let EdgeModel::Degenerate(model) = workflow::edge_model(&cfg, &problem, &setup)? else {
        return Err(Error::InvalidInput("circle edge should be Morse-Bott".into()));
    };
    let edge = setup.gap.lambda_plus;
    let gammas = cfg.require_couplings()?.to_vec();
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for &g in &gammas {
        let spec = workflow::sector_oracle(&problem, &w, g)?;
        levels.push(
            spec.iter()
                .flat_map(|(v, d)| std::iter::repeat_n(edge - v, *d))
                .collect(),
        );
    }
    let count = levels[0].len();
    let n_fit = 5.min(count);
    let mut exponents = Vec::new();
    for n in 0..n_fit {
        let pts: Vec<(f64, f64)> = gammas
            .iter()
            .zip(&levels)
            .filter(|(_, l)| l.len() > n)
            .map(|(g, l)| (g.abs().ln(), l[n].ln()))
            .collect();
        exponents.push(LineFit::new(&pts).map_or(f64::NAN, |f| f.slope));
    }
    let smallest = levels.last().unwrap();
    let nu = &model.nu;
    let ratio_errs: Vec<f64> = (1..n_fit)
        .map(|n| (smallest[n] / smallest[0]) / (nu[n] / nu[0]).powi(2) - 1.0)
        .collect();
    let law = Law::DegeneratePsi {
        dim: model.dim,
        codim: model.codim,
    };
    let lt_errs: Vec<f64> = gammas
        .iter()
        .zip(&levels)
        .map(|(g, l)| {
            let sum: f64 = l.iter().map(|d| law.transform(*d, model.calibration)).sum();
            sum / lieb_thirring_sum_degenerate(&model, *g) - 1.0
        })
        .collect();
    let lt_approach = lt_errs.windows(2).all(|p| p[1].abs() < p[0].abs());
    let secs = t.elapsed().as_secs_f64();
    let pass = count >= 5
        && exponents.iter().all(|e| (e - 2.0).abs() <= 0.15)
        && ratio_errs.iter().all(|e| e.abs() <= 0.2)
        && lt_errs.last().unwrap().abs() <= 0.15
        && lt_approach
        && secs <= 1800.0;
    verdict(
        pass,
        format!(
            "{count} levels at gamma {}; exponents {}; depth-ratio errs {}; LT rel errs {}; {secs:.1} s",
            gammas[0],
            fmt_list(&exponents),
            fmt_list(&ratio_errs),
            fmt_list(&lt_errs)
        ),
    )
}

fn eigen_deviations(p: &Pipeline) -> Result<Vec<f64>> {
    let EdgeModel::NonDegenerate(m) = &p.model else {
        return Err(Error::InvalidInput("non-degenerate edge expected".into()));
    };
    let w = p.cfg.require_perturbation()?;
    let mut out = Vec::new();
    for run in &p.runs {
        let h0 = &run.boxed.h0;
        let samples = h0.sample_w(&w)?;
        // the deepest level is the first (ascending) oracle vector
        let vecs = &run.oracle.vectors[..1];
        let table = eigenfunction_compare(h0, &samples, vecs, &|k, x| m.bloch_part(k, x), &[vec![0]]);
        out.push(table.rows[0].deviation);
    }
    Ok(out)
}

fn criterion_8(free: &Pipeline, mathieu: &Pipeline) -> Result<Verdict> {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, p) in [("free", free), ("mathieu", mathieu)] {
        let d = eigen_deviations(p)?;
        let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
        pass &= ratios.iter().all(|r| ratio_ok(*r, 1.4, 2.6));
        detail.push(format!("{name}: deviations {} ratios {}", fmt_list(&d), fmt_list(&ratios)));
    }
    verdict(pass, detail.join("; "))
}

fn criterion_9() -> Result<Verdict> {
    let cfg = config("d1_signed.json");
    let problem = cfg.problem()?;
    let w = cfg.require_perturbation()?;
    let setup = workflow::edge_setup(&cfg, &problem)?;
    let model = workflow::edge_model(&cfg, &problem, &setup)?;
    let mut residual = 0.0f64;
    let mut clusters = Vec::new();
    for &g in cfg.require_couplings()? {
        let b = workflow::box_setup(&cfg, &problem, &setup, &model, g)?;
        let bs = BirmanSchwinger::new(&b.h0, &w, b.gap)?;
        for lambda in workflow::pencil_lambdas(&cfg, &b.gap).into_iter().step_by(5) {
            residual = residual.max(indefinite_split(&bs, lambda)?.relative_residual);
        }
        let r = workflow::oracle(&b, &w, g, false)?;
        clusters.push(r.clusters.iter().map(|c| c.1).collect::<Vec<_>>());
    }
    let simple = clusters.iter().all(|c| !c.is_empty() && c.iter().all(|m| *m == 1));
    verdict(
        residual <= 1e-8 && simple,
        format!("relative split residual {residual:.2e}, near-edge multiplicities per gamma {clusters:?}"),
    )
}

fn criterion_10() -> Result<Verdict> {
    let t = Instant::now();
    let report = green_check()?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    verdict(
        report.all_pass() && secs <= 60.0,
        format!("{} checks, failed {failed:?}, {secs:.2} s", report.checks.len()),
    )
}

fn criterion_11(pipes: &[&Pipeline]) -> Result<Verdict> {
    let mathieu = PotentialSpec::mathieu(1.0);
    let v2 = PotentialSpec::cosine_sum(2, &[(vec![1, 0], 0.5), (vec![0, 1], 0.5), (vec![1, 1], 0.3)])?;
    let mut tr = 0.0f64;
    let mut cut = 0.0f64;
    for v in [&mathieu, &v2] {
        let dim = v.dim();
        let grid = MomentumGrid::uniform(dim, 8)?;
        let pts = grid.points();
        let cutoff = virtual_levels::fiber::default_cutoff(dim).max(v.max_frequency());
        let basis = PlaneWaveBasis::new(dim, cutoff)?;
        tr = tr.max(time_reversal_check(v, &basis, &pts, 4)?);
        cut = cut.max(cutoff_convergence(v, cutoff, &pts, 4)?);
    }
    let mut gram_min = f64::INFINITY;
    let mut phase = 0.0f64;
    for p in pipes {
        let EdgeModel::NonDegenerate(m) = &p.model else { continue };
        let ev = m.gram.clone().symmetric_eigenvalues();
        gram_min = gram_min.min(ev.iter().cloned().fold(f64::INFINITY, f64::min));
        let w = p.cfg.require_perturbation()?;
        let vs = weighted_blochs(&p.setup.edge, &w)?;
        let turned: Vec<_> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| v.rephased(Complex64::from_polar(1.0, 0.7 + 1.3 * i as f64)))
            .collect();
        let again = gram_and_nu(&p.setup.edge, &turned, &w)?;
        for (a, b) in m.nu.iter().zip(&again.nu) {
            phase = phase.max((a - b).abs());
        }
    }
    verdict(
        tr <= 1e-10 && cut <= 1e-8 && gram_min > 0.0 && phase <= 1e-12,
        format!("time reversal {tr:.2e}, cutoff convergence {cut:.2e}, min Gram eigenvalue {gram_min:.4e}, phase change of nu {phase:.2e}"),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, Result<Verdict>)> = Vec::new();

    let free = pipeline(config("d1_free_box.json"), true);
    let mathieu = pipeline(config("d1_mathieu.json"), true);
    let d2 = pipeline(config("d2_free_gaussian.json"), false);
    let mut extra_cfg = config("d1_free_box.json");
    extra_cfg.couplings = vec![-0.8, -0.4];
    let extra = pipeline(extra_cfg, false);


    results.push((1, lift(&free).and_then(|p| shallow_law(p, 60.0))));
    results.push((2, lift(&mathieu).and_then(|p| shallow_law(p, 300.0))));
    results.push((3, lift(&d2).and_then(criterion_3)));
    results.push((
        4,
        (|| criterion_4(&[lift(&free)?, lift(&extra)?, lift(&mathieu)?, lift(&d2)?]))(),
    ));
    results.push((5, (|| criterion_5(&[lift(&free)?, lift(&mathieu)?], lift(&d2)?))()));
    results.push((6, lift(&mathieu).and_then(criterion_6)));
    results.push((7, criterion_7()));
    results.push((8, (|| criterion_8(lift(&free)?, lift(&mathieu)?))()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));
    results.push((11, (|| criterion_11(&[lift(&free)?, lift(&mathieu)?, lift(&d2)?]))()));

    let mut unexpected = Vec::new();
    for (n, r) in &results {
        let (pass, detail) = match r {
            Ok(v) => (v.pass, v.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {tag} | {detail}");
        if !pass && !KNOWN_UNATTAINABLE.contains(n) {
            unexpected.push(*n);
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
