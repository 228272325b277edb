//! The `vlevels` command-line tool: subcommands, artifact files and the run
//! manifest. Exit codes: 0 success, 2 configuration error, 3 failed
//! numerical verification, 1 anything else (I/O).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bands::{find_gaps, refine_edge, EdgeSide, GapEdge};
use crate::config::{OracleMethod, Problem, RunConfig};
use crate::error::{Error, Result};
use crate::green::green_check;
use crate::workflow::{self, EdgeModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vlevels", version, about = "Impurity levels in spectral gaps of periodic Schrödinger operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts and the manifest.
    #[arg(long, global = true, default_value = "vlevels-out")]
    pub out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Band functions on the quasi-momentum grid.
    Bands,
    /// Open gaps and their refined edges.
    Gap,
    /// Extrema, effective masses and the weighted Gram spectrum of one edge.
    Edge,
    /// Leading-order level positions for each coupling.
    Predict,
    /// Characteristic branches and pencil roots on the box.
    Pencil,
    /// Direct eigenvalues of the perturbed box operator in the gap.
    Oracle,
    /// Prediction, pencil and oracle side by side, with a verdict.
    Compare,
    /// Invariants of the free Green function and lattice sums.
    GreenCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Gap => "gap",
            Command::Edge => "edge",
            Command::Predict => "predict",
            Command::Pencil => "pencil",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
            Command::GreenCheck => "green-check",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::NonHermitianPotential(_) | Error::Unsupported(_) | Error::Json(_) => {
            EXIT_CONFIG
        }
        Error::Io(_) => EXIT_OTHER,
        _ => EXIT_VERIFICATION,
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Default)]
struct Run {
    outputs: Vec<String>,
    timings: Vec<(String, f64)>,
    calibration: Option<f64>,
    /// Set when the command finished but a verification it reports failed.
    failed_check: Option<String>,
}

impl Run {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f();
        self.timings.push((name.to_string(), t.elapsed().as_secs_f64()));
        r
    }

    fn write_csv(&mut self, out: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = out.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(out.join(name), text + "\n")?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let started = Instant::now();
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_OTHER;
        }
    };
    let config_bytes = match &cli.config {
        Some(p) => std::fs::read(p).ok(),
        None => None,
    };
    let mut run = Run::default();
    let result = pool.install(|| execute(cli, &mut run));
    let (code, error) = match &result {
        Ok(()) => match &run.failed_check {
            None => (EXIT_OK, None),
            Some(msg) => (EXIT_VERIFICATION, Some(msg.clone())),
        },
        Err(e) => (exit_code(e), Some(e.to_string())),
    };
    if let Some(msg) = &error {
        eprintln!("error: {msg}");
    }
    let manifest = json!({
        "tool": "vlevels",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config_path": cli.config.as_ref().map(|p| p.display().to_string()),
        "inputs_sha256": hex::encode(Sha256::digest(config_bytes.as_deref().unwrap_or_default())),
        "threads": pool.current_num_threads(),
        "timings_s": {
            "total": started.elapsed().as_secs_f64(),
            "stages": run.timings.iter().map(|(k, v)| json!({"stage": k, "seconds": v})).collect::<Vec<Value>>(),
        },
        "calibration_factor": run.calibration.unwrap_or(1.0),
        "outputs": run.outputs,
        "exit_code": code,
        "error": error,
    });
    if std::fs::create_dir_all(&cli.out).is_ok() {
        let text = serde_json::to_string_pretty(&manifest).unwrap_or_default();
        if let Err(e) = std::fs::write(cli.out.join("manifest.json"), text + "\n") {
            eprintln!("warning: cannot write manifest: {e}");
        }
    }
    code
}

fn load(cli: &Cli) -> Result<(RunConfig, Problem)> {
    let Some(path) = &cli.config else {
        return Err(Error::Config {
            pointer: "/".into(),
            message: format!("`{}` needs --config", cli.command.name()),
        });
    };
    let cfg = RunConfig::from_path(path)?;
    let problem = cfg.problem()?;
    Ok((cfg, problem))
}

fn execute(cli: &Cli, run: &mut Run) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    if cli.command == Command::GreenCheck {
        if let Some(path) = &cli.config {
            // validated for consistency even though no key is used
            RunConfig::from_path(path)?;
        }
        let report = run.stage("green_check", green_check)?;
        run.write_json(out, "green_check.json", &json!({"pass": report.all_pass(), "checks": report.checks}))?;
        if !report.all_pass() {
            run.failed_check = Some("green-function invariants failed".into());
        }
        return Ok(());
    }
    let (cfg, problem) = load(cli)?;
    match cli.command {
        Command::Bands => {
            let bs = run.stage("bands", || workflow::bands(&cfg, &problem))?;
            let d = bs.dim();
            let mut header: Vec<String> = (1..=d).map(|a| format!("p_{a}")).collect();
            header.extend((1..=bs.n_bands()).map(|n| format!("lambda_{n}")));
            let rows: Vec<Vec<String>> = (0..bs.grid.len())
                .map(|i| {
                    let mut r: Vec<String> = bs.grid.point(i).into_iter().map(fmt_f64).collect();
                    r.extend(bs.values[i].iter().map(|v| fmt_f64(*v)));
                    r
                })
                .collect();
            run.write_csv(out, "bands.csv", &header, &rows)?;
        }
        Command::Gap => {
            let bs = run.stage("bands", || workflow::bands(&cfg, &problem))?;
            let gaps = find_gaps(&bs, cfg.edge.tolerances.gap_tol);
            let list = run.stage("edges", || {
                Ok(gaps
                    .iter()
                    .map(|g| {
                        let edge_json = |side: EdgeSide| match refine_edge(&bs, g, side, &cfg.edge.tolerances) {
                            Ok(e) => edge_summary(&e),
                            Err(e) => json!({"error": e.to_string()}),
                        };
                        json!({
                            "j": g.j,
                            "lambda_minus": g.lambda_minus,
                            "lambda_plus": g.lambda_plus,
                            "width": g.lambda_minus.map(|_| g.width()),
                            "edges": {
                                "lower": g.lambda_minus.map(|_| edge_json(EdgeSide::Lower)),
                                "upper": edge_json(EdgeSide::Upper),
                            },
                        })
                    })
                    .collect::<Vec<Value>>())
            })?;
            run.write_json(out, "gaps.json", &json!({"gaps": list}))?;
        }
        Command::Edge => {
            let setup = run.stage("edge", || workflow::edge_setup(&cfg, &problem))?;
            let model = run.stage("model", || workflow::edge_model(&cfg, &problem, &setup))?;
            run.calibration = Some(model.calibration());
            let body = match &model {
                EdgeModel::NonDegenerate(m) => json!({
                    "class": setup.edge.classify(),
                    "edge_value": m.edge_value,
                    "extrema": m.extrema,
                    "masses": m.masses,
                    "norms_sq": m.norms_sq,
                    "nu": m.nu,
                    "gram_condition_number": m.gram_condition_number,
                }),
                EdgeModel::Degenerate(m) => json!({
                    "class": setup.edge.classify(),
                    "edge_value": m.edge_value,
                    "codim": m.codim,
                    "nu": m.nu,
                    "trace_eigen": m.trace_eigen,
                    "trace_analytic": m.trace_analytic,
                    "calibration": m.calibration,
                    "sample_refinement": m.sample_refinement,
                }),
                EdgeModel::Indefinite { min_mass } => json!({
                    "class": setup.edge.classify(),
                    "edge_value": setup.edge.value,
                    "indefinite": true,
                    "min_mass": min_mass,
                }),
            };
            run.write_json(out, "edge.json", &body)?;
        }
        Command::Predict => {
            let gammas = cfg.require_couplings()?.to_vec();
            let setup = run.stage("edge", || workflow::edge_setup(&cfg, &problem))?;
            let model = run.stage("model", || workflow::edge_model(&cfg, &problem, &setup))?;
            run.calibration = Some(model.calibration());
            let verdict = workflow::threshold(&cfg, &setup)?;
            let mut rows = Vec::new();
            for &g in &gammas {
                let p = workflow::predict(&setup, &model, g)?;
                for (k, rho) in p.rho.iter().enumerate() {
                    rows.push(vec![
                        fmt_f64(g),
                        (k + 1).to_string(),
                        fmt_f64(*rho),
                        p.law.name().to_string(),
                        fmt_opt(p.validity_radius),
                    ]);
                }
            }
            let header = ["gamma", "k", "rho_pred", "law", "validity_radius"].map(String::from);
            run.write_csv(out, "predict.csv", &header, &rows)?;
            run.write_json(out, "threshold.json", &verdict)?;
        }
        Command::Pencil => {
            let w = cfg.require_perturbation()?;
            let gammas = cfg.require_couplings()?.to_vec();
            let setup = run.stage("edge", || workflow::edge_setup(&cfg, &problem))?;
            let model = run.stage("model", || workflow::edge_model(&cfg, &problem, &setup))?;
            run.calibration = Some(model.calibration());
            let mut root_rows = Vec::new();
            let mut max_roots = 0;
            for (i, &g) in gammas.iter().enumerate() {
                let b = run.stage("box", || workflow::box_setup(&cfg, &problem, &setup, &model, g))?;
                let p = run.stage("pencil", || workflow::pencil(&cfg, &b, &w, g))?;
                let np = cfg.pencil.n_positive;
                let nn = cfg.pencil.n_negative;
                let mut header = vec!["lambda".to_string()];
                header.extend((1..=np).map(|k| format!("mu_{k}")));
                header.extend((1..=nn).map(|k| format!("mu_neg_{k}")));
                let rows: Vec<Vec<String>> = p
                    .table
                    .lambdas
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let mut r = vec![fmt_f64(*l)];
                        r.extend((0..np).map(|k| fmt_opt(p.table.positive[j].get(k).copied())));
                        r.extend((0..nn).map(|k| fmt_opt(p.table.negative[j].get(k).copied())));
                        r
                    })
                    .collect();
                run.write_csv(out, &format!("branches_{}.csv", i + 1), &header, &rows)?;
                max_roots = max_roots.max(p.roots.len());
                let mut r = vec![fmt_f64(g)];
                r.extend(p.roots.iter().map(|x| fmt_f64(x.lambda)));
                root_rows.push(r);
            }
            let mut header = vec!["gamma".to_string()];
            header.extend((1..=max_roots).map(|k| format!("rho_{k}")));
            for r in &mut root_rows {
                r.resize(max_roots + 1, String::new());
            }
            run.write_csv(out, "roots.csv", &header, &root_rows)?;
        }
        Command::Oracle => {
            let w = cfg.require_perturbation()?;
            let gammas = cfg.require_couplings()?.to_vec();
            let setup = run.stage("edge", || workflow::edge_setup(&cfg, &problem))?;
            let model = run.stage("model", || workflow::edge_model(&cfg, &problem, &setup))?;
            run.calibration = Some(model.calibration());
            let mut rows = Vec::new();
            let mut runs = Vec::new();
            for &g in &gammas {
                if cfg.discretization.oracle == OracleMethod::Sectors {
                    let levels = run.stage("oracle", || workflow::sector_oracle(&problem, &w, g))?;
                    let values = levels.iter().flat_map(|(v, d)| std::iter::repeat_n(*v, *d));
                    for (k, v) in values.enumerate() {
                        rows.push(vec![fmt_f64(g), (k + 1).to_string(), fmt_f64(v)]);
                    }
                    runs.push(json!({
                        "gamma": g,
                        "method": "sectors",
                        "edge": setup.gap.lambda_plus,
                        "levels": levels.iter().map(|(v, d)| json!({"value": v, "degeneracy": d})).collect::<Vec<_>>(),
                    }));
                    continue;
                }
                let b = run.stage("box", || workflow::box_setup(&cfg, &problem, &setup, &model, g))?;
                let r = run.stage("oracle", || workflow::oracle(&b, &w, g, false))?;
                for (k, v) in r.values.iter().enumerate() {
                    rows.push(vec![fmt_f64(g), (k + 1).to_string(), fmt_f64(*v)]);
                }
                runs.push(json!({
                    "gamma": g,
                    "method": "box",
                    "box_gap": b.gap,
                    "half_width_capped": b.half_width_capped,
                    "discretization": r.discretization,
                    "max_residual": r.max_residual,
                    "clusters": r.clusters,
                }));
            }
            let header = ["gamma", "k", "rho_oracle"].map(String::from);
            run.write_csv(out, "oracle.csv", &header, &rows)?;
            run.write_json(out, "oracle.json", &json!({"runs": runs}))?;
        }
        Command::Compare => {
            let cmp = run.stage("compare", || workflow::compare(&cfg, &problem))?;
            let header = [
                "gamma",
                "k",
                "rho_pred",
                "rho_pencil",
                "rho_oracle",
                "rel_err_pred",
                "rel_err_pencil",
            ]
            .map(String::from);
            let rows: Vec<Vec<String>> = cmp
                .rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.gamma),
                        r.k.to_string(),
                        fmt_opt(r.rho_pred),
                        fmt_opt(r.rho_pencil),
                        fmt_opt(r.rho_oracle),
                        fmt_opt(r.rel_err_pred),
                        fmt_opt(r.rel_err_pencil),
                    ]
                })
                .collect();
            run.write_csv(out, "compare.csv", &header, &rows)?;
            run.write_json(out, "verdict.json", &cmp.verdict)?;
            if !cmp.verdict.pass {
                run.failed_check = Some("pencil roots and oracle eigenvalues disagree".into());
            }
        }
        Command::GreenCheck => unreachable!(),
    }
    Ok(())
}

fn edge_summary(e: &GapEdge) -> Value {
    json!({
        "side": e.side,
        "band": e.band,
        "value": e.value,
        "class": e.classify(),
        "extrema": e.extrema().iter().map(|x| json!({
            "p": x.p,
            "value": x.value,
            "mass": x.mass,
            "hessian_eigenvalues": x.hessian_eigenvalues,
            "simple": x.simple,
            "morse": x.morse,
        })).collect::<Vec<Value>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let cfg = Error::Config {
            pointer: "/x".into(),
            message: "bad".into(),
        };
        assert_eq!(exit_code(&cfg), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::DiscreteGap("x".into())), EXIT_VERIFICATION);
        assert_eq!(exit_code(&Error::LinearSolve("x".into())), EXIT_VERIFICATION);
    }

    #[test]
    fn subcommands_parse() {
        for name in ["bands", "gap", "edge", "predict", "pencil", "oracle", "compare", "green-check"] {
            let cli = Cli::try_parse_from(["vlevels", name, "--out", "x", "--threads", "1"]).unwrap();
            assert_eq!(cli.command.name(), name);
            assert_eq!(cli.threads, Some(1));
        }
    }
}
