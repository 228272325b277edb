//! Versioned JSON run configuration.
//!
//! Every object rejects unknown keys. Parse and validation failures both
//! come back as [`Error::Config`] carrying a JSON pointer to the offending
//! key.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::{EdgeSide, EdgeTolerances, SyntheticDispersion};
use crate::discrete::BackendKind;
use crate::error::{Error, Result};
use crate::fiber::default_cutoff;
use crate::lattice::{Bump, PerturbationKind, PerturbationSpec, PotentialSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub m: Vec<i32>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub m: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Periodic potential as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    CosineSum { terms: Vec<CosineTerm> },
    Fourier { coefficients: Vec<FourierTerm> },
}

impl PotentialConfig {
    pub fn build(&self, dim: usize) -> Result<PotentialSpec> {
        match self {
            PotentialConfig::Zero => Ok(PotentialSpec::zero(dim)),
            PotentialConfig::CosineSum { terms } => {
                let t: Vec<(Vec<i32>, f64)> = terms.iter().map(|t| (t.m.clone(), t.amplitude)).collect();
                PotentialSpec::cosine_sum(dim, &t)
            }
            PotentialConfig::Fourier { coefficients } => PotentialSpec::fourier(
                dim,
                coefficients.iter().map(|c| (c.m.clone(), Complex64::new(c.re, c.im))),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: PerturbationKind,
    pub terms: Vec<Bump>,
}

impl PerturbationConfig {
    pub fn build(&self, dim: usize) -> Result<PerturbationSpec> {
        PerturbationSpec::new(dim, self.kind, self.terms.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsConfig {
    pub n_bands: usize,
    /// Quasi-momentum samples per axis.
    pub grid: usize,
    /// Plane-wave cutoff; the dimension default when absent.
    pub cutoff: Option<usize>,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            n_bands: 4,
            grid: 64,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeConfig {
    /// Number of bands below the gap; 0 is the semi-infinite gap.
    pub gap: usize,
    pub side: EdgeSide,
    pub tolerances: EdgeTolerances,
    /// Quadrature nodes on an extremal manifold.
    pub manifold_samples: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            gap: 0,
            side: EdgeSide::Upper,
            tolerances: EdgeTolerances::default(),
            manifold_samples: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Grid points per unit length (h = 1/per_unit).
    pub per_unit: usize,
    /// Smallest box half width; grown so predicted levels decay inside.
    pub half_width_min: usize,
    pub half_width_cap: usize,
    pub backend: Option<BackendKind>,
    pub oracle: OracleMethod,
}

/// Direct solver behind the `oracle` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Eigenvalues of the truncated periodic box.
    #[default]
    Box,
    /// Angular-momentum sectors; radial W, and either V = 0 (d = 2, 3) or a
    /// radial synthetic symbol in d = 2.
    Sectors,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            per_unit: 64,
            half_width_min: 40,
            half_width_cap: 16000,
            backend: None,
            oracle: OracleMethod::Box,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PencilConfig {
    /// Spectral-parameter samples per edge.
    pub n_lambda: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub root_tol: f64,
}

impl Default for PencilConfig {
    fn default() -> Self {
        Self {
            n_lambda: 20,
            n_positive: 3,
            n_negative: 3,
            root_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Largest allowed |pencil root - oracle eigenvalue|.
    pub pencil_tol: f64,
    /// Largest allowed relative depth error of the prediction at the
    /// smallest |gamma|.
    pub max_rel_err: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            pencil_tol: 1e-8,
            max_rel_err: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dimension: usize,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    /// Replaces the periodic potential by a model dispersion.
    #[serde(default)]
    pub symbol: Option<SyntheticDispersion>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub bands: BandsConfig,
    #[serde(default)]
    pub edge: EdgeConfig,
    #[serde(default)]
    pub couplings: Vec<f64>,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub pencil: PencilConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

/// Problem data built from a validated config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dim: usize,
    pub potential: PotentialSpec,
    pub symbol: Option<SyntheticDispersion>,
    pub perturbation: Option<PerturbationSpec>,
}

fn config_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
            let mut pointer = pointer_of(e.path());
            // unknown keys already end the path
            let message = e.inner().to_string();
            if pointer.is_empty() {
                pointer.push('/');
            }
            config_err(&pointer, message)
        })?;
        de.end().map_err(|e| config_err("/", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A minimal config for `dimension` with every other field defaulted.
    pub fn minimal(dimension: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dimension,
            potential: None,
            symbol: None,
            perturbation: None,
            bands: BandsConfig::default(),
            edge: EdgeConfig::default(),
            couplings: Vec::new(),
            discretization: DiscretizationConfig::default(),
            pencil: PencilConfig::default(),
            compare: CompareConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(
                "/schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(1..=3).contains(&self.dimension) {
            return Err(config_err("/dimension", "dimension must be 1, 2 or 3"));
        }
        if self.potential.is_some() && self.symbol.is_some() {
            return Err(config_err("/symbol", "give either a potential or a symbol, not both"));
        }
        if let Some(sd) = &self.symbol {
            sd.validate().map_err(|e| config_err("/symbol", e.to_string()))?;
            if sd.dim() != self.dimension {
                return Err(config_err("/symbol", "symbol dimension differs from `dimension`"));
            }
        }
        if let Some(p) = &self.potential {
            p.build(self.dimension).map_err(|e| config_err("/potential", e.to_string()))?;
        }
        if let Some(w) = &self.perturbation {
            w.build(self.dimension).map_err(|e| config_err("/perturbation", e.to_string()))?;
        }
        let b = &self.bands;
        if b.n_bands == 0 {
            return Err(config_err("/bands/n_bands", "must be positive"));
        }
        if b.grid < 4 || b.grid % 2 != 0 {
            return Err(config_err("/bands/grid", "must be even and at least 4"));
        }
        if b.cutoff == Some(0) {
            return Err(config_err("/bands/cutoff", "must be positive"));
        }
        if self.edge.gap >= b.n_bands {
            return Err(config_err("/edge/gap", "gap index must be below bands.n_bands"));
        }
        self.edge
            .tolerances
            .validate()
            .map_err(|e| config_err("/edge/tolerances", e.to_string()))?;
        if self.edge.manifold_samples < 8 {
            return Err(config_err("/edge/manifold_samples", "need at least 8 samples"));
        }
        for (i, g) in self.couplings.iter().enumerate() {
            if !g.is_finite() || *g == 0.0 {
                return Err(config_err(&format!("/couplings/{i}"), "couplings must be finite and nonzero"));
            }
        }
        let d = &self.discretization;
        if d.per_unit < 2 {
            return Err(config_err("/discretization/per_unit", "must be at least 2"));
        }
        if d.half_width_min == 0 || d.half_width_cap < d.half_width_min {
            return Err(config_err(
                "/discretization/half_width_cap",
                "need 0 < half_width_min <= half_width_cap",
            ));
        }
        if d.oracle == OracleMethod::Sectors {
            let ok = match &self.symbol {
                Some(SyntheticDispersion::Radial { dim: 2, .. }) => true,
                Some(_) => false,
                None => (2..=3).contains(&self.dimension) && self.potential.as_ref().is_none_or(|v| v.build(self.dimension).is_ok_and(|p| p.is_zero())),
            };
            if !ok {
                return Err(config_err(
                    "/discretization/oracle",
                    "sectors need V = 0 in d = 2, 3 or a radial symbol in d = 2",
                ));
            }
        }
        let p = &self.pencil;
        if p.n_lambda < 2 {
            return Err(config_err("/pencil/n_lambda", "need at least 2 samples"));
        }
        if !(p.root_tol > 0.0) {
            return Err(config_err("/pencil/root_tol", "must be positive"));
        }
        if !(self.compare.pencil_tol > 0.0) {
            return Err(config_err("/compare/pencil_tol", "must be positive"));
        }
        if !(self.compare.max_rel_err > 0.0) {
            return Err(config_err("/compare/max_rel_err", "must be positive"));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> usize {
        self.bands.cutoff.unwrap_or_else(|| default_cutoff(self.dimension))
    }

    pub fn problem(&self) -> Result<Problem> {
        let potential = match &self.potential {
            Some(p) => p.build(self.dimension)?,
            None => PotentialSpec::zero(self.dimension),
        };
        let perturbation = self
            .perturbation
            .as_ref()
            .map(|w| w.build(self.dimension))
            .transpose()?;
        Ok(Problem {
            dim: self.dimension,
            potential,
            symbol: self.symbol,
            perturbation,
        })
    }

    /// The perturbation, or a config error naming the missing key.
    pub fn require_perturbation(&self) -> Result<PerturbationSpec> {
        match &self.perturbation {
            Some(w) => w.build(self.dimension),
            None => Err(config_err("/perturbation", "this command needs a perturbation")),
        }
    }

    pub fn require_couplings(&self) -> Result<&[f64]> {
        if self.couplings.is_empty() {
            Err(config_err("/couplings", "this command needs at least one coupling"))
        } else {
            Ok(&self.couplings)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pointer(text: &str) -> String {
        match RunConfig::from_json(text) {
            Err(Error::Config { pointer, .. }) => pointer,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_round_trip() {
        let cfg = RunConfig::from_json(r#"{"schema_version": 1, "dimension": 1}"#).unwrap();
        assert_eq!(cfg, RunConfig::minimal(1));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "schema_version": 1,
            "dimension": 1,
            "potential": {"kind": "cosine_sum", "terms": [{"m": [1], "amplitude": 1.0}]},
            "perturbation": {"kind": "box", "terms": [
                {"shape": "box", "center": [0.0], "half_width": [0.5], "amplitude": 1.0}]},
            "edge": {"gap": 1, "side": "upper"},
            "couplings": [-0.2, -0.1]
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.potential, PotentialSpec::mathieu(1.0));
        assert_eq!(p.perturbation.unwrap(), PerturbationSpec::unit_box(1));
    }

    #[test]
    fn unknown_keys_are_pointed_at() {
        assert_eq!(pointer(r#"{"schema_version": 1, "dimension": 1, "colour": 3}"#), "/colour");
        assert_eq!(
            pointer(r#"{"schema_version": 1, "dimension": 1, "bands": {"n_band": 3}}"#),
            "/bands/n_band"
        );
        let nested = r#"{"schema_version": 1, "dimension": 1, "perturbation": {"kind": "box",
            "terms": [{"shape": "box", "center": [0.0], "half_width": [0.5], "amplitude": 1.0, "x": 1}]}}"#;
        assert!(pointer(nested).starts_with("/perturbation/terms/0"), "{}", pointer(nested));
    }

    #[test]
    fn semantic_errors_are_pointed_at() {
        assert_eq!(pointer(r#"{"schema_version": 2, "dimension": 1}"#), "/schema_version");
        assert_eq!(pointer(r#"{"schema_version": 1, "dimension": 4}"#), "/dimension");
        assert_eq!(
            pointer(r#"{"schema_version": 1, "dimension": 1, "couplings": [-0.1, 0.0]}"#),
            "/couplings/1"
        );
        assert_eq!(pointer("{"), "/");
        let non_hermitian = r#"{"schema_version": 1, "dimension": 1,
            "potential": {"kind": "fourier", "coefficients": [{"m": [1], "re": 1.0}]}}"#;
        assert_eq!(pointer(non_hermitian), "/potential");
    }
}
