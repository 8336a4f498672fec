//! Run configuration: a single JSON document per run.
//!
//! The document has one required block, `params`, plus optional fields that
//! individual commands require or ignore. Unknown fields are rejected so a
//! typo cannot silently change a run.
//!
//! ```json
//! {
//!   "params": { "kappa": 350.0, "n_atoms": 10000.0, "u0": 1.0,
//!               "eta": 910.0, "delta_c": 3140.0 },
//!   "band": 0,
//!   "q": 0.0,
//!   "q_grid": { "start": -1.0, "stop": 1.0, "count": 41 },
//!   "delta_grid": [1000.0, 1500.0, 2000.0],
//!   "eta_grid": { "start": 300.0, "stop": 1100.0, "count": 81 },
//!   "nph_grid": { "start": 0.0, "stop": 10.0, "count": 2001 },
//!   "r": 16,
//!   "j": 12,
//!   "delta_window": [800.0, 5700.0],
//!   "q_window": [0.4, 0.7],
//!   "analytic_constant": "sqrt128",
//!   "red_detuned": false,
//!   "method": "roots",
//!   "output_dir": "out",
//!   "workers": 0,
//!   "no_plots": false,
//!   "cache_dir": null
//! }
//! ```
//!
//! Grids are given either as an explicit strictly ascending array of finite
//! numbers or as `{start, stop, count}` for `count ≥ 2` evenly spaced points.
//! All frequencies (`kappa`, `eta`, `delta_c`, grids over them) are in `ω_R`;
//! `u0` is in `ω_R` per photon; quasi-momenta live in `[-1, 1]`.
//!
//! Defaults when a field is omitted: `band = 0`, `q = 0`, `r = 16`,
//! `j = r − 4`, `analytic_constant = "sqrt128"`, `method = "roots"`,
//! `red_detuned = false`, `output_dir = "out"`, `workers = 0` (all cores),
//! `no_plots = false`, caching disabled unless `cache_dir` is set. The
//! `critical` command defaults `delta_window` to
//! `(N·U0/2 − 12κ, N·U0/2 + 2κ)`, a bracket around the shallow-lattice
//! bistability onset; the `validate` command defaults `q_grid` to seven
//! points spanning `[-0.9, 0.9]`.

use serde::{Deserialize, Serialize};

use crate::bistability::AnalyticConstant;
use crate::bloch::DEFAULT_R;
use crate::error::{Error, Result};
use crate::params::SystemParams;

/// The eight batch commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Steady-state branches over a detuning grid, with hysteresis traces.
    Lineshape,
    /// Band diagram over a quasi-momentum grid.
    Band,
    /// Parametric input-output characteristic over a photon-number grid.
    Scurve,
    /// Steady-state count over a (detuning, pump) grid with fold curves.
    Bifmap,
    /// Numeric bistability onset with the analytic shallow-lattice value.
    Critical,
    /// Swallowtail points per quasi-momentum, with degeneracy residuals.
    Swallowtail,
    /// Energetic and dynamic verdicts for every band-diagram branch.
    Stability,
    /// Cross-method and invariant checks over a quasi-momentum grid.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lineshape => "lineshape",
            Command::Band => "band",
            Command::Scurve => "scurve",
            Command::Bifmap => "bifmap",
            Command::Critical => "critical",
            Command::Swallowtail => "swallowtail",
            Command::Stability => "stability",
            Command::Validate => "validate",
        }
    }
}

/// The required physical parameter block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub kappa: f64,
    pub n_atoms: f64,
    pub u0: f64,
    pub eta: f64,
    pub delta_c: f64,
}

/// A numeric grid: explicit points or an evenly spaced span.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    Linear { start: f64, stop: f64, count: usize },
}

impl GridSpec {
    /// Materializes the grid, collecting field-qualified problems.
    fn materialize(&self, field: &str, problems: &mut Vec<String>) -> Vec<f64> {
        match self {
            GridSpec::Explicit(values) => {
                if values.is_empty() {
                    problems.push(format!("{field}: grid must not be empty"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    problems.push(format!("{field}: grid values must be finite"));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    problems.push(format!("{field}: grid must be strictly ascending"));
                }
                values.clone()
            }
            GridSpec::Linear { start, stop, count } => {
                if !start.is_finite() || !stop.is_finite() {
                    problems.push(format!("{field}: start and stop must be finite"));
                    return Vec::new();
                }
                if *count < 2 {
                    problems.push(format!("{field}: count must be at least 2"));
                    return Vec::new();
                }
                if start >= stop {
                    problems.push(format!("{field}: start must be below stop"));
                    return Vec::new();
                }
                if *count > 200_000 {
                    problems.push(format!("{field}: count must not exceed 200000"));
                    return Vec::new();
                }
                let n = *count;
                (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}

/// The full run configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsBlock,
    #[serde(default)]
    pub band: usize,
    pub q: Option<f64>,
    pub q_grid: Option<GridSpec>,
    pub delta_grid: Option<GridSpec>,
    pub eta_grid: Option<GridSpec>,
    pub nph_grid: Option<GridSpec>,
    pub r: Option<usize>,
    pub j: Option<usize>,
    pub delta_window: Option<[f64; 2]>,
    pub q_window: Option<[f64; 2]>,
    pub analytic_constant: Option<String>,
    #[serde(default)]
    pub red_detuned: bool,
    pub method: Option<String>,
    pub output_dir: Option<String>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub no_plots: bool,
    pub cache_dir: Option<String>,
}

/// Per-branch method used by the `band` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMethod {
    /// Root-find the photon state equation per quasi-momentum.
    Roots,
    /// Additionally cross-check against free-energy extremization and record
    /// the worst mismatch.
    Extremize,
}

/// A configuration after validation, with grids materialized and defaults
/// applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: SystemParams,
    pub band: usize,
    pub q: f64,
    pub q_grid: Option<Vec<f64>>,
    pub delta_grid: Option<Vec<f64>>,
    pub eta_grid: Option<Vec<f64>>,
    pub nph_grid: Option<Vec<f64>>,
    pub r: usize,
    pub j: usize,
    pub delta_window: (f64, f64),
    pub q_window: Option<(f64, f64)>,
    pub analytic_constant: AnalyticConstant,
    pub red_detuned: bool,
    pub method: BandMethod,
}

impl RunConfig {
    /// Parses a configuration document, reporting the parser's field-level
    /// message on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|err| Error::Config(vec![format!("{err}")]))
    }

    /// SHA-256 fingerprint of the computation-relevant configuration.
    ///
    /// Delivery knobs (`output_dir`, `workers`, `no_plots`, `cache_dir`) are
    /// cleared before hashing: they change where and how fast results are
    /// produced, never what is computed.
    pub fn config_hash(&self, command: Command) -> String {
        #[derive(Serialize)]
        struct Envelope<'a> {
            command: &'a str,
            config: &'a RunConfig,
        }
        let mut compute = self.clone();
        compute.output_dir = None;
        compute.workers = None;
        compute.no_plots = false;
        compute.cache_dir = None;
        let envelope = Envelope {
            command: command.name(),
            config: &compute,
        };
        let json = serde_json::to_string(&envelope).expect("config serializes");
        super::manifest::sha256_hex(json.as_bytes())
    }

    /// Validates the document for a command and applies documented defaults.
    ///
    /// Every problem is reported, each prefixed with the offending field.
    pub fn resolve(&self, command: Command) -> Result<Resolved> {
        let mut problems = Vec::new();

        let params = SystemParams::new(
            self.params.kappa,
            self.params.n_atoms,
            self.params.u0,
            self.params.eta,
            self.params.delta_c,
        );
        let params = match params {
            Ok(p) => Some(p),
            Err(Error::InvalidParams(msgs)) => {
                problems.extend(msgs.into_iter().map(|m| format!("params: {m}")));
                None
            }
            Err(other) => {
                problems.push(format!("params: {other}"));
                None
            }
        };

        if self.band > 8 {
            problems.push("band: band index must not exceed 8".to_string());
        }

        let q = self.q.unwrap_or(0.0);
        if !q.is_finite() || q.abs() > 1.0 {
            problems.push("q: quasi-momentum must lie in [-1, 1]".to_string());
        }

        let q_grid = self
            .q_grid
            .as_ref()
            .map(|g| g.materialize("q_grid", &mut problems));
        if let Some(grid) = &q_grid {
            if grid.iter().any(|v| v.abs() > 1.0) {
                problems.push("q_grid: quasi-momenta must lie in [-1, 1]".to_string());
            }
        }
        let delta_grid = self
            .delta_grid
            .as_ref()
            .map(|g| g.materialize("delta_grid", &mut problems));
        let eta_grid = self
            .eta_grid
            .as_ref()
            .map(|g| g.materialize("eta_grid", &mut problems));
        if let Some(grid) = &eta_grid {
            if grid.iter().any(|v| *v < 0.0) {
                problems.push("eta_grid: pump strengths must be nonnegative".to_string());
            }
        }
        let nph_grid = self
            .nph_grid
            .as_ref()
            .map(|g| g.materialize("nph_grid", &mut problems));
        if let Some(grid) = &nph_grid {
            if grid.iter().any(|v| *v < 0.0) {
                problems.push("nph_grid: photon numbers must be nonnegative".to_string());
            }
        }

        let r = self.r.unwrap_or(DEFAULT_R);
        if !(4..=128).contains(&r) {
            problems.push("r: state truncation must lie in [4, 128]".to_string());
        }
        let j = self.j.unwrap_or_else(|| r.saturating_sub(4));
        if j == 0 || j > 120 {
            problems.push("j: perturbation truncation must lie in [1, 120]".to_string());
        }

        let delta_window = match self.delta_window {
            Some([lo, hi]) => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    problems.push("delta_window: needs finite bounds with lo < hi".to_string());
                }
                (lo, hi)
            }
            None => {
                let half = self.params.n_atoms * self.params.u0 / 2.0;
                (
                    half - 12.0 * self.params.kappa,
                    half + 2.0 * self.params.kappa,
                )
            }
        };

        let q_window = match self.q_window {
            Some([lo, hi]) => {
                if !(0.0 < lo && lo < hi && hi < 1.0) {
                    problems.push("q_window: needs 0 < lo < hi < 1".to_string());
                }
                Some((lo, hi))
            }
            None => None,
        };

        let analytic_constant = match self.analytic_constant.as_deref() {
            None | Some("sqrt128") => AnalyticConstant::Sqrt128,
            Some("sqrt8") => AnalyticConstant::Sqrt8,
            Some(other) => {
                problems.push(format!(
                    "analytic_constant: expected \"sqrt128\" or \"sqrt8\", got \"{other}\""
                ));
                AnalyticConstant::Sqrt128
            }
        };

        let method = match self.method.as_deref() {
            None | Some("roots") => BandMethod::Roots,
            Some("extremize") => BandMethod::Extremize,
            Some(other) => {
                problems.push(format!(
                    "method: expected \"roots\" or \"extremize\", got \"{other}\""
                ));
                BandMethod::Roots
            }
        };

        if let Some(w) = self.workers {
            if w > 1024 {
                problems.push("workers: worker count must not exceed 1024".to_string());
            }
        }

        let red_capable = matches!(command, Command::Lineshape | Command::Scurve);
        if self.red_detuned && self.params.u0 >= 0.0 {
            problems.push("red_detuned: requires params.u0 < 0".to_string());
        }
        if self.params.u0 < 0.0 && !self.red_detuned {
            problems
                .push("params.u0: a negative light shift requires red_detuned = true".to_string());
        }
        if self.params.u0 < 0.0 && !red_capable {
            problems.push(format!(
                "params.u0: the {} command supports blue-detuned parameters only",
                command.name()
            ));
        }

        match command {
            Command::Lineshape => {
                if delta_grid.is_none() {
                    problems.push("delta_grid: required by the lineshape command".to_string());
                }
            }
            Command::Band => {
                if q_grid.is_none() {
                    problems.push("q_grid: required by the band command".to_string());
                }
            }
            Command::Scurve => {
                if nph_grid.is_none() {
                    problems.push("nph_grid: required by the scurve command".to_string());
                }
            }
            Command::Bifmap => {
                if delta_grid.is_none() {
                    problems.push("delta_grid: required by the bifmap command".to_string());
                }
                if eta_grid.is_none() {
                    problems.push("eta_grid: required by the bifmap command".to_string());
                }
                if let (Some(d), Some(e)) = (&delta_grid, &eta_grid) {
                    if d.len().saturating_mul(e.len()) > 1_000_000 {
                        problems.push(
                            "eta_grid: the (delta, eta) grid must not exceed 1000000 cells"
                                .to_string(),
                        );
                    }
                }
            }
            Command::Critical => {}
            Command::Swallowtail => {
                if self.q.is_none() && q_grid.is_none() {
                    problems.push("q: the swallowtail command needs q or q_grid".to_string());
                }
                let inside = |v: f64| v > 0.0 && v < 1.0;
                if let Some(qv) = self.q {
                    if !inside(qv) {
                        problems.push("q: swallowtail scans need 0 < q < 1".to_string());
                    }
                }
                if let Some(grid) = &q_grid {
                    if !grid.iter().all(|&v| inside(v)) {
                        problems.push("q_grid: swallowtail scans need 0 < q < 1".to_string());
                    }
                }
            }
            Command::Stability => {
                if q_grid.is_none() {
                    problems.push("q_grid: required by the stability command".to_string());
                }
            }
            Command::Validate => {}
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let q_grid = match (command, q_grid) {
            (Command::Validate, None) => Some(vec![-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9]),
            (_, grid) => grid,
        };

        Ok(Resolved {
            params: params.expect("validated above"),
            band: self.band,
            q,
            q_grid,
            delta_grid,
            eta_grid,
            nph_grid,
            r,
            j,
            delta_window,
            q_window,
            analytic_constant,
            red_detuned: self.red_detuned,
            method,
        })
    }
}
