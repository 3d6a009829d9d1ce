//! TOML run configuration, `schema = 1`. Every table rejects unknown keys,
//! and every validation error names the offending key.
//!
//! ```toml
//! schema = 1
//! seed = 7
//! replicas = 1000            # optional; per-experiment default otherwise
//! output_dir = "out"         # optional; the CLI `--out` wins
//! initial = "cos(1)"         # zero | constant(c) | cos(a) | gaussian(w)
//!
//! [grid]                     # half_width, nx (odd), dt, nt
//! [weights]                  # lambda
//! [coefficients]             # drift = "xlogx(1)", diffusion = "tanh-diffusion(1)"
//! [monitors]                 # m, delta (both optional)
//! [tail]                     # tolerance = 1e-6, enforce = true
//! [kernel]                   # samples, t_range, x_range, eta_range
//! [gronwall]                 # families, t_max, steps, zero_forcing_k
//! [moments]                  # p, h, lower_p, epsilon
//! [moments.variance]         # nodes, replicas, grid = { ... }
//! [factorization]          # p, alpha (optional), interior, replicas
//! [holder]                   # t0, time_lags, space_lags, pool_half_width
//! [uniqueness]               # levels, quad_points, ceiling
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coefficients::CoefficientSpec;
use crate::error::{Error, Result};
use crate::experiments::apriori::AprioriConfig;
use crate::experiments::holder::HolderConfig;
use crate::convolution::FactorizationParams;
use crate::experiments::moments::{FactorizationConfig, MomentConfig, VarianceConfig};
use crate::experiments::uniqueness::UniquenessConfig;
use crate::experiments::InitialCondition;
use crate::grid::GridSpec;
use crate::heat_kernel::KernelSweep;
use crate::solver::StoppingMonitor;

pub const SCHEMA_VERSION: u32 = 1;

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub nx: usize,
    pub dt: f64,
    pub nt: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_width: 10.0, nx: 201, dt: 1e-3, nt: 100 }
    }
}

impl GridSection {
    /// `field` is the table's dotted path, e.g. `grid`.
    pub fn build(&self, field: &str) -> Result<GridSpec> {
        let key = |k: &str| format!("{field}.{k}");
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(field_err(&key("half_width"), format!("must be positive, got {}", self.half_width)));
        }
        if self.nx < 3 || self.nx % 2 == 0 {
            return Err(field_err(&key("nx"), format!("must be odd and >= 3, got {}", self.nx)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(field_err(&key("dt"), format!("must be positive, got {}", self.dt)));
        }
        if self.nt == 0 {
            return Err(field_err(&key("nt"), "must be >= 1"));
        }
        GridSpec::new(self.half_width, self.nx, self.dt, self.nt).map_err(|e| field_err(field, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub lambda: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsSection {
    pub drift: String,
    pub diffusion: String,
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        Self { drift: "xlogx(1)".into(), diffusion: "tanh-diffusion(1)".into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorsSection {
    pub m: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailSection {
    pub tolerance: f64,
    pub enforce: bool,
}

impl Default for TailSection {
    fn default() -> Self {
        Self { tolerance: super::DEFAULT_TAIL_TOLERANCE, enforce: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GronwallSection {
    pub families: u64,
    pub t_max: f64,
    pub steps: usize,
    /// Dyadic `θ = 1 - 2^{-k}`, `k = 1..=zero_forcing_k`.
    pub zero_forcing_k: u32,
}

impl Default for GronwallSection {
    fn default() -> Self {
        Self { families: 100, t_max: 1.0, steps: 100, zero_forcing_k: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceSection {
    pub nodes: Vec<f64>,
    pub replicas: usize,
    pub grid: GridSection,
}

impl Default for VarianceSection {
    fn default() -> Self {
        Self {
            nodes: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            replicas: 10_000,
            grid: GridSection { half_width: 5.0, nx: 101, dt: 1e-3, nt: 1000 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsSection {
    pub p: f64,
    pub h: f64,
    pub lower_p: f64,
    pub epsilon: f64,
    pub variance: Option<VarianceSection>,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self { p: 12.0, h: 1.0, lower_p: 1.0, epsilon: 0.25, variance: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorizationSection {
    pub p: f64,
    pub alpha: Option<f64>,
    pub interior: f64,
    pub replicas: usize,
}

impl Default for FactorizationSection {
    fn default() -> Self {
        Self { p: 12.0, alpha: None, interior: 5.0, replicas: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderSection {
    pub t0: f64,
    pub time_lags: Vec<f64>,
    pub space_lags: Vec<usize>,
    pub pool_half_width: f64,
}

impl Default for HolderSection {
    fn default() -> Self {
        Self {
            t0: 1.0,
            time_lags: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            space_lags: vec![1, 2, 4, 8, 16],
            pool_half_width: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessSection {
    pub levels: Vec<u32>,
    pub quad_points: usize,
    pub ceiling: f64,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        Self { levels: vec![4, 8, 16], quad_points: 64, ceiling: 1e-2 }
    }
}

fn default_initial() -> String {
    "constant(1)".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub coefficients: CoefficientsSection,
    #[serde(default)]
    pub monitors: MonitorsSection,
    #[serde(default)]
    pub tail: TailSection,
    #[serde(default)]
    pub kernel: KernelSweep,
    #[serde(default)]
    pub gronwall: GronwallSection,
    #[serde(default)]
    pub moments: MomentsSection,
    #[serde(default)]
    pub factorization: FactorizationSection,
    #[serde(default)]
    pub holder: HolderSection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: 0,
            replicas: None,
            output_dir: None,
            initial: default_initial(),
            grid: GridSection::default(),
            weights: WeightsSection::default(),
            coefficients: CoefficientsSection::default(),
            monitors: MonitorsSection::default(),
            tail: TailSection::default(),
            kernel: KernelSweep::default(),
            gronwall: GronwallSection::default(),
            moments: MomentsSection::default(),
            factorization: FactorizationSection::default(),
            holder: HolderSection::default(),
            uniqueness: UniquenessSection::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim_end().to_string();
            match e.span().and_then(|s| key_path_at(text, s.start)) {
                Some(path) => field_err(&path, format!("{msg}\n{e}")),
                None => Error::Config(e.to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Structural checks; experiment-specific preconditions are checked
    /// when the experiment runs.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(field_err("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if self.replicas == Some(0) {
            return Err(field_err("replicas", "must be positive"));
        }
        self.grid.build("grid")?;
        if !(self.weights.lambda > 0.0 && self.weights.lambda.is_finite()) {
            return Err(field_err("weights.lambda", "must be positive"));
        }
        self.coefficients()?;
        self.initial()?;
        self.monitor()?;
        if !(self.tail.tolerance > 0.0) {
            return Err(field_err("tail.tolerance", "must be positive"));
        }
        self.kernel.validate().map_err(|e| field_err("kernel", e))?;
        let gw = &self.gronwall;
        if gw.families == 0 {
            return Err(field_err("gronwall.families", "must be positive"));
        }
        if !(gw.t_max > 0.0) {
            return Err(field_err("gronwall.t_max", "must be positive"));
        }
        if gw.steps < 100 {
            return Err(field_err("gronwall.steps", "must be at least 100"));
        }
        if !(1..=40).contains(&gw.zero_forcing_k) {
            return Err(field_err("gronwall.zero_forcing_k", "must lie in 1..=40"));
        }
        if let Some(v) = &self.moments.variance {
            v.grid.build("moments.variance.grid")?;
            if v.nodes.is_empty() {
                return Err(field_err("moments.variance.nodes", "must be nonempty"));
            }
            if v.replicas < super::stats::DEFAULT_BATCHES {
                return Err(field_err("moments.variance.replicas", "must be at least 10"));
            }
        }
        for (name, v) in [("moments.p", self.moments.p), ("moments.h", self.moments.h), ("moments.lower_p", self.moments.lower_p), ("moments.epsilon", self.moments.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field_err(name, "must be positive"));
            }
        }
        let f = &self.factorization;
        if !(f.p > 10.0) {
            return Err(field_err("factorization.p", "must exceed 10"));
        }
        if let Some(a) = f.alpha {
            FactorizationParams::new(f.p, a).map_err(|e| field_err("factorization.alpha", e))?;
        }
        if !(f.interior >= 0.0) || f.replicas == 0 {
            return Err(field_err("factorization", "need interior >= 0 and replicas >= 1"));
        }
        if !(self.holder.pool_half_width >= 0.0) {
            return Err(field_err("holder.pool_half_width", "must be >= 0"));
        }
        if !(self.uniqueness.ceiling > 0.0) {
            return Err(field_err("uniqueness.ceiling", "must be positive"));
        }
        if self.uniqueness.levels.is_empty() || self.uniqueness.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field_err("uniqueness.levels", "must be a nonempty increasing list"));
        }
        if self.uniqueness.quad_points < 64 {
            return Err(field_err("uniqueness.quad_points", "must be at least 64"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.grid.build("grid")
    }

    pub fn coefficients(&self) -> Result<CoefficientSpec> {
        CoefficientSpec::parse(&self.coefficients.drift, &self.coefficients.diffusion)
            .map_err(|e| field_err("coefficients", e))
    }

    pub fn initial(&self) -> Result<InitialCondition> {
        InitialCondition::parse(&self.initial).map_err(|e| field_err("initial", e))
    }

    pub fn monitor(&self) -> Result<StoppingMonitor> {
        StoppingMonitor::new(self.monitors.m, self.monitors.delta).map_err(|e| field_err("monitors", e))
    }

    fn replicas_or(&self, default: usize) -> usize {
        self.replicas.unwrap_or(default)
    }

    pub fn moment_config(&self) -> Result<MomentConfig> {
        Ok(MomentConfig {
            grid: self.grid()?,
            coeffs: self.coefficients()?,
            initial: self.initial()?,
            p: self.moments.p,
            h: self.moments.h,
            lower_p: self.moments.lower_p,
            epsilon: self.moments.epsilon,
            replicas: self.replicas_or(1000),
            seed: self.seed,
            tail_tolerance: self.tail.tolerance,
            enforce_tail: self.tail.enforce,
        })
    }

    pub fn variance_config(&self) -> Result<VarianceConfig> {
        let v = self.moments.variance.clone().unwrap_or_default();
        Ok(VarianceConfig {
            grid: v.grid.build("moments.variance.grid")?,
            nodes: v.nodes,
            replicas: v.replicas,
            seed: self.seed,
        })
    }

    pub fn factorization_config(&self) -> Result<FactorizationConfig> {
        let f = &self.factorization;
        Ok(FactorizationConfig {
            grid: self.grid()?,
            p: f.p,
            alpha: f.alpha,
            interior: f.interior,
            replicas: f.replicas,
            seed: self.seed,
        })
    }

    pub fn apriori_config(&self) -> Result<AprioriConfig> {
        Ok(AprioriConfig {
            grid: self.grid()?,
            coeffs: self.coefficients()?,
            lambda: self.weights.lambda,
            initial: self.initial()?,
            replicas: self.replicas_or(200),
            seed: self.seed,
            tail_tolerance: self.tail.tolerance,
            enforce_tail: self.tail.enforce,
        })
    }

    pub fn holder_config(&self) -> Result<HolderConfig> {
        Ok(HolderConfig {
            grid: self.grid()?,
            coeffs: self.coefficients()?,
            initial: self.initial()?,
            t0: self.holder.t0,
            time_lags: self.holder.time_lags.clone(),
            space_lags: self.holder.space_lags.clone(),
            pool_half_width: self.holder.pool_half_width,
            replicas: self.replicas_or(200),
            seed: self.seed,
        })
    }

    pub fn uniqueness_config(&self) -> Result<UniquenessConfig> {
        Ok(UniquenessConfig {
            grid: self.grid()?,
            coeffs: self.coefficients()?,
            lambda: self.weights.lambda,
            initial: self.initial()?,
            levels: self.uniqueness.levels.clone(),
            quad_points: self.uniqueness.quad_points,
            monitor: self.monitor()?,
            replicas: self.replicas_or(40),
            seed: self.seed,
            ceiling: self.uniqueness.ceiling,
            tail_tolerance: self.tail.tolerance,
            enforce_tail: self.tail.enforce,
        })
    }
}

/// Dotted key path of the `key = value` line containing byte `offset`,
/// using the nearest `[table]` header above it.
fn key_path_at(text: &str, offset: usize) -> Option<String> {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    let key = key.trim().trim_matches('"');
    if key.is_empty() || key.starts_with('[') || key.starts_with('#') {
        return None;
    }
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    Some(match table {
        Some(t) if !t.is_empty() => format!("{t}.{key}"),
        _ => key.to_string(),
    })
}
