//! Monte Carlo campaigns that confront simulations with the explicit
//! bounds, plus config ingestion and report emission for the CLI.
//!
//! Replicas run on the ambient rayon pool; every reduction is over
//! results collected in replica order, so reports do not depend on the
//! thread count.

pub mod apriori;
pub mod config;
pub mod holder;
pub mod manifest;
pub mod moments;
pub mod reports;
pub mod stats;
pub mod uniqueness;

use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{sample_function, Field, GridSpec};
use crate::gronwall::{
    dyadic_thetas, log_gronwall_bound, verify_log_gronwall, zero_forcing_limit, zero_forcing_log_bound, GronwallData, GronwallReport,
    ZeroForcingData,
};

/// Runs `f(replica)` for `0..n` in parallel; results in replica order.
pub fn run_replicas<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Initial-data presets: `zero`, `constant(c)`, `cos(a)` (`a·cos x`),
/// `gaussian(w)` (`exp(-x²/(2w²))`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "preset", content = "param", rename_all = "kebab-case")]
pub enum InitialCondition {
    Zero,
    Constant(f64),
    Cos(f64),
    Gaussian(f64),
}

impl InitialCondition {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Self::Zero);
        }
        let (name, arg) = s
            .split_once('(')
            .and_then(|(n, r)| Some((n.trim(), r.strip_suffix(')')?)))
            .ok_or_else(|| invalid(format!("unknown initial condition `{s}`")))?;
        let v: f64 = arg
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| invalid(format!("bad numeric argument in `{s}`")))?;
        match name {
            "constant" => Ok(Self::Constant(v)),
            "cos" => Ok(Self::Cos(v)),
            "gaussian" if v > 0.0 => Ok(Self::Gaussian(v)),
            "gaussian" => Err(invalid(format!("gaussian width must be positive in `{s}`"))),
            other => Err(invalid(format!("unknown initial condition `{other}`"))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant(c) => c,
            Self::Cos(a) => a * x.cos(),
            Self::Gaussian(w) => (-x * x / (2.0 * w * w)).exp(),
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Result<Field> {
        sample_function(grid, |x| self.eval(x))
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Constant(c) => write!(f, "constant({c})"),
            Self::Cos(a) => write!(f, "cos({a})"),
            Self::Gaussian(w) => write!(f, "gaussian({w})"),
        }
    }
}

/// Truncation check: on `|x| > L` a weight decaying at rate at least
/// `decay` caps the weighted field by `e^{-decay·L}·ceiling`, where the
/// ceiling is the largest unweighted magnitude seen on the grid. The
/// grid maximum stands in for the supremum over the line when that cap
/// is below `tolerance` times the reported norm.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TailBudget {
    pub decay: f64,
    pub half_width: f64,
    pub ceiling: f64,
    pub tail: f64,
    pub reported_norm: f64,
    pub tolerance: f64,
    pub within: bool,
}

impl TailBudget {
    pub fn new(decay: f64, half_width: f64, ceiling: f64, reported_norm: f64, tolerance: f64) -> Self {
        let tail = (-decay * half_width).exp() * ceiling;
        // A field that is identically zero has nothing to truncate.
        let within = tail == 0.0 || tail < tolerance * reported_norm;
        Self { decay, half_width, ceiling, tail, reported_norm, tolerance, within }
    }

    pub fn enforce(self, enforce: bool) -> Result<Self> {
        if enforce && !self.within {
            return Err(Error::TailBudget(format!(
                "e^(-{}·{})·{:.3e} = {:.3e} is not below {:.1e} × {:.3e}; widen the grid",
                self.decay, self.half_width, self.ceiling, self.tail, self.tolerance, self.reported_norm
            )));
        }
        Ok(self)
    }
}

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-6;

/// Random Grönwall families checked against the closed-form bound, plus
/// the zero-forcing bound of the canonical family along dyadic `θ → 1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GronwallSuite {
    #[serde(skip)]
    pub families: Vec<GronwallReport>,
    pub max_ratio: f64,
    pub failures: usize,
    pub zero_forcing: Vec<ZeroForcingPoint>,
    pub zero_forcing_limit: f64,
    /// Worst relative error of the reductions `c₂ = 0` (bound `M e^{c₁t}`,
    /// and the extremal ODE meets it) and `c₁ = 0` (bound `M^{e^{c₂t}}`).
    pub classical_max_error: f64,
}

/// The bound underflows `f64` for `k ≳ 10`, so monotonicity is judged on
/// `ln_bound`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ZeroForcingPoint {
    pub theta: f64,
    pub ln_bound: f64,
    pub bound: f64,
}

impl GronwallSuite {
    /// Every family within tolerance; zero-forcing values strictly
    /// decreasing with the last one at most `ZERO_FORCING_FINAL_MAX`.
    pub fn holds(&self) -> bool {
        self.failures == 0
            && self.classical_max_error <= CLASSICAL_TOL
            && self.zero_forcing_decreasing()
            && self.zero_forcing_final_ln() <= ZERO_FORCING_FINAL_MAX.ln()
    }

    pub fn zero_forcing_decreasing(&self) -> bool {
        self.zero_forcing.windows(2).all(|w| w[1].ln_bound < w[0].ln_bound)
    }

    pub fn zero_forcing_final_ln(&self) -> f64 {
        self.zero_forcing.last().map_or(f64::NAN, |z| z.ln_bound)
    }
}

/// Relative slack allowed between the integrated extremal solution and
/// the bound.
pub const GRONWALL_REL_TOL: f64 = 1e-4;
pub const ZERO_FORCING_FINAL_MAX: f64 = 1e-4;
pub const CLASSICAL_TOL: f64 = 1e-6;

fn classical_max_error(t_max: f64, steps: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in [1.0, 2.0, 3.5] {
        for c in [0.0, 0.7, 2.0] {
            let rep = verify_log_gronwall(&GronwallData::constant(m, c, 0.0), t_max, steps)?;
            for r in &rep.rows {
                worst = worst.max((r.ratio - 1.0).abs());
                let exact = m * (c * r.t).exp();
                worst = worst.max((r.bound - exact).abs() / exact);
            }
            for i in 0..=4 {
                let t = t_max * i as f64 / 4.0;
                let exact = m.powf((c * t).exp());
                let b = log_gronwall_bound(&GronwallData::constant(m, 0.0, c), t)?;
                worst = worst.max((b - exact).abs() / exact);
            }
        }
    }
    Ok(worst)
}

pub fn run_gronwall_suite(families: u64, t_max: f64, steps: usize, zero_forcing_k: u32, seed: u64) -> Result<GronwallSuite> {
    let reports: Vec<GronwallReport> = (0..families)
        .into_par_iter()
        .map(|id| verify_log_gronwall(&GronwallData::random_family(seed, id), t_max, steps))
        .collect::<Result<_>>()?;
    let max_ratio = reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let failures = reports.iter().filter(|r| !r.holds(GRONWALL_REL_TOL)).count();
    let zf = ZeroForcingData::canonical(1.0, 1.0, 1.0);
    let thetas = dyadic_thetas(zero_forcing_k);
    let zero_forcing = thetas
        .iter()
        .map(|&theta| {
            let ln_bound = zero_forcing_log_bound(&zf, theta)?;
            Ok(ZeroForcingPoint { theta, ln_bound, bound: ln_bound.exp() })
        })
        .collect::<Result<Vec<_>>>()?;
    let zero_forcing_limit = zero_forcing_limit(&zf, &thetas)?;
    let classical_max_error = classical_max_error(t_max, steps)?;
    Ok(GronwallSuite { families: reports, max_ratio, failures, zero_forcing, zero_forcing_limit, classical_max_error })
}

/// `rhs/lhs`, with `0/0` read as margin one.
pub(crate) fn margin(rhs: f64, lhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        1.0
    } else {
        rhs / lhs
    }
}
