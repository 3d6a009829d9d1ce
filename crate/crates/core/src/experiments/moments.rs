//! Sup-moment experiments for the stochastic convolution
//! `V = ∫∫ p_{t-s}(x, y) σ(u(s, y)) W(ds, dy)` with the static weight
//! `e^{-h|x|}`:
//!
//! * high order (`p > 10`): `E sup (|V| e^{-h|x|})^p ≤ C_{p,h,T} · I_p`;
//! * lower order (`p ≤ 10`):
//!   `E sup (...)^p ≤ ε E sup (|σ| e^{-h|x|})^p + C_{ε,p,h,T} · I_p`;
//!
//! with `I_p = E ∫_0^T ∫ |σ|^p e^{-ph|x|} dx dt`. For `σ ≡ K`,
//! `I_p = 2T K^p/(p h)` exactly; otherwise `I_p` is the grid sum of the
//! scheme's piecewise-constant integrand (which omits `|x| > L` and so
//! only shrinks the right side).
//!
//! Also the pointwise variance check `Var V(t, x) = √(t/π)` for `σ ≡ 1`.

use std::sync::Arc;

use crate::coefficients::{CoefficientSpec, Coefficients};
use crate::convolution::{
    stoch_conv_direct, stoch_conv_factorized, stoch_conv_recursive, variance_closed_form, variance_discrete,
    FactorizationParams,
};
use crate::error::{invalid, Result};
use crate::experiments::stats::{batch_means, Estimate, DEFAULT_BATCHES};
use crate::experiments::{margin, run_replicas, InitialCondition, TailBudget};
use crate::grid::{GridSpec, Trajectory};
use crate::heat_kernel::{dot, KernelCache};
use crate::moment_bounds::{
    integral_term_constant_sigma, ln_constant_high_order, ln_constant_lower_order_refined, MomentBoundParams,
};
use crate::noise::{sample_noise, split_stream};
use crate::solver::{solve, SolveConfig, StoppingMonitor};
use crate::weighted_norms::WeightParams;

pub const MIN_MOMENT_REPLICAS: usize = 1000;

#[derive(Debug, Clone)]
pub struct MomentConfig {
    pub grid: GridSpec,
    pub coeffs: CoefficientSpec,
    /// Only used when `σ` is not constant (the path `u` is then solved).
    pub initial: InitialCondition,
    pub p: f64,
    pub h: f64,
    pub lower_p: f64,
    pub epsilon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub tail_tolerance: f64,
    pub enforce_tail: bool,
}

/// Per-replica statistics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentSample {
    pub replica: u64,
    /// `max_{k,i} |V(t_k, x_i)| e^{-h|x_i|}`.
    pub sup: f64,
    /// `max_{k,i} |σ(u(t_k, x_i))| e^{-h|x_i|}`.
    pub sigma_sup: f64,
    pub integral_high: f64,
    pub integral_low: f64,
    /// Unweighted `max |V|`, the tail ceiling.
    pub max_abs: f64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MomentReport {
    pub params: MomentBoundParams,
    pub replicas: usize,
    pub lhs_estimate: Estimate,
    pub ln_constant: f64,
    pub integral_term: f64,
    pub rhs_bound: f64,
    pub margin: f64,
    /// Point estimate `lhs ≤ rhs`, i.e. margin `rhs/lhs ≥ 1`.
    pub holds: bool,
}

impl MomentReport {
    /// Multiplies the constant by `e^{delta_ln}` and re-scores the check.
    pub fn shift_constant(&mut self, delta_ln: f64) {
        self.ln_constant += delta_ln;
        self.rhs_bound = high_rhs(self.ln_constant, self.integral_term);
        self.margin = margin(self.rhs_bound, self.lhs_estimate.mean);
        self.holds = self.lhs_estimate.mean <= self.rhs_bound;
    }
}

fn high_rhs(ln_c: f64, integral: f64) -> f64 {
    if integral == 0.0 {
        0.0
    } else {
        (ln_c + integral.ln()).exp()
    }
}

impl LowerOrderReport {
    /// `ln C` strictly increasing in `T` along the reported horizons.
    pub fn constant_increasing_in_t(&self) -> bool {
        self.constant_by_horizon.windows(2).all(|w| w[0].horizon > w[1].horizon && w[0].ln_constant > w[1].ln_constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HorizonConstant {
    pub horizon: f64,
    /// Overflows to `+∞` for moderate `T`; `ln_constant` stays finite.
    pub constant: f64,
    pub ln_constant: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LowerOrderReport {
    pub params: MomentBoundParams,
    pub replicas: usize,
    pub lhs_estimate: Estimate,
    /// `E sup (|σ| e^{-h|x|})^p`.
    pub sup_term: f64,
    pub ln_constant: f64,
    pub q: f64,
    pub integral_term: f64,
    pub rhs_bound: f64,
    pub margin: f64,
    pub holds: bool,
    /// The constant along `T = 10^{-k}`, `k = 1..=4`.
    pub constant_by_horizon: Vec<HorizonConstant>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MomentExperiment {
    pub high: MomentReport,
    pub lower: LowerOrderReport,
    pub completed: usize,
    pub tail: TailBudget,
    #[serde(skip)]
    pub samples: Vec<MomentSample>,
}

fn validate(cfg: &MomentConfig) -> Result<()> {
    if cfg.replicas < MIN_MOMENT_REPLICAS {
        return Err(invalid(format!("moment experiment needs >= {MIN_MOMENT_REPLICAS} replicas, got {}", cfg.replicas)));
    }
    if !(cfg.coeffs.k_sigma.is_finite()) {
        return Err(invalid("moment experiment needs a bounded diffusion"));
    }
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(invalid(format!("weight exponent h must be positive, got {}", cfg.h)));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if !(cfg.tail_tolerance > 0.0) {
        return Err(invalid("tail tolerance must be positive"));
    }
    ln_constant_high_order(cfg.p, cfg.h, cfg.grid.horizon())?;
    ln_constant_lower_order_refined(cfg.epsilon, cfg.lower_p, cfg.h, cfg.grid.horizon())?;
    Ok(())
}

fn weighted_max(traj: &Trajectory, h: f64) -> (f64, f64) {
    let g = traj.grid();
    let w: Vec<f64> = (0..g.nx()).map(|i| (-h * g.x(i).abs()).exp()).collect();
    let (mut sup, mut raw) = (0.0f64, 0.0f64);
    for f in traj.frames() {
        for (v, wi) in f.values().iter().zip(&w) {
            sup = sup.max(v.abs() * wi);
            raw = raw.max(v.abs());
        }
    }
    (sup, raw)
}

/// `Σ_{k<steps} dt Σ_i dx |σ_{k,i}|^p e^{-p h |x_i|}`.
fn grid_integral(sigma: &Trajectory, p: f64, h: f64) -> f64 {
    let g = sigma.grid();
    let steps = sigma.frames().len().saturating_sub(1).min(g.nt());
    let w: Vec<f64> = (0..g.nx()).map(|i| (-p * h * g.x(i).abs()).exp()).collect();
    let mut s = 0.0;
    for f in &sigma.frames()[..steps] {
        s += f.values().iter().zip(&w).map(|(v, wi)| v.abs().powf(p) * wi).sum::<f64>();
    }
    s * g.dt() * g.dx()
}

fn one_replica(cfg: &MomentConfig, r: u64) -> Result<MomentSample> {
    let g = cfg.grid;
    let (seed, stream) = split_stream(cfg.seed, r);
    let noise = sample_noise(g, seed, stream);
    let (sigma_traj, completed) = match cfg.coeffs.constant_sigma {
        Some(k) => (Trajectory::from_fn(g, |_, _| k)?, true),
        None => {
            let weights = WeightParams::new(cfg.h, cfg.coeffs.c1)?;
            let coeffs: Arc<dyn Coefficients> = Arc::new(cfg.coeffs.clone());
            let sc = SolveConfig::new(coeffs, weights, cfg.initial.sample(g)?, noise.clone(), StoppingMonitor::NONE)?;
            let u = solve(&sc);
            let sig = u.map(|v| (cfg.coeffs.sigma)(v))?;
            (sig, u.is_completed())
        }
    };
    let v = stoch_conv_recursive(&sigma_traj, &noise)?;
    let (sup, max_abs) = weighted_max(&v, cfg.h);
    let (sigma_sup, _) = weighted_max(&sigma_traj, cfg.h);
    let (integral_high, integral_low) = match cfg.coeffs.constant_sigma {
        Some(_) => (0.0, 0.0),
        None => (grid_integral(&sigma_traj, cfg.p, cfg.h), grid_integral(&sigma_traj, cfg.lower_p, cfg.h)),
    };
    Ok(MomentSample { replica: r, sup, sigma_sup, integral_high, integral_low, max_abs, completed })
}

pub fn run_moment_experiment(cfg: &MomentConfig) -> Result<MomentExperiment> {
    validate(cfg)?;
    let t = cfg.grid.horizon();
    let samples = run_replicas(cfg.replicas, |r| one_replica(cfg, r))?;
    let mean = |f: &dyn Fn(&MomentSample) -> f64| samples.iter().map(f).sum::<f64>() / samples.len() as f64;

    let (i_high, i_low) = match cfg.coeffs.constant_sigma {
        Some(k) => (
            integral_term_constant_sigma(k, cfg.p, cfg.h, t)?,
            integral_term_constant_sigma(k, cfg.lower_p, cfg.h, t)?,
        ),
        None => (mean(&|s| s.integral_high), mean(&|s| s.integral_low)),
    };

    let lhs = batch_means(&samples.iter().map(|s| s.sup.powf(cfg.p)).collect::<Vec<_>>(), DEFAULT_BATCHES)?;
    let ln_c = ln_constant_high_order(cfg.p, cfg.h, t)?;
    let rhs = high_rhs(ln_c, i_high);
    let high = MomentReport {
        params: MomentBoundParams { p: cfg.p, h_t: cfg.h, horizon: t, epsilon: None },
        replicas: cfg.replicas,
        lhs_estimate: lhs,
        ln_constant: ln_c,
        integral_term: i_high,
        rhs_bound: rhs,
        margin: margin(rhs, lhs.mean),
        holds: lhs.mean <= rhs,
    };

    let lhs_low =
        batch_means(&samples.iter().map(|s| s.sup.powf(cfg.lower_p)).collect::<Vec<_>>(), DEFAULT_BATCHES)?;
    let sup_term = mean(&|s| s.sigma_sup.powf(cfg.lower_p));
    let (ln_cl, q) = ln_constant_lower_order_refined(cfg.epsilon, cfg.lower_p, cfg.h, t)?;
    let rhs_low = cfg.epsilon * sup_term + if i_low == 0.0 { 0.0 } else { (ln_cl + i_low.ln()).exp() };
    let constant_by_horizon = (1..=4)
        .map(|k| {
            let horizon = 10f64.powi(-k);
            let (ln, q) = ln_constant_lower_order_refined(cfg.epsilon, cfg.lower_p, cfg.h, horizon)?;
            Ok(HorizonConstant { horizon, constant: ln.exp(), ln_constant: ln, q })
        })
        .collect::<Result<Vec<_>>>()?;
    let lower = LowerOrderReport {
        params: MomentBoundParams { p: cfg.lower_p, h_t: cfg.h, horizon: t, epsilon: Some(cfg.epsilon) },
        replicas: cfg.replicas,
        lhs_estimate: lhs_low,
        sup_term,
        ln_constant: ln_cl,
        q,
        integral_term: i_low,
        rhs_bound: rhs_low,
        margin: margin(rhs_low, lhs_low.mean),
        holds: lhs_low.mean <= rhs_low,
        constant_by_horizon,
    };

    let ceiling = samples.iter().map(|s| s.max_abs).fold(0.0, f64::max);
    let norm = mean(&|s| s.sup);
    let tail = TailBudget::new(cfg.h, cfg.grid.half_width(), ceiling, norm, cfg.tail_tolerance)
        .enforce(cfg.enforce_tail)?;
    let completed = samples.iter().filter(|s| s.completed).count();
    Ok(MomentExperiment { high, lower, completed, tail, samples })
}

// ---------------------------------------------------------------------------
// Pointwise variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceConfig {
    pub grid: GridSpec,
    /// Node positions (must be grid points) pooled into one estimate.
    pub nodes: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarianceReport {
    pub t: f64,
    pub nodes: Vec<f64>,
    pub replicas: usize,
    /// Pooled `mean_nodes V(t, x)²`.
    pub estimate: Estimate,
    pub closed_form: f64,
    /// Exact variance of the discrete scheme, averaged over the nodes.
    pub discrete: f64,
    pub relative_error: f64,
}

impl VarianceReport {
    pub fn within(&self, rel: f64) -> bool {
        self.relative_error.abs() <= rel
    }
}

pub(crate) fn node_index(g: &GridSpec, x: f64) -> Result<usize> {
    let i = ((x + g.half_width()) / g.dx()).round();
    if !(i >= 0.0 && i < g.nx() as f64) || (g.x(i as usize) - x).abs() > 1e-9 * g.dx().max(1.0) {
        return Err(invalid(format!("x = {x} is not a grid node")));
    }
    Ok(i as usize)
}

/// `V(t_k, x_node)` for `σ ≡ 1` from one noise slab, with the kernel rows
/// `w_{(k-m)dt}(node - ·)/dx` laid out once per node and lag.
struct NodeProjector {
    rows: Vec<Vec<Vec<f64>>>,
}

impl NodeProjector {
    fn new(cache: &KernelCache, k: usize, nodes: &[usize]) -> Self {
        let g = *cache.grid();
        let inv_dx = 1.0 / g.dx();
        let rows = nodes
            .iter()
            .map(|&n| {
                (0..k)
                    .map(|m| {
                        let w = cache.lag(k - m);
                        (0..g.nx()).map(|j| w.get(j.abs_diff(n)).map_or(0.0, |v| v * inv_dx)).collect()
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    fn values(&self, noise: &crate::noise::NoiseSlab) -> Vec<f64> {
        self.rows
            .iter()
            .map(|per_lag| per_lag.iter().enumerate().map(|(m, r)| dot(r, noise.row(m))).sum())
            .collect()
    }
}

pub fn run_variance_check(cfg: &VarianceConfig) -> Result<VarianceReport> {
    let g = cfg.grid;
    if cfg.nodes.is_empty() {
        return Err(invalid("variance check needs at least one node"));
    }
    let idx = cfg.nodes.iter().map(|&x| node_index(&g, x)).collect::<Result<Vec<_>>>()?;
    let cache = KernelCache::new(g);
    let k = g.nt();
    let proj = NodeProjector::new(&cache, k, &idx);
    let per_replica = run_replicas(cfg.replicas, |r| {
        let (seed, stream) = split_stream(cfg.seed, r);
        let noise = sample_noise(g, seed, stream);
        let v = proj.values(&noise);
        Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
    })?;
    let estimate = batch_means(&per_replica, DEFAULT_BATCHES)?;
    let t = g.horizon();
    let closed_form = variance_closed_form(t)?;
    let discrete = idx.iter().map(|&n| variance_discrete(&cache, k, n)).sum::<f64>() / idx.len() as f64;
    Ok(VarianceReport {
        t,
        nodes: cfg.nodes.clone(),
        replicas: cfg.replicas,
        estimate,
        closed_form,
        discrete,
        relative_error: estimate.mean / closed_form - 1.0,
    })
}

/// Direct vs factorized stochastic convolution at the final time, `σ ≡ 1`.
/// The yardstick is the direct scheme's self-refinement error: the same
/// noise at `dt/2` (coarse cells are sums of fine pairs) against `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationConfig {
    pub grid: GridSpec,
    pub p: f64,
    /// `None` picks the midpoint of the admissible interval.
    pub alpha: Option<f64>,
    /// Nodes with `|x| ≤ interior` enter the RMS.
    pub interior: f64,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FactorizationReport {
    pub p: f64,
    pub alpha: f64,
    pub replicas: usize,
    /// RMS of `V_direct(dt/2) - V_direct(dt)`.
    pub self_refinement: f64,
    /// RMS of `V_factorized(dt) - V_direct(dt)`.
    pub discrepancy: f64,
    pub ratio: f64,
}

impl FactorizationReport {
    pub fn holds(&self, factor: f64) -> bool {
        self.discrepancy <= factor * self.self_refinement
    }
}

pub fn run_factorization_check(cfg: &FactorizationConfig) -> Result<FactorizationReport> {
    let fp = match cfg.alpha {
        Some(a) => FactorizationParams::new(cfg.p, a)?,
        None => FactorizationParams::midpoint(cfg.p)?,
    };
    if cfg.replicas == 0 {
        return Err(invalid("factorization check needs at least one replica"));
    }
    let coarse = cfg.grid;
    let fine = coarse.refined_in_time();
    let nodes: Vec<usize> = (0..coarse.nx()).filter(|&i| coarse.x(i).abs() <= cfg.interior + 1e-12).collect();
    if nodes.is_empty() {
        return Err(invalid("no grid node inside the interior window"));
    }
    let (ones_c, ones_f) = (Trajectory::from_fn(coarse, |_, _| 1.0)?, Trajectory::from_fn(fine, |_, _| 1.0)?);
    let per_replica = run_replicas(cfg.replicas, |r| {
        let (seed, stream) = split_stream(cfg.seed, r);
        let nf = sample_noise(fine, seed, stream);
        let nc = nf.coarsen_time()?;
        let vf = stoch_conv_direct(&ones_f, &nf, fine.nt())?;
        let vc = stoch_conv_direct(&ones_c, &nc, coarse.nt())?;
        let vz = stoch_conv_factorized(&ones_c, &nc, fp, coarse.nt())?;
        let sq = |a: &[f64], b: &[f64]| nodes.iter().map(|&i| (a[i] - b[i]).powi(2)).sum::<f64>();
        Ok((sq(vf.values(), vc.values()), sq(vz.values(), vc.values())))
    })?;
    let n = (cfg.replicas * nodes.len()) as f64;
    let self_refinement = (per_replica.iter().map(|r| r.0).sum::<f64>() / n).sqrt();
    let discrepancy = (per_replica.iter().map(|r| r.1).sum::<f64>() / n).sqrt();
    Ok(FactorizationReport {
        p: fp.p,
        alpha: fp.alpha,
        replicas: cfg.replicas,
        self_refinement,
        discrepancy,
        ratio: discrepancy / self_refinement,
    })
}
