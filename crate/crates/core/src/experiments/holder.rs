//! Empirical Hölder moduli of the stochastic convolution: log-log slopes
//! of `E|V(t+h,x) - V(t,x)|²` against `h` (expected `1/2`) and of
//! `E|V(t,x) - V(t,y)|²` against `|x - y|` (expected `1`).
//!
//! Moments are pooled over the nodes with `|x| ≤ pool_half_width` and
//! averaged over replicas. Slope confidence intervals come from refitting
//! on each of the ten replica batches.

use std::sync::Arc;

use crate::coefficients::{CoefficientSpec, Coefficients};
use crate::convolution::stoch_conv_recursive;
use crate::error::{invalid, Error, Result};
use crate::experiments::stats::{batch_means, batches_of, fit_line, t_quantile_975, Estimate, DEFAULT_BATCHES};
use crate::experiments::{run_replicas, InitialCondition};
use crate::grid::{GridSpec, Trajectory};
use crate::noise::{sample_noise, split_stream};
use crate::solver::{solve, SolveConfig, StoppingMonitor};
use crate::weighted_norms::WeightParams;

pub const MIN_LAGS: usize = 5;

#[derive(Debug, Clone)]
pub struct HolderConfig {
    pub grid: GridSpec,
    pub coeffs: CoefficientSpec,
    pub initial: InitialCondition,
    /// Base time of all increments.
    pub t0: f64,
    /// Time lags, multiples of `dt`.
    pub time_lags: Vec<f64>,
    /// Space lags in grid nodes.
    pub space_lags: Vec<usize>,
    pub pool_half_width: f64,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LagMoment {
    pub lag: f64,
    pub moment: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub ci: [f64; 2],
}

impl SlopeFit {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.slope >= lo && self.slope <= hi
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HolderReport {
    pub t0: f64,
    pub replicas: usize,
    pub pooled_nodes: usize,
    pub time: Vec<LagMoment>,
    pub space: Vec<LagMoment>,
    pub time_fit: Option<SlopeFit>,
    pub space_fit: Option<SlopeFit>,
    pub expected_time_slope: f64,
    pub expected_space_slope: f64,
    /// Every increment was exactly zero (e.g. `σ ≡ 0`); no fit.
    pub degenerate: bool,
}

struct Plan {
    t0: usize,
    time: Vec<usize>,
    space: Vec<usize>,
    nodes: Vec<usize>,
}

fn plan(cfg: &HolderConfig) -> Result<Plan> {
    let g = cfg.grid;
    let steps = |t: f64| -> Result<usize> {
        let k = (t / g.dt()).round();
        if !(k >= 0.0) || (k * g.dt() - t).abs() > 1e-9 * g.dt() {
            return Err(invalid(format!("time {t} is not a multiple of dt = {}", g.dt())));
        }
        Ok(k as usize)
    };
    let t0 = steps(cfg.t0)?;
    let mut time: Vec<usize> = Vec::new();
    for &h in &cfg.time_lags {
        let k = steps(h)?;
        if k >= 1 && t0 + k <= g.nt() && !time.contains(&k) {
            time.push(k);
        }
    }
    let nodes: Vec<usize> = (0..g.nx()).filter(|&i| g.x(i).abs() <= cfg.pool_half_width + 1e-12).collect();
    let mut space: Vec<usize> = Vec::new();
    for &k in &cfg.space_lags {
        if k >= 1 && nodes.last().is_some_and(|&n| n + k < g.nx()) && !space.contains(&k) {
            space.push(k);
        }
    }
    let usable = time.len().min(space.len());
    if usable < MIN_LAGS {
        return Err(Error::InsufficientLags(usable));
    }
    if t0 == 0 {
        return Err(invalid("t0 must be positive"));
    }
    time.sort_unstable();
    space.sort_unstable();
    Ok(Plan { t0, time, space, nodes })
}

fn sigma_path(cfg: &HolderConfig, noise: &crate::noise::NoiseSlab) -> Result<Trajectory> {
    let g = cfg.grid;
    match cfg.coeffs.constant_sigma {
        Some(k) => Trajectory::from_fn(g, |_, _| k),
        None => {
            let weights = WeightParams::new(1.0, cfg.coeffs.c1)?;
            let coeffs: Arc<dyn Coefficients> = Arc::new(cfg.coeffs.clone());
            let sc = SolveConfig::new(coeffs, weights, cfg.initial.sample(g)?, noise.clone(), StoppingMonitor::NONE)?;
            solve(&sc).map(|v| (cfg.coeffs.sigma)(v))
        }
    }
}

fn fit_with_batches(lags: &[f64], per_replica: &[Vec<f64>]) -> Option<SlopeFit> {
    let means = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..lags.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
    };
    let fit = |m: &[f64]| -> Option<f64> {
        if m.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        let x: Vec<f64> = lags.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        fit_line(&x, &y).ok().map(|f| f.slope)
    };
    let slope = fit(&means(per_replica))?;
    let batch: Vec<f64> =
        batches_of(per_replica, DEFAULT_BATCHES).into_iter().map(|b| fit(&means(b))).collect::<Option<_>>()?;
    let bm = batch.iter().sum::<f64>() / batch.len() as f64;
    let var = batch.iter().map(|s| (s - bm) * (s - bm)).sum::<f64>() / (batch.len() - 1) as f64;
    let se = (var / batch.len() as f64).sqrt();
    let half = t_quantile_975(batch.len() - 1) * se;
    Some(SlopeFit { slope, se, ci: [slope - half, slope + half] })
}

pub fn run_holder_experiment(cfg: &HolderConfig) -> Result<HolderReport> {
    if !cfg.coeffs.k_sigma.is_finite() {
        return Err(invalid("Hölder experiment needs a bounded diffusion"));
    }
    if cfg.replicas < DEFAULT_BATCHES {
        return Err(invalid(format!("need at least {DEFAULT_BATCHES} replicas")));
    }
    let p = plan(cfg)?;
    let g = cfg.grid;
    let rows = run_replicas(cfg.replicas, |r| {
        let (seed, stream) = split_stream(cfg.seed, r);
        let noise = sample_noise(g, seed, stream);
        let v = stoch_conv_recursive(&sigma_path(cfg, &noise)?, &noise)?;
        let last = v.frames().len() - 1;
        let base = v.frame(p.t0.min(last)).values();
        let pooled = |f: &dyn Fn(usize) -> f64| p.nodes.iter().map(|&i| f(i)).sum::<f64>() / p.nodes.len() as f64;
        let time: Vec<f64> = p
            .time
            .iter()
            .map(|&k| {
                let later = v.frame((p.t0 + k).min(last)).values();
                pooled(&|i| (later[i] - base[i]).powi(2))
            })
            .collect();
        let space: Vec<f64> = p.space.iter().map(|&k| pooled(&|i| (base[i + k] - base[i]).powi(2))).collect();
        Ok((time, space))
    })?;
    let (time_rows, space_rows): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let column = |rows: &[Vec<f64>], j: usize| -> Result<Estimate> {
        batch_means(&rows.iter().map(|r| r[j]).collect::<Vec<_>>(), DEFAULT_BATCHES)
    };
    let time_lags: Vec<f64> = p.time.iter().map(|&k| k as f64 * g.dt()).collect();
    let space_lags: Vec<f64> = p.space.iter().map(|&k| k as f64 * g.dx()).collect();
    let time = (0..time_lags.len())
        .map(|j| Ok(LagMoment { lag: time_lags[j], moment: column(&time_rows, j)? }))
        .collect::<Result<Vec<_>>>()?;
    let space = (0..space_lags.len())
        .map(|j| Ok(LagMoment { lag: space_lags[j], moment: column(&space_rows, j)? }))
        .collect::<Result<Vec<_>>>()?;
    let degenerate = time_rows.iter().chain(&space_rows).flatten().all(|v| *v == 0.0);
    let (time_fit, space_fit) = if degenerate {
        (None, None)
    } else {
        (fit_with_batches(&time_lags, &time_rows), fit_with_batches(&space_lags, &space_rows))
    };
    Ok(HolderReport {
        t0: p.t0 as f64 * g.dt(),
        replicas: cfg.replicas,
        pooled_nodes: p.nodes.len(),
        time,
        space,
        time_fit,
        space_fit,
        expected_time_slope: 0.5,
        expected_space_slope: 1.0,
        degenerate,
    })
}
