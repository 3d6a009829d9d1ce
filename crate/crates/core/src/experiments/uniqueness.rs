//! Shared-noise probe of pathwise uniqueness: for each level `n`, solve
//! with the mollified coefficients `(b_n, σ_n)` and `(b_{2n}, σ_{2n})`
//! from the same initial data and the same noise slab, and record
//!
//! ```text
//! Z_n = E sup_{t ≤ τ} ‖u_n(t) - u_{2n}(t)‖_{λe^{βt}}
//! ```
//!
//! both with `τ = τ_M ∧ τ^δ ∧ T` (stopped) and `τ = T` (unstopped).

use std::sync::Arc;

use crate::coefficients::{mollify, CoefficientSpec, Coefficients};
use crate::error::{invalid, Result};
use crate::experiments::stats::{batch_means, Estimate, DEFAULT_BATCHES};
use crate::experiments::{run_replicas, InitialCondition, TailBudget};
use crate::grid::{GridSpec, Trajectory};
use crate::gronwall::{dyadic_thetas, zero_forcing_log_bound, ZeroForcingData};
use crate::noise::{sample_noise, split_stream, NoiseSlab};
use crate::solver::{solve, stopping_times, SolveConfig, StoppingMonitor};
use crate::weighted_norms::{WeightParams, WeightSchedule};

#[derive(Debug, Clone)]
pub struct UniquenessConfig {
    pub grid: GridSpec,
    pub coeffs: CoefficientSpec,
    pub lambda: f64,
    pub initial: InitialCondition,
    pub levels: Vec<u32>,
    pub quad_points: usize,
    pub monitor: StoppingMonitor,
    pub replicas: usize,
    pub seed: u64,
    pub ceiling: f64,
    pub tail_tolerance: f64,
    pub enforce_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PairSample {
    pub stopped: f64,
    pub unstopped: f64,
    pub tau_m: f64,
    pub tau_delta: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LevelDistance {
    pub n: u32,
    pub partner: u32,
    pub stopped: Estimate,
    pub unstopped: Estimate,
    /// Fraction of replicas where `τ_M` / `τ^δ` fired before the horizon.
    pub tau_m_rate: f64,
    pub tau_delta_rate: f64,
    /// Mean `τ^δ` over the replicas where it fired (`NaN` if none did).
    pub mean_tau_delta: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UniquenessReport {
    pub replicas: usize,
    pub distances: Vec<LevelDistance>,
    pub nonincreasing_stopped: bool,
    pub nonincreasing_unstopped: bool,
    pub ceiling: f64,
    pub below_ceiling: bool,
    /// Natural log of the zero-forcing bound of the canonical family at
    /// the probe horizon, at the last dyadic `θ` (the bound itself
    /// underflows).
    pub ln_zero_forcing_reference: f64,
    pub tail: TailBudget,
}

impl UniquenessReport {
    pub fn passes(&self) -> bool {
        self.nonincreasing_stopped && self.nonincreasing_unstopped && self.below_ceiling
    }
}

fn validate(cfg: &UniquenessConfig) -> Result<()> {
    if cfg.levels.is_empty() || cfg.levels.contains(&0) {
        return Err(invalid("levels must be a nonempty list of positive integers"));
    }
    if cfg.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("levels must be strictly increasing"));
    }
    if cfg.replicas < DEFAULT_BATCHES {
        return Err(invalid(format!("need at least {DEFAULT_BATCHES} replicas")));
    }
    if !(cfg.ceiling > 0.0) {
        return Err(invalid("ceiling must be positive"));
    }
    Ok(())
}

fn solve_level(cfg: &UniquenessConfig, weights: WeightParams, noise: &NoiseSlab, n: u32) -> Result<Trajectory> {
    let fam: Arc<dyn Coefficients> = Arc::new(mollify(cfg.coeffs.clone(), n, cfg.quad_points)?);
    let sc = SolveConfig::new(fam, weights, cfg.initial.sample(cfg.grid)?, noise.clone(), StoppingMonitor::NONE)?;
    Ok(solve(&sc))
}

fn weights(cfg: &UniquenessConfig) -> Result<WeightParams> {
    WeightParams::new(cfg.lambda, cfg.coeffs.c1)
}

/// Solves levels `n` and `m` independently under the noise of `replica`.
pub fn shared_noise_pair(cfg: &UniquenessConfig, n: u32, m: u32, replica: u64) -> Result<(Trajectory, Trajectory)> {
    let (seed, stream) = split_stream(cfg.seed, replica);
    let noise = sample_noise(cfg.grid, seed, stream);
    let w = weights(cfg)?;
    Ok((solve_level(cfg, w, &noise, n)?, solve_level(cfg, w, &noise, m)?))
}

/// Weighted distances of one pair of paths.
pub fn pair_distance(a: &Trajectory, b: &Trajectory, monitor: &StoppingMonitor, w: &WeightParams) -> Result<PairSample> {
    let st = stopping_times(a, Some(b), monitor, w)?;
    let g = a.grid();
    let sched = WeightSchedule::new(w);
    let frames = a.frames().len().min(b.frames().len());
    let (mut stopped, mut unstopped, mut max_abs_diff) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..frames {
        let t = g.t(k);
        let h = sched.h(t);
        let mut norm = 0.0f64;
        for (i, (x, y)) in a.frame(k).values().iter().zip(b.frame(k).values()).enumerate() {
            let d = (x - y).abs();
            max_abs_diff = max_abs_diff.max(d);
            norm = norm.max(d * (-h * g.x(i).abs()).exp());
        }
        unstopped = unstopped.max(norm);
        if t <= st.tau {
            stopped = stopped.max(norm);
        }
    }
    Ok(PairSample { stopped, unstopped, tau_m: st.tau_m, tau_delta: st.tau_delta, max_abs_diff })
}

fn nonincreasing(z: &[Estimate]) -> bool {
    z.windows(2).all(|w| w[1].mean <= w[0].mean + 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
}

pub fn run_uniqueness_probe(cfg: &UniquenessConfig) -> Result<UniquenessReport> {
    validate(cfg)?;
    let g = cfg.grid;
    let w = weights(cfg)?;
    let mut needed: Vec<u32> = cfg.levels.iter().flat_map(|&n| [n, 2 * n]).collect();
    needed.sort_unstable();
    needed.dedup();
    let per_replica = run_replicas(cfg.replicas, |r| {
        let (seed, stream) = split_stream(cfg.seed, r);
        let noise = sample_noise(g, seed, stream);
        let paths = needed.iter().map(|&n| solve_level(cfg, w, &noise, n)).collect::<Result<Vec<_>>>()?;
        let path = |n: u32| &paths[needed.binary_search(&n).expect("level solved")];
        cfg.levels.iter().map(|&n| pair_distance(path(n), path(2 * n), &cfg.monitor, &w)).collect::<Result<Vec<_>>>()
    })?;
    let horizon = g.horizon();
    let mut distances = Vec::with_capacity(cfg.levels.len());
    for (j, &n) in cfg.levels.iter().enumerate() {
        let col: Vec<PairSample> = per_replica.iter().map(|r| r[j]).collect();
        let est = |f: fn(&PairSample) -> f64| batch_means(&col.iter().map(f).collect::<Vec<_>>(), DEFAULT_BATCHES);
        let hits: Vec<f64> = col.iter().map(|s| s.tau_delta).filter(|t| t.is_finite()).collect();
        let rate = |f: fn(&PairSample) -> f64| col.iter().filter(|s| f(s) < horizon).count() as f64 / col.len() as f64;
        distances.push(LevelDistance {
            n,
            partner: 2 * n,
            stopped: est(|s| s.stopped)?,
            unstopped: est(|s| s.unstopped)?,
            tau_m_rate: rate(|s| s.tau_m),
            tau_delta_rate: rate(|s| s.tau_delta),
            mean_tau_delta: if hits.is_empty() { f64::NAN } else { hits.iter().sum::<f64>() / hits.len() as f64 },
        });
    }
    let stopped: Vec<Estimate> = distances.iter().map(|d| d.stopped).collect();
    let unstopped: Vec<Estimate> = distances.iter().map(|d| d.unstopped).collect();
    let last = distances.last().expect("levels nonempty");
    let below_ceiling = last.stopped.mean < cfg.ceiling && last.unstopped.mean < cfg.ceiling;
    let zf = ZeroForcingData::canonical(cfg.coeffs.c1, 1.0, horizon);
    zf.validate()?;
    let ln_zero_forcing_reference = dyadic_thetas(12)
        .into_iter()
        .map(|th| zero_forcing_log_bound(&zf, th))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let ceiling_diff = per_replica.iter().flatten().map(|s| s.max_abs_diff).fold(0.0, f64::max);
    let tail = TailBudget::new(cfg.lambda, g.half_width(), ceiling_diff, last.unstopped.mean, cfg.tail_tolerance)
        .enforce(cfg.enforce_tail)?;
    Ok(UniquenessReport {
        replicas: cfg.replicas,
        nonincreasing_stopped: nonincreasing(&stopped),
        nonincreasing_unstopped: nonincreasing(&unstopped),
        distances,
        ceiling: cfg.ceiling,
        below_ceiling,
        ln_zero_forcing_reference,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn cfg() -> UniquenessConfig {
        UniquenessConfig {
            grid: make_grid(4.0, 41, 0.01, 10).unwrap(),
            coeffs: CoefficientSpec::parse("xlogx(1)", "tanh-diffusion(1)").unwrap(),
            lambda: 1.0,
            initial: InitialCondition::Cos(1.0),
            levels: vec![2, 4],
            quad_points: 64,
            monitor: StoppingMonitor::new(Some(10.0), Some(0.3)).unwrap(),
            replicas: 10,
            seed: 11,
            ceiling: 1.0,
            tail_tolerance: 1e-6,
            enforce_tail: false,
        }
    }

    #[test]
    fn identical_levels_are_bitwise_identical() {
        let c = cfg();
        let (a, b) = shared_noise_pair(&c, 4, 4, 3).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            let (va, vb): (Vec<u64>, Vec<u64>) =
                (fa.values().iter().map(|v| v.to_bits()).collect(), fb.values().iter().map(|v| v.to_bits()).collect());
            assert_eq!(va, vb);
        }
        let d = pair_distance(&a, &b, &c.monitor, &weights(&c).unwrap()).unwrap();
        assert_eq!((d.stopped, d.unstopped), (0.0, 0.0));
        assert!(d.tau_delta.is_infinite());
    }

    #[test]
    fn tiny_delta_reports_hit_times() {
        let mut c = cfg();
        c.monitor = StoppingMonitor::new(None, Some(1e-9)).unwrap();
        let r = run_uniqueness_probe(&c).unwrap();
        for d in &r.distances {
            assert_eq!(d.tau_delta_rate, 1.0);
            assert!(d.mean_tau_delta.is_finite() && d.mean_tau_delta < c.grid.horizon());
            assert!(d.stopped.mean <= d.unstopped.mean);
        }
    }

    #[test]
    fn small_probe_runs() {
        let r = run_uniqueness_probe(&cfg()).unwrap();
        assert_eq!(r.distances.len(), 2);
        assert_eq!((r.distances[0].n, r.distances[0].partner), (2, 4));
        for d in &r.distances {
            assert!(d.unstopped.mean.is_finite() && d.unstopped.mean > 0.0);
            assert!(d.stopped.mean <= d.unstopped.mean);
        }
        assert!(r.ln_zero_forcing_reference < -1000.0);
    }

    #[test]
    fn level_validation() {
        let mut c = cfg();
        c.levels = vec![4, 4];
        assert!(run_uniqueness_probe(&c).is_err());
        c.levels = vec![0];
        assert!(run_uniqueness_probe(&c).is_err());
        c.levels = vec![];
        assert!(run_uniqueness_probe(&c).is_err());
    }
}
