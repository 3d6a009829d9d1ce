//! Exponential Euler stepping of the mild form
//!
//! ```text
//! u_{k+1} = P_dt [ u_k + dt·b(u_k) + σ(u_k) ΔW_k / dx ]
//! ```
//!
//! with the lattice heat kernel, plus the stopping-time monitors used by
//! the a-priori and uniqueness experiments.

use std::sync::Arc;

use crate::coefficients::Coefficients;
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, GridSpec, RunStatus, StopReason, Trajectory};
use crate::heat_kernel::KernelCache;
use crate::noise::NoiseSlab;
use crate::weighted_norms::{WeightParams, WeightSchedule};

/// `τ_M`: stop once the time-warped weighted norm reaches `M`.
/// `τ^δ`: closeness level for pairs of paths, `0 < δ ≤ e^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoppingMonitor {
    pub m: Option<f64>,
    pub delta: Option<f64>,
}

impl StoppingMonitor {
    pub const NONE: StoppingMonitor = StoppingMonitor { m: None, delta: None };

    pub fn new(m: Option<f64>, delta: Option<f64>) -> Result<Self> {
        if let Some(m) = m {
            if !(m > 0.0) {
                return Err(invalid(format!("M must be positive, got {m}")));
            }
        }
        if let Some(d) = delta {
            if !(d > 0.0 && d <= (-1.0f64).exp()) {
                return Err(invalid(format!("delta must lie in (0, 1/e], got {d}")));
            }
        }
        Ok(Self { m, delta })
    }
}

#[derive(Clone)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub coeffs: Arc<dyn Coefficients>,
    pub weights: WeightParams,
    pub initial: Field,
    pub noise: NoiseSlab,
    pub monitors: StoppingMonitor,
}

impl std::fmt::Debug for SolveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveConfig")
            .field("grid", &self.grid)
            .field("coeffs", &self.coeffs.describe())
            .field("weights", &self.weights)
            .field("monitors", &self.monitors)
            .finish()
    }
}

impl SolveConfig {
    pub fn new(
        coeffs: Arc<dyn Coefficients>,
        weights: WeightParams,
        initial: Field,
        noise: NoiseSlab,
        monitors: StoppingMonitor,
    ) -> Result<Self> {
        let grid = *noise.grid();
        grid.check_same_space(initial.grid())?;
        Ok(Self { grid, coeffs, weights, initial, noise, monitors })
    }

    /// The a-priori bound only covers `T ≤ T*(λ, c₁)`.
    pub fn require_horizon_within_t_star(&self) -> Result<()> {
        let (t, ts) = (self.grid.horizon(), self.weights.t_star);
        if t > ts {
            return Err(Error::HorizonExceedsTstar { horizon: t, t_star: ts });
        }
        Ok(())
    }

    pub fn schedule(&self) -> WeightSchedule {
        WeightSchedule::new(&self.weights)
    }
}

/// Reusable per-solve workspace: the one-step kernel and scratch buffers.
pub struct Stepper {
    cache: KernelCache,
    src: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: GridSpec) -> Self {
        Self { cache: KernelCache::with_max_lag(grid, 1), src: vec![0.0; grid.nx()] }
    }

    /// One step from `u_k` into `out`; `Err(BlowUp(k))` if anything is
    /// non-finite.
    pub fn step_into(&mut self, u: &[f64], k: usize, cfg: &SolveConfig, out: &mut [f64]) -> Result<()> {
        let g = &cfg.grid;
        let (dt, inv_dx) = (g.dt(), 1.0 / g.dx());
        let row = cfg.noise.row(k);
        for ((s, &ui), &dw) in self.src.iter_mut().zip(u).zip(row) {
            let (b, sig) = cfg.coeffs.drift_diffusion(ui);
            *s = ui + dt * b + sig * dw * inv_dx;
        }
        self.cache.apply_lag(1, &self.src, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::BlowUp(k))
        }
    }
}

/// `u_{k+1}` from `u_k`.
pub fn step(u_k: &Field, k: usize, cfg: &SolveConfig) -> Result<Field> {
    cfg.grid.check_same_space(u_k.grid())?;
    if k >= cfg.grid.nt() {
        return Err(invalid(format!("step index {k} beyond nt = {}", cfg.grid.nt())));
    }
    let mut stepper = Stepper::new(cfg.grid);
    let mut out = vec![0.0; cfg.grid.nx()];
    stepper.step_into(u_k.values(), k, cfg, &mut out)?;
    Field::new(cfg.grid, out)
}

fn weighted_frame_norm(values: &[f64], g: &GridSpec, h: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, u)| u.abs() * (-h * g.x(i).abs()).exp())
        .fold(0.0, f64::max)
}

/// Iterates [`step`] to the horizon, stopping early (as a status, not an
/// error) when `τ_M` fires or a step blows up.
pub fn solve(cfg: &SolveConfig) -> Trajectory {
    let g = cfg.grid;
    let sched = cfg.schedule();
    let mut stepper = Stepper::new(g);
    let mut frames: Vec<Field> = Vec::with_capacity(g.nt() + 1);
    frames.push(cfg.initial.clone());
    let mut cur = cfg.initial.values().to_vec();
    let mut next = vec![0.0; g.nx()];
    let mut status = RunStatus::Completed;
    for k in 0..=g.nt() {
        if let Some(m) = cfg.monitors.m {
            if weighted_frame_norm(&cur, &g, sched.h(g.t(k))) >= m {
                status = RunStatus::Stopped { index: k, reason: StopReason::TauM };
                break;
            }
        }
        if k == g.nt() {
            break;
        }
        if stepper.step_into(&cur, k, cfg, &mut next).is_err() {
            status = RunStatus::Stopped { index: k, reason: StopReason::BlowUp };
            break;
        }
        std::mem::swap(&mut cur, &mut next);
        frames.push(Field::new(g, cur.clone()).expect("finite by the step check"));
    }
    Trajectory::new(g, frames, status).expect("frames consistent with status")
}

/// First-hitting times on the frame grid; `+∞` encodes `inf ∅`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoppingTimes {
    pub tau_m: f64,
    pub tau_delta: f64,
    pub tau: f64,
}

/// `τ_M`: first frame time where either path's weighted norm `≥ M`;
/// `τ^δ`: first frame time where the weighted norm of the difference
/// `≥ δ`; `τ = min(τ_M, τ^δ, horizon)`. Frames are compared up to the
/// shorter of the two paths.
pub fn stopping_times(
    traj: &Trajectory,
    other: Option<&Trajectory>,
    monitor: &StoppingMonitor,
    weights: &WeightParams,
) -> Result<StoppingTimes> {
    let g = *traj.grid();
    if let Some(o) = other {
        g.check_same(o.grid())?;
    }
    if monitor.delta.is_some() && other.is_none() {
        return Err(invalid("tau_delta needs a second trajectory"));
    }
    let sched = WeightSchedule::new(weights);
    let n = other.map_or(traj.frames().len(), |o| o.frames().len().min(traj.frames().len()));
    let (mut tau_m, mut tau_delta) = (f64::INFINITY, f64::INFINITY);
    for k in 0..n {
        let t = g.t(k);
        let h = sched.h(t);
        if let (Some(m), true) = (monitor.m, tau_m.is_infinite()) {
            let a = weighted_frame_norm(traj.frame(k).values(), &g, h);
            let b = other.map_or(0.0, |o| weighted_frame_norm(o.frame(k).values(), &g, h));
            if a.max(b) >= m {
                tau_m = t;
            }
        }
        if let (Some(d), Some(o), true) = (monitor.delta, other, tau_delta.is_infinite()) {
            let diff: Vec<f64> =
                traj.frame(k).values().iter().zip(o.frame(k).values()).map(|(a, b)| a - b).collect();
            if weighted_frame_norm(&diff, &g, h) >= d {
                tau_delta = t;
            }
        }
    }
    Ok(StoppingTimes { tau_m, tau_delta, tau: tau_m.min(tau_delta).min(g.horizon()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSpec, Preset};
    use crate::convolution::{stoch_conv_direct, stoch_conv_recursive};
    use crate::grid::sample_function;
    use crate::noise::{sample_noise, StreamId};

    fn cfg(drift: Preset, diffusion: Preset, g: GridSpec, u0: Field, monitors: StoppingMonitor) -> SolveConfig {
        let coeffs = Arc::new(CoefficientSpec::from_presets(drift, diffusion).unwrap());
        SolveConfig::new(coeffs, WeightParams::new(1.0, 1.0).unwrap(), u0, sample_noise(g, 5, StreamId(1)), monitors)
            .unwrap()
    }

    #[test]
    fn pure_heat_flow_step() {
        let g = GridSpec::new(5.0, 101, 0.01, 10).unwrap();
        let u0 = sample_function(g, |x| (-x * x).exp()).unwrap();
        let c = cfg(Preset::Zero, Preset::Zero, g, u0.clone(), StoppingMonitor::NONE);
        let u1 = step(&u0, 0, &c).unwrap();
        let p = crate::heat_kernel::semigroup_apply(&u0, 0.01).unwrap();
        assert_eq!(u1, p);
    }

    #[test]
    fn linear_decay() {
        let g = GridSpec::new(6.0, 121, 0.001, 100).unwrap();
        let u0 = Field::constant(g, 1.0).unwrap();
        let c = cfg(Preset::Linear(-1.0), Preset::Zero, g, u0, StoppingMonitor::NONE);
        let traj = solve(&c);
        assert!(traj.is_completed());
        let v = traj.last().values()[g.center()];
        assert!((v - (-0.1f64).exp()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn additive_noise_equals_stochastic_convolution() {
        let g = GridSpec::new(6.0, 121, 0.005, 20).unwrap();
        let c = cfg(Preset::Zero, Preset::ConstantDiffusion(1.0), g, Field::zeros(g), StoppingMonitor::NONE);
        let traj = solve(&c);
        let ones = Trajectory::from_fn(g, |_, _| 1.0).unwrap();
        let rec = stoch_conv_recursive(&ones, &c.noise).unwrap();
        let direct = stoch_conv_direct(&ones, &c.noise, 20).unwrap();
        for i in 0..g.nx() {
            assert!((traj.last().values()[i] - rec.last().values()[i]).abs() < 1e-10);
        }
        for i in 30..=90 {
            assert!((traj.last().values()[i] - direct.values()[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_data_and_tiny_monitor() {
        let g = GridSpec::new(3.0, 61, 0.01, 10).unwrap();
        let c = cfg(Preset::Xlogx(1.0), Preset::Zero, g, Field::zeros(g), StoppingMonitor::NONE);
        let traj = solve(&c);
        assert!(traj.is_completed());
        assert!(traj.frames().iter().all(|f| f.max_abs() == 0.0));
        let m = StoppingMonitor::new(Some(1e-6), None).unwrap();
        let c = cfg(Preset::Zero, Preset::Zero, g, Field::constant(g, 1.0).unwrap(), m);
        let traj = solve(&c);
        assert_eq!(traj.status(), RunStatus::Stopped { index: 0, reason: StopReason::TauM });
        assert_eq!(traj.frames().len(), 1);
    }

    #[test]
    fn blow_up_is_a_status() {
        let g = GridSpec::new(3.0, 61, 0.1, 50).unwrap();
        let spec = CoefficientSpec::custom("cube", |u| u * u * u, |_| 0.0, 0.0, 0.0, 0.0);
        let c = SolveConfig::new(
            Arc::new(spec),
            WeightParams::new(1.0, 0.0).unwrap(),
            Field::constant(g, 10.0).unwrap(),
            sample_noise(g, 1, StreamId(0)),
            StoppingMonitor::NONE,
        )
        .unwrap();
        let traj = solve(&c);
        match traj.status() {
            RunStatus::Stopped { index, reason: StopReason::BlowUp } => assert_eq!(traj.frames().len(), index + 1),
            s => panic!("{s:?}"),
        }
        let k = match traj.status() {
            RunStatus::Stopped { index, .. } => index,
            _ => unreachable!(),
        };
        assert!(matches!(step(traj.last(), k, &c), Err(Error::BlowUp(_))));
    }

    #[test]
    fn deterministic() {
        let g = GridSpec::new(4.0, 81, 0.005, 40).unwrap();
        let u0 = sample_function(g, |x| x.cos()).unwrap();
        let c = cfg(Preset::Xlogx(1.0), Preset::TanhDiffusion(1.0), g, u0, StoppingMonitor::NONE);
        assert_eq!(solve(&c), solve(&c));
    }

    #[test]
    fn heat_flow_of_gaussian() {
        let g = GridSpec::new(8.0, 161, 0.01, 50).unwrap();
        let w2 = 0.25;
        let u0 = sample_function(g, |x| (-x * x / (2.0 * w2)).exp() / (2.0 * std::f64::consts::PI * w2).sqrt()).unwrap();
        let c = cfg(Preset::Zero, Preset::Zero, g, u0, StoppingMonitor::NONE);
        let traj = solve(&c);
        let s2 = w2 + g.horizon();
        for i in 40..=120 {
            let x = g.x(i);
            let exact = (-x * x / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
            assert!((traj.last().values()[i] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn monitor_validation() {
        assert!(StoppingMonitor::new(Some(0.0), None).is_err());
        assert!(StoppingMonitor::new(None, Some(0.5)).is_err());
        assert!(StoppingMonitor::new(None, Some(0.0)).is_err());
        assert!(StoppingMonitor::new(Some(3.0), Some((-1.0f64).exp())).is_ok());
    }

    #[test]
    fn stopping_time_examples() {
        let g = GridSpec::new(3.0, 61, 0.01, 10).unwrap();
        let w = WeightParams::new(1.0, 0.5).unwrap();
        let zero = Trajectory::from_fn(g, |_, _| 0.0).unwrap();
        let mon = StoppingMonitor::new(Some(1.0), Some(0.1)).unwrap();
        let st = stopping_times(&zero, Some(&zero), &mon, &w).unwrap();
        assert_eq!((st.tau_m, st.tau_delta, st.tau), (f64::INFINITY, f64::INFINITY, g.horizon()));
        let two = Trajectory::from_fn(g, |_, _| 2.0).unwrap();
        let st = stopping_times(&two, None, &StoppingMonitor::new(Some(1.0), None).unwrap(), &w).unwrap();
        assert_eq!(st.tau_m, 0.0);
        let st = stopping_times(&two, Some(&two), &mon, &w).unwrap();
        assert_eq!(st.tau_delta, f64::INFINITY);
        let bump = Trajectory::from_fn(g, |t, _| if t > 0.045 { 0.5 } else { 0.0 }).unwrap();
        let st = stopping_times(&bump, Some(&zero), &mon, &w).unwrap();
        assert!((st.tau_delta - 0.05).abs() < 1e-12 && st.tau_m.is_infinite());
        assert!((st.tau - 0.05).abs() < 1e-12);
        assert!(stopping_times(&zero, None, &mon, &w).is_err());
        let other = Trajectory::from_fn(GridSpec::new(3.0, 61, 0.02, 10).unwrap(), |_, _| 0.0).unwrap();
        assert!(matches!(stopping_times(&zero, Some(&other), &mon, &w), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn horizon_check() {
        let g = GridSpec::new(3.0, 61, 0.1, 10).unwrap();
        let c = cfg(Preset::Xlogx(1.0), Preset::Zero, g, Field::zeros(g), StoppingMonitor::NONE);
        // λ = 1, κ = 1: T* ≈ 0.426 < 1.
        assert!(matches!(c.require_horizon_within_t_star(), Err(Error::HorizonExceedsTstar { .. })));
    }
}
