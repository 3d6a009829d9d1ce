//! Weighted sup-norms with a time-warped decay rate, the metric on
//! tempered continuous functions, and the horizon parameters `β`, `T*`.

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Trajectory};

/// `β(λ, κ) = max(λ²/2, 4κ)`.
pub fn beta(lambda: f64, kappa: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok((0.5 * lambda * lambda).max(4.0 * kappa))
}

/// `T*(λ, κ) = (1/(2β))·[1 + log((4β/λ²)·log(β/(2κ)))]`; `+∞` when `κ = 0`.
pub fn t_star(lambda: f64, kappa: f64) -> Result<f64> {
    let b = beta(lambda, kappa)?;
    if kappa == 0.0 {
        return Ok(f64::INFINITY);
    }
    // β ≥ 4κ, so β/(2κ) ≥ 2 and the inner argument is at least 2·log 2.
    let ratio = b / (2.0 * kappa);
    debug_assert!(ratio >= 2.0 * (1.0 - 1e-15));
    let inner = 4.0 * b / (lambda * lambda) * ratio.ln();
    if !(inner > 0.0) {
        return Err(Error::Domain(format!("nested log argument {inner} <= 0")));
    }
    Ok((1.0 + inner.ln()) / (2.0 * b))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeightParams {
    pub lambda: f64,
    pub kappa: f64,
    pub beta: f64,
    pub t_star: f64,
}

impl WeightParams {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        Ok(Self { lambda, kappa, beta: beta(lambda, kappa)?, t_star: t_star(lambda, kappa)? })
    }
}

/// `h(t) = λ e^{βt}`. `beta` may be overridden (e.g. `0` gives the static
/// weight at every time).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeightSchedule {
    pub lambda: f64,
    pub beta: f64,
}

impl WeightSchedule {
    pub fn new(p: &WeightParams) -> Self {
        Self { lambda: p.lambda, beta: p.beta }
    }

    pub fn with_beta(lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(beta >= 0.0) {
            return Err(invalid(format!("need lambda > 0 and beta >= 0, got {lambda}, {beta}")));
        }
        Ok(Self { lambda, beta })
    }

    pub fn h(&self, t: f64) -> f64 {
        self.lambda * (self.beta * t).exp()
    }
}

/// `max_{t_k ≤ up_to, i} |u(t_k, x_i)| e^{-h(t_k)|x_i|}`.
pub fn weighted_sup_norm(traj: &Trajectory, sched: &WeightSchedule, up_to: f64) -> Result<f64> {
    let g = traj.grid();
    if up_to > g.horizon() * (1.0 + 1e-12) {
        return Err(invalid(format!("up_to = {up_to} beyond horizon {}", g.horizon())));
    }
    let xs = g.xs();
    let mut best = 0.0f64;
    for (k, frame) in traj.frames().iter().enumerate() {
        let t = g.t(k);
        if t > up_to * (1.0 + 1e-12) {
            break;
        }
        let h = sched.h(t);
        for (u, x) in frame.values().iter().zip(&xs) {
            best = best.max(u.abs() * (-h * x.abs()).exp());
        }
    }
    Ok(best)
}

/// `max_i |f(x_i)| e^{-λ|x_i|}`.
pub fn static_weighted_norm(f: &Field, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let g = f.grid();
    Ok(f.values()
        .iter()
        .enumerate()
        .map(|(i, u)| u.abs() * (-lambda * g.x(i).abs()).exp())
        .fold(0.0, f64::max))
}

/// Partial sum `Σ_{n=1}^{terms} 2^{-n} min(1, ‖f-g‖_{1/n})`; the omitted
/// tail is at most `2^{-terms}`.
pub fn ctem_distance(f: &Field, g: &Field, terms: usize) -> Result<f64> {
    if terms == 0 {
        return Err(invalid("terms must be >= 1"));
    }
    let d = f.sub(g)?;
    let mut s = 0.0;
    let mut w = 1.0;
    for n in 1..=terms {
        w *= 0.5;
        s += w * static_weighted_norm(&d, 1.0 / n as f64)?.min(1.0);
    }
    Ok(s)
}

pub const DEFAULT_CTEM_TERMS: usize = 20;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_function, GridSpec, RunStatus};
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta(1.0, 0.1).unwrap(), 0.5);
        assert_eq!(beta(0.5, 1.0).unwrap(), 4.0);
        assert_eq!(beta(2.0, 0.5).unwrap(), 2.0);
        assert!(beta(0.0, 1.0).is_err());
        assert!(beta(-1.0, 1.0).is_err());
    }

    #[test]
    fn t_star_examples() {
        // Closed form evaluated independently: (1 + ln(2 ln 2.5)) / 1.
        let v = t_star(1.0, 0.1).unwrap();
        assert!((v - 1.605_725_608_769_190).abs() < 1e-13, "{v}");
        assert!((v - 1.6060).abs() < 5e-4);
        // (1 + ln(160 ln 2)) / 0.8
        let v = t_star(0.1, 0.1).unwrap();
        assert!((v - 7.135_826_118_315_203).abs() < 1e-12, "{v}");
        assert!((v - 7.137).abs() < 2e-3);
        assert!(t_star(0.5, 0.1).unwrap() > t_star(1.0, 0.1).unwrap());
        assert_eq!(t_star(1.0, 0.0).unwrap(), f64::INFINITY);
        assert!(t_star(0.0, 0.1).is_err());
    }

    #[test]
    fn t_star_decreasing_in_kappa() {
        for lambda in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let mut prev = f64::INFINITY;
            for i in 1..200 {
                let kappa = 0.01 * i as f64;
                let v = t_star(lambda, kappa).unwrap();
                assert!(v < prev, "lambda={lambda} kappa={kappa}");
                prev = v;
            }
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(5.0, 101, 0.01, 10).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let g = grid();
        let sched = WeightSchedule::new(&WeightParams::new(1.0, 0.1).unwrap());
        assert_eq!(sched.h(0.0), 1.0);
        let zero = Trajectory::from_fn(g, |_, _| 0.0).unwrap();
        assert_eq!(weighted_sup_norm(&zero, &sched, g.horizon()).unwrap(), 0.0);
        let one = Trajectory::from_fn(g, |_, _| 1.0).unwrap();
        assert_eq!(weighted_sup_norm(&one, &sched, g.horizon()).unwrap(), 1.0);
        let f0 = sample_function(g, |x| x.abs().exp()).unwrap();
        let single = Trajectory::new(g, vec![f0.clone()], RunStatus::Stopped { index: 0, reason: crate::grid::StopReason::TauM }).unwrap();
        let n = weighted_sup_norm(&single, &sched, 0.0).unwrap();
        assert!((n - 1.0).abs() < 1e-14);
        for i in 0..g.nx() {
            let w = f0.values()[i] * (-g.x(i).abs()).exp();
            assert!((w - 1.0).abs() < 1e-14);
        }
        assert!(weighted_sup_norm(&one, &sched, 1.0).is_err());
    }

    #[test]
    fn zero_beta_reduces_to_static() {
        let g = grid();
        let traj = Trajectory::from_fn(g, |t, x| (3.0 * t + x).sin() * (1.0 + x * x)).unwrap();
        let sched = WeightSchedule::with_beta(0.7, 0.0).unwrap();
        let dynamic = weighted_sup_norm(&traj, &sched, g.horizon()).unwrap();
        let stat = traj
            .frames()
            .iter()
            .map(|f| static_weighted_norm(f, 0.7).unwrap())
            .fold(0.0, f64::max);
        assert_eq!(dynamic, stat);
    }

    #[test]
    fn argmax_stable_under_extension() {
        // Once the tail weight times the max value is below the norm,
        // widening the domain changes nothing.
        let f = |x: f64| (1.0 + x.abs()).powi(2);
        let lambda = 1.0;
        let small = sample_function(GridSpec::new(10.0, 201, 0.1, 1).unwrap(), f).unwrap();
        let big = sample_function(GridSpec::new(20.0, 401, 0.1, 1).unwrap(), f).unwrap();
        let a = static_weighted_norm(&small, lambda).unwrap();
        assert!((-lambda * 10.0f64).exp() * small.max_abs() < a);
        assert_eq!(a, static_weighted_norm(&big, lambda).unwrap());
    }

    #[test]
    fn static_examples() {
        let g = GridSpec::new(30.0, 601, 0.1, 1).unwrap();
        assert_eq!(static_weighted_norm(&Field::zeros(g), 1.0).unwrap(), 0.0);
        assert_eq!(static_weighted_norm(&Field::constant(g, 1.0).unwrap(), 1.0).unwrap(), 1.0);
        let f = sample_function(g, |x| (0.5 * 2.0 * x.abs()).exp()).unwrap();
        assert_eq!(static_weighted_norm(&f, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn ctem_examples() {
        let g = grid();
        let f = sample_function(g, |x| x.sin()).unwrap();
        assert_eq!(ctem_distance(&f, &f, 20).unwrap(), 0.0);
        let h = f.map(|v| v + 1.0).unwrap();
        let d = ctem_distance(&h, &f, 20).unwrap();
        assert!((d - (1.0 - 2f64.powi(-20))).abs() < 1e-15);
        assert!(ctem_distance(&f, &f, 0).is_err());
        let other = Field::zeros(GridSpec::new(4.0, 101, 0.01, 10).unwrap());
        assert!(matches!(ctem_distance(&f, &other, 5), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #[test]
        fn ctem_below_one(a in -1e6f64..1e6, b in -10.0f64..10.0, terms in 1usize..40) {
            let g = grid();
            let f = sample_function(g, |x| a * (b * x).cos()).unwrap();
            let z = Field::zeros(g);
            let d = ctem_distance(&f, &z, terms).unwrap();
            prop_assert!((0.0..1.0).contains(&d));
            let full = ctem_distance(&f, &z, 60).unwrap();
            prop_assert!(full - d <= 2f64.powi(-(terms as i32)) + 1e-15);
        }

        #[test]
        fn schedule_increasing(lambda in 0.01f64..10.0, kappa in 0.0f64..5.0, t in 0.0f64..1.0, dt in 1e-6f64..1.0) {
            let s = WeightSchedule::new(&WeightParams::new(lambda, kappa).unwrap());
            prop_assert!(s.h(t + dt) > s.h(t));
        }
    }
}
