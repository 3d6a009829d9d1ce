//! Pathwise check of the a-priori estimate
//!
//! ```text
//! U(T) = sup_{t≤T, x} |u(t,x)| e^{-λ|x|e^{βt}}
//!      ≤ C_{λ,c₁,T} · M^{exp(4c₁ T E_T)},
//! M = 1 + 2c₂T + 4e^{λ²T/2}‖u₀‖_λ + 2 sup_{t≤T} ‖V(t)‖_λ,
//! ```
//!
//! for `T ≤ T*(λ, c₁)`, `β = β(λ, c₁)`, with the constant made explicit.
//!
//! # Constant chain
//!
//! Write `E_T = exp((λ²/(4β)) e^{2βT-1})`, the maximum over `s ≤ t ≤ T`
//! of `exp(λ²(t-s)e^{2βs}/2)`.
//!
//! 1. Initial data: `∫p_t(x,y)e^{λ|y|}dy ≤ 2e^{λ²t/2}e^{λ|x|}` gives
//!    `sup |P_t u₀| e^{-λ|x|e^{βt}} ≤ 2e^{λ²T/2}‖u₀‖_λ`.
//! 2. Drift, using `|b(u)| ≤ c₁|u|log₊|u| + c₂` and
//!    `log₊(ab) ≤ log₊a + log₊b`: `c₂T + I + II`.
//! 3. `I ≤ 2c₁E_T ∫_0^T U log₊U ds` (same weighted-mass bound at rate
//!    `η = λe^{βs}`).
//! 4. `II` uses `∫p_t(x,y)e^{η|y|}η|y|dy ≤ e^{η²t/2}e^{η|x|}η|x|
//!    + 2e^{η²t/2}(η²t + η√(t/2π))e^{η|x|}`. The first part integrates in
//!    `s` to at most `(c₁/β)E_T U(T) ≤ U(T)/2` (this is what `T ≤ T*`
//!    buys); the second is bounded with `η ≤ λe^{βT}`, `t - s ≤ T`:
//!    `C_{λ,β,T} = 2E_T(λ²e^{2βT}T + λe^{βT}√(T/2π))`, giving
//!    `c₁C_{λ,β,T} ∫_0^T U ds`.
//! 5. Absorbing `U(T)/2` and doubling:
//!    `U(t) ≤ M + c₁' ∫U + c₂' ∫U log₊U` with `c₁' = 2c₁C_{λ,β,T}`,
//!    `c₂' = 4c₁E_T` (the `1` in `M` makes `M ≥ 1`).
//! 6. Log-Gronwall with constant rates:
//!    `U(T) ≤ M^{e^{c₂'T}} exp(c₁'(e^{c₂'T} - 1)/c₂')`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficients::{CoefficientSpec, Coefficients};
use crate::convolution::stoch_conv_recursive;
use crate::error::{invalid, Error, Result};
use crate::experiments::{run_replicas, InitialCondition, TailBudget};
use crate::grid::GridSpec;
use crate::noise::{sample_noise, split_stream};
use crate::solver::{solve, SolveConfig, StoppingMonitor};
use crate::weighted_norms::{beta, static_weighted_norm, t_star, weighted_sup_norm, WeightParams, WeightSchedule};

/// Every intermediate constant of the chain above.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AprioriConstants {
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub horizon: f64,
    pub beta: f64,
    pub t_star: f64,
    /// `E_T = exp((λ²/(4β)) e^{2βT-1})`.
    pub e_t: f64,
    /// `(c₁/β) E_T`, at most `1/2`.
    pub absorption: f64,
    /// `C_{λ,β,T} = 2E_T(λ²e^{2βT}T + λe^{βT}√(T/2π))`.
    pub kernel_c: f64,
    pub c1_prime: f64,
    pub c2_prime: f64,
    /// `e^{c₂'T}`, the power on `M`.
    pub exponent: f64,
    /// `exp(c₁'(e^{c₂'T} - 1)/c₂')` (`exp(c₁'T)` when `c₂' = 0`).
    pub gronwall_factor: f64,
}

impl AprioriConstants {
    pub fn trace(lambda: f64, c1: f64, c2: f64, horizon: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(invalid(format!("growth constants must be >= 0, got c1 = {c1}, c2 = {c2}")));
        }
        if !(horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        let b = beta(lambda, c1)?;
        let ts = t_star(lambda, c1)?;
        if horizon > ts {
            return Err(Error::HorizonExceedsTstar { horizon, t_star: ts });
        }
        let t = horizon;
        let e_t = (lambda * lambda / (4.0 * b) * (2.0 * b * t - 1.0).exp()).exp();
        let absorption = c1 / b * e_t;
        let kernel_c = 2.0
            * e_t
            * (lambda * lambda * (2.0 * b * t).exp() * t + lambda * (b * t).exp() * (t / (2.0 * PI)).sqrt());
        let c1_prime = 2.0 * c1 * kernel_c;
        let c2_prime = 4.0 * c1 * e_t;
        let x = c2_prime * t;
        // (e^{c₂'T} - 1)/c₂' → T as c₂' → 0.
        let growth = if x == 0.0 { t } else { x.exp_m1() / c2_prime };
        Ok(Self {
            lambda,
            c1,
            c2,
            horizon,
            beta: b,
            t_star: ts,
            e_t,
            absorption,
            kernel_c,
            c1_prime,
            c2_prime,
            exponent: x.exp(),
            gronwall_factor: (c1_prime * growth).exp(),
        })
    }

    /// `2e^{λ²T/2}‖u₀‖_λ`: the heat-flow term alone.
    pub fn initial_term(&self, u0_norm: f64) -> f64 {
        2.0 * (0.5 * self.lambda * self.lambda * self.horizon).exp() * u0_norm
    }

    /// `M = 1 + 2c₂T + 4e^{λ²T/2}‖u₀‖_λ + 2‖V‖`.
    pub fn base(&self, u0_norm: f64, v_norm: f64) -> f64 {
        1.0 + 2.0 * self.c2 * self.horizon + 2.0 * self.initial_term(u0_norm) + 2.0 * v_norm
    }

    pub fn rhs(&self, u0_norm: f64, v_norm: f64) -> f64 {
        (self.gronwall_factor.ln() + self.exponent * self.base(u0_norm, v_norm).ln()).exp()
    }
}

#[derive(Debug, Clone)]
pub struct AprioriConfig {
    pub grid: GridSpec,
    pub coeffs: CoefficientSpec,
    pub lambda: f64,
    pub initial: InitialCondition,
    pub replicas: usize,
    pub seed: u64,
    pub tail_tolerance: f64,
    pub enforce_tail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AprioriSample {
    pub replica: u64,
    pub completed: bool,
    /// `U(T)` on the grid.
    pub u_norm: f64,
    /// `sup_{t≤T} ‖V(t)‖_λ` on the grid.
    pub v_norm: f64,
    pub rhs: f64,
    pub margin: f64,
    pub violated: bool,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AprioriReport {
    pub constants: AprioriConstants,
    pub replicas: usize,
    pub completed: usize,
    pub violations: usize,
    pub u0_norm: f64,
    pub initial_term: f64,
    pub margin_min: f64,
    pub margin_median: f64,
    pub margin_max: f64,
    pub tail: TailBudget,
    #[serde(skip)]
    pub samples: Vec<AprioriSample>,
}

pub fn run_apriori_experiment(cfg: &AprioriConfig) -> Result<AprioriReport> {
    let g = cfg.grid;
    let k = &cfg.coeffs;
    if !k.k_sigma.is_finite() {
        return Err(invalid("a-priori experiment needs a bounded diffusion"));
    }
    if cfg.replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let constants = AprioriConstants::trace(cfg.lambda, k.c1, k.c2, g.horizon())?;
    // Spot-check the growth bound the chain relies on.
    let probe: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
    k.check_samples(&probe)?;
    let weights = WeightParams::new(cfg.lambda, k.c1)?;
    let sched = WeightSchedule::new(&weights);
    let u0 = cfg.initial.sample(g)?;
    let u0_norm = static_weighted_norm(&u0, cfg.lambda)?;
    let coeffs: Arc<dyn Coefficients> = Arc::new(k.clone());
    let samples = run_replicas(cfg.replicas, |r| {
        let (seed, stream) = split_stream(cfg.seed, r);
        let noise = sample_noise(g, seed, stream);
        let sc = SolveConfig::new(coeffs.clone(), weights, u0.clone(), noise, StoppingMonitor::NONE)?;
        let u = solve(&sc);
        let completed = u.is_completed();
        let reach = g.t(u.frames().len() - 1);
        let u_norm = weighted_sup_norm(&u, &sched, reach)?;
        let v = stoch_conv_recursive(&u.map(|x| (k.sigma)(x))?, &sc.noise)?;
        let mut v_norm = 0.0f64;
        for f in v.frames() {
            v_norm = v_norm.max(static_weighted_norm(f, cfg.lambda)?);
        }
        let max_abs = u.frames().iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        let rhs = constants.rhs(u0_norm, v_norm);
        Ok(AprioriSample {
            replica: r,
            completed,
            u_norm,
            v_norm,
            rhs,
            margin: rhs / u_norm,
            violated: completed && u_norm > rhs,
            max_abs,
        })
    })?;
    let mut margins: Vec<f64> = samples.iter().filter(|s| s.completed).map(|s| s.margin).collect();
    margins.sort_by(f64::total_cmp);
    let pick = |q: f64| margins.get(((margins.len() - 1) as f64 * q).round() as usize).copied().unwrap_or(f64::NAN);
    let (margin_min, margin_median, margin_max) =
        if margins.is_empty() { (f64::NAN, f64::NAN, f64::NAN) } else { (pick(0.0), pick(0.5), pick(1.0)) };
    let ceiling = samples.iter().map(|s| s.max_abs).fold(0.0, f64::max);
    let norm = samples.iter().map(|s| s.u_norm).sum::<f64>() / samples.len() as f64;
    let tail = TailBudget::new(cfg.lambda, g.half_width(), ceiling, norm, cfg.tail_tolerance)
        .enforce(cfg.enforce_tail)?;
    Ok(AprioriReport {
        constants,
        replicas: cfg.replicas,
        completed: samples.iter().filter(|s| s.completed).count(),
        violations: samples.iter().filter(|s| s.violated).count(),
        u0_norm,
        initial_term: constants.initial_term(u0_norm),
        margin_min,
        margin_median,
        margin_max,
        tail,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    #[test]
    fn traced_constants_at_unit_rates() {
        let c = AprioriConstants::trace(1.0, 1.0, 1.0 / std::f64::consts::E, 0.1).unwrap();
        assert_eq!(c.beta, 4.0);
        assert!((c.t_star - 0.425_8).abs() < 1e-3, "{}", c.t_star);
        let e_t = (0.0625 * (-0.2f64).exp()).exp();
        assert!((c.e_t - e_t).abs() < 1e-15);
        assert!(c.absorption <= 0.5);
        let kc = 2.0 * e_t * (0.8f64.exp() * 0.1 + 0.4f64.exp() * (0.1 / (2.0 * PI)).sqrt());
        assert!((c.kernel_c - kc).abs() < 1e-14);
        assert!((c.c2_prime - 4.0 * e_t).abs() < 1e-15);
        assert!((c.exponent - (0.4 * e_t).exp()).abs() < 1e-14);
        let gf = (2.0 * kc * (0.4 * e_t).exp_m1() / (4.0 * e_t)).exp();
        assert!((c.gronwall_factor - gf).abs() < 1e-13 * gf);
        // M = 1 + 2c₂T + 4e^{T/2}·1 + 2·0.5.
        let m = 1.0 + 0.2 / std::f64::consts::E + 4.0 * 0.05f64.exp() + 1.0;
        assert!((c.rhs(1.0, 0.5) - gf * m.powf(c.exponent)).abs() < 1e-12 * c.rhs(1.0, 0.5));
    }

    #[test]
    fn horizon_beyond_t_star_rejected() {
        let e = AprioriConstants::trace(1.0, 1.0, 0.0, 0.5).unwrap_err();
        assert!(matches!(e, Error::HorizonExceedsTstar { .. }), "{e}");
        let g = make_grid(4.0, 41, 0.01, 50).unwrap();
        let cfg = AprioriConfig {
            grid: g,
            coeffs: CoefficientSpec::parse("xlogx(1)", "tanh-diffusion(1)").unwrap(),
            lambda: 1.0,
            initial: InitialCondition::Constant(1.0),
            replicas: 2,
            seed: 1,
            tail_tolerance: 1e-6,
            enforce_tail: false,
        };
        assert!(matches!(run_apriori_experiment(&cfg), Err(Error::HorizonExceedsTstar { .. })));
    }

    #[test]
    fn zero_coefficients_bounded_by_initial_term() {
        let g = make_grid(6.0, 61, 0.01, 20).unwrap();
        let cfg = AprioriConfig {
            grid: g,
            coeffs: CoefficientSpec::parse("zero", "zero").unwrap(),
            lambda: 1.0,
            initial: InitialCondition::Cos(2.0),
            replicas: 3,
            seed: 1,
            tail_tolerance: 1e-6,
            enforce_tail: false,
        };
        let r = run_apriori_experiment(&cfg).unwrap();
        assert_eq!(r.constants.c1_prime, 0.0);
        assert_eq!(r.constants.gronwall_factor, 1.0);
        assert_eq!(r.u0_norm, 2.0);
        for s in &r.samples {
            assert!(s.u_norm <= r.initial_term, "{s:?}");
            assert_eq!(s.v_norm, 0.0);
        }
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn nonlinear_small_run_has_no_violations() {
        let g = make_grid(6.0, 61, 0.005, 20).unwrap();
        let cfg = AprioriConfig {
            grid: g,
            coeffs: CoefficientSpec::parse("xlogx(1)", "tanh-diffusion(1)").unwrap(),
            lambda: 1.0,
            initial: InitialCondition::Constant(1.0),
            replicas: 20,
            seed: 5,
            tail_tolerance: 1e-6,
            enforce_tail: false,
        };
        let r = run_apriori_experiment(&cfg).unwrap();
        assert_eq!((r.completed, r.violations), (20, 0));
        assert!(r.margin_min > 1.0 && r.margin_min <= r.margin_median && r.margin_median <= r.margin_max);
        assert!(!r.tail.within);
    }

    proptest! {
        #[test]
        fn rhs_monotone_in_data(u0 in 0.0f64..5.0, v in 0.0f64..5.0, d in 0.0f64..1.0, lambda in 0.2f64..2.0) {
            let ts = t_star(lambda, 1.0).unwrap();
            let c = AprioriConstants::trace(lambda, 1.0, 0.5, 0.5 * ts).unwrap();
            prop_assert!(c.absorption <= 0.5 + 1e-12);
            let r = c.rhs(u0, v);
            prop_assert!(r >= c.base(u0, v));
            prop_assert!(c.rhs(u0 + d, v) >= r && c.rhs(u0, v + d) >= r);
        }
    }
}
