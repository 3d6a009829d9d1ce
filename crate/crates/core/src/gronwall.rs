//! Two Gronwall-type inequalities: the closed-form bound for
//! `X ≤ M + ∫c₁X + ∫c₂ X log₊X`, and the zero-forcing bound for
//! `Y ≤ c₁∫Y + c₂∫Y log₊(1/Y) + c₃(θ)∫Y^θ`, each with an executable check.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::quad::{self, Tolerance};

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Rate2Fn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

const QTOL: Tolerance = Tolerance { abs: 1e-300, rel: 1e-12 };

/// Piecewise-constant function: `values[i]` on `[breaks[i], breaks[i+1])`,
/// last value continued to the right.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= t).saturating_sub(1);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Data of the log-Gronwall inequality. `breaks` lists points where the rates
/// may jump; quadrature and the ODE check both split there.
#[derive(Clone)]
pub struct GronwallData {
    pub name: String,
    pub m: RateFn,
    pub c1: RateFn,
    pub c2: RateFn,
    pub breaks: Vec<f64>,
}

impl std::fmt::Debug for GronwallData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GronwallData").field("name", &self.name).field("breaks", &self.breaks).finish()
    }
}

impl GronwallData {
    pub fn constant(m: f64, c1: f64, c2: f64) -> Self {
        Self {
            name: format!("const(M={m},c1={c1},c2={c2})"),
            m: Arc::new(move |_| m),
            c1: Arc::new(move |_| c1),
            c2: Arc::new(move |_| c2),
            breaks: vec![],
        }
    }

    /// Seeded family on `[0, 1]`: `M(t) = M₀ + a·t` with `M₀ ∈ [1, 3]`,
    /// `a ∈ [0, 1]`, and rates constant on five equal pieces, each drawn
    /// from `[0, 2)`.
    pub fn random_family(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        let m0 = rng.random_range(1.0..3.0);
        let a = rng.random_range(0.0..1.0);
        let breaks: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let pc = |rng: &mut ChaCha8Rng| PiecewiseConstant {
            breaks: breaks.clone(),
            values: (0..5).map(|_| rng.random_range(0.0..2.0)).collect(),
        };
        let (p1, p2) = (pc(&mut rng), pc(&mut rng));
        Self {
            name: format!("family-{id}"),
            m: Arc::new(move |t| m0 + a * t),
            c1: Arc::new(move |t| p1.eval(t)),
            c2: Arc::new(move |t| p2.eval(t)),
            breaks: breaks[1..].to_vec(),
        }
    }

    /// `M(0) ≥ 1`, `M` nondecreasing and rates nonnegative on a sample of
    /// `[0, t_max]`.
    pub fn validate(&self, t_max: f64) -> Result<()> {
        if (self.m)(0.0) < 1.0 {
            return Err(Error::Hypothesis(format!("M(0) = {} < 1", (self.m)(0.0))));
        }
        let mut prev = (self.m)(0.0);
        for i in 1..=1000 {
            let t = t_max * i as f64 / 1000.0;
            let m = (self.m)(t);
            if m < prev {
                return Err(Error::Hypothesis(format!("M decreases near t = {t}")));
            }
            prev = m;
            if (self.c1)(t) < 0.0 || (self.c2)(t) < 0.0 {
                return Err(Error::Hypothesis(format!("negative rate at t = {t}")));
            }
        }
        Ok(())
    }

    fn integrate(&self, f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        quad::integrate_breaks(f, a, b, &self.breaks, QTOL)
    }

    /// `C₂(t) = ∫_0^t c₂`.
    pub fn big_c2(&self, t: f64) -> Result<f64> {
        self.integrate(|s| (self.c2)(s), 0.0, t)
    }
}

/// Natural log of the closed-form bound
/// `M(t)^{exp C₂(t)} · exp(exp C₂(t) · ∫_0^t c₁(s) e^{-C₂(s)} ds)`.
pub fn log_gronwall_log_bound(data: &GronwallData, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("t must be >= 0, got {t}")));
    }
    let c2t = data.big_c2(t)?;
    let mut failure = None;
    let inner = data.integrate(
        |s| match data.big_c2(s) {
            Ok(c) => (data.c1)(s) * (-c).exp(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        t,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(c2t.exp() * ((data.m)(t).ln() + inner?))
}

/// The closed-form bound; overflow yields `+∞`.
pub fn log_gronwall_bound(data: &GronwallData, t: f64) -> Result<f64> {
    Ok(log_gronwall_log_bound(data, t)?.exp())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GronwallRow {
    pub t: f64,
    pub ode: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GronwallReport {
    pub family: String,
    pub rows: Vec<GronwallRow>,
    pub max_ratio: f64,
    /// Substeps per output interval after halving converged.
    pub substeps: usize,
}

impl GronwallReport {
    pub fn holds(&self, rel: f64) -> bool {
        self.max_ratio <= 1.0 + rel
    }
}

/// Classic RK4 for `z' = c₁(t) + c₂(t) z` (`z = log Y` of the extremal
/// equation `Y' = c₁Y + c₂Y log Y`), returning `z` at the `steps + 1`
/// output times. Rates are sampled just inside each segment between jump
/// points, so a jump is always seen from the segment's own side.
fn rk4_log(data: &GronwallData, t_max: f64, steps: usize, sub: usize) -> Vec<f64> {
    let mut knots: Vec<f64> = (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect();
    knots.extend(data.breaks.iter().copied().filter(|b| *b > 0.0 && *b < t_max));
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let rhs = |t: f64, z: f64, lo: f64, hi: f64| {
        let eps = 1e-12 * (hi - lo);
        let s = t.clamp(lo + eps, hi - eps);
        (data.c1)(s) + (data.c2)(s) * z
    };
    let mut z = (data.m)(0.0).ln();
    let mut out = vec![z];
    let mut next_out = 1;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / sub as f64;
        for i in 0..sub {
            let t = a + i as f64 * h;
            let k1 = rhs(t, z, a, b);
            let k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1, a, b);
            let k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2, a, b);
            let k4 = rhs(t + h, z + h * k3, a, b);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if next_out <= steps && (b - t_max * next_out as f64 / steps as f64).abs() <= 1e-14 * t_max.max(1.0) {
            out.push(z);
            next_out += 1;
        }
    }
    out
}

/// Integrates the extremal ODE with step halving until two resolutions
/// agree to `1e-8` (relative in `log Y`), then compares with the bound at
/// every output time.
pub fn verify_log_gronwall(data: &GronwallData, t_max: f64, steps: usize) -> Result<GronwallReport> {
    if steps < 100 {
        return Err(invalid(format!("need at least 100 steps, got {steps}")));
    }
    if !(t_max > 0.0) {
        return Err(invalid("t_max must be positive"));
    }
    data.validate(t_max)?;
    let mut sub = 1;
    let mut z = rk4_log(data, t_max, steps, sub);
    loop {
        let z2 = rk4_log(data, t_max, steps, 2 * sub);
        let agree = z.iter().zip(&z2).all(|(a, b)| (a - b).abs() <= 1e-8 * a.abs().max(1.0));
        sub *= 2;
        z = z2;
        if agree || sub >= 1 << 16 {
            break;
        }
    }
    let mut rows = Vec::with_capacity(steps + 1);
    let mut max_ratio = 0.0f64;
    for (i, zi) in z.iter().enumerate() {
        let t = t_max * i as f64 / steps as f64;
        let lb = log_gronwall_log_bound(data, t)?;
        let ratio = (zi - lb).exp();
        max_ratio = max_ratio.max(ratio);
        rows.push(GronwallRow { t, ode: zi.exp(), bound: lb.exp(), ratio });
    }
    Ok(GronwallReport { family: data.name.clone(), rows, max_ratio, substeps: sub })
}

// ---------------------------------------------------------------------------
// Zero forcing
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct ZeroForcingData {
    pub c1: RateFn,
    pub c2: RateFn,
    pub c3: Rate2Fn,
    pub epsilon: f64,
    /// `limsup_{θ→1} (1-θ) c₃(T, θ)`.
    pub delta_t: f64,
    pub horizon: f64,
}

impl std::fmt::Debug for ZeroForcingData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZeroForcingData")
            .field("epsilon", &self.epsilon)
            .field("delta_t", &self.delta_t)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ZeroForcingData {
    /// `c₁ ≡ a`, `c₂ ≡ 0`, `c₃(t, θ) = c/(1-θ)`, so `δ_T = c`.
    pub fn canonical(c1: f64, c: f64, horizon: f64) -> Self {
        Self {
            c1: Arc::new(move |_| c1),
            c2: Arc::new(|_| 0.0),
            c3: Arc::new(move |_, th| c / (1.0 - th)),
            epsilon: 0.0,
            delta_t: c,
            horizon,
        }
    }

    /// Checks `(1-θ)c₃(T, θ) ≤ δ_T(1 + 1e-6)` at `θ = 1 - 2^{-k}` inside
    /// `(ε, 1)`, and the sign conditions.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if !(self.horizon > 0.0) || !(self.delta_t >= 0.0) {
            return Err(invalid("need T > 0 and delta_T >= 0"));
        }
        let t = self.horizon;
        if (self.c1)(t) < 0.0 || (self.c2)(t) < 0.0 {
            return Err(Error::Hypothesis("c1, c2 must be nonnegative".into()));
        }
        for k in 1..=40 {
            let th = 1.0 - 2f64.powi(-k);
            if th <= self.epsilon {
                continue;
            }
            let v = (1.0 - th) * (self.c3)(t, th);
            if !(v <= self.delta_t * (1.0 + 1e-6)) {
                return Err(Error::Hypothesis(format!(
                    "(1-θ)c3(T, θ) = {v} exceeds delta_T = {} at θ = {th}",
                    self.delta_t
                )));
            }
        }
        Ok(())
    }

    /// `T* = min{T, 1/(3δ_T), e/(3c₂(T))}`; vanishing denominators drop
    /// their term.
    pub fn t_star(&self) -> f64 {
        let mut ts = self.horizon;
        if self.delta_t > 0.0 {
            ts = ts.min(1.0 / (3.0 * self.delta_t));
        }
        let c2 = (self.c2)(self.horizon);
        if c2 > 0.0 {
            ts = ts.min(std::f64::consts::E / (3.0 * c2));
        }
        ts
    }

    /// Number of `T*`-windows needed to cover `[0, T]`.
    pub fn iterations(&self) -> usize {
        (self.horizon / self.t_star()).ceil() as usize
    }
}

/// Natural log of `e^{c₁(T)T*} (c₂(T)T*/e + (1-θ)c₃(T,θ)T*)^{1/(1-θ)}`.
pub fn zero_forcing_log_bound(data: &ZeroForcingData, theta: f64) -> Result<f64> {
    if !(theta > data.epsilon && theta < 1.0) {
        return Err(invalid(format!("theta = {theta} outside ({}, 1)", data.epsilon)));
    }
    let (t, ts) = (data.horizon, data.t_star());
    let base = (data.c2)(t) * ts / std::f64::consts::E + (1.0 - theta) * (data.c3)(t, theta) * ts;
    Ok((data.c1)(t) * ts + base.ln() / (1.0 - theta))
}

pub fn zero_forcing_bound(data: &ZeroForcingData, theta: f64) -> Result<f64> {
    Ok(zero_forcing_log_bound(data, theta)?.exp())
}

/// Minimum of the bound over an increasing `θ` sweep, after checking the
/// inequality's hypothesis on the data.
pub fn zero_forcing_limit(data: &ZeroForcingData, thetas: &[f64]) -> Result<f64> {
    data.validate()?;
    if thetas.is_empty() || thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("thetas must be a nonempty increasing list"));
    }
    let mut best = f64::INFINITY;
    for &th in thetas {
        best = best.min(zero_forcing_bound(data, th)?);
    }
    Ok(best)
}

/// `θ_k = 1 - 2^{-k}`, `k = 1..=n`.
pub fn dyadic_thetas(n: u32) -> Vec<f64> {
    (1..=n as i32).map(|k| 1.0 - 2f64.powi(-k)).collect()
}
