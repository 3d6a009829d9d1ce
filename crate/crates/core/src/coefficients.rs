//! Drift/diffusion pairs with their structural constants, the `x log|x|`
//! example, and the mollified, cut-off approximating families `b_n, σ_n`.
//!
//! Growth and log-Lipschitz conditions, with `log₊(u) = log(max(u, 1))`:
//!
//! ```text
//! growth:        |b(u)| ≤ c1 |u| log₊|u| + c2
//! log-Lipschitz: |b(u) - b(v)| ≤ c3 |u-v| log₊(1/|u-v|) + c4 log₊(|u|∨|v|) |u-v| + c5 |u-v|
//! ```

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{invalid, Error, Result};
use crate::quad::{self, Tolerance};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// What the solver needs from a coefficient pair.
pub trait Coefficients: Send + Sync {
    fn drift(&self, u: f64) -> f64;
    fn diffusion(&self, u: f64) -> f64;
    /// Both at once; families that share work override this.
    fn drift_diffusion(&self, u: f64) -> (f64, f64) {
        (self.drift(u), self.diffusion(u))
    }
    fn describe(&self) -> String;
}

pub fn log_plus(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(invalid(format!("log_plus needs u >= 0, got {u}")));
    }
    Ok(u.max(1.0).ln())
}

#[inline]
fn lp(u: f64) -> f64 {
    u.max(1.0).ln()
}

/// `x log|x|`, extended by 0 at the origin.
pub fn drift_xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().ln()
    }
}

/// Both sides of the local log-Lipschitz inequality for `x log|x|`:
/// `|x log|x| - y log|y|| ≤ |x-y| log₊(1/|x-y|) + (log₊(|x|∨|y|) + 1 + log 2)|x-y|`.
pub fn xlogx_loglip_sides(x: f64, y: f64) -> (f64, f64) {
    let d = (x - y).abs();
    let lhs = (drift_xlogx(x) - drift_xlogx(y)).abs();
    if d == 0.0 {
        return (lhs, 0.0);
    }
    let rhs = d * lp(1.0 / d) + (lp(x.abs().max(y.abs())) + 1.0 + std::f64::consts::LN_2) * d;
    (lhs, rhs)
}

/// Built-in coefficient presets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "preset", content = "param", rename_all = "kebab-case")]
pub enum Preset {
    Zero,
    Linear(f64),
    Xlogx(f64),
    TanhDiffusion(f64),
    ConstantDiffusion(f64),
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Preset::Zero);
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| invalid(format!("unknown coefficient preset `{s}`")))?;
        let arg = rest
            .strip_suffix(')')
            .ok_or_else(|| invalid(format!("missing `)` in preset `{s}`")))?;
        let v: f64 = arg
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad numeric argument in preset `{s}`")))?;
        if !v.is_finite() {
            return Err(invalid(format!("non-finite argument in preset `{s}`")));
        }
        match name.trim() {
            "linear" => Ok(Preset::Linear(v)),
            "xlogx" => Ok(Preset::Xlogx(v)),
            "tanh-diffusion" => Ok(Preset::TanhDiffusion(v)),
            "constant-diffusion" => Ok(Preset::ConstantDiffusion(v)),
            other => Err(invalid(format!("unknown coefficient preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Zero => write!(f, "zero"),
            Preset::Linear(a) => write!(f, "linear({a})"),
            Preset::Xlogx(c) => write!(f, "xlogx({c})"),
            Preset::TanhDiffusion(k) => write!(f, "tanh-diffusion({k})"),
            Preset::ConstantDiffusion(k) => write!(f, "constant-diffusion({k})"),
        }
    }
}

/// Drift `b`, diffusion `σ` and their user-supplied structural constants.
#[derive(Clone)]
pub struct CoefficientSpec {
    pub name: String,
    pub b: ScalarFn,
    pub sigma: ScalarFn,
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub k_sigma: f64,
    pub l_sigma: Option<f64>,
    /// `Some(K)` when `σ ≡ K`; lets experiments skip path-dependent work.
    pub constant_sigma: Option<f64>,
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSpec")
            .field("name", &self.name)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("c3", &self.c3)
            .field("c4", &self.c4)
            .field("c5", &self.c5)
            .field("k_sigma", &self.k_sigma)
            .field("l_sigma", &self.l_sigma)
            .finish()
    }
}

impl CoefficientSpec {
    /// Drift and diffusion from presets. Drift presets: `zero`,
    /// `linear(a)`, `xlogx(c)`; diffusion presets: `zero`,
    /// `constant-diffusion(K)`, `tanh-diffusion(K)`.
    pub fn from_presets(drift: Preset, diffusion: Preset) -> Result<Self> {
        let e = std::f64::consts::E;
        let (b, c1, c2, h2): (ScalarFn, f64, f64, [f64; 3]) = match drift {
            Preset::Zero => (Arc::new(|_| 0.0), 0.0, 0.0, [0.0; 3]),
            // |au| ≤ |a||u|log₊|u| + |a|e; Lipschitz with constant |a|.
            Preset::Linear(a) => (Arc::new(move |u| a * u), a.abs(), a.abs() * e, [0.0, 0.0, a.abs()]),
            // |u log|u|| ≤ 1/e on |u| < 1; log-Lipschitz constants from the
            // inequality in `xlogx_loglip_sides`, scaled by |c|.
            Preset::Xlogx(c) => (
                Arc::new(move |u| c * drift_xlogx(u)),
                c.abs(),
                c.abs() / e,
                [c.abs(), c.abs(), c.abs() * (1.0 + std::f64::consts::LN_2)],
            ),
            other => return Err(invalid(format!("`{other}` is not a drift preset"))),
        };
        let (sigma, k_sigma, l_sigma, constant): (ScalarFn, f64, f64, Option<f64>) = match diffusion {
            Preset::Zero => (Arc::new(|_| 0.0), 0.0, 0.0, Some(0.0)),
            Preset::ConstantDiffusion(k) => (Arc::new(move |_| k), k.abs(), 0.0, Some(k)),
            Preset::TanhDiffusion(k) => (Arc::new(move |u: f64| k * u.tanh()), k.abs(), k.abs(), None),
            other => return Err(invalid(format!("`{other}` is not a bounded diffusion preset"))),
        };
        Ok(Self {
            name: format!("{drift}+{diffusion}"),
            b,
            sigma,
            c1,
            c2,
            c3: Some(h2[0]),
            c4: Some(h2[1]),
            c5: Some(h2[2]),
            k_sigma,
            l_sigma: Some(l_sigma),
            constant_sigma: constant,
        })
    }

    pub fn parse(drift: &str, diffusion: &str) -> Result<Self> {
        Self::from_presets(Preset::parse(drift)?, Preset::parse(diffusion)?)
    }

    /// User-defined pair with growth constants; the log-Lipschitz and Lipschitz
    /// constants left unset.
    pub fn custom(
        name: impl Into<String>,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c1: f64,
        c2: f64,
        k_sigma: f64,
    ) -> Self {
        Self {
            name: name.into(),
            b: Arc::new(b),
            sigma: Arc::new(sigma),
            c1,
            c2,
            c3: None,
            c4: None,
            c5: None,
            k_sigma,
            l_sigma: None,
            constant_sigma: None,
        }
    }

    pub fn h1_sides(&self, u: f64) -> (f64, f64) {
        ((self.b)(u).abs(), self.c1 * u.abs() * lp(u.abs()) + self.c2)
    }

    pub fn h2_sides(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let (c3, c4, c5) = (self.c3?, self.c4?, self.c5?);
        let d = (u - v).abs();
        let lhs = ((self.b)(u) - (self.b)(v)).abs();
        if d == 0.0 {
            return Some((lhs, 0.0));
        }
        Some((lhs, c3 * d * lp(1.0 / d) + c4 * lp(u.abs().max(v.abs())) * d + c5 * d))
    }

    /// Spot-check the growth condition and the bound on σ at the given points. Slack is
    /// relative `1e-12` for rounding.
    pub fn check_samples(&self, us: &[f64]) -> Result<()> {
        for &u in us {
            let (l, r) = self.h1_sides(u);
            if l > r * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::Hypothesis(format!("growth bound fails at u = {u}: {l} > {r}")));
            }
            let s = (self.sigma)(u).abs();
            if s > self.k_sigma * (1.0 + 1e-12) {
                return Err(Error::Hypothesis(format!("|σ({u})| = {s} exceeds K_σ = {}", self.k_sigma)));
            }
        }
        Ok(())
    }
}

impl Coefficients for CoefficientSpec {
    fn drift(&self, u: f64) -> f64 {
        (self.b)(u)
    }
    fn diffusion(&self, u: f64) -> f64 {
        (self.sigma)(u)
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Max slope over adjacent pairs of a uniform `samples`-point grid on
/// `[lo, hi]`; a lower bound on the Lipschitz constant.
pub fn estimate_lipschitz(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Result<f64> {
    if !(lo < hi) || samples < 2 {
        return Err(invalid("estimate_lipschitz needs lo < hi and samples >= 2"));
    }
    let h = (hi - lo) / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|i| if i + 1 == samples { hi } else { lo + i as f64 * h }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    Ok(xs
        .windows(2)
        .zip(fs.windows(2))
        .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

fn bump_raw(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Normalising constant `C` of `φ(x) = C exp(-1/(1-x²))`, by adaptive
/// quadrature to relative `1e-14`.
pub fn mollifier_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let m = quad::integrate(bump_raw, -1.0, 1.0, Tolerance { abs: 1e-300, rel: 1e-14 })
            .expect("bump integral converges");
        1.0 / m
    })
}

pub fn mollifier(x: f64) -> f64 {
    mollifier_constant() * bump_raw(x)
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, built from `e^{-1/s}`.
pub fn smoothstep(s: f64) -> f64 {
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        f(s) / (f(s) + f(1.0 - s))
    }
}

/// `η_n(x) = ψ((n + 2 - |x|)/2)`: 1 on `[-n, n]`, 0 off `(-n-2, n+2)`.
pub fn cutoff(n: u32, x: f64) -> f64 {
    smoothstep((n as f64 + 2.0 - x.abs()) / 2.0)
}

const MEMO_CAP: usize = 1 << 20;

/// `b_n = (b * φ_n)·η_n`, `σ_n = (σ * φ_n)·η_n` with `φ_n(x) = nφ(nx)`,
/// by a fixed Gauss–Legendre rule on the support of `φ`. Stencil weights
/// `w_i φ(z_i)` are renormalised to unit sum, so constants are reproduced
/// to rounding. Evaluations are memoised per point (bounded table; once
/// full, new points are computed but not stored); concurrent callers may
/// race to compute the same point, which yields the identical value.
pub struct MollifiedFamily {
    base: CoefficientSpec,
    n: u32,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    lip: OnceLock<(f64, f64)>,
    memo: RwLock<HashMap<u64, (f64, f64)>>,
}

impl fmt::Debug for MollifiedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MollifiedFamily")
            .field("base", &self.base)
            .field("n", &self.n)
            .field("quad_points", &self.nodes.len())
            .finish()
    }
}

pub fn mollify(base: CoefficientSpec, n: u32, quad_points: usize) -> Result<MollifiedFamily> {
    if n < 1 {
        return Err(invalid("mollification level must be >= 1"));
    }
    if quad_points < 64 {
        return Err(invalid(format!("need at least 64 quadrature points, got {quad_points}")));
    }
    let (z, w) = quad::gauss_legendre(quad_points);
    let raw: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| wi * mollifier(*zi)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|v| v / total).collect();
    Ok(MollifiedFamily {
        base,
        n,
        nodes: z,
        weights,
        lip: OnceLock::new(),
        memo: RwLock::new(HashMap::new()),
    })
}

impl MollifiedFamily {
    pub fn base(&self) -> &CoefficientSpec {
        &self.base
    }
    pub fn level(&self) -> u32 {
        self.n
    }

    /// `(b_n(x), σ_n(x))`, failing if the base is non-finite on the stencil.
    pub fn try_eval(&self, x: f64) -> Result<(f64, f64)> {
        let key = x.to_bits();
        if let Some(v) = self.memo.read().expect("memo lock").get(&key) {
            return Ok(*v);
        }
        let v = self.compute(x)?;
        let mut memo = self.memo.write().expect("memo lock");
        if memo.len() < MEMO_CAP {
            return Ok(*memo.entry(key).or_insert(v));
        }
        Ok(v)
    }

    fn compute(&self, x: f64) -> Result<(f64, f64)> {
        let eta = cutoff(self.n, x);
        if eta == 0.0 || !x.is_finite() {
            return if x.is_finite() {
                Ok((0.0, 0.0))
            } else {
                Err(Error::Quadrature(format!("non-finite point {x}")))
            };
        }
        let inv = 1.0 / self.n as f64;
        let (mut sb, mut ss) = (0.0, 0.0);
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let y = x - z * inv;
            let (b, s) = ((self.base.b)(y), (self.base.sigma)(y));
            if !(b.is_finite() && s.is_finite()) {
                return Err(Error::Quadrature(format!("coefficient non-finite at {y}")));
            }
            sb += w * b;
            ss += w * s;
        }
        Ok((sb * eta, ss * eta))
    }

    /// Level-independent linear-growth constant:
    /// `|b_n(x)| ≤ c1|x|log₊|x| + L_b(|x| + 1)` with `L_b = c1(1 + log 2) + c2`,
    /// from `(|x|+1)log₊(|x|+1) ≤ |x|log₊|x| + (1 + log 2)|x|`.
    pub fn l_b(&self) -> f64 {
        self.base.c1 * (1.0 + std::f64::consts::LN_2) + self.base.c2
    }

    /// Sampled Lipschitz constants `(L_n, K_n)` of `b_n` and `σ_n` on
    /// `[-n-3, n+3]` (both vanish outside `(-n-2, n+2)`).
    pub fn lipschitz(&self) -> (f64, f64) {
        *self.lip.get_or_init(|| {
            let r = self.n as f64 + 3.0;
            let samples = 200 * (self.n as usize + 3);
            let lb = estimate_lipschitz(|x| self.drift(x), -r, r, samples).unwrap_or(f64::NAN);
            let ls = estimate_lipschitz(|x| self.diffusion(x), -r, r, samples).unwrap_or(f64::NAN);
            (lb, ls)
        })
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().expect("memo lock").len()
    }
}

impl Coefficients for MollifiedFamily {
    fn drift(&self, u: f64) -> f64 {
        self.try_eval(u).map_or(f64::NAN, |v| v.0)
    }
    fn diffusion(&self, u: f64) -> f64 {
        self.try_eval(u).map_or(f64::NAN, |v| v.1)
    }
    fn drift_diffusion(&self, u: f64) -> (f64, f64) {
        self.try_eval(u).unwrap_or((f64::NAN, f64::NAN))
    }
    fn describe(&self) -> String {
        format!("mollified[{}]({})", self.n, self.base.name)
    }
}
