//! Gaussian heat kernel, its action on grid fields, and numerical oracles
//! for the weighted kernel integrals and kernel-difference estimates.
//!
//! # Lattice semigroup
//!
//! On a grid with spacing `dx` the heat flow is applied with the lattice
//! kernel
//!
//! ```text
//! w_t(k) = (dx/π) ∫_0^{π/dx} e^{-tξ²/2} cos(ξ k dx) dξ
//!        = ∫_0^1 e^{-a s²} cos(π k s) ds,        a = t π² / (2 dx²)
//! ```
//!
//! i.e. exact heat flow of the band-limited interpolant. It has unit mass,
//! `w_0 = δ`, and `w_s * w_t = w_{s+t}` on the infinite lattice, so the
//! discrete mild form telescopes exactly. Once `a ≥ 40` the aliasing terms
//! are below `e^{-40}` and `w_t(k) = dx·p_t(k dx)`, the trapezoid rule.
//! Plain trapezoid weights at `t ≲ dx²` carry mass well above one, which is
//! why they are not used for short lags.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Result};
use crate::grid::{Field, GridSpec};
use crate::quad::{self, Tolerance};

const A_SWITCH: f64 = 40.0;
const GL_POINTS: usize = 16;

/// `(2πt)^{-1/2} exp(-d²/(2t))` without argument checks.
#[inline]
pub fn density(t: f64, d: f64) -> f64 {
    (-(d * d) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

pub fn kernel_value(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("kernel time must be positive, got {t}")));
    }
    // (x-y)² == (y-x)² bitwise, so symmetry is exact.
    Ok(density(t, x - y))
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| quad::gauss_legendre(GL_POINTS))
}

/// Lattice kernel weights `w_t(k)` for `k = 0..=kmax`, trimmed after the
/// last entry above `1e-18·w_0`.
pub fn lattice_weights(t: f64, dx: f64, kmax: usize) -> Vec<f64> {
    assert!(t >= 0.0 && dx > 0.0);
    let mut w = vec![0.0; kmax + 1];
    if t == 0.0 {
        w[0] = 1.0;
        return w;
    }
    let a = t * PI * PI / (2.0 * dx * dx);
    if a >= A_SWITCH {
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = dx * density(t, k as f64 * dx);
        }
    } else {
        band_limited(a, &mut w);
    }
    let cut = 1e-18 * w[0].abs();
    let support = w.iter().rposition(|v| v.abs() > cut).map_or(1, |k| k + 1);
    w.truncate(support);
    w
}

/// `w[k] = ∫_0^1 e^{-a s²} cos(π k s) ds` by composite 16-point
/// Gauss–Legendre. Each panel spans at most one period of the highest
/// harmonic; `cos(πks)` is advanced by complex rotation and re-seeded every
/// 32 steps to keep the recurrence error at a few ulps.
fn band_limited(a: f64, w: &mut [f64]) {
    let kmax = w.len() - 1;
    w.iter_mut().for_each(|v| *v = 0.0);
    let (gx, gw) = gl16();
    let panels = 8.max(kmax / 2 + 1);
    let h = 1.0 / panels as f64;
    for p in 0..panels {
        let left = p as f64 * h;
        for (xi, wi) in gx.iter().zip(gw) {
            let s = left + 0.5 * h * (xi + 1.0);
            let g = 0.5 * h * wi * (-a * s * s).exp();
            let (s1, c1) = (PI * s).sin_cos();
            let (mut zr, mut zi) = (1.0, 0.0);
            for (k, wk) in w.iter_mut().enumerate() {
                if k % 32 == 0 && k > 0 {
                    let (sk, ck) = (PI * k as f64 * s).sin_cos();
                    zr = ck;
                    zi = sk;
                }
                *wk += g * zr;
                let nr = zr * c1 - zi * s1;
                zi = zr * s1 + zi * c1;
                zr = nr;
            }
        }
    }
}

/// Symmetric Toeplitz action `out_i = Σ_j w_{|i-j|} u_j`. The summation
/// order per node is fixed (four interleaved partial sums, ascending `j`),
/// so results do not depend on how callers schedule nodes.
pub fn toeplitz_apply(w: &[f64], u: &[f64], out: &mut [f64]) {
    let n = u.len();
    debug_assert_eq!(out.len(), n);
    let s = w.len();
    // full[s-1+d] = w[|d|]
    let mut full = Vec::with_capacity(2 * s - 1);
    full.extend(w.iter().rev());
    full.extend(&w[1..]);
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(s - 1);
        let hi = (i + s).min(n);
        let kf = &full[s - 1 + lo - i..s - 1 + hi - i];
        *o = dot(kf, &u[lo..hi]);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let j = 4 * c;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lazily built lattice kernels at the grid's time lags `j·dt`,
/// `j = 0..=max_lag`. Safe to share across threads.
#[derive(Debug)]
pub struct KernelCache {
    grid: GridSpec,
    lags: Vec<OnceLock<Arc<[f64]>>>,
}

impl KernelCache {
    pub fn new(grid: GridSpec) -> Self {
        Self::with_max_lag(grid, grid.nt())
    }

    pub fn with_max_lag(grid: GridSpec, max_lag: usize) -> Self {
        Self { grid, lags: (0..=max_lag).map(|_| OnceLock::new()).collect() }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn lag(&self, j: usize) -> &[f64] {
        self.lags[j].get_or_init(|| {
            lattice_weights(self.grid.t(j), self.grid.dx(), self.grid.nx() - 1).into()
        })
    }

    pub fn apply_lag(&self, j: usize, u: &[f64], out: &mut [f64]) {
        toeplitz_apply(self.lag(j), u, out);
    }
}

/// Heat semigroup on a grid field: `t = 0` is the identity; for `t > 0`
/// the lattice kernel above (the trapezoid rule once `t` resolves `dx`).
/// Mass leaving `[-L, L]` is dropped, not reflected.
pub fn semigroup_apply(u: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    let g = u.grid();
    let w = lattice_weights(t, g.dx(), g.nx() - 1);
    let mut out = vec![0.0; g.nx()];
    toeplitz_apply(&w, u.values(), &mut out);
    Field::new(*g, out)
}

// ---------------------------------------------------------------------------
// Kernel estimates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelEstimateId {
    WeightedMass,
    WeightedSquare,
    WeightedMoment,
    TimeDiff,
    SpaceDiffL1,
    SpaceDiffWeighted,
    SpaceDiffWeightedMoment,
    SquareDiffSpacetime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    T,
    S,
    X,
    Y,
    Eta,
    Theta,
}

impl KernelEstimateId {
    pub const ALL: [KernelEstimateId; 8] = [
        Self::WeightedMass,
        Self::WeightedSquare,
        Self::WeightedMoment,
        Self::TimeDiff,
        Self::SpaceDiffL1,
        Self::SpaceDiffWeighted,
        Self::SpaceDiffWeightedMoment,
        Self::SquareDiffSpacetime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::WeightedMass => "WEIGHTED_MASS",
            Self::WeightedSquare => "WEIGHTED_SQUARE",
            Self::WeightedMoment => "WEIGHTED_MOMENT",
            Self::TimeDiff => "TIME_DIFF",
            Self::SpaceDiffL1 => "SPACE_DIFF_L1",
            Self::SpaceDiffWeighted => "SPACE_DIFF_WEIGHTED",
            Self::SpaceDiffWeightedMoment => "SPACE_DIFF_WEIGHTED_MOMENT",
            Self::SquareDiffSpacetime => "SQUARE_DIFF_SPACETIME",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name().eq_ignore_ascii_case(s))
    }

    /// Free variables of the estimate.
    pub fn params(&self) -> &'static [Param] {
        use Param::*;
        match self {
            Self::WeightedMass | Self::WeightedSquare | Self::WeightedMoment => &[T, X, Eta],
            Self::TimeDiff => &[T, S, X, Y, Theta],
            Self::SpaceDiffL1 => &[T, X, Y],
            Self::SpaceDiffWeighted | Self::SpaceDiffWeightedMoment => &[T, X, Y, Eta],
            Self::SquareDiffSpacetime => &[T, S, X, Y],
        }
    }

    pub fn uses(&self, p: Param) -> bool {
        self.params().contains(&p)
    }

    fn needs_positive_eta(&self) -> bool {
        matches!(
            self,
            Self::WeightedMoment | Self::SpaceDiffWeighted | Self::SpaceDiffWeightedMoment
        )
    }
}

/// Parameter tuple; fields an estimate does not use are ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct KernelParams {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub eta: f64,
    pub theta: f64,
}

impl KernelParams {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::T => self.t,
            Param::S => self.s,
            Param::X => self.x,
            Param::Y => self.y,
            Param::Eta => self.eta,
            Param::Theta => self.theta,
        }
    }
}

fn validate(id: KernelEstimateId, p: &KernelParams) -> Result<()> {
    for &q in id.params() {
        if !p.get(q).is_finite() {
            return Err(invalid(format!("{}: parameter {q:?} is not finite", id.name())));
        }
    }
    if !(p.t > 0.0) {
        return Err(invalid(format!("{}: t must be > 0", id.name())));
    }
    if id.uses(Param::S) && !(p.s > 0.0 && p.s <= p.t) {
        return Err(invalid(format!("{}: need 0 < s <= t", id.name())));
    }
    if id.needs_positive_eta() && !(p.eta > 0.0) {
        return Err(invalid(format!("{}: eta must be > 0", id.name())));
    }
    if id.uses(Param::Theta) && !(0.0..=1.0).contains(&p.theta) {
        return Err(invalid(format!("{}: theta must lie in [0, 1]", id.name())));
    }
    Ok(())
}

const TOL: Tolerance = Tolerance { abs: 1e-300, rel: 1e-13 };

/// Both sides of the chosen estimate: `lhs` by quadrature (or pointwise for
/// `TIME_DIFF`), `rhs` in closed form. The estimates are theorems, so
/// `lhs <= rhs·(1 + 1e-9)` must always hold.
pub fn kernel_bound_sides(id: KernelEstimateId, p: &KernelParams) -> Result<(f64, f64)> {
    validate(id, p)?;
    let KernelParams { t, s, x, y, eta, theta } = *p;
    let sq = t.sqrt();
    let d = (x - y).abs();
    Ok(match id {
        KernelEstimateId::WeightedMass => {
            let lhs = quad::integrate_line(
                |z| density(t, x - z) * (eta * z.abs()).exp(),
                &[x, 0.0, x + eta * t, x - eta * t],
                sq,
                TOL,
            )?;
            (lhs, 2.0 * (eta * eta * t / 2.0).exp() * (eta * x.abs()).exp())
        }
        KernelEstimateId::WeightedSquare => {
            let lhs = quad::integrate_line(
                |z| {
                    let k = density(t, x - z);
                    k * k * (eta * z.abs()).exp()
                },
                &[x, 0.0, x + eta * t / 2.0, x - eta * t / 2.0],
                sq,
                TOL,
            )?;
            let rhs = (eta * eta * t / 4.0).exp() * (eta * x.abs()).exp() / (PI * t).sqrt();
            (lhs, rhs)
        }
        KernelEstimateId::WeightedMoment => {
            let lhs = quad::integrate_line(
                |z| density(t, x - z) * (eta * z.abs()).exp() * eta * z.abs(),
                &[x, 0.0, x + eta * t, x - eta * t],
                sq,
                TOL,
            )?;
            let g = (eta * eta * t / 2.0).exp();
            let ex = (eta * x.abs()).exp();
            let rhs = g * ex * eta * x.abs()
                + 2.0 * g * (eta * eta * t + eta * (t / (2.0 * PI)).sqrt()) * ex;
            (lhs, rhs)
        }
        KernelEstimateId::TimeDiff => {
            let (pt, ps, p2t) = (density(t, x - y), density(s, x - y), density(2.0 * t, x - y));
            let lhs = (pt - ps).abs();
            let rhs = (2.0 * 2f64.sqrt()).powf(theta) * ((t - s) / s).powf(theta) * (ps + pt + p2t);
            (lhs, rhs)
        }
        KernelEstimateId::SpaceDiffL1 => {
            let lhs = quad::integrate_line(
                |z| (density(t, x - z) - density(t, y - z)).abs(),
                &[x, y, 0.5 * (x + y)],
                sq,
                TOL,
            )?;
            (lhs, (2.0 / PI).sqrt() * d / sq)
        }
        KernelEstimateId::SpaceDiffWeighted => {
            let lhs = quad::integrate_line(
                |z| (density(t, x - z) - density(t, y - z)).abs() * (eta * z.abs()).exp(),
                &[x, y, 0.5 * (x + y), 0.0, x + eta * t, x - eta * t, y + eta * t, y - eta * t],
                sq,
                TOL,
            )?;
            let rhs = 2.0 * 2f64.sqrt() * d / sq
                * (eta * eta * t).exp()
                * (eta * (x.abs() + d)).exp();
            (lhs, rhs)
        }
        KernelEstimateId::SpaceDiffWeightedMoment => {
            let lhs = quad::integrate_line(
                |z| {
                    (density(t, x - z) - density(t, y - z)).abs()
                        * (eta * z.abs()).exp()
                        * eta
                        * z.abs()
                },
                &[x, y, 0.5 * (x + y), 0.0, x + eta * t, x - eta * t, y + eta * t, y - eta * t],
                sq,
                TOL,
            )?;
            let r = x.abs() + d;
            let g = (eta * eta * t).exp();
            let er = (eta * r).exp();
            let rhs = 2f64.sqrt() * d / sq
                * (g * er * eta * r
                    + 2.0 * g * (2.0 * eta * eta * t + eta * (t / PI).sqrt()) * er);
            (lhs, rhs)
        }
        KernelEstimateId::SquareDiffSpacetime => {
            (square_diff_spacetime_lhs(s, t, d)?, square_diff_rhs(s, t, d))
        }
    })
}

fn square_diff_rhs(s: f64, t: f64, d: f64) -> f64 {
    (2f64.sqrt() - 1.0) / PI.sqrt() * (t - s).sqrt() + 2.0 / PI.sqrt() * d
}

/// `∫_0^s ∫ (p_{t-r}(x,z) - p_{s-r}(y,z))² dz dr` with `d = |x-y|`. The
/// inner integral is Gaussian:
///
/// ```text
/// ∫ (p_a(x-z) - p_b(y-z))² dz = 1/(2√(πa)) + 1/(2√(πb)) - 2 p_{a+b}(d)
/// ```
///
/// and the outer one has the closed parts
/// `(√t - √(t-s) + √s)/√π`, minus `∫_{t-s}^{t+s} p_v(d) dv`, which is done
/// by quadrature after `v = w²` (smooth integrand `√(2/π) e^{-d²/(2w²)}`).
fn square_diff_spacetime_lhs(s: f64, t: f64, d: f64) -> Result<f64> {
    let closed = (t.sqrt() - (t - s).sqrt() + s.sqrt()) / PI.sqrt();
    let cross = quad::integrate(
        |w| {
            if w == 0.0 {
                if d == 0.0 {
                    (2.0 / PI).sqrt()
                } else {
                    0.0
                }
            } else {
                (2.0 / PI).sqrt() * (-(d * d) / (2.0 * w * w)).exp()
            }
        },
        (t - s).sqrt(),
        (t + s).sqrt(),
        Tolerance { abs: 1e-300, rel: 1e-14 },
    )?;
    Ok((closed - cross).max(0.0))
}

/// Nested-quadrature version of the same integral; slow, used only to
/// cross-check the semi-analytic form.
pub fn square_diff_spacetime_nested(s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    // r = s - v², dr = 2v dv removes the 1/√(s-r) singularity.
    quad::integrate(
        |v| {
            let u = v * v;
            let (a, b) = (t - s + u, u);
            if b == 0.0 {
                // GK nodes are interior; the endpoint is never sampled.
                return 0.0;
            }
            let inner = quad::integrate_line(
                |z| {
                    let e = density(a, x - z) - density(b, y - z);
                    e * e
                },
                &[x, y],
                b.sqrt().min(a.sqrt()).max(1e-12),
                Tolerance { abs: 1e-300, rel: 1e-12 },
            )
            .unwrap_or(f64::NAN);
            2.0 * v * inner
        },
        0.0,
        s.sqrt(),
        Tolerance { abs: 1e-13, rel: 1e-10 },
    )
}

// ---------------------------------------------------------------------------
// Randomized sweeps
// ---------------------------------------------------------------------------

/// Parameter ranges for a randomized estimate sweep. `t` is drawn
/// log-uniformly, `s = r·t` with `r ∈ [0.01, 1]`, `x, y` uniformly, `η`
/// uniformly (restricted to the positive part where required), `θ` in
/// `[0, 1]`. One draw in twenty pins `y = x` or `s = t` to exercise the
/// degenerate edges.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSweep {
    pub samples: usize,
    pub t_range: [f64; 2],
    pub x_range: [f64; 2],
    pub eta_range: [f64; 2],
}

impl Default for KernelSweep {
    fn default() -> Self {
        Self { samples: 1000, t_range: [0.01, 4.0], x_range: [-5.0, 5.0], eta_range: [-3.0, 3.0] }
    }
}

impl KernelSweep {
    pub fn validate(&self) -> Result<()> {
        let ok = self.samples >= 1
            && self.t_range[0] > 0.0
            && self.t_range[0] <= self.t_range[1]
            && self.x_range[0] <= self.x_range[1]
            && self.eta_range[0] <= self.eta_range[1]
            && self.eta_range[1] > 0.0
            && [self.t_range, self.x_range, self.eta_range].iter().flatten().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("bad kernel sweep {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelRow {
    pub id: KernelEstimateId,
    pub params: KernelParams,
    pub lhs: f64,
    pub rhs: f64,
}

impl KernelRow {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-9)
    }
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

pub fn sample_params(id: KernelEstimateId, sw: &KernelSweep, rng: &mut impl rand::Rng) -> KernelParams {
    let (tl, th) = (sw.t_range[0].ln(), sw.t_range[1].ln());
    let t = (tl + (th - tl) * rng.random::<f64>()).exp();
    let uni = |rng: &mut _, r: [f64; 2]| r[0] + (r[1] - r[0]) * rand::Rng::random::<f64>(rng);
    let x = uni(rng, sw.x_range);
    let mut y = uni(rng, sw.x_range);
    let mut s = t * (0.01 + 0.99 * rng.random::<f64>());
    let eta_r = if id.needs_positive_eta() {
        [sw.eta_range[0].max(1e-3), sw.eta_range[1]]
    } else {
        sw.eta_range
    };
    let eta = uni(rng, eta_r);
    let theta = rng.random::<f64>();
    match rng.random_range(0..40u32) {
        0 => y = x,
        1 => s = t,
        _ => {}
    }
    KernelParams { t, s: s.min(t), x, y, eta, theta }
}

/// Seeded sweep over all eight estimates. Parameters are drawn sequentially
/// per estimate (stream `seed`, estimate index); sides are evaluated in
/// parallel and returned in draw order.
pub fn kernel_sweep(sw: &KernelSweep, seed: u64) -> Result<Vec<KernelRow>> {
    use rand::SeedableRng;
    use rayon::prelude::*;
    sw.validate()?;
    let mut draws = Vec::with_capacity(8 * sw.samples);
    for (i, id) in KernelEstimateId::ALL.into_iter().enumerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for _ in 0..sw.samples {
            draws.push((id, sample_params(id, sw, &mut rng)));
        }
    }
    draws
        .into_par_iter()
        .map(|(id, params)| {
            let (lhs, rhs) = kernel_bound_sides(id, &params)?;
            Ok(KernelRow { id, params, lhs, rhs })
        })
        .collect()
}
