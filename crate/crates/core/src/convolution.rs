//! Drift and stochastic convolutions against the heat kernel.
//!
//! All time sums are left-endpoint: the cell `[t_m, t_{m+1}]` contributes
//! through the kernel at lag `t_k - t_m`, `m < k`, so the singular slice
//! `s = t` never enters. Space sums use the lattice kernel of
//! [`crate::heat_kernel`], whose weights already carry the `dx` factor;
//! noise increments carry their own cell volume, so stochastic sums use
//! the pointwise kernel `w/dx`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::{Field, GridSpec, RunStatus, Trajectory};
use crate::heat_kernel::KernelCache;
use crate::noise::NoiseSlab;

fn need_frames(traj: &Trajectory, count: usize) -> Result<()> {
    if traj.frames().len() < count {
        return Err(invalid(format!(
            "need {count} frames of the integrand, trajectory has {}",
            traj.frames().len()
        )));
    }
    Ok(())
}

fn check_index(g: &GridSpec, t_index: usize) -> Result<()> {
    if t_index > g.nt() {
        return Err(invalid(format!("t_index {t_index} beyond nt = {}", g.nt())));
    }
    Ok(())
}

/// `∫_0^{t_k} P_{t_k - s} b(s) ds` as `dt Σ_{m<k} P_{(k-m)dt} b_m`.
pub fn drift_convolution(b_of_u: &Trajectory, t_index: usize) -> Result<Field> {
    let cache = KernelCache::with_max_lag(*b_of_u.grid(), t_index);
    drift_convolution_with(&cache, b_of_u, t_index)
}

pub fn drift_convolution_with(cache: &KernelCache, b_of_u: &Trajectory, t_index: usize) -> Result<Field> {
    let g = *b_of_u.grid();
    g.check_same_space(cache.grid())?;
    check_index(&g, t_index)?;
    need_frames(b_of_u, t_index)?;
    let nx = g.nx();
    let mut acc = vec![0.0; nx];
    let mut tmp = vec![0.0; nx];
    for m in 0..t_index {
        cache.apply_lag(t_index - m, b_of_u.frame(m).values(), &mut tmp);
        for (a, v) in acc.iter_mut().zip(&tmp) {
            *a += g.dt() * v;
        }
    }
    Field::new(g, acc)
}

fn check_noise(traj: &Trajectory, noise: &NoiseSlab) -> Result<()> {
    traj.grid().check_same(noise.grid())
}

/// `V(t_k, x_i) = Σ_{m<k} Σ_j p_{(k-m)dt}(i-j) σ_{m,j} ΔW_{m,j}` with the
/// lattice `p = w/dx`.
pub fn stoch_conv_direct(sigma_of_u: &Trajectory, noise: &NoiseSlab, t_index: usize) -> Result<Field> {
    let cache = KernelCache::with_max_lag(*noise.grid(), t_index);
    stoch_conv_direct_with(&cache, sigma_of_u, noise, t_index)
}

pub fn stoch_conv_direct_with(
    cache: &KernelCache,
    sigma_of_u: &Trajectory,
    noise: &NoiseSlab,
    t_index: usize,
) -> Result<Field> {
    check_noise(sigma_of_u, noise)?;
    let g = *noise.grid();
    check_index(&g, t_index)?;
    need_frames(sigma_of_u, t_index)?;
    let nx = g.nx();
    let inv_dx = 1.0 / g.dx();
    let mut acc = vec![0.0; nx];
    let mut src = vec![0.0; nx];
    let mut tmp = vec![0.0; nx];
    for m in 0..t_index {
        for ((s, a), b) in src.iter_mut().zip(sigma_of_u.frame(m).values()).zip(noise.row(m)) {
            *s = a * b * inv_dx;
        }
        cache.apply_lag(t_index - m, &src, &mut tmp);
        for (a, v) in acc.iter_mut().zip(&tmp) {
            *a += v;
        }
    }
    Field::new(g, acc)
}

/// Single node of [`stoch_conv_direct`] for a space-independent `σ ≡ c`;
/// cost `O(k·nx)` instead of `O(k·nx²)`.
pub fn stoch_conv_constant_node(
    cache: &KernelCache,
    c: f64,
    noise: &NoiseSlab,
    t_index: usize,
    node: usize,
) -> Result<f64> {
    let g = *noise.grid();
    g.check_same_space(cache.grid())?;
    check_index(&g, t_index)?;
    let mut acc = 0.0;
    for m in 0..t_index {
        let w = cache.lag(t_index - m);
        let row = noise.row(m);
        let mut s = 0.0;
        for (j, dw) in row.iter().enumerate() {
            if let Some(wk) = w.get(j.abs_diff(node)) {
                s += wk * dw;
            }
        }
        acc += s;
    }
    Ok(c * acc / g.dx())
}

/// All frames of `V` by the one-step recursion
/// `V_{k+1} = P_dt (V_k + σ_k ΔW_k / dx)`. On the unbounded lattice this is the
/// direct sum exactly (the lattice kernels form a semigroup); on `[-L, L]`
/// they differ only through mass re-entering from beyond the boundary.
pub fn stoch_conv_recursive(sigma_of_u: &Trajectory, noise: &NoiseSlab) -> Result<Trajectory> {
    check_noise(sigma_of_u, noise)?;
    let g = *noise.grid();
    let steps = match sigma_of_u.status() {
        RunStatus::Completed => g.nt(),
        RunStatus::Stopped { index, .. } => index,
    };
    let cache = KernelCache::with_max_lag(g, 1);
    let nx = g.nx();
    let inv_dx = 1.0 / g.dx();
    let mut frames = Vec::with_capacity(steps + 1);
    let mut v = vec![0.0; nx];
    frames.push(Field::zeros(g));
    let mut src = vec![0.0; nx];
    for k in 0..steps {
        for (((s, vi), a), b) in src.iter_mut().zip(&v).zip(sigma_of_u.frame(k).values()).zip(noise.row(k)) {
            *s = vi + a * b * inv_dx;
        }
        cache.apply_lag(1, &src, &mut v);
        frames.push(Field::new(g, v.clone())?);
    }
    Trajectory::new(g, frames, sigma_of_u.status())
}

/// Factorization exponent for moment order `p > 10`; valid iff
/// `α ∈ (3/(2p), 1/4 - 1/p)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FactorizationParams {
    pub p: f64,
    pub alpha: f64,
}

impl FactorizationParams {
    pub fn interval(p: f64) -> (f64, f64) {
        (1.5 / p, 0.25 - 1.0 / p)
    }

    pub fn new(p: f64, alpha: f64) -> Result<Self> {
        if !(p > 10.0) {
            return Err(invalid(format!("factorization needs p > 10, got {p}")));
        }
        let (lo, hi) = Self::interval(p);
        if !(alpha > lo && alpha < hi) {
            return Err(invalid(format!("alpha = {alpha} outside ({lo}, {hi}) for p = {p}")));
        }
        Ok(Self { p, alpha })
    }

    /// Midpoint of the admissible interval.
    pub fn midpoint(p: f64) -> Result<Self> {
        let (lo, hi) = Self::interval(p);
        Self::new(p, 0.5 * (lo + hi))
    }
}

/// Factorized stochastic convolution
///
/// ```text
/// V(t) = (sin πα / π) ∫_0^t (t-r)^{α-1} P_{t-r} Y(r) dr,
/// Y(r) = ∫_0^r (r-s)^{-α} P_{r-s} σ dW(s).
/// ```
///
/// `Y` is taken at the right end `t_l` of each cell `[t_{l-1}, t_l]` (left
/// sums in `s`, so lags `t_l - t_m ≥ dt`), and the integrable singularity
/// `(t-r)^{α-1}` is integrated exactly over the cell:
/// `[(t_k - t_{l-1})^α - (t_k - t_l)^α]/α`. The kernel at lag `t_k - t_l`
/// is the identity for `l = k`. Cost `O(k²·nx²)`; a cross-check only.
pub fn stoch_conv_factorized(
    sigma_of_u: &Trajectory,
    noise: &NoiseSlab,
    fp: FactorizationParams,
    t_index: usize,
) -> Result<Field> {
    let fp = FactorizationParams::new(fp.p, fp.alpha)?;
    if t_index == 0 {
        return Err(invalid("factorized convolution needs t_index >= 1"));
    }
    check_noise(sigma_of_u, noise)?;
    let g = *noise.grid();
    check_index(&g, t_index)?;
    need_frames(sigma_of_u, t_index)?;
    let cache = KernelCache::with_max_lag(g, t_index);
    let (nx, dt, a) = (g.nx(), g.dt(), fp.alpha);
    let inv_dx = 1.0 / g.dx();
    let src: Vec<Vec<f64>> = (0..t_index)
        .map(|m| sigma_of_u.frame(m).values().iter().zip(noise.row(m)).map(|(s, w)| s * w * inv_dx).collect())
        .collect();
    let mut out = vec![0.0; nx];
    let mut y = vec![0.0; nx];
    let mut tmp = vec![0.0; nx];
    let tk = t_index as f64 * dt;
    for l in 1..=t_index {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (m, s) in src.iter().enumerate().take(l) {
            cache.apply_lag(l - m, s, &mut tmp);
            let f = ((l - m) as f64 * dt).powf(-a);
            for (yv, v) in y.iter_mut().zip(&tmp) {
                *yv += f * v;
            }
        }
        let (r0, r1) = (tk - (l - 1) as f64 * dt, tk - l as f64 * dt);
        let weight = (r0.powf(a) - r1.max(0.0).powf(a)) / a;
        if l == t_index {
            tmp.copy_from_slice(&y);
        } else {
            cache.apply_lag(t_index - l, &y, &mut tmp);
        }
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += weight * v;
        }
    }
    let c = (PI * a).sin() / PI;
    Field::new(g, out.into_iter().map(|v| c * v).collect())
}

/// `Var V(t, x) = √(t/π)` for `σ ≡ 1` on the line.
pub fn variance_closed_form(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("t must be >= 0, got {t}")));
    }
    Ok((t / PI).sqrt())
}

/// Exact variance of the discrete `V(t_k, x_node)` for `σ ≡ 1`:
/// `(dt/dx) Σ_{m<k} Σ_j w_{(k-m)dt}(node - j)²`.
pub fn variance_discrete(cache: &KernelCache, t_index: usize, node: usize) -> f64 {
    let g = *cache.grid();
    let mut s = 0.0;
    for lag in 1..=t_index {
        let w = cache.lag(lag);
        s += (0..g.nx()).filter_map(|j| w.get(j.abs_diff(node))).map(|v| v * v).sum::<f64>();
    }
    s * g.dt() / g.dx()
}

/// Exact `E|V(t_k, x) - V(t_j, x)|²` of the discrete scheme for `σ ≡ 1`,
/// `j ≤ k`.
pub fn increment_moment_discrete(cache: &KernelCache, j: usize, k: usize, node: usize) -> f64 {
    assert!(j <= k);
    let g = *cache.grid();
    let nx = g.nx();
    let get = |w: &[f64], d: usize| w.get(d).copied().unwrap_or(0.0);
    let mut s = 0.0;
    for m in 0..k {
        let wk = cache.lag(k - m);
        if m < j {
            let wj = cache.lag(j - m);
            for y in 0..nx {
                let d = y.abs_diff(node);
                let v = get(wk, d) - get(wj, d);
                s += v * v;
            }
        } else {
            for y in 0..nx {
                let v = get(wk, y.abs_diff(node));
                s += v * v;
            }
        }
    }
    s * g.dt() / g.dx()
}
