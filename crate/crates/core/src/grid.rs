//! Uniform space-time grid on `[-L, L] x [0, T]` and the field containers
//! every other module works with.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridSpec {
    half_width: f64,
    nx: usize,
    dt: f64,
    nt: usize,
    dx: f64,
}

impl GridSpec {
    pub fn new(half_width: f64, nx: usize, dt: f64, nt: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid(format!("half_width must be positive, got {half_width}")));
        }
        if nx < 3 || nx % 2 == 0 {
            return Err(invalid(format!("nx must be odd and >= 3, got {nx}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if nt == 0 {
            return Err(invalid("nt must be >= 1"));
        }
        let dx = 2.0 * half_width / (nx - 1) as f64;
        Ok(Self { half_width, nx, dt, nt, dx })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn horizon(&self) -> f64 {
        self.nt as f64 * self.dt
    }
    pub fn center(&self) -> usize {
        (self.nx - 1) / 2
    }

    /// Node position. Computed as `L * (2i - (nx-1)) / (nx-1)`: the integer
    /// numerator is odd-symmetric, so `x(nx-1-i) == -x(i)` holds bitwise and
    /// the centre node is exactly zero.
    pub fn x(&self, i: usize) -> f64 {
        let m = (self.nx - 1) as i64;
        let k = 2 * i as i64 - m;
        self.half_width * (k as f64) / (m as f64)
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Same spatial layout and time step; the horizon may differ.
    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.half_width == other.half_width && self.nx == other.nx
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub fn check_same_space(&self, other: &GridSpec) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "spatial layouts differ: (L={}, nx={}) vs (L={}, nx={})",
                self.half_width, self.nx, other.half_width, other.nx
            )))
        }
    }

    /// Grid with the time step halved and the horizon kept.
    pub fn refined_in_time(&self) -> GridSpec {
        GridSpec { dt: self.dt / 2.0, nt: self.nt * 2, ..*self }
    }
}

pub fn make_grid(half_width: f64, nx: usize, dt: f64, nt: usize) -> Result<GridSpec> {
    GridSpec::new(half_width, nx, dt, nt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.nx()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index, x: grid.x(index) });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.nx()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.nx()])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.grid.check_same_space(&other.grid)?;
        Field::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sample_function(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Field> {
    Field::new(grid, (0..grid.nx()).map(|i| f(grid.x(i))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TauM,
    TauDelta,
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Completed,
    Stopped { index: usize, reason: StopReason },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    frames: Vec<Field>,
    status: RunStatus,
}

impl Trajectory {
    pub fn new(grid: GridSpec, frames: Vec<Field>, status: RunStatus) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("trajectory needs at least the initial frame"));
        }
        for f in &frames {
            grid.check_same_space(f.grid())?;
        }
        match status {
            RunStatus::Completed if frames.len() != grid.nt() + 1 => {
                return Err(invalid(format!(
                    "completed trajectory needs {} frames, got {}",
                    grid.nt() + 1,
                    frames.len()
                )))
            }
            RunStatus::Stopped { index, .. } if frames.len() != index + 1 || index > grid.nt() => {
                return Err(invalid(format!(
                    "stopped at {index} but {} frames present",
                    frames.len()
                )))
            }
            _ => {}
        }
        Ok(Self { grid, frames, status })
    }

    /// Trajectory whose every frame is `f(t, x)`; handy for coefficient
    /// fields such as a constant diffusion.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let frames = (0..=grid.nt())
            .map(|k| sample_function(grid, |x| f(grid.t(k), x)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, frames, RunStatus::Completed)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn frames(&self) -> &[Field] {
        &self.frames
    }
    pub fn frame(&self, k: usize) -> &Field {
        &self.frames[k]
    }
    pub fn status(&self) -> RunStatus {
        self.status
    }
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
    pub fn last(&self) -> &Field {
        self.frames.last().expect("trajectory is never empty")
    }

    /// Pointwise image `g(u)` of every frame, keeping the status.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Result<Trajectory> {
        let frames = self.frames.iter().map(|f| f.map(&g)).collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.grid, frames, self.status)
    }

    /// CSV with header `t,x_0,...,x_{nx-1}`; values use 17 significant
    /// digits so every double survives the round trip.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::from("t");
        for i in 0..self.grid.nx() {
            line.push_str(&format!(",x_{i}"));
        }
        writeln!(w, "{line}")?;
        for (k, frame) in self.frames.iter().enumerate() {
            line.clear();
            line.push_str(&format!("{:.16e}", self.grid.t(k)));
            for v in frame.values() {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Reads frames written by [`Trajectory::write_csv`]. The grid is not
/// recoverable from the CSV alone (L is absent), so the caller supplies it.
pub fn read_frames_csv<R: BufRead>(r: R, grid: GridSpec) -> Result<Vec<Field>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != grid.nx() + 1 || cols[0] != "t" {
        return Err(Error::Parse(format!(
            "header has {} columns, expected t plus {} nodes",
            cols.len(),
            grid.nx()
        )));
    }
    for (i, c) in cols[1..].iter().enumerate() {
        if *c != format!("x_{i}") {
            return Err(Error::Parse(format!("unexpected column name {c}")));
        }
    }
    let mut frames = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if nums.len() != grid.nx() + 1 {
            return Err(Error::Parse(format!("row {row} has {} columns", nums.len())));
        }
        frames.push(Field::new(grid, nums[1..].to_vec())?);
    }
    Ok(frames)
}
