//! CSV writers. Floats use Rust's shortest round-trip formatting, so files
//! are byte-stable for identical results.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::experiments::apriori::AprioriReport;
use crate::experiments::holder::HolderReport;
use crate::experiments::moments::{MomentExperiment, VarianceReport};
use crate::experiments::uniqueness::UniquenessReport;
use crate::experiments::GronwallSuite;
use crate::heat_kernel::KernelRow;

/// Header plus rows; each row is already a list of rendered cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn to_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("cells are UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)?;
        Ok(())
    }
}

/// Plain decimal in `[1e-4, 1e15)`, scientific outside it.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        fmt_f64(*self)
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(impl Cell for $t {
        fn cell(&self) -> String {
            self.to_string()
        }
    })*};
}
display_cell!(u32, u64, usize, i32, bool, str, String);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

fn s(v: impl Cell) -> String {
    v.cell()
}

/// `id,t,s,x,y,eta,theta,lhs,rhs,holds`; unused parameters are left empty.
pub fn kernel_table(rows: &[KernelRow]) -> Table {
    use crate::heat_kernel::Param::*;
    let mut t = Table::new(&["id", "t", "s", "x", "y", "eta", "theta", "lhs", "rhs", "holds"]);
    for r in rows {
        let mut row = vec![s(r.id.name())];
        for p in [T, S, X, Y, Eta, Theta] {
            row.push(if r.id.uses(p) { s(r.params.get(p)) } else { String::new() });
        }
        row.extend([s(r.lhs), s(r.rhs), s(r.holds())]);
        t.push(row);
    }
    t
}

pub fn gronwall_table(suite: &GronwallSuite) -> Table {
    let mut t = Table::new(&["family", "t", "ode", "bound", "ratio"]);
    for rep in &suite.families {
        for r in &rep.rows {
            t.push(vec![s(&rep.family), s(r.t), s(r.ode), s(r.bound), s(r.ratio)]);
        }
    }
    t
}

pub fn zero_forcing_table(suite: &GronwallSuite) -> Table {
    let mut t = Table::new(&["k", "theta", "ln_bound", "bound"]);
    for (k, z) in suite.zero_forcing.iter().enumerate() {
        t.push(vec![s(k + 1), s(z.theta), s(z.ln_bound), s(z.bound)]);
    }
    t
}

pub fn moment_samples_table(exp: &MomentExperiment) -> Table {
    let mut t = Table::new(&["replica", "sup", "sigma_sup", "integral_high", "integral_low", "max_abs", "completed"]);
    for m in &exp.samples {
        t.push(vec![
            s(m.replica),
            s(m.sup),
            s(m.sigma_sup),
            s(m.integral_high),
            s(m.integral_low),
            s(m.max_abs),
            s(m.completed),
        ]);
    }
    t
}

/// One row per checked inequality: high order, lower order, variance.
pub fn moment_summary_table(exp: &MomentExperiment, var: Option<&VarianceReport>) -> Table {
    let mut t = Table::new(&["check", "lhs", "lhs_se", "rhs", "margin", "holds"]);
    let h = &exp.high;
    t.push(vec![s("high_order"), s(h.lhs_estimate.mean), s(h.lhs_estimate.se), s(h.rhs_bound), s(h.margin), s(h.holds)]);
    let l = &exp.lower;
    t.push(vec![s("lower_order"), s(l.lhs_estimate.mean), s(l.lhs_estimate.se), s(l.rhs_bound), s(l.margin), s(l.holds)]);
    for c in &l.constant_by_horizon {
        t.push(vec![format!("lower_constant_T={}", fmt_f64(c.horizon)), s(c.constant), s(0.0), s(""), s(""), s("")]);
    }
    if let Some(v) = var {
        t.push(vec![
            s("variance"),
            s(v.estimate.mean),
            s(v.estimate.se),
            s(v.closed_form),
            s(v.relative_error),
            s(v.within(0.05)),
        ]);
    }
    t
}

/// `kind,lag,moment,se` followed by the two fits as `kind = *_fit`.
pub fn holder_table(rep: &HolderReport) -> Table {
    let mut t = Table::new(&["kind", "lag", "moment", "se"]);
    for (kind, lags) in [("time", &rep.time), ("space", &rep.space)] {
        for l in lags {
            t.push(vec![s(kind), s(l.lag), s(l.moment.mean), s(l.moment.se)]);
        }
    }
    for (kind, fit) in [("time_fit", rep.time_fit), ("space_fit", rep.space_fit)] {
        if let Some(f) = fit {
            t.push(vec![s(kind), s(""), s(f.slope), s(f.se)]);
        }
    }
    t
}

pub fn uniqueness_table(rep: &UniquenessReport) -> Table {
    let mut t = Table::new(&[
        "n",
        "partner",
        "stopped",
        "stopped_se",
        "unstopped",
        "unstopped_se",
        "tau_m_rate",
        "tau_delta_rate",
        "mean_tau_delta",
    ]);
    for d in &rep.distances {
        t.push(vec![
            s(d.n),
            s(d.partner),
            s(d.stopped.mean),
            s(d.stopped.se),
            s(d.unstopped.mean),
            s(d.unstopped.se),
            s(d.tau_m_rate),
            s(d.tau_delta_rate),
            s(d.mean_tau_delta),
        ]);
    }
    t
}

pub fn apriori_table(rep: &AprioriReport) -> Table {
    let mut t = Table::new(&["replica", "completed", "u_norm", "v_norm", "rhs", "margin", "violated"]);
    for a in &rep.samples {
        t.push(vec![s(a.replica), s(a.completed), s(a.u_norm), s(a.v_norm), s(a.rhs), s(a.margin), s(a.violated)]);
    }
    t
}

/// Long format for plotting: `series,x,y`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotData(pub Table);

impl PlotData {
    pub fn new() -> Self {
        Self(Table::new(&["series", "x", "y"]))
    }

    pub fn add(&mut self, series: &str, x: f64, y: f64) {
        self.0.push(vec![series.to_string(), s(x), s(y)]);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.0.save(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_kernel::{KernelEstimateId, KernelParams};

    #[test]
    fn kernel_rows_leave_unused_params_empty() {
        let row = KernelRow {
            id: KernelEstimateId::WeightedMass,
            params: KernelParams { t: 1.0, s: 0.5, x: 0.0, y: 2.0, eta: 1.0, theta: 0.3 },
            lhs: 2.0,
            rhs: 3.0,
        };
        let text = kernel_table(&[row]).to_string();
        assert_eq!(text, "id,t,s,x,y,eta,theta,lhs,rhs,holds\nWEIGHTED_MASS,1,,0,,1,,2,3,true\n");
    }

    #[test]
    fn plot_data_is_long_format() {
        let mut p = PlotData::new();
        p.add("a", 0.5, 1e-20);
        assert_eq!(p.0.to_string(), "series,x,y\na,0.5,1e-20\n");
    }
}
