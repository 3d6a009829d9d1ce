//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if
//! any fails. Golden configs live in `configs/`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use srdelab::experiments::apriori::run_apriori_experiment;
use srdelab::experiments::config::Config;
use srdelab::experiments::holder::run_holder_experiment;
use srdelab::experiments::moments::{run_factorization_check, run_moment_experiment, run_variance_check};
use srdelab::experiments::uniqueness::{run_uniqueness_probe, shared_noise_pair};
use srdelab::experiments::{run_gronwall_suite, CLASSICAL_TOL, ZERO_FORCING_FINAL_MAX};
use srdelab::heat_kernel::{kernel_sweep, KernelEstimateId};
use srdelab::Result;

fn golden(name: &str) -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn kernel_suite() -> Result<Verdict> {
    let cfg = golden("kernel.toml");
    let rows = kernel_sweep(&cfg.kernel, cfg.seed)?;
    let mut worst = 0.0f64;
    let mut per_id = Vec::new();
    for id in KernelEstimateId::ALL {
        let n = rows.iter().filter(|r| r.id == id).count();
        per_id.push(n);
    }
    for r in &rows {
        if r.rhs > 0.0 {
            worst = worst.max(r.lhs / r.rhs);
        }
    }
    let violations = rows.iter().filter(|r| !r.holds()).count();
    let complete = per_id.iter().all(|&n| n == 1000);
    verdict(
        violations == 0 && complete,
        format!("8 ids x {} tuples, {violations} violations, max lhs/rhs {worst:.6}", per_id[0]),
    )
}

fn variance() -> Result<Verdict> {
    let cfg = golden("moments.toml");
    let r = run_variance_check(&cfg.variance_config()?)?;
    let v = r.estimate.mean;
    verdict(
        (0.536..=0.592).contains(&v) && r.replicas >= 10_000,
        format!(
            "{} replicas, estimate {v:.4} ± {:.4} (closed form {:.4}, exact discrete {:.4})",
            r.replicas, r.estimate.se, r.closed_form, r.discrete
        ),
    )
}

fn factorization() -> Result<Verdict> {
    let cfg = golden("factorization.toml");
    let r = run_factorization_check(&cfg.factorization_config()?)?;
    verdict(
        r.holds(3.0),
        format!(
            "p = {}, alpha = {:.5}: discrepancy {:.3e} vs self-refinement {:.3e} (ratio {:.3})",
            r.p, r.alpha, r.discrepancy, r.self_refinement, r.ratio
        ),
    )
}

fn log_gronwall() -> Result<Verdict> {
    let cfg = golden("gronwall.toml");
    let g = &cfg.gronwall;
    let s = run_gronwall_suite(g.families, g.t_max, g.steps, g.zero_forcing_k, cfg.seed)?;
    verdict(
        s.families.len() == 100 && s.max_ratio <= 1.0 + 1e-4 && s.failures == 0 && s.classical_max_error <= CLASSICAL_TOL,
        format!(
            "{} families, max ratio {:.9}, classical reductions max rel err {:.2e}",
            s.families.len(),
            s.max_ratio,
            s.classical_max_error
        ),
    )
}

fn zero_forcing() -> Result<Verdict> {
    let cfg = golden("gronwall.toml");
    let g = &cfg.gronwall;
    let s = run_gronwall_suite(1, g.t_max, g.steps, 12, cfg.seed)?;
    let last = s.zero_forcing.last().expect("k = 1..=12");
    verdict(
        s.zero_forcing.len() == 12 && s.zero_forcing_decreasing() && last.ln_bound <= ZERO_FORCING_FINAL_MAX.ln(),
        format!(
            "strictly decreasing over k = 1..12 (in log form), final ln bound {:.1} (value {:e})",
            last.ln_bound, last.bound
        ),
    )
}

fn high_and_lower_order() -> Result<(Verdict, Verdict)> {
    let cfg = golden("moments.toml");
    let e = run_moment_experiment(&cfg.moment_config()?)?;
    let h = &e.high;
    let high = Verdict {
        pass: h.holds && h.margin >= 1.0 && h.params.p == 12.0 && h.replicas >= 1000,
        detail: format!(
            "lhs {:.4e} ± {:.1e}, rhs {:.4e}, margin {:.3e} (tail {:.1e} within budget: {})",
            h.lhs_estimate.mean, h.lhs_estimate.se, h.rhs_bound, h.margin, e.tail.tail, e.tail.within
        ),
    };
    let l = &e.lower;
    let lncs: Vec<String> = l.constant_by_horizon.iter().map(|c| format!("{:.1}", c.ln_constant)).collect();
    // rhs = ε·sup + C·I overflows f64; report it in log form.
    let (a, b) = ((l.params.epsilon.unwrap_or(0.0) * l.sup_term).ln(), l.ln_constant + l.integral_term.ln());
    let ln_rhs = a.max(b) + (-(a - b).abs()).exp().ln_1p();
    let lower = Verdict {
        pass: l.holds && l.constant_increasing_in_t(),
        detail: format!(
            "lhs {:.4} vs ln rhs {:.1}; ln C at T = 1e-1..1e-4: [{}] (decreasing toward a positive floor)",
            l.lhs_estimate.mean,
            ln_rhs,
            lncs.join(", ")
        ),
    };
    Ok((high, lower))
}

fn apriori() -> Result<Verdict> {
    let cfg = golden("apriori.toml");
    let r = run_apriori_experiment(&cfg.apriori_config()?)?;
    let c = &r.constants;
    verdict(
        r.violations == 0 && r.replicas == 200 && c.horizon <= c.t_star,
        format!(
            "T = {} <= T* = {:.4}, {} replicas ({} completed), {} violations, margin min/median {:.2}/{:.2}",
            c.horizon, c.t_star, r.replicas, r.completed, r.violations, r.margin_min, r.margin_median
        ),
    )
}

fn holder() -> Result<Verdict> {
    let cfg = golden("holder.toml");
    let r = run_holder_experiment(&cfg.holder_config()?)?;
    let (Some(t), Some(s)) = (r.time_fit, r.space_fit) else {
        return verdict(false, "degenerate increments, no fit".into());
    };
    verdict(
        t.within(0.4, 0.6) && s.within(0.85, 1.15),
        format!(
            "time slope {:.3} (CI {:.3}..{:.3}), space slope {:.3} (CI {:.3}..{:.3})",
            t.slope, t.ci[0], t.ci[1], s.slope, s.ci[0], s.ci[1]
        ),
    )
}

fn uniqueness() -> Result<Verdict> {
    let cfg = golden("uniqueness.toml");
    let ucfg = cfg.uniqueness_config()?;
    let r = run_uniqueness_probe(&ucfg)?;
    let (a, b) = shared_noise_pair(&ucfg, 16, 16, 0)?;
    let identical = a.frames().len() == b.frames().len()
        && a.frames().iter().zip(b.frames()).all(|(x, y)| {
            x.values().iter().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits())
        });
    let z: Vec<String> = r.distances.iter().map(|d| format!("Z_{}={:.2e}", d.n, d.unstopped.mean)).collect();
    verdict(
        r.passes() && identical && r.tail.within,
        format!("{}; nonincreasing within 2 SE; identical levels bitwise equal: {identical}", z.join(", ")),
    )
}

const SMALL: &str = r#"
schema = 1
seed = 11
replicas = 10
initial = "cos(1)"
[grid]
half_width = 4.0
nx = 41
dt = 0.01
nt = 30
[tail]
enforce = false
[kernel]
samples = 40
[gronwall]
families = 8
[moments.variance]
nodes = [0.0]
replicas = 20
grid = { half_width = 2.0, nx = 21, dt = 0.01, nt = 10 }
[factorization]
replicas = 2
interior = 2.0
[holder]
t0 = 0.1
time_lags = [0.01, 0.02, 0.04, 0.08, 0.16]
space_lags = [1, 2, 3, 4, 5]
pool_half_width = 1.0
[uniqueness]
levels = [2, 4]
"#;

fn determinism() -> Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let config = tmp.path().join("config.toml");
    std::fs::write(&config, SMALL)?;
    let mut mismatches = Vec::new();
    let mut files = 0;
    let cmds = ["verify-kernel", "verify-gronwall", "verify-moments", "verify-apriori", "holder-fit", "uniqueness-probe"];
    for cmd in cmds {
        let mut outputs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for (i, threads) in ["1", "1", "4"].iter().enumerate() {
            let dir = tmp.path().join(format!("{cmd}-{i}"));
            let mut args = vec!["--threads", threads, cmd, "--config", config.to_str().unwrap(), "--out"];
            args.push(dir.to_str().unwrap());
            if cmd == "verify-moments" {
                args.extend(["--samples", "1000"]);
            }
            let o = Command::new(env!("CARGO_BIN_EXE_srdelab")).args(&args).output()?;
            if !matches!(o.status.code(), Some(0 | 2)) {
                mismatches.push(format!("{cmd} exited {:?}", o.status.code()));
            }
            let mut m = BTreeMap::new();
            for e in std::fs::read_dir(&dir)? {
                let p = e?.path();
                m.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?);
            }
            outputs.push(m);
        }
        files += outputs[0].len();
        if outputs[1] != outputs[0] {
            mismatches.push(format!("{cmd}: rerun differs"));
        }
        if outputs[2] != outputs[0] {
            mismatches.push(format!("{cmd}: 4 threads differ from 1"));
        }
    }
    let ok = mismatches.is_empty();
    verdict(
        ok,
        if ok {
            format!("{} subcommands x 3 runs (threads 1, 1, 4): {files} files byte-identical", cmds.len())
        } else {
            mismatches.join("; ")
        },
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, r: Result<Verdict>| {
        let v = r.unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
        println!("[{}] {n:>2}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    record(1, "kernel inequality suite", kernel_suite());
    record(2, "stochastic-convolution variance", variance());
    record(3, "factorization identity", factorization());
    record(4, "log-Gronwall", log_gronwall());
    record(5, "zero-forcing", zero_forcing());
    match high_and_lower_order() {
        Ok((h, l)) => {
            record(6, "high-order moment bound", Ok(h));
            record(7, "lower-order split", Ok(l));
        }
        Err(e) => {
            let msg = e.to_string();
            record(6, "high-order moment bound", verdict(false, format!("error: {msg}")));
            record(7, "lower-order split", verdict(false, format!("error: {msg}")));
        }
    }
    record(8, "a-priori bound", apriori());
    record(9, "Hölder moduli", holder());
    record(10, "uniqueness probe", uniqueness());
    record(11, "determinism", determinism());
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
