//! Subcommands of the `homchain` binary.
//!
//! Exit codes: 0 pass, 1 usage or I/O error, 2 numeric failure. Every file
//! written here carries the hash of the run configuration.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{
    estimate_levels, oracle_cell, oracle_corpus, sample_seed, solve_cell, subadditivity_probe, JhomEstimate,
};
use crate::chain::{minimize_chain, BoundaryCondition, ChainMinimum};
use crate::config::{RunConfig, TableFixture};
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::homogenized::{build_table, check_structure, nonconvex_fixture, BIAS_SAFETY};
use crate::medium::{holder_audit, stationarity_check, ChainModel, DistributionSpec, Quantity};
use crate::potential::{check_class_membership, membership_grid};
use crate::stats::{mean_stderr, Z95};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Gap accepted by `oracle`.
pub const ORACLE_TOL: f64 = 1e-5;
/// Default Cauchy tolerance of the `converge` L-trace.
pub const CAUCHY_TOL: f64 = 1e-3;
/// Accepted error of sample averages in `verify`.
pub const AVERAGE_TOL: f64 = 0.05;

/// Grid used by `verify` when the config has none.
pub const DEFAULT_VERIFY_GRID: [f64; 8] = [-0.5, 0.6, 0.8, 1.0, 1.2, 1.5, 2.0, 3.0];

#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: RunConfig,
    pub out: PathBuf,
    pub diagnostics: bool,
}

impl RunContext {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        RunContext { config, out: out.into(), diagnostics: false }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare(&self) -> Result<String> {
        self.config.validate()?;
        std::fs::create_dir_all(&self.out)?;
        Ok(self.config.hash())
    }
}

/// Result of a subcommand: a pass flag, human-readable lines and the files
/// written.
#[derive(Clone, Debug, Default)]
pub struct CommandReport {
    pub passed: bool,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl CommandReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_NUMERIC
        }
    }
}

pub fn exit_code(r: &Result<CommandReport>) -> i32 {
    match r {
        Ok(rep) => rep.exit_code(),
        Err(Error::SolverFailure(_) | Error::NonConvergence(_)) => EXIT_NUMERIC,
        Err(_) => EXIT_USAGE,
    }
}

fn write_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    let mut text = format!("# config_hash={hash}\n").into_bytes();
    text.extend(body);
    std::fs::write(path, text)?;
    Ok(())
}

fn missing(key: &str) -> Error {
    Error::Validation(vec![format!("missing key `{key}`")])
}

/// Estimates `J_hom` on the configured grid and writes `jhom.csv` with its
/// sidecar `jhom.meta.json`.
pub fn cmd_tabulate(ctx: &RunContext) -> Result<CommandReport> {
    let hash = ctx.prepare()?;
    let c = &ctx.config;
    let spec = c.require_distribution()?;
    let grid = c.z_grid.as_ref().ok_or_else(|| missing("z_grid"))?;
    let mut table = build_table(&spec, c.seed, grid, &c.schedule, c.samples, &c.solver)?;
    table.meta.config_hash = hash;
    let path = ctx.path("jhom.csv");
    table.save(&path)?;
    let mut lines = Vec::new();
    for i in 0..table.z_grid.len() {
        let v = table.values[i].map_or_else(|| "failed".to_string(), |v| v.to_string());
        let mut line = format!("z = {:<8} J_hom = {v} ± {:.3e}", table.z_grid[i], table.ci[i]);
        if ctx.diagnostics {
            let d = &table.diagnostics[i];
            line += &format!(
                "  unconverged {} disagreements {} extrapolated {:?}",
                d.unconverged, d.disagreements, d.extrapolated
            );
        }
        lines.push(line);
    }
    Ok(CommandReport {
        passed: table.failures() == 0,
        lines,
        files: vec![path.clone(), crate::homogenized::sidecar_path(&path)],
    })
}

/// Value-vs-`N` traces for the exact problem and every level `L ≤ L_max`,
/// and the value-vs-`L` trace at the largest `N`.
pub fn cmd_converge(ctx: &RunContext) -> Result<CommandReport> {
    let hash = ctx.prepare()?;
    let c = &ctx.config;
    let spec = c.require_distribution()?;
    let z = c.z.ok_or_else(|| missing("z"))?;
    if c.l_max == 0 {
        return Err(Error::Validation(vec!["L_max must be at least 1".into()]));
    }
    let model = ChainModel::build(spec.clone(), c.seed)?;
    let mut levels = vec![None];
    levels.extend((0..=c.l_max).map(Some));
    let est = estimate_levels(&model, z, &c.schedule, c.samples, (0.0, 1.0), &levels, &c.solver)?;

    let label = |l: Option<usize>| l.map_or_else(|| "exact".to_string(), |l| l.to_string());
    let mut header = vec!["level", "N", "mean", "stderr", "samples"];
    if ctx.diagnostics {
        header.push("wall_ms");
    }
    let mut rows = Vec::new();
    for e in &est {
        for r in &e.trace {
            let mut row = vec![label(e.level), r.n.to_string(), r.mean.to_string(), r.stderr.to_string(), r.samples.to_string()];
            if ctx.diagnostics {
                row.push(format!("{:.3}", r.wall_ms));
            }
            rows.push(row);
        }
    }
    write_csv(&ctx.path("trace_n.csv"), &hash, &header, &rows)?;
    let rows: Vec<Vec<String>> =
        est.iter().map(|e| vec![label(e.level), e.estimate.to_string(), e.ci.to_string()]).collect();
    write_csv(&ctx.path("trace_l.csv"), &hash, &["level", "value", "ci"], &rows)?;

    let exact = &est[0];
    let lvals: Vec<f64> = est[1..].iter().map(|e| e.estimate.to_f64()).collect();
    let scale = lvals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let monotone = lvals.windows(2).all(|w| w[1] >= w[0] - 1e-9 * scale);
    let tol = c.tolerance.unwrap_or(CAUCHY_TOL);
    let tail = (lvals[lvals.len() - 1] - lvals[lvals.len() - 2]).abs();
    let cauchy = tail.is_finite() && tail < tol || tail.is_nan() && lvals.iter().all(|v| v.is_infinite());
    let violations = sample_order_violations(exact, &est[1..]);
    let floor = spec.class.energy_floor(spec.k, z);

    let mut lines = vec![format!("exact J_hom({z}) = {} ± {:.3e}", exact.estimate, exact.ci)];
    for e in &est[1..] {
        lines.push(format!("L = {} J_hom^L = {} ± {:.3e}", label(e.level), e.estimate, e.ci));
    }
    lines.push(format!("L-trace monotone non-decreasing: {}", pass_word(monotone)));
    lines.push(format!("L-trace Cauchy tail {tail:.3e} < {tol:e}: {}", pass_word(cauchy)));
    lines.push(format!("per-sample approximate values above exact: {violations}"));
    lines.push(format!("floor (K/d)Psi(z) - Kd = {floor}"));
    Ok(CommandReport {
        passed: monotone && cauchy,
        lines,
        files: vec![ctx.path("trace_n.csv"), ctx.path("trace_l.csv")],
    })
}

/// Number of (level, realization) pairs whose approximate cell value
/// exceeds the exact one beyond rounding.
pub fn sample_order_violations(exact: &JhomEstimate, approx: &[JhomEstimate]) -> usize {
    approx
        .iter()
        .map(|e| {
            e.samples
                .iter()
                .zip(&exact.samples)
                .filter(|(a, x)| **a > **x + 1e-12 * x.abs().max(1.0))
                .count()
        })
        .sum()
}

fn pass_word(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Per-`n` mean of the chain minima over the configured realizations.
#[derive(Clone, Debug, Serialize)]
pub struct ChainStudy {
    pub n: usize,
    pub mean: f64,
    pub ci: f64,
    pub minima: Vec<ChainMinimum>,
}

pub fn chain_study(spec: &DistributionSpec, seed: u64, ns: &[usize], ell: f64, samples: usize, cfg: &crate::engine::SolverConfig) -> Result<Vec<ChainStudy>> {
    let bc = BoundaryCondition::new(ell)?;
    let base = ChainModel::build(spec.clone(), seed)?;
    let tasks: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..samples).map(move |s| (n, s))).collect();
    let results: Vec<Result<ChainMinimum>> = tasks
        .par_iter()
        .map(|&(n, s)| minimize_chain(&base.with_seed(sample_seed(seed, s)), n, spec.k, &bc, cfg))
        .collect();
    let mut results = results.into_iter();
    let mut out = Vec::new();
    for &n in ns {
        let minima = results.by_ref().take(samples).collect::<Result<Vec<_>>>()?;
        let vals: Vec<f64> = minima.iter().map(|m| m.value.to_f64()).collect();
        let (mean, se) = mean_stderr(&vals);
        out.push(ChainStudy { n, mean, ci: Z95 * se, minima });
    }
    Ok(out)
}

/// Minimizes `E_n^ℓ` for every configured `n` and compares with a cell
/// estimate of `J_hom(ℓ)`.
pub fn cmd_minimize(ctx: &RunContext) -> Result<CommandReport> {
    let hash = ctx.prepare()?;
    let c = &ctx.config;
    let spec = c.require_distribution()?;
    let ell = c.ell.ok_or_else(|| missing("ell"))?;
    let study = chain_study(&spec, c.seed, &c.chain_n, ell, c.samples, &c.solver)?;
    let model = ChainModel::build(spec.clone(), c.seed)?;
    let jhom = estimate_levels(&model, ell, &c.schedule, c.samples, (0.0, 1.0), &[None], &c.solver)?.remove(0);
    let last = study.last().unwrap();

    let mpath = ctx.path("minimizer.csv");
    let d = &last.minima[0].deformation;
    let rows: Vec<Vec<String>> = d
        .values()
        .iter()
        .enumerate()
        .map(|(i, u)| vec![i.to_string(), (i as f64 / d.n() as f64).to_string(), u.to_string()])
        .collect();
    write_csv(&mpath, &hash, &["i", "x", "u"], &rows)?;

    let jv = jhom.estimate.to_f64();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for s in &study {
        let gap = (s.mean - jv).abs();
        rows.push(vec![s.n.to_string(), s.mean.to_string(), s.ci.to_string(), jv.to_string(), jhom.ci.to_string(), gap.to_string()]);
        lines.push(format!("n = {:<6} min E_n = {} ± {:.3e}", s.n, s.mean, s.ci));
    }
    let cpath = ctx.path("comparison.csv");
    write_csv(&cpath, &hash, &["n", "min_value", "min_ci", "jhom", "jhom_ci", "gap"], &rows)?;
    let gap = (last.mean - jv).abs();
    let tol = c.tolerance.unwrap_or(AVERAGE_TOL.max(last.ci + jhom.ci));
    lines.push(format!(
        "min value {} | J_hom({ell}) estimate {} ± {:.3e} | gap {gap:.3e} (tolerance {tol:.3e}): {}",
        last.mean,
        jhom.estimate,
        jhom.ci,
        pass_word(gap <= tol)
    ));
    Ok(CommandReport { passed: gap <= tol, lines, files: vec![mpath, cpath] })
}

/// One row of the `verify` table.
#[derive(Clone, Debug, Serialize)]
pub struct NamedCheck {
    pub name: String,
    /// `None` for informational rows.
    pub passed: Option<bool>,
    pub detail: String,
}

impl NamedCheck {
    fn new(name: impl Into<String>, passed: Option<bool>, detail: impl Into<String>) -> Self {
        NamedCheck { name: name.into(), passed, detail: detail.into() }
    }
}

/// Strain used by the window and seed independence checks.
fn probe_strain(c: &RunConfig) -> f64 {
    c.z.or_else(|| c.z_grid.as_ref().and_then(|g| g.last().copied())).unwrap_or(2.0)
}

/// The invariant battery behind `verify`.
pub fn verify_battery(c: &RunConfig, spec: &DistributionSpec) -> Result<Vec<NamedCheck>> {
    let mut out = Vec::new();
    let model = ChainModel::build(spec.clone(), c.seed)?;

    let st = stationarity_check(spec, 10_000, &[0, 17, -40, 1000])?;
    out.push(NamedCheck::new(
        "stationarity",
        Some(st.passed),
        format!("max KS {:.4} against critical {:.4}", st.ks_statistics.iter().fold(0.0_f64, |m, &x| m.max(x)), st.critical_value),
    ));

    let n_avg = 100_000;
    let expect = spec.expectation(Quantity::Delta)?;
    for (name, window) in [("average_delta", (0.0, 1.0)), ("average_delta_shifted_window", (3.0, 4.0))] {
        let avg = model.sample_average(Quantity::Delta, 1, n_avg, window)?;
        out.push(NamedCheck::new(
            name,
            Some((avg - expect).abs() <= AVERAGE_TOL),
            format!("average {avg:.5} over N = {n_avg} against E[delta] = {expect:.5}"),
        ));
    }

    let sites: Vec<i64> = (0..20).map(|k| k * 37 - 200).collect();
    let mut failed = Vec::new();
    for &i in &sites {
        for j in 1..=spec.k {
            let p = model.potential_at(i, j)?;
            let rep = check_class_membership(&p, &spec.class, &membership_grid(&p, &spec.class))?;
            if !rep.passed() {
                failed.push(format!("site {i} order {j}: {:?}", rep.failed()));
            }
        }
    }
    out.push(NamedCheck::new(
        "class_membership",
        Some(failed.is_empty()),
        if failed.is_empty() { format!("{} sampled potentials", sites.len() * spec.k) } else { failed.join("; ") },
    ));

    let audit = holder_audit(&model, 1, &[1_000, 10_000, 100_000])?;
    out.push(NamedCheck::new("holder_average", None, format!("running means {:?}", audit.means)));

    let z = probe_strain(c);
    let est = |m: &ChainModel, window| -> Result<JhomEstimate> {
        Ok(estimate_levels(m, z, &c.schedule, c.samples, window, &[None], &c.solver)?.remove(0))
    };
    let agree = |a: &JhomEstimate, b: &JhomEstimate| -> (bool, f64, f64) {
        let bias = |e: &JhomEstimate| match (e.estimate, e.extrapolated) {
            (ExtReal::Finite(v), Some(x)) => (v - x).abs(),
            _ => 0.0,
        };
        let diff = (a.estimate.to_f64() - b.estimate.to_f64()).abs();
        let slack = a.ci + b.ci + BIAS_SAFETY * (bias(a) + bias(b)) + 1e-9;
        (diff <= slack || (a.estimate.is_infinite() && b.estimate.is_infinite()), diff, slack)
    };
    let base = est(&model, (0.0, 1.0))?;
    let shifted = est(&model, (1.0, 2.0))?;
    let reseeded = est(&model.with_seed(model.seed().wrapping_add(0x5EED)), (0.0, 1.0))?;
    for (name, other) in [("window_independence", &shifted), ("seed_independence", &reseeded)] {
        let (ok, diff, slack) = agree(&base, other);
        out.push(NamedCheck::new(
            name,
            Some(ok),
            format!("J_hom({z}): {} vs {}, difference {diff:.3e} within {slack:.3e}", base.estimate, other.estimate),
        ));
    }

    let table = match c.table_fixture {
        Some(TableFixture::Nonconvex) => nonconvex_fixture(),
        None => {
            let grid = c.z_grid.clone().unwrap_or_else(|| DEFAULT_VERIFY_GRID.to_vec());
            build_table(spec, c.seed, &grid, &c.schedule, c.samples, &c.solver)?
        }
    };
    let report = check_structure(&table)?;
    for chk in report.checks {
        out.push(NamedCheck::new(chk.name, chk.passed, chk.detail));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0xADD1_7105);
    let n = 400;
    let mut worst = f64::INFINITY;
    let mut fails = 0;
    for _ in 0..c.probes {
        let start = rng.random_range(-200..200) as f64 / n as f64;
        let la = rng.random_range(40..400) as f64 / n as f64;
        let lb = rng.random_range(40..400) as f64 / n as f64;
        let zp = rng.random_range(0.8..3.0);
        let m = model.with_seed(rng.random());
        let r = subadditivity_probe(&m, zp, (start, start + la), (start + la, start + la + lb), n, &c.solver)?;
        worst = worst.min(r.margin);
        fails += !r.passed as usize;
    }
    out.push(NamedCheck::new(
        "subadditivity",
        Some(fails == 0),
        format!("{} probes at N = {n}, {fails} failed, smallest margin {worst:.3e}", c.probes),
    ));
    Ok(out)
}

/// Runs the invariant battery and writes `verify.csv`.
pub fn cmd_verify(ctx: &RunContext) -> Result<CommandReport> {
    let hash = ctx.prepare()?;
    let spec = ctx.config.require_distribution()?;
    let checks = verify_battery(&ctx.config, &spec)?;
    let word = |p: Option<bool>| match p {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "INFO",
    };
    let rows: Vec<Vec<String>> =
        checks.iter().map(|c| vec![c.name.clone(), word(c.passed).to_string(), c.detail.clone()]).collect();
    let path = ctx.path("verify.csv");
    write_csv(&path, &hash, &["check", "result", "detail"], &rows)?;
    let lines = checks.iter().map(|c| format!("{:<30} {}  {}", c.name, word(c.passed), c.detail)).collect();
    Ok(CommandReport { passed: checks.iter().all(|c| c.passed != Some(false)), lines, files: vec![path] })
}

/// Solver against exhaustive grid search on one corpus instance.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub label: String,
    pub solver: ExtReal,
    pub oracle: ExtReal,
    pub gap: f64,
}

pub fn oracle_rows(cfg: &crate::engine::SolverConfig) -> Result<Vec<OracleRow>> {
    oracle_corpus()
        .par_iter()
        .map(|inst| {
            let s = solve_cell(&inst.problem, cfg)?.value;
            let o = oracle_cell(&inst.problem, inst.grid_step)?;
            let gap = match (s, o) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
                (ExtReal::PosInf, ExtReal::PosInf) => 0.0,
                _ => f64::INFINITY,
            };
            Ok(OracleRow { label: inst.label.clone(), solver: s, oracle: o, gap })
        })
        .collect()
}

/// Compares the cell solver with the grid oracle over the regression corpus
/// and writes `oracle.csv`.
pub fn cmd_oracle(ctx: &RunContext) -> Result<CommandReport> {
    let hash = ctx.prepare()?;
    let rows = oracle_rows(&ctx.config.solver)?;
    let path = ctx.path("oracle.csv");
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.label.clone(), r.solver.to_string(), r.oracle.to_string(), r.gap.to_string()])
        .collect();
    write_csv(&path, &hash, &["instance", "solver", "oracle", "gap"], &csv_rows)?;
    let passed = rows.iter().all(|r| r.gap <= ORACLE_TOL);
    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{:<36} solver {:<22} oracle {:<22} gap {:.2e}", r.label, r.solver, r.oracle, r.gap))
        .collect();
    let worst = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    lines.push(format!("{} instances, largest gap {worst:.2e} (tolerance {ORACLE_TOL:e}): {}", rows.len(), pass_word(passed)));
    Ok(CommandReport { passed, lines, files: vec![path] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(json: &str) -> (tempfile::TempDir, RunContext) {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::from_json(json).unwrap();
        let ctx = RunContext::new(c, dir.path().join("out"));
        (dir, ctx)
    }

    const DET: &str = r#"{
        "schema": "homchain/v1",
        "distribution": {"kind": "iid_discrete",
            "support": [{"potential": {"kind": "classical_lj", "delta": 2, "epsilon": 1}, "probability": 1}]},
        "z_grid": [-1, 1, 2, 3],
        "z": 2,
        "ell": 3,
        "chain_n": [100, 200],
        "schedule": [20, 40],
        "samples": 2,
        "L_max": 2,
        "solver": {"n_starts": 2}
    }"#;

    #[test]
    fn tabulate_writes_inf_row_and_hash() {
        let (_d, ctx) = ctx(DET);
        let r = cmd_tabulate(&ctx).unwrap();
        assert_eq!(r.exit_code(), EXIT_PASS);
        let text = std::fs::read_to_string(&r.files[0]).unwrap();
        assert!(text.starts_with(&format!("# config_hash={}", ctx.config.hash())));
        assert!(text.contains("\n-1,inf,0\n"));
        let side = std::fs::read_to_string(&r.files[1]).unwrap();
        assert!(side.contains(&ctx.config.hash()));
    }

    #[test]
    fn rerun_overwrites_identically() {
        let (_d, ctx) = ctx(DET);
        let first = cmd_converge(&ctx).unwrap();
        let bytes: Vec<Vec<u8>> = first.files.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let again = cmd_converge(&ctx).unwrap();
        for (p, b) in again.files.iter().zip(&bytes) {
            assert_eq!(&std::fs::read(p).unwrap(), b);
        }
    }

    #[test]
    fn converge_on_deterministic_medium_is_constant() {
        let (_d, ctx) = ctx(DET);
        let r = cmd_converge(&ctx).unwrap();
        assert!(r.passed, "{:?}", r.lines);
        let text = std::fs::read_to_string(&r.files[1]).unwrap();
        for line in text.lines().skip(2) {
            assert!(line.contains(",-1,"), "{line}");
        }
    }

    #[test]
    fn minimize_compares_with_cell_estimate() {
        let (_d, ctx) = ctx(DET);
        let r = cmd_minimize(&ctx).unwrap();
        assert!(r.passed, "{:?}", r.lines);
        let text = std::fs::read_to_string(&r.files[0]).unwrap();
        assert_eq!(text.lines().nth(1), Some("i,x,u"));
        assert_eq!(text.lines().count(), 2 + 201);
    }

    #[test]
    fn missing_keys_are_usage_errors() {
        let (_d, mut ctx) = ctx(DET);
        ctx.config.z_grid = None;
        let r = cmd_tabulate(&ctx);
        assert_eq!(exit_code(&r), EXIT_USAGE);
        ctx.config.distribution = None;
        assert_eq!(exit_code(&cmd_minimize(&ctx)), EXIT_USAGE);
    }
}
