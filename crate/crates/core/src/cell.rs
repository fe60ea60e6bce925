//! Finite-window cell formulas and their Monte Carlo limits.
//!
//! For a window `A = [a, b)` the sites `i ∈ NA ∩ ℤ` are relabelled
//! `0..M`. The cell value at macroscopic strain `z` is
//!
//! ```text
//! J^{(N)}(ω, z, A) = (1/M) inf Σ_{j=1}^K Σ_{i=0}^{M−j} J_j(ω, i, z + (φ^{i+j} − φ^i)/j)
//! ```
//!
//! over correctors `φ^0..φ^M` vanishing on the first and last `K` sites.
//! Equivalently the bond strains `z^i = z + φ^{i+1} − φ^i` have mean `z`
//! and the first and last `K − 1` of them equal `z`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Bond, CandidateKind, Outcome, SolverConfig, Status, StrainProblem};
use crate::error::{precondition, Error, Result};
use crate::extended::ExtReal;
use crate::medium::{catalog, window_indices, ChainModel};
use crate::potential::{ApproxPotential, ClassParams, PotentialSpec};
use crate::stats::{fit_limit_inverse, mean_stderr, Z95};

/// Largest supported approximation level.
pub const MAX_LEVEL: usize = 60;
/// Restarts whose values spread more than this are flagged for `K ≥ 2`.
pub const START_DISAGREEMENT: f64 = 1e-6;

/// Knot `z_L = 2^{−L} / (2d)` of the approximation sequence.
pub fn knot(class: &ClassParams, level: usize) -> f64 {
    0.5 / class.d * 0.5f64.powi(level as i32)
}

#[derive(Clone, Debug)]
pub struct CellProblem {
    pub model: ChainModel,
    pub z: f64,
    pub n: usize,
    pub k: usize,
    pub window: (f64, f64),
    pub approx_level: Option<usize>,
}

impl CellProblem {
    /// Problem on `[0, 1)` with the model's full interaction range.
    pub fn new(model: ChainModel, z: f64, n: usize) -> Self {
        let k = model.k();
        CellProblem { model, z, n, k, window: (0.0, 1.0), approx_level: None }
    }

    pub fn with_window(mut self, a: f64, b: f64) -> Self {
        self.window = (a, b);
        self
    }

    pub fn with_level(mut self, level: Option<usize>) -> Self {
        self.approx_level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.z.is_finite() {
            return Err(Error::Domain(format!("strain {} is not finite", self.z)));
        }
        if self.k == 0 || self.k > self.model.k() {
            return precondition(format!("K = {} outside 1..={}", self.k, self.model.k()));
        }
        if self.n < 2 * self.k {
            return precondition(format!("N = {} below 2K = {}", self.n, 2 * self.k));
        }
        let (lo, hi) = window_indices(self.n, self.window)?;
        if ((hi - lo) as usize) < 2 * self.k {
            return precondition(format!(
                "window holds {} sites, fewer than 2K = {}",
                hi - lo,
                2 * self.k
            ));
        }
        if let Some(l) = self.approx_level {
            if l > MAX_LEVEL {
                return precondition(format!("approximation level {l} above {MAX_LEVEL}"));
            }
        }
        Ok(())
    }

    /// The realized potentials of the window, `orders[j-1][i]`.
    pub fn potentials(&self) -> Result<CellPotentials> {
        self.validate()?;
        let (lo, hi) = window_indices(self.n, self.window)?;
        let m = (hi - lo) as usize;
        let mut orders: Vec<Vec<PotentialSpec>> = (1..=self.k).map(|j| Vec::with_capacity(m + 1 - j)).collect();
        for i in 0..m {
            let all = self.model.potentials_at(lo + i as i64);
            for (jm1, p) in all.into_iter().take(self.k).enumerate() {
                if i + jm1 < m {
                    orders[jm1].push(p);
                }
            }
        }
        Ok(CellPotentials { orders, m })
    }
}

/// Potentials of one window: `orders[j-1][i]` for `i = 0..=M−j`.
#[derive(Clone, Debug)]
pub struct CellPotentials {
    pub orders: Vec<Vec<PotentialSpec>>,
    pub m: usize,
}

impl CellPotentials {
    /// Site-wise potentials shared by all orders.
    pub fn uniform_orders(sites: Vec<PotentialSpec>, k: usize) -> Self {
        let m = sites.len();
        let orders = (1..=k).map(|j| sites[..m + 1 - j].to_vec()).collect();
        CellPotentials { orders, m }
    }

    pub fn k(&self) -> usize {
        self.orders.len()
    }

    pub fn approximated(&self, class: &ClassParams, level: usize) -> Result<Vec<Vec<ApproxPotential>>> {
        let zl = knot(class, level);
        self.orders
            .iter()
            .map(|o| o.iter().map(|p| ApproxPotential::new(p.clone(), class, zl + p.shift())).collect())
            .collect()
    }
}

/// Energy in corrector form, `Σ_j Σ_i J_j(i, z + (φ^{i+j} − φ^i)/j)`.
pub fn corrector_energy<B: Bond>(orders: &[Vec<B>], z: f64, phi: &[f64]) -> ExtReal {
    let mut total = ExtReal::ZERO;
    for (jm1, bonds) in orders.iter().enumerate() {
        let j = (jm1 + 1) as f64;
        for (i, b) in bonds.iter().enumerate() {
            total += b.value(z + (phi[i + jm1 + 1] - phi[i]) / j);
            if total.is_infinite() {
                return total;
            }
        }
    }
    total
}

/// Corrector `φ` of a strain profile, exactly zero on the clamp layers.
pub fn corrector_from_strains(strains: &[f64], z: f64, k: usize) -> Vec<f64> {
    let m = strains.len();
    let mut phi = Vec::with_capacity(m + 1);
    phi.push(0.0);
    let mut acc = 0.0;
    for s in strains {
        acc += s - z;
        phi.push(acc);
    }
    for (idx, v) in phi.iter_mut().enumerate() {
        if idx < k || idx + k > m {
            *v = 0.0;
        }
    }
    phi
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSolution {
    /// Energy per site.
    pub value: ExtReal,
    pub phi: Vec<f64>,
    pub strains: Vec<f64>,
    pub status: Status,
    pub candidates_tried: usize,
    pub winner: Option<CandidateKind>,
    /// Spread of the perturbed restarts around the winner.
    pub start_spread: f64,
    /// Set for `K ≥ 2` when restarts disagree by more than `1e-6`.
    pub starts_disagree: bool,
    pub iterations: usize,
}

impl CellSolution {
    fn infinite(m: usize, z: f64) -> Self {
        CellSolution {
            value: ExtReal::PosInf,
            phi: vec![0.0; m + 1],
            strains: vec![z; m],
            status: Status::InfeasibleInfinite,
            candidates_tried: 0,
            winner: None,
            start_spread: 0.0,
            starts_disagree: false,
            iterations: 0,
        }
    }

    fn from_outcome(out: Outcome, m: usize, z: f64, k: usize) -> Self {
        let phi = corrector_from_strains(&out.strains, z, k);
        CellSolution {
            value: out.energy * (1.0 / m as f64),
            phi,
            strains: out.strains,
            status: out.status,
            candidates_tried: out.candidates_tried,
            winner: Some(out.winner),
            start_spread: out.start_spread,
            starts_disagree: k >= 2 && out.start_spread > START_DISAGREEMENT,
            iterations: out.iterations,
        }
    }
}

fn strain_problem<B: Bond>(orders: &[Vec<B>], m: usize, z: f64) -> StrainProblem<'_, B> {
    StrainProblem { orders, m, clamp: orders.len() - 1, clamp_value: z, total: m as f64 * z }
}

fn solve_orders<B: Bond>(orders: &[Vec<B>], m: usize, z: f64, cfg: &SolverConfig, warm: Vec<Vec<f64>>) -> CellSolution {
    if z <= 0.0 {
        return CellSolution::infinite(m, z);
    }
    let sp = strain_problem(orders, m, z);
    let out = sp.solve(cfg, warm);
    if out.energy.is_infinite() {
        return CellSolution::infinite(m, z);
    }
    CellSolution::from_outcome(out, m, z, orders.len())
}

/// Cell value with exact potentials (the approximation level of the
/// problem, if any, is ignored).
pub fn solve_cell(problem: &CellProblem, cfg: &SolverConfig) -> Result<CellSolution> {
    let pots = problem.potentials()?;
    Ok(solve_orders(&pots.orders, pots.m, problem.z, cfg, Vec::new()))
}

/// Cell value with every potential replaced by its approximation at the
/// problem's level. The exact optimum is added as a warm start; since the
/// approximations lie below the exact potentials the result never exceeds
/// the exact value.
pub fn solve_cell_approx(problem: &CellProblem, cfg: &SolverConfig) -> Result<CellSolution> {
    let exact = solve_cell(problem, cfg)?;
    solve_cell_approx_from(problem, cfg, &exact)
}

/// [`solve_cell_approx`] with a known exact solution of the same problem.
pub fn solve_cell_approx_from(problem: &CellProblem, cfg: &SolverConfig, exact: &CellSolution) -> Result<CellSolution> {
    let level = problem
        .approx_level
        .ok_or_else(|| Error::Precondition("problem has no approximation level".into()))?;
    let pots = problem.potentials()?;
    let approx = pots.approximated(problem.model.class(), level)?;
    let warm = if exact.value.is_finite() { vec![exact.strains.clone()] } else { vec![] };
    Ok(solve_orders(&approx, pots.m, problem.z, cfg, warm))
}

/// Nearest-neighbour cell problem restricted to the convex branches,
/// solved through the shared multiplier `λ ≤ 0` of `J_i′(z_i) = λ`.
pub fn solve_cell_dual_k1(potentials: &[PotentialSpec], z: f64, tol: f64) -> Result<CellSolution> {
    let n = potentials.len();
    if n < 2 {
        return precondition("need at least two bonds");
    }
    if !(z > 0.0) {
        return precondition(format!("strain {z} must be positive"));
    }
    let mean_well = potentials.iter().map(|p| p.well()).sum::<f64>() / n as f64;
    if z > mean_well {
        return Err(Error::NotApplicable(format!(
            "target strain {z} above the mean well position {mean_well}"
        )));
    }
    let orders = vec![potentials.to_vec()];
    let sp = StrainProblem { orders: &orders, m: n, clamp: 0, clamp_value: z, total: n as f64 * z };
    let (mut strains, _lambda) = sp
        .multiplier_profile(tol)
        .ok_or_else(|| Error::NonConvergence("multiplier bisection failed to bracket".into()))?;
    let residual = (n as f64 * z - strains.iter().sum::<f64>()) / n as f64;
    strains.iter_mut().for_each(|s| *s += residual);
    let energy = sp.energy(&strains);
    Ok(CellSolution {
        value: energy * (1.0 / n as f64),
        phi: corrector_from_strains(&strains, z, 1),
        strains,
        status: Status::Converged,
        candidates_tried: 1,
        winner: Some(CandidateKind::Multiplier),
        start_spread: 0.0,
        starts_disagree: false,
        iterations: 0,
    })
}

/// Single-crack profile: clamp layers at `z`, free bonds at their wells and
/// the best-placed bond absorbing the remaining stretch.
pub fn crack_candidate(orders: &[Vec<PotentialSpec>], z: f64) -> Result<Vec<f64>> {
    if !(z > 0.0) {
        return precondition(format!("strain {z} must be positive"));
    }
    let m = orders[0].len();
    let sp = strain_problem(orders, m, z);
    sp.crack_profile()
        .ok_or_else(|| Error::NotApplicable(format!("no stretched crack at strain {z}")))
}

/// Energy per site of a strain profile.
pub fn profile_value(orders: &[Vec<PotentialSpec>], strains: &[f64]) -> ExtReal {
    let m = strains.len();
    let sp = StrainProblem { orders, m, clamp: 0, clamp_value: 0.0, total: strains.iter().sum() };
    sp.energy(strains) * (1.0 / m as f64)
}

/// Cap on the number of grid points the oracle visits.
pub const ORACLE_MAX_POINTS: f64 = 2e9;

/// Brute-force cell value: exhaustive search over strain profiles on a
/// grid of spacing `grid_step`, then a compass search polish along the
/// directions `e_a − e_b` that keep the strain total fixed.
pub fn oracle_cell(problem: &CellProblem, grid_step: f64) -> Result<ExtReal> {
    problem.validate()?;
    if problem.n > 6 || problem.k > 2 {
        return Err(Error::Refused(format!(
            "oracle limited to N ≤ 6 and K ≤ 2 (got N = {}, K = {})",
            problem.n, problem.k
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1e-2) {
        return Err(Error::Refused(format!("grid step {grid_step} outside (0, 1e-2]")));
    }
    if problem.z <= 0.0 {
        return Ok(ExtReal::PosInf);
    }
    let pots = problem.potentials()?;
    match problem.approx_level {
        None => oracle_orders(&pots.orders, pots.m, problem.z, grid_step),
        Some(l) => oracle_orders(&pots.approximated(problem.model.class(), l)?, pots.m, problem.z, grid_step),
    }
}

fn oracle_orders<B: Bond>(orders: &[Vec<B>], m: usize, z: f64, step: f64) -> Result<ExtReal> {
    let k = orders.len();
    let clamp = k - 1;
    let free: Vec<usize> = (clamp..m - clamp).collect();
    let nfree = free.len();
    let free_total = z * nfree as f64;
    let dims = nfree - 1;
    let per_dim = (free_total / step).floor();
    let factorial: f64 = (1..=dims).map(|x| x as f64).product();
    let estimate = per_dim.powi(dims as i32) / factorial;
    if estimate > ORACLE_MAX_POINTS {
        return Err(Error::Refused(format!("oracle grid would visit ~{estimate:.3e} points")));
    }

    // Terms grouped by the last strain index they touch.
    let mut closing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for j in 1..=k {
        for i in 0..orders[j - 1].len() {
            closing[i + j - 1].push((j, i));
        }
    }
    let mut s = vec![z; m];
    let term = |s: &[f64], j: usize, i: usize| -> ExtReal {
        let x = s[i..i + j].iter().sum::<f64>() / j as f64;
        orders[j - 1][i].value(x)
    };
    let mut best = (f64::INFINITY, s.clone());

    // Clamped prefix terms.
    let mut prefix = 0.0;
    for t in 0..clamp {
        for &(j, i) in &closing[t] {
            prefix += term(&s, j, i).to_f64();
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<B: Bond>(
        depth: usize,
        partial: f64,
        used: f64,
        s: &mut Vec<f64>,
        free: &[usize],
        free_total: f64,
        step: f64,
        closing: &[Vec<(usize, usize)>],
        orders: &[Vec<B>],
        best: &mut (f64, Vec<f64>),
    ) {
        let term = |s: &[f64], j: usize, i: usize| -> f64 {
            let x = s[i..i + j].iter().sum::<f64>() / j as f64;
            orders[j - 1][i].value(x).to_f64()
        };
        let idx = free[depth];
        if depth + 1 == free.len() {
            s[idx] = free_total - used;
            let mut e = partial;
            for t in idx..s.len() {
                for &(j, i) in &closing[t] {
                    e += term(s, j, i);
                }
            }
            if e < best.0 {
                best.0 = e;
                best.1.copy_from_slice(s);
            }
            return;
        }
        let remaining_slots = (free.len() - depth - 1) as f64;
        let mut q = 1usize;
        loop {
            let v = q as f64 * step;
            if used + v + remaining_slots * step > free_total + 1e-12 {
                break;
            }
            s[idx] = v;
            let mut e = partial;
            for &(j, i) in &closing[idx] {
                e += term(s, j, i);
            }
            if e.is_finite() {
                recurse(depth + 1, e, used + v, s, free, free_total, step, closing, orders, best);
            }
            q += 1;
        }
    }

    recurse(0, prefix, 0.0, &mut s, &free, free_total, step, &closing, orders, &mut best);
    if !best.0.is_finite() {
        return Ok(ExtReal::PosInf);
    }

    // Compass search in corrector form.
    let energy_of = |s: &[f64]| -> f64 {
        let phi = corrector_from_strains(s, z, k);
        corrector_energy(orders, z, &phi).to_f64()
    };
    let mut x = best.1;
    let mut fx = energy_of(&x);
    let mut h = step;
    while h > 1e-13 {
        let mut improved = false;
        for &a in &free {
            for &b in &free {
                if a == b {
                    continue;
                }
                let mut y = x.clone();
                y[a] += h;
                y[b] -= h;
                let fy = energy_of(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok(ExtReal::Finite(fx / m as f64))
}

/// One entry of the small-instance regression corpus.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub label: String,
    pub problem: CellProblem,
    pub grid_step: f64,
}

/// 24 small cell problems over mixed media and `z ∈ {0.8, 1.2, 1.6, 2.5}`.
pub fn oracle_corpus() -> Vec<OracleInstance> {
    let media: Vec<(&str, ChainModel, usize)> = vec![
        ("deterministic", ChainModel::build(catalog::deterministic(2.0, 1.0, 1), 1).unwrap(), 4),
        ("uniform_box", ChainModel::build(catalog::uniform_box(1), 2).unwrap(), 3),
        ("two_valued", ChainModel::build(catalog::two_valued(1), 3).unwrap(), 4),
        ("markov", ChainModel::build(catalog::markov_two_state(1), 4).unwrap(), 2),
        ("uniform_box_k2", ChainModel::build(catalog::uniform_box(2), 5).unwrap(), 4),
        ("two_valued_k2", ChainModel::build(catalog::two_valued(2), 6).unwrap(), 4),
    ];
    let mut out = Vec::new();
    for (name, model, n) in media {
        let k = model.k();
        for z in [0.8, 1.2, 1.6, 2.5] {
            let free = n - 2 * (k - 1);
            let grid_step = match free {
                0..=2 => 1e-3,
                3 => 2e-3,
                _ => 1e-2,
            };
            out.push(OracleInstance {
                label: format!("{name} N={n} K={k} z={z}"),
                problem: CellProblem::new(model.clone(), z, n),
                grid_step,
            });
        }
    }
    out
}

/// Per-`N` row of a convergence trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JhomEstimate {
    pub z: f64,
    pub level: Option<usize>,
    /// Mean over realizations at the largest `N`.
    pub estimate: ExtReal,
    /// 95% half-width at the largest `N`.
    pub ci: f64,
    pub trace: Vec<TraceRow>,
    /// Per-realization values at the largest `N`, in seed order.
    pub samples: Vec<f64>,
    /// `v∞` of the fit `v(N) = v∞ + c/N`; diagnostic only.
    pub extrapolated: Option<f64>,
    /// Number of per-sample solves that did not report convergence.
    pub unconverged: usize,
    pub disagreements: usize,
}

/// Seed of the `s`-th independent realization derived from a base seed.
pub fn sample_seed(base: u64, s: usize) -> u64 {
    let mut x = base ^ (s as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Monte Carlo estimate of `J_hom(z)` on `[0, 1)`.
pub fn estimate_jhom(model: &ChainModel, z: f64, schedule: &[usize], samples: usize, cfg: &SolverConfig) -> Result<JhomEstimate> {
    let mut v = estimate_levels(model, z, schedule, samples, (0.0, 1.0), &[None], cfg)?;
    Ok(v.remove(0))
}

/// Estimates at several approximation levels (`None` = exact) on identical
/// realizations. Approximate solves are warm-started from the exact one.
pub fn estimate_levels(
    model: &ChainModel,
    z: f64,
    schedule: &[usize],
    samples: usize,
    window: (f64, f64),
    levels: &[Option<usize>],
    cfg: &SolverConfig,
) -> Result<Vec<JhomEstimate>> {
    if schedule.len() < 2 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("schedule must be increasing with at least two entries");
    }
    if samples == 0 {
        return precondition("need at least one realization");
    }
    if levels.is_empty() {
        return precondition("no levels requested");
    }
    if !z.is_finite() {
        return Err(Error::Domain(format!("strain {z} is not finite")));
    }
    if z <= 0.0 {
        return Ok(levels
            .iter()
            .map(|&level| JhomEstimate {
                z,
                level,
                estimate: ExtReal::PosInf,
                ci: 0.0,
                trace: schedule
                    .iter()
                    .map(|&n| TraceRow { n, mean: f64::INFINITY, stderr: 0.0, samples, wall_ms: 0.0 })
                    .collect(),
                samples: vec![f64::INFINITY; samples],
                extrapolated: None,
                unconverged: 0,
                disagreements: 0,
            })
            .collect());
    }
    for &n in schedule {
        CellProblem::new(model.clone(), z, n).with_window(window.0, window.1).validate()?;
    }

    struct TaskOut {
        values: Vec<f64>,
        unconverged: Vec<bool>,
        disagree: Vec<bool>,
        ms: f64,
    }
    let tasks: Vec<(usize, usize)> = (0..samples).flat_map(|s| schedule.iter().map(move |&n| (s, n))).collect();
    let results: Vec<Result<TaskOut>> = tasks
        .par_iter()
        .map(|&(s, n)| {
            let start = Instant::now();
            let omega = model.with_seed(sample_seed(model.seed(), s));
            let problem = CellProblem::new(omega, z, n).with_window(window.0, window.1);
            let exact = solve_cell(&problem, cfg)?;
            let mut values = Vec::new();
            let mut unconverged = Vec::new();
            let mut disagree = Vec::new();
            for &level in levels {
                let sol = match level {
                    None => exact.clone(),
                    Some(l) => solve_cell_approx_from(&problem.clone().with_level(Some(l)), cfg, &exact)?,
                };
                match sol.value {
                    ExtReal::Finite(v) => values.push(v),
                    ExtReal::PosInf => {
                        return Err(Error::SolverFailure(format!(
                            "infinite cell value at z = {z}, N = {n}, sample {s}"
                        )))
                    }
                }
                unconverged.push(sol.status != Status::Converged);
                disagree.push(sol.starts_disagree);
            }
            Ok(TaskOut { values, unconverged, disagree, ms: start.elapsed().as_secs_f64() * 1e3 })
        })
        .collect();
    let mut outs = Vec::with_capacity(results.len());
    for r in results {
        outs.push(r?);
    }

    let mut estimates = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        let mut trace = Vec::new();
        let mut last_samples = Vec::new();
        let mut unconverged = 0;
        let mut disagreements = 0;
        for (ni, &n) in schedule.iter().enumerate() {
            let vals: Vec<f64> = (0..samples).map(|s| outs[s * schedule.len() + ni].values[li]).collect();
            let ms: f64 = (0..samples).map(|s| outs[s * schedule.len() + ni].ms).sum();
            for s in 0..samples {
                let o = &outs[s * schedule.len() + ni];
                unconverged += o.unconverged[li] as usize;
                disagreements += o.disagree[li] as usize;
            }
            let (mean, se) = mean_stderr(&vals);
            trace.push(TraceRow { n, mean, stderr: se, samples, wall_ms: ms });
            if ni + 1 == schedule.len() {
                last_samples = vals;
            }
        }
        let last = trace.last().unwrap();
        let ns: Vec<f64> = trace.iter().map(|r| r.n as f64).collect();
        let means: Vec<f64> = trace.iter().map(|r| r.mean).collect();
        estimates.push(JhomEstimate {
            z,
            level,
            estimate: ExtReal::Finite(last.mean),
            ci: Z95 * last.stderr,
            extrapolated: fit_limit_inverse(&ns, &means).map(|(v, _)| v),
            trace,
            samples: last_samples,
            unconverged,
            disagreements,
        });
    }
    Ok(estimates)
}

#[derive(Clone, Debug, Serialize)]
pub struct SubadditivityReport {
    pub sites: [usize; 3],
    pub values: [ExtReal; 3],
    /// `|A∪B| · v(A∪B)`.
    pub lhs: f64,
    /// `|A| · v(A) + |B| · v(B) + junction`.
    pub rhs: f64,
    /// Energy of the order-`j ≥ 2` bonds straddling the junction at strain
    /// `z`; zero for `K = 1`.
    pub junction: f64,
    pub margin: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Checks `|A∪B| v(A∪B) ≤ |A| v(A) + |B| v(B)` for adjacent windows.
///
/// The union is solved with the concatenated sub-window optima as an extra
/// warm start, so the reported union value is never worse than the glued
/// competitor.
pub fn subadditivity_probe(
    model: &ChainModel,
    z: f64,
    a: (f64, f64),
    b: (f64, f64),
    n: usize,
    cfg: &SolverConfig,
) -> Result<SubadditivityReport> {
    if a.1 != b.0 {
        return precondition("windows must be adjacent");
    }
    let pa = CellProblem::new(model.clone(), z, n).with_window(a.0, a.1);
    let pb = CellProblem::new(model.clone(), z, n).with_window(b.0, b.1);
    let pu = CellProblem::new(model.clone(), z, n).with_window(a.0, b.1);
    let (ma, mb) = (pa.potentials()?.m, pb.potentials()?.m);
    let pots = pu.potentials()?;
    let mu = pots.m;
    if z <= 0.0 {
        return Ok(SubadditivityReport {
            sites: [ma, mb, mu],
            values: [ExtReal::PosInf; 3],
            lhs: f64::INFINITY,
            rhs: f64::INFINITY,
            junction: 0.0,
            margin: 0.0,
            slack: 0.0,
            passed: true,
        });
    }
    let sa = solve_cell(&pa, cfg)?;
    let sb = solve_cell(&pb, cfg)?;
    let mut glued = sa.strains.clone();
    glued.extend_from_slice(&sb.strains);
    let su = solve_orders(&pots.orders, mu, z, cfg, vec![glued]);

    let mut junction = 0.0;
    for (jm1, bonds) in pots.orders.iter().enumerate().skip(1) {
        let j = jm1 + 1;
        for i in (ma + 1 - j)..ma {
            if i < bonds.len() {
                junction += bonds[i].value(z).to_f64();
            }
        }
    }
    let lhs = mu as f64 * su.value.to_f64();
    let rhs = ma as f64 * sa.value.to_f64() + mb as f64 * sb.value.to_f64() + junction;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    let slack = 1e-9 * scale;
    let margin = rhs - lhs;
    Ok(SubadditivityReport {
        sites: [ma, mb, mu],
        values: [sa.value, sb.value, su.value],
        lhs,
        rhs,
        junction,
        margin,
        slack,
        passed: margin >= -slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::DistributionSpec;
    use approx::assert_relative_eq;

    fn det(k: usize) -> ChainModel {
        ChainModel::build(catalog::deterministic(2.0, 1.0, k), 0).unwrap()
    }

    #[test]
    fn deterministic_well_value() {
        for n in [2, 5, 17] {
            let s = solve_cell(&CellProblem::new(det(1), 2.0, n), &SolverConfig::default()).unwrap();
            assert_eq!(s.value, ExtReal::Finite(-1.0));
            assert!(s.phi.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn compressed_below_zero_is_infinite() {
        let m = ChainModel::build(catalog::uniform_box(1), 3).unwrap();
        let s = solve_cell(&CellProblem::new(m, -1.0, 10), &SolverConfig::default()).unwrap();
        assert_eq!(s.value, ExtReal::PosInf);
        assert_eq!(s.status, Status::InfeasibleInfinite);
    }

    #[test]
    fn precondition_and_domain_errors() {
        let r = solve_cell(&CellProblem::new(det(2), 2.0, 3), &SolverConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
        let r = solve_cell(&CellProblem::new(det(1), f64::NAN, 3), &SolverConfig::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn dual_identical_bonds_sit_at_well() {
        let p = PotentialSpec::classical(2.0, 1.0).unwrap();
        let s = solve_cell_dual_k1(&[p.clone(), p.clone(), p], 2.0, 1e-14).unwrap();
        assert!(s.strains.iter().all(|&x| (x - 2.0).abs() < 1e-12));
        assert_relative_eq!(s.value.unwrap_finite(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_two_bonds_match_grid_oracle() {
        let p1 = PotentialSpec::classical(1.0, 1.0).unwrap();
        let p2 = PotentialSpec::classical(2.0, 1.0).unwrap();
        let s = solve_cell_dual_k1(&[p1.clone(), p2.clone()], 1.4, 1e-14).unwrap();
        assert!((p1.derivative(s.strains[0]) - p2.derivative(s.strains[1])).abs() < 1e-8);
        assert_relative_eq!(s.strains[0] + s.strains[1], 2.8, epsilon = 1e-12);
        // Grid oracle on z1 with step 1e-4, z2 = 2.8 − z1.
        let mut best = f64::INFINITY;
        for q in 1..28_000 {
            let z1 = q as f64 * 1e-4;
            let v = 0.5 * (p1.value(z1).to_f64() + p2.value(2.8 - z1).to_f64());
            best = best.min(v);
        }
        assert!((s.value.unwrap_finite() - best).abs() < 1e-6, "{} vs {best}", s.value);
    }

    #[test]
    fn dual_blows_up_near_zero_and_refuses_stretch() {
        let p1 = PotentialSpec::classical(1.0, 1.0).unwrap();
        let p2 = PotentialSpec::classical(2.0, 1.0).unwrap();
        let s = solve_cell_dual_k1(&[p1.clone(), p2.clone()], 1e-2, 1e-14).unwrap();
        assert!(s.value.unwrap_finite() > 1e20);
        assert!(s.strains.iter().all(|&x| x < 0.05));
        let r = solve_cell_dual_k1(&[p1, p2], 1.6, 1e-14);
        assert!(matches!(r, Err(Error::NotApplicable(_))));
    }

    #[test]
    fn crack_candidate_examples() {
        let p = PotentialSpec::classical(2.0, 1.0).unwrap();
        let n = 1000;
        let orders = vec![vec![p.clone(); n]];
        let s = crack_candidate(&orders, 3.0).unwrap();
        let stretched: Vec<f64> = s.iter().copied().filter(|&x| x > 2.0).collect();
        assert_eq!(stretched.len(), 1);
        assert_relative_eq!(stretched[0], n as f64 + 2.0, epsilon = 1e-9);
        let v = profile_value(&orders, &s).unwrap_finite();
        assert!((v + 1.0).abs() < 2.0 / n as f64);
        assert!(matches!(crack_candidate(&orders, 1.5), Err(Error::NotApplicable(_))));

        let tv = ChainModel::build(catalog::two_valued(1), 9).unwrap();
        let pots = CellProblem::new(tv, 3.0, 1000).potentials().unwrap();
        let s = crack_candidate(&pots.orders, 3.0).unwrap();
        let mean_eps = pots.orders[0].iter().map(|p| -p.well_depth()).sum::<f64>() / 1000.0;
        let v = profile_value(&pots.orders, &s).unwrap_finite();
        assert!((v + mean_eps).abs() <= 2.0 / 1000.0 * 8.0, "{v} vs {}", -mean_eps);
    }

    #[test]
    fn three_bond_example_matches_oracle() {
        // δ = (1, 2, 1), ε = 1 through explicit potentials.
        let ps: Vec<PotentialSpec> = [1.0, 2.0, 1.0].iter().map(|&d| PotentialSpec::classical(d, 1.0).unwrap()).collect();
        let orders = vec![ps];
        let z = 4.0 / 3.0;
        let sp = strain_problem(&orders, 3, z);
        let solved = sp.solve(&SolverConfig::default(), vec![]).energy.unwrap_finite() / 3.0;
        let oracle = oracle_orders(&orders, 3, z, 1e-3).unwrap().unwrap_finite();
        assert!((solved - oracle).abs() < 1e-5, "{solved} vs {oracle}");
    }

    #[test]
    fn oracle_examples() {
        let v = oracle_cell(&CellProblem::new(det(1), 2.0, 2), 1e-3).unwrap();
        assert_relative_eq!(v.unwrap_finite(), -1.0, epsilon = 1e-12);
        assert_eq!(oracle_cell(&CellProblem::new(det(1), -0.5, 2), 1e-3).unwrap(), ExtReal::PosInf);
        assert!(matches!(
            oracle_cell(&CellProblem::new(det(1), 1.0, 7), 1e-3),
            Err(Error::Refused(_))
        ));
        assert!(matches!(
            oracle_cell(&CellProblem::new(det(1), 1.0, 4), 0.1),
            Err(Error::Refused(_))
        ));
        let p = CellProblem::new(det(2), 1.7, 4);
        let o = oracle_cell(&p, 1e-3).unwrap().unwrap_finite();
        let s = solve_cell(&p, &SolverConfig::default()).unwrap().value.unwrap_finite();
        assert!((o - s).abs() < 1e-4);
        // Halving the grid step does not move the polished value.
        let o2 = oracle_cell(&p, 5e-4).unwrap().unwrap_finite();
        assert!((o - o2).abs() < 1e-9);
    }

    #[test]
    fn approx_examples() {
        let cfg = SolverConfig::default();
        let m = ChainModel::build(
            DistributionSpec::deterministic(2.0, 1.0, 1).unwrap(),
            0,
        )
        .unwrap();
        for l in [0, 3, 6] {
            let p = CellProblem::new(m.clone(), 2.0, 8).with_level(Some(l));
            assert_relative_eq!(solve_cell_approx(&p, &cfg).unwrap().value.unwrap_finite(), -1.0, epsilon = 1e-12);
        }
        let ub = ChainModel::build(catalog::uniform_box(1), 4).unwrap();
        let p = CellProblem::new(ub, 1.2, 50);
        let exact = solve_cell(&p, &cfg).unwrap();
        for l in 0..6 {
            let a = solve_cell_approx_from(&p.clone().with_level(Some(l)), &cfg, &exact).unwrap();
            assert!(a.value <= exact.value);
            assert!((a.value.unwrap_finite() - exact.value.unwrap_finite()).abs() < 1e-9);
        }
    }

    #[test]
    fn solution_invariants() {
        let cfg = SolverConfig::default();
        let ub = ChainModel::build(catalog::uniform_box(2), 4).unwrap();
        for z in [0.9, 1.4, 2.2] {
            let p = CellProblem::new(ub.clone(), z, 30);
            let s = solve_cell(&p, &cfg).unwrap();
            let k = 2;
            let m = s.strains.len();
            for idx in 0..=m {
                if idx < k || idx + k > m {
                    assert_eq!(s.phi[idx], 0.0);
                }
            }
            let pots = p.potentials().unwrap();
            let re = corrector_energy(&pots.orders, z, &s.phi).unwrap_finite() / m as f64;
            let v = s.value.unwrap_finite();
            assert!(((re - v) / v).abs() < 1e-10, "{re} vs {v}");
            let mean = s.strains.iter().sum::<f64>() / m as f64;
            assert!((mean - z).abs() < 1e-12);
        }
    }

    #[test]
    fn subadditivity_examples() {
        let cfg = SolverConfig::default();
        let r = subadditivity_probe(&det(1), 2.0, (0.0, 1.0), (1.0, 2.0), 40, &cfg).unwrap();
        assert!(r.passed && r.margin.abs() <= 1e-9);
        let ub = ChainModel::build(catalog::uniform_box(1), 12).unwrap();
        let r = subadditivity_probe(&ub, 1.2, (0.0, 1.0), (1.0, 2.0), 400, &cfg).unwrap();
        assert!(r.passed, "{r:?}");
        let r = subadditivity_probe(&ub, -0.5, (0.0, 1.0), (1.0, 2.0), 400, &cfg).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn estimate_examples() {
        let cfg = SolverConfig::default();
        let e = estimate_jhom(&det(1), 2.0, &[10, 20], 3, &cfg).unwrap();
        assert_eq!(e.estimate, ExtReal::Finite(-1.0));
        assert_eq!(e.ci, 0.0);
        let ub = ChainModel::build(catalog::uniform_box(1), 1).unwrap();
        let e = estimate_jhom(&ub, 0.5, &[50, 100], 4, &cfg).unwrap();
        assert!(e.estimate.unwrap_finite() > -3.5);
        assert!(estimate_jhom(&ub, 0.5, &[100], 4, &cfg).is_err());
    }
}
