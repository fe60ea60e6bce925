//! Tabulated homogenized densities `J_hom`, the continuum energy
//! `E_hom^ℓ` on jump-plus-affine deformations, and structural checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::estimate_jhom;
use crate::config::{content_hash, timestamp};
use crate::engine::SolverConfig;
use crate::error::{precondition, Error, Result};
use crate::extended::ExtReal;
use crate::medium::{ChainModel, DistributionSpec, Quantity};
use crate::potential::ClassParams;
use crate::stats::Pchip;

/// Safety factor on the extrapolation-based finite-size bias estimate.
pub const BIAS_SAFETY: f64 = 2.0;

/// Provenance of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub spec_hash: String,
    pub config_hash: String,
    pub schedule: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub class: ClassParams,
    /// `E[δ]` of the order-1 potential, when available.
    pub mean_delta: Option<f64>,
    /// `E[J_1(δ)]`, when available.
    pub mean_well_depth: Option<f64>,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl TableMeta {
    pub fn for_spec(spec: &DistributionSpec, schedule: &[usize], seed: u64, samples: usize, solver: SolverConfig) -> Self {
        let spec_hash = content_hash(&spec.to_record());
        TableMeta {
            config_hash: spec_hash.clone(),
            spec_hash,
            schedule: schedule.to_vec(),
            seed,
            samples,
            k: spec.k,
            class: spec.class,
            mean_delta: spec.expectation(Quantity::Delta).ok(),
            mean_well_depth: spec.expectation(Quantity::JAtDelta).ok(),
            solver,
            timestamp: timestamp(),
        }
    }
}

/// Solver health of one grid point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub unconverged: usize,
    pub disagreements: usize,
    pub extrapolated: Option<f64>,
    /// `|v(N_max) − v∞|`, the finite-size bias estimate.
    #[serde(default)]
    pub bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Estimates of `J_hom` on a strain grid. A `None` value marks a grid
/// point whose solve failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JhomTable {
    pub z_grid: Vec<f64>,
    pub values: Vec<Option<ExtReal>>,
    pub ci: Vec<f64>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub meta: TableMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config_hash: String,
    meta: TableMeta,
    diagnostics: Vec<PointDiagnostics>,
}

impl JhomTable {
    pub fn new(z_grid: Vec<f64>, values: Vec<Option<ExtReal>>, ci: Vec<f64>, meta: TableMeta) -> Result<Self> {
        let n = z_grid.len();
        if values.len() != n || ci.len() != n {
            return precondition("grid, values and ci must have equal lengths");
        }
        check_grid(&z_grid)?;
        for (z, v) in z_grid.iter().zip(&values) {
            if *z <= 0.0 && *v != Some(ExtReal::PosInf) {
                return Err(Error::Validation(vec![format!("value at z = {z} must be inf")]));
            }
            if *z > 0.0 && *v == Some(ExtReal::PosInf) {
                return Err(Error::Validation(vec![format!("value at z = {z} must be finite")]));
            }
        }
        Ok(JhomTable { z_grid, values, ci, diagnostics: vec![PointDiagnostics::default(); n], meta })
    }

    pub fn failures(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Finite entries as `(z, value, ci)`.
    pub fn finite_points(&self) -> Vec<(f64, f64, f64)> {
        self.finite_with(|i| self.ci[i])
    }

    /// Finite entries as `(z, value, ci + BIAS_SAFETY · bias)`.
    pub fn finite_points_with_bias(&self) -> Vec<(f64, f64, f64)> {
        self.finite_with(|i| self.ci[i] + BIAS_SAFETY * self.diagnostics[i].bias)
    }

    fn finite_with(&self, width: impl Fn(usize) -> f64) -> Vec<(f64, f64, f64)> {
        (0..self.z_grid.len())
            .filter_map(|i| match self.values[i] {
                Some(ExtReal::Finite(x)) => Some((self.z_grid[i], x, width(i))),
                _ => None,
            })
            .collect()
    }

    /// Monotone cubic interpolant through the finite entries.
    pub fn interpolant(&self) -> Result<Pchip> {
        let pts = self.finite_points();
        let z: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let v: Vec<f64> = pts.iter().map(|p| p.1).collect();
        Pchip::new(&z, &v)
    }

    /// `J_hom(z)` by interpolation; `+∞` for `z ≤ 0`, refused outside the
    /// tabulated positive range.
    pub fn interpolate(&self, z: f64) -> Result<ExtReal> {
        if z <= 0.0 {
            return Ok(ExtReal::PosInf);
        }
        let p = self.interpolant()?;
        p.eval(z).map(ExtReal::Finite).ok_or_else(|| {
            let (lo, hi) = p.range();
            Error::Refused(format!("strain {z} outside tabulated range [{lo}, {hi}]"))
        })
    }

    /// Writes `z,value,ci` rows after a `# config_hash=` line, plus a JSON
    /// sidecar next to it (see [`sidecar_path`]).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!("# config_hash={}\n", self.meta.config_hash);
        {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["z", "value", "ci"])?;
            for ((z, v), c) in self.z_grid.iter().zip(&self.values).zip(&self.ci) {
                let v = v.map_or_else(|| "nan".to_string(), |v| v.to_string());
                w.write_record([z.to_string(), v, c.to_string()])?;
            }
            text.push_str(&String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"));
        }
        std::fs::write(path, text)?;
        let side = Sidecar {
            config_hash: self.meta.config_hash.clone(),
            meta: self.meta.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let (mut z_grid, mut values, mut ci) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Validation(vec![format!("malformed table row {rec:?}")]);
            z_grid.push(rec[0].parse::<f64>().map_err(|_| bad())?);
            values.push(if &rec[1] == "nan" { None } else { Some(ExtReal::parse(&rec[1]).ok_or_else(bad)?) });
            ci.push(rec[2].parse::<f64>().map_err(|_| bad())?);
        }
        if side.diagnostics.len() != z_grid.len() {
            return Err(Error::Validation(vec!["sidecar does not match the table".into()]));
        }
        Ok(JhomTable { z_grid, values, ci, diagnostics: side.diagnostics, meta: side.meta })
    }
}

/// `table.csv` → `table.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn check_grid(z_grid: &[f64]) -> Result<()> {
    if z_grid.is_empty() || z_grid.iter().any(|z| !z.is_finite()) || z_grid.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("strain grid must be non-empty, finite and strictly increasing");
    }
    Ok(())
}

/// Estimates `J_hom` at every grid point; `z ≤ 0` is recorded as `+∞`
/// without solving. Solver failures are recorded per point.
pub fn build_table(
    spec: &DistributionSpec,
    seed: u64,
    z_grid: &[f64],
    schedule: &[usize],
    samples: usize,
    cfg: &SolverConfig,
) -> Result<JhomTable> {
    check_grid(z_grid)?;
    let model = ChainModel::build(spec.clone(), seed)?;
    let meta = TableMeta::for_spec(spec, schedule, seed, samples, *cfg);
    let mut values = Vec::with_capacity(z_grid.len());
    let mut ci = Vec::with_capacity(z_grid.len());
    let mut diagnostics = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        if z <= 0.0 {
            values.push(Some(ExtReal::PosInf));
            ci.push(0.0);
            diagnostics.push(PointDiagnostics::default());
            continue;
        }
        match estimate_jhom(&model, z, schedule, samples, cfg) {
            Ok(e) => {
                log::info!("z = {z}: {} ± {}", e.estimate, e.ci);
                values.push(Some(e.estimate));
                ci.push(e.ci);
                diagnostics.push(PointDiagnostics {
                    unconverged: e.unconverged,
                    disagreements: e.disagreements,
                    extrapolated: e.extrapolated,
                    bias: match (e.estimate, e.extrapolated) {
                        (ExtReal::Finite(v), Some(x)) if x.is_finite() => (v - x).abs(),
                        _ => 0.0,
                    },
                    failure: None,
                });
            }
            Err(err @ (Error::SolverFailure(_) | Error::NonConvergence(_))) => {
                log::warn!("z = {z}: {err}");
                values.push(None);
                ci.push(f64::NAN);
                diagnostics.push(PointDiagnostics { failure: Some(err.to_string()), ..Default::default() });
            }
            Err(err) => return Err(err),
        }
    }
    Ok(JhomTable { z_grid: z_grid.to_vec(), values, ci, diagnostics, meta })
}

/// An affine piece `u' = slope` on `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub location: f64,
    pub size: f64,
}

/// A deformation of `[0, 1]` that is affine on each piece and jumps at
/// finitely many points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BVRepresentation {
    pieces: Vec<Piece>,
    jumps: Vec<Jump>,
    bc_ell: f64,
}

const TILING_TOL: f64 = 1e-12;

impl BVRepresentation {
    /// Checks that the pieces tile `[0, 1]` and that the total stretch
    /// equals `bc_ell`. Jump signs are not checked here; a negative jump
    /// makes the energy infinite.
    pub fn new(pieces: Vec<Piece>, jumps: Vec<Jump>, bc_ell: f64) -> Result<Self> {
        if pieces.is_empty() {
            return precondition("at least one piece is needed");
        }
        let mut at = 0.0;
        for p in &pieces {
            if (p.start - at).abs() > TILING_TOL || !(p.end > p.start) || !p.slope.is_finite() {
                return precondition("pieces must tile [0, 1] in order with finite slopes");
            }
            at = p.end;
        }
        if (at - 1.0).abs() > TILING_TOL {
            return precondition("pieces must end at 1");
        }
        if jumps.iter().any(|j| !(0.0..=1.0).contains(&j.location) || !j.size.is_finite()) {
            return precondition("jumps must lie in [0, 1] with finite size");
        }
        let total: f64 = pieces.iter().map(|p| p.slope * (p.end - p.start)).sum::<f64>()
            + jumps.iter().map(|j| j.size).sum::<f64>();
        if (total - bc_ell).abs() > 1e-9 * bc_ell.abs().max(1.0) {
            return precondition(format!("total stretch {total} differs from ell = {bc_ell}"));
        }
        Ok(BVRepresentation { pieces, jumps, bc_ell })
    }

    pub fn affine(ell: f64) -> Self {
        BVRepresentation { pieces: vec![Piece { start: 0.0, end: 1.0, slope: ell }], jumps: Vec::new(), bc_ell: ell }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn bc_ell(&self) -> f64 {
        self.bc_ell
    }
}

/// `E_hom^ℓ(u) = ∫ J_hom(u')`; jumps cost nothing, negative jumps and
/// non-positive slopes give `+∞`.
pub fn eval_ehom(rep: &BVRepresentation, table: &JhomTable) -> Result<ExtReal> {
    if rep.jumps.iter().any(|j| j.size < 0.0) || rep.pieces.iter().any(|p| p.slope <= 0.0) {
        return Ok(ExtReal::PosInf);
    }
    let interp = table.interpolant()?;
    let (lo, hi) = interp.range();
    let mut total = 0.0;
    for p in &rep.pieces {
        let v = interp
            .eval(p.slope)
            .ok_or_else(|| Error::Refused(format!("slope {} outside tabulated range [{lo}, {hi}]", p.slope)))?;
        total += (p.end - p.start) * v;
    }
    Ok(ExtReal::Finite(total))
}

/// One named structural check. `passed` is `None` for informational rows.
#[derive(Clone, Debug, Serialize)]
pub struct StructureCheck {
    pub name: &'static str,
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub checks: Vec<StructureCheck>,
    /// First grid point from which the finite values stay flat.
    pub plateau_onset: Option<f64>,
    pub plateau_value: Option<f64>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn get(&self, name: &str) -> Option<&StructureCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Absolute slack for comparing estimates: their CIs and finite-size biases
/// plus a relative rounding allowance.
fn slack(values: &[f64], cis: &[f64]) -> f64 {
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    cis.iter().sum::<f64>() + 1e-9 * scale
}

/// Half-width used to decide whether a value sits on a plateau.
pub const PLATEAU_TOL: f64 = 0.05;

/// Convexity, monotone decrease, `+∞` below zero, the blow-up floor and,
/// for `K = 1`, the plateau `J_hom = E[J_1(δ)]` beyond `E[δ]`.
///
/// Finite-`N` cell values carry an `O(1/N)` bias (beyond the well a
/// single cracked bond costs `−J(δ)/N`), so comparisons use the CI plus
/// twice the estimated bias `|v(N_max) − v∞|` as slack.
pub fn check_structure(table: &JhomTable) -> Result<StructureReport> {
    let pts = table.finite_points_with_bias();
    if pts.len() < 5 {
        return precondition(format!("structure checks need 5 finite points, got {}", pts.len()));
    }
    let mut checks = Vec::new();

    let mut worst: Option<(f64, f64)> = None;
    for w in pts.windows(3) {
        let (a, m, b) = (w[0], w[1], w[2]);
        let t = (m.0 - a.0) / (b.0 - a.0);
        let chord = (1.0 - t) * a.1 + t * b.1;
        let excess = m.1 - chord - slack(&[a.1, m.1, b.1], &[(1.0 - t) * a.2, m.2, t * b.2]);
        if worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((m.0, excess));
        }
    }
    let (wz, we) = worst.unwrap();
    checks.push(StructureCheck {
        name: "convexity",
        passed: Some(we <= 0.0),
        detail: format!("largest excess over the chord beyond slack: {we:.3e} at z = {wz}"),
    });

    let mut worst: Option<(f64, f64)> = None;
    for w in pts.windows(2) {
        let excess = w[1].1 - w[0].1 - slack(&[w[0].1, w[1].1], &[w[0].2, w[1].2]);
        if worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((w[1].0, excess));
        }
    }
    let (wz, we) = worst.unwrap();
    checks.push(StructureCheck {
        name: "monotone_decrease",
        passed: Some(we <= 0.0),
        detail: format!("largest increase beyond slack: {we:.3e} at z = {wz}"),
    });

    let nonpos: Vec<&Option<ExtReal>> =
        table.z_grid.iter().zip(&table.values).filter(|(z, _)| **z <= 0.0).map(|(_, v)| v).collect();
    checks.push(StructureCheck {
        name: "infinite_below_zero",
        passed: if nonpos.is_empty() { None } else { Some(nonpos.iter().all(|v| **v == Some(ExtReal::PosInf))) },
        detail: format!("{} grid points with z <= 0", nonpos.len()),
    });

    let (z0, v0, c0) = pts[0];
    let floor = table.meta.class.energy_floor(table.meta.k, z0).to_f64();
    checks.push(StructureCheck {
        name: "blow_up_floor",
        passed: Some(v0 + c0 >= floor),
        detail: format!("J_hom({z0}) = {v0:.6e} against floor {floor:.6e}"),
    });

    let last = *pts.last().unwrap();
    let onset_from = |target: f64| {
        let mut onset = None;
        for p in pts.iter().rev() {
            if (p.1 - target).abs() <= PLATEAU_TOL.max(3.0 * p.2) {
                onset = Some(p.0);
            } else {
                break;
            }
        }
        onset
    };
    let (plateau_onset, plateau_value) = match (table.meta.k, table.meta.mean_delta, table.meta.mean_well_depth) {
        (1, Some(md), Some(mj)) => {
            let onset = onset_from(mj);
            let beyond: Vec<_> = pts.iter().filter(|p| p.0 >= md).collect();
            let flat = !beyond.is_empty() && beyond.iter().all(|p| (p.1 - mj).abs() <= PLATEAU_TOL.max(3.0 * p.2));
            checks.push(StructureCheck {
                name: "plateau",
                passed: Some(flat),
                detail: format!("{} points beyond E[delta] = {md} against E[J(delta)] = {mj}", beyond.len()),
            });
            let spacing = grid_spacing_near(&table.z_grid, md);
            checks.push(StructureCheck {
                name: "plateau_onset",
                passed: Some(onset.is_some_and(|o| (o - md).abs() <= spacing + 1e-12)),
                detail: format!("onset {onset:?} against E[delta] = {md} (grid spacing {spacing})"),
            });
            (onset, Some(mj))
        }
        _ => {
            let onset = onset_from(last.1);
            checks.push(StructureCheck {
                name: "plateau",
                passed: None,
                detail: format!("empirical flat region from {onset:?} at level {}", last.1),
            });
            (onset, Some(last.1))
        }
    };
    Ok(StructureReport { checks, plateau_onset, plateau_value })
}

fn grid_spacing_near(grid: &[f64], z: f64) -> f64 {
    let i = grid.partition_point(|&g| g < z);
    let left = if i > 0 && i < grid.len() { grid[i] - grid[i - 1] } else { 0.0 };
    let right = if i + 1 < grid.len() { grid[i + 1] - grid[i] } else { 0.0 };
    left.max(right)
}

/// `(E[δ], E[J_1(δ)])`, where the nearest-neighbour plateau starts and its
/// level.
pub fn closed_form_plateau(spec: &DistributionSpec) -> Result<(f64, f64)> {
    if spec.k != 1 {
        return Err(Error::Unsupported(format!("closed-form plateau needs K = 1, got K = {}", spec.k)));
    }
    Ok((spec.expectation(Quantity::Delta)?, spec.expectation(Quantity::JAtDelta)?))
}

/// A table with a planted bump at `z = 1.6`, for negative tests.
pub fn nonconvex_fixture() -> JhomTable {
    let spec = crate::medium::catalog::deterministic(2.0, 1.0, 1);
    let z = vec![1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.5];
    let v = [1.0, 0.2, -0.4, 0.3, -0.9, -1.0, -1.0];
    let meta = TableMeta::for_spec(&spec, &[1, 2], 0, 1, SolverConfig::default());
    JhomTable::new(z, v.iter().map(|&x| Some(ExtReal::Finite(x))).collect(), vec![0.0; 7], meta)
        .expect("fixture is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::catalog;
    use crate::potential::PotentialSpec;
    use approx::assert_relative_eq;

    fn quick() -> SolverConfig {
        SolverConfig { n_starts: 2, ..Default::default() }
    }

    fn det_table() -> JhomTable {
        let spec = catalog::deterministic(2.0, 1.0, 1);
        build_table(&spec, 0, &[-1.0, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0], &[20, 40], 2, &quick()).unwrap()
    }

    #[test]
    fn deterministic_table_structure() {
        let t = det_table();
        assert_eq!(t.values[0], Some(ExtReal::PosInf));
        let j = PotentialSpec::classical(2.0, 1.0).unwrap();
        assert_relative_eq!(t.values[1].unwrap().unwrap_finite(), j.value(1.0).unwrap_finite(), max_relative = 1e-9);
        let r = check_structure(&t).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.plateau_onset, Some(2.0));
        assert_eq!(r.plateau_value, Some(-1.0));
    }

    #[test]
    fn planted_nonconvexity_is_caught() {
        let r = check_structure(&nonconvex_fixture()).unwrap();
        assert_eq!(r.get("convexity").unwrap().passed, Some(false));
        assert_eq!(r.get("monotone_decrease").unwrap().passed, Some(false));
    }

    #[test]
    fn too_few_points() {
        let spec = catalog::deterministic(2.0, 1.0, 1);
        let t = build_table(&spec, 0, &[1.0, 2.0, 3.0], &[4, 8], 1, &quick()).unwrap();
        assert!(matches!(check_structure(&t), Err(Error::Precondition(_))));
    }

    #[test]
    fn ehom_examples() {
        let t = det_table();
        let e = eval_ehom(&BVRepresentation::affine(2.5), &t).unwrap();
        assert_eq!(e, t.interpolate(2.5).unwrap());
        let cracked = BVRepresentation::new(
            vec![Piece { start: 0.0, end: 0.5, slope: 2.0 }, Piece { start: 0.5, end: 1.0, slope: 2.0 }],
            vec![Jump { location: 0.5, size: 1.0 }],
            3.0,
        )
        .unwrap();
        assert_relative_eq!(eval_ehom(&cracked, &t).unwrap().unwrap_finite(), -1.0, epsilon = 1e-9);
        let negative = BVRepresentation::new(
            vec![Piece { start: 0.0, end: 1.0, slope: 3.0 }],
            vec![Jump { location: 0.3, size: -0.5 }],
            2.5,
        )
        .unwrap();
        assert_eq!(eval_ehom(&negative, &t).unwrap(), ExtReal::PosInf);
        assert!(matches!(eval_ehom(&BVRepresentation::affine(9.0), &t), Err(Error::Refused(_))));
        assert!(BVRepresentation::new(vec![Piece { start: 0.0, end: 0.9, slope: 1.0 }], vec![], 0.9).is_err());
        assert!(BVRepresentation::new(vec![Piece { start: 0.0, end: 1.0, slope: 1.0 }], vec![], 2.0).is_err());
    }

    #[test]
    fn closed_form_plateau_examples() {
        assert_eq!(closed_form_plateau(&catalog::uniform_box(1)).unwrap(), (1.5, -3.5));
        let (z, v) = closed_form_plateau(&catalog::two_valued(1)).unwrap();
        assert_relative_eq!(z, 1.5, epsilon = 1e-12);
        assert_relative_eq!(v, -3.5, epsilon = 1e-12);
        assert_eq!(closed_form_plateau(&catalog::deterministic(2.0, 1.0, 1)).unwrap(), (2.0, -1.0));
        assert!(matches!(closed_form_plateau(&catalog::uniform_box(2)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn table_round_trip_and_reproducibility() {
        let dir = tempfile::tempdir().unwrap();
        let a = det_table();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        a.save(&p1).unwrap();
        det_table().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.starts_with("# config_hash="));
        assert!(text.contains("\n-1,inf,0\n"));
        let b = JhomTable::load(&p1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_rejects_bad_grids() {
        let meta = nonconvex_fixture().meta;
        let one = |z: f64| vec![Some(ExtReal::Finite(z))];
        assert!(JhomTable::new(vec![1.0, 1.0], vec![one(0.0)[0]; 2], vec![0.0; 2], meta.clone()).is_err());
        assert!(JhomTable::new(vec![-1.0], one(0.0), vec![0.0], meta).is_err());
    }
}
