//! Discrete chain energies `E_n` and their minimization under Dirichlet
//! conditions `u(0) = 0`, `u(1) = ℓ`.
//!
//! With lattice spacing `λ_n = 1/n`,
//!
//! ```text
//! E_n(ω, u) = Σ_{j=1}^K Σ_{i=0}^{n−j} λ_n J_j(ω, i, (u^{i+j} − u^i) / (j λ_n))
//! ```

use std::path::Path;

use serde::Serialize;

use crate::engine::{CandidateKind, SolverConfig, Status, StrainProblem};
use crate::error::{precondition, Error, Result};
use crate::extended::ExtReal;
use crate::medium::ChainModel;
use crate::potential::PotentialSpec;

/// Nodal values `u^0..u^n` of a piecewise-affine deformation of `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deformation {
    values: Vec<f64>,
}

impl Deformation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return precondition("a deformation needs at least two nodes");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("deformation values must be finite".into()));
        }
        Ok(Deformation { values })
    }

    /// `u(x) = slope · x` on `n` intervals.
    pub fn affine(n: usize, slope: f64) -> Self {
        let mut values: Vec<f64> = (0..=n).map(|i| slope * i as f64 / n as f64).collect();
        values[n] = slope;
        Deformation { values }
    }

    /// Integrates bond strains from `u^0 = 0`.
    pub fn from_strains(strains: &[f64]) -> Self {
        let n = strains.len() as f64;
        let mut values = Vec::with_capacity(strains.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for s in strains {
            acc += s;
            values.push(acc / n);
        }
        Deformation { values }
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bond strains `(u^{i+1} − u^i) / λ_n`.
    pub fn strains(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.values.windows(2).map(|w| (w[1] - w[0]) * n).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "x", "u"])?;
        let n = self.n();
        for (i, u) in self.values.iter().enumerate() {
            let x = i as f64 / n as f64;
            w.write_record([i.to_string(), x.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Total stretch `ℓ` imposed through `u(0) = 0`, `u(1) = ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryCondition {
    ell: f64,
}

impl BoundaryCondition {
    pub fn new(ell: f64) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return precondition(format!("stretch {ell} must be positive"));
        }
        Ok(BoundaryCondition { ell })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }
}

fn chain_orders(model: &ChainModel, n: usize, k: usize) -> Result<Vec<Vec<PotentialSpec>>> {
    if k == 0 || k > model.k() {
        return precondition(format!("K = {k} outside 1..={}", model.k()));
    }
    let mut orders: Vec<Vec<PotentialSpec>> = vec![Vec::with_capacity(n); k];
    for i in 0..n {
        for (jm1, p) in model.potentials_at(i as i64).into_iter().take(k).enumerate() {
            if i + jm1 < n {
                orders[jm1].push(p);
            }
        }
    }
    Ok(orders)
}

/// `E_n(ω, u)`.
pub fn energy(model: &ChainModel, u: &Deformation, k: usize) -> Result<ExtReal> {
    let n = u.n();
    if n < k {
        return precondition(format!("chain of {n} bonds too short for K = {k}"));
    }
    let orders = chain_orders(model, n, k)?;
    let lambda = 1.0 / n as f64;
    let v = u.values();
    let mut total = ExtReal::ZERO;
    for (jm1, bonds) in orders.iter().enumerate() {
        let j = (jm1 + 1) as f64;
        for (i, b) in bonds.iter().enumerate() {
            let strain = (v[i + jm1 + 1] - v[i]) / (j * lambda);
            total += b.value(strain) * lambda;
            if total.is_infinite() {
                return Ok(total);
            }
        }
    }
    Ok(total)
}

/// `E_n^ℓ(ω, u)`: the energy when `u^0 = 0` and `u^n = ℓ` hold exactly,
/// `+∞` otherwise.
pub fn energy_bc(model: &ChainModel, u: &Deformation, k: usize, bc: &BoundaryCondition) -> Result<ExtReal> {
    let v = u.values();
    if v[0] != 0.0 || v[u.n()] != bc.ell {
        return Ok(ExtReal::PosInf);
    }
    energy(model, u, k)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainMinimum {
    pub deformation: Deformation,
    pub value: ExtReal,
    pub status: Status,
    pub winner: CandidateKind,
    pub candidates_tried: usize,
}

/// Minimizes `E_n^ℓ` over deformations, using the same candidate portfolio
/// as the cell problems with the chain pinned at both ends instead of
/// clamped boundary layers.
pub fn minimize_chain(model: &ChainModel, n: usize, k: usize, bc: &BoundaryCondition, cfg: &SolverConfig) -> Result<ChainMinimum> {
    if n < 2 * k {
        return precondition(format!("n = {n} below 2K = {}", 2 * k));
    }
    let orders = chain_orders(model, n, k)?;
    let sp = StrainProblem { orders: &orders, m: n, clamp: 0, clamp_value: bc.ell, total: n as f64 * bc.ell };
    let out = sp.solve(cfg, Vec::new());
    let mut deformation = Deformation::from_strains(&out.strains);
    deformation.values[n] = bc.ell;
    let value = energy(model, &deformation, k)?;
    Ok(ChainMinimum {
        deformation,
        value,
        status: out.status,
        winner: out.winner,
        candidates_tried: out.candidates_tried,
    })
}

/// Piecewise-affine interpolation of nodal values on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct AffineInterpolant {
    values: Vec<f64>,
}

pub fn interpolate_affine(u: &Deformation) -> AffineInterpolant {
    AffineInterpolant { values: u.values.clone() }
}

impl AffineInterpolant {
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("{x} outside [0, 1]")));
        }
        let n = self.values.len() - 1;
        let t = x * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let frac = t - i as f64;
        if frac == 0.0 {
            return Ok(self.values[i]);
        }
        if frac == 1.0 {
            return Ok(self.values[i + 1]);
        }
        Ok(self.values[i] + frac * (self.values[i + 1] - self.values[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::catalog;
    use approx::assert_relative_eq;

    fn det(k: usize) -> ChainModel {
        ChainModel::build(catalog::deterministic(2.0, 1.0, k), 0).unwrap()
    }

    #[test]
    fn energy_examples() {
        let u = Deformation::affine(50, 2.0);
        assert_relative_eq!(energy(&det(1), &u, 1).unwrap().unwrap_finite(), -1.0, epsilon = 1e-12);
        let mut v = u.values().to_vec();
        v[10] = v[11];
        let bad = Deformation::new(v).unwrap();
        assert_eq!(energy(&det(1), &bad, 1).unwrap(), ExtReal::PosInf);
        let n = 50;
        let e2 = energy(&det(2), &Deformation::affine(n, 2.0), 2).unwrap().unwrap_finite();
        assert_relative_eq!(e2, -(1.0 + (n as f64 - 1.0) / n as f64), epsilon = 1e-12);
    }

    #[test]
    fn energy_bc_examples() {
        let bc = BoundaryCondition::new(1.7).unwrap();
        let u = Deformation::affine(20, 1.7);
        let e = energy_bc(&det(1), &u, 1, &bc).unwrap();
        let j = PotentialSpec::classical(2.0, 1.0).unwrap().value(1.7).unwrap_finite();
        assert_relative_eq!(e.unwrap_finite(), j, epsilon = 1e-12);
        let mut v = u.values().to_vec();
        v[20] = 1.7 + 1e-9;
        assert_eq!(energy_bc(&det(1), &Deformation::new(v).unwrap(), 1, &bc).unwrap(), ExtReal::PosInf);
        assert!(BoundaryCondition::new(0.0).is_err());
    }

    #[test]
    fn affine_minimizer_at_the_well() {
        let bc = BoundaryCondition::new(2.0).unwrap();
        let m = minimize_chain(&det(1), 40, 1, &bc, &SolverConfig::default()).unwrap();
        assert_relative_eq!(m.value.unwrap_finite(), -1.0, epsilon = 1e-12);
        for s in m.deformation.strains() {
            assert!((s - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stretched_chain_breaks_one_bond() {
        let bc = BoundaryCondition::new(3.0).unwrap();
        let n = 1000;
        let m = minimize_chain(&det(1), n, 1, &bc, &SolverConfig::default()).unwrap();
        let v = m.value.unwrap_finite();
        assert!((v + 1.0).abs() <= 5.0 / n as f64, "{v}");
        let cracked = m.deformation.strains().iter().filter(|&&s| s > 10.0).count();
        assert_eq!(cracked, 1);
    }

    #[test]
    fn compressed_chain_has_no_crack() {
        let model = ChainModel::build(catalog::uniform_box(1), 3).unwrap();
        let bc = BoundaryCondition::new(1.3).unwrap();
        let m = minimize_chain(&model, 200, 1, &bc, &SolverConfig::default()).unwrap();
        assert_ne!(m.winner, CandidateKind::Crack);
        let max_delta = (0..200).map(|i| model.potential_at(i, 1).unwrap().well()).fold(0.0, f64::max);
        assert!(m.deformation.strains().iter().all(|&s| s <= max_delta + 1e-9));
    }

    #[test]
    fn energy_respects_class_floor() {
        let model = ChainModel::build(catalog::uniform_box(2), 8).unwrap();
        let d = model.class().d;
        for ell in [0.3, 1.0, 1.5, 4.0] {
            let u = Deformation::affine(64, ell);
            let e = energy(&model, &u, 2).unwrap();
            assert!(e >= ExtReal::Finite(-2.0 * d));
        }
    }

    #[test]
    fn interpolation_examples() {
        let u = Deformation::new(vec![0.0, 0.4, 1.0, 1.1]).unwrap();
        let f = interpolate_affine(&u);
        for i in 0..=3 {
            assert_eq!(f.eval(i as f64 / 3.0).unwrap(), u.values()[i]);
        }
        assert_relative_eq!(f.eval(0.5).unwrap(), 0.7, epsilon = 1e-15);
        let one = interpolate_affine(&Deformation::new(vec![0.0, 2.0]).unwrap());
        assert_relative_eq!(one.eval(0.25).unwrap(), 0.5);
        assert!(matches!(one.eval(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        Deformation::affine(4, 2.0).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,x,u");
        assert_eq!(lines[2], "1,0.25,0.5");
        assert_eq!(lines.len(), 6);
    }
}
