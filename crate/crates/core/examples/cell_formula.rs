//! Finite-window cell problems: the primal solver, the dual route for
//! nearest neighbours, and the brute-force oracle.
//!
//! Run with `cargo run --release --example cell_formula`.

use homchain::cell::{oracle_cell, solve_cell, solve_cell_dual_k1, CellProblem};
use homchain::engine::SolverConfig;
use homchain::medium::{catalog, ChainModel};
use homchain::{ExtReal, Result};

pub struct CellRow {
    pub z: f64,
    pub primal: ExtReal,
    pub dual: Option<ExtReal>,
}

pub fn run_example() -> Result<(Vec<CellRow>, f64)> {
    let cfg = SolverConfig::default();
    let model = ChainModel::build(catalog::uniform_box(1), 11)?;
    let mut rows = Vec::new();
    for z in [0.9, 1.2, 1.4, 2.0] {
        let problem = CellProblem::new(model.clone(), z, 200);
        let primal = solve_cell(&problem, &cfg)?.value;
        let dual = match solve_cell_dual_k1(&problem.potentials()?.orders[0], z, 1e-13) {
            Ok(s) => Some(s.value),
            Err(homchain::Error::NotApplicable(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(CellRow { z, primal, dual });
    }
    let small = CellProblem::new(model, 1.3, 3);
    let gap = (solve_cell(&small, &cfg)?.value.to_f64() - oracle_cell(&small, 1e-3)?.to_f64()).abs();
    Ok((rows, gap))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let (rows, gap) = run_example()?;
    for r in rows {
        let dual = r.dual.map_or_else(|| "n/a (crack regime)".to_string(), |v| v.to_string());
        println!("z = {:<4} primal {:<22} dual {dual}", r.z, r.primal.to_string());
    }
    println!("solver vs oracle on a 3-site cell: gap {gap:.2e}");
    Ok(())
}
