//! Tabulating `J_hom`, checking its structure and integrating it over a
//! cracked deformation.
//!
//! Run with `cargo run --release --example jhom_table [out.csv]`.

use homchain::engine::SolverConfig;
use homchain::homogenized::{build_table, check_structure, eval_ehom, BVRepresentation, Jump, JhomTable, Piece, StructureReport};
use homchain::medium::catalog;
use homchain::{ExtReal, Result};

pub fn run_example() -> Result<(JhomTable, StructureReport, ExtReal)> {
    let cfg = SolverConfig { n_starts: 4, ..Default::default() };
    let grid = [-0.5, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0, 3.0];
    let table = build_table(&catalog::uniform_box(1), 0, &grid, &[100, 400], 8, &cfg)?;
    let report = check_structure(&table)?;
    // Slope E[δ] everywhere and one crack opening by 1.
    let cracked = BVRepresentation::new(vec![Piece { start: 0.0, end: 1.0, slope: 1.6 }], vec![Jump { location: 0.5, size: 1.0 }], 2.6)?;
    let energy = eval_ehom(&cracked, &table)?;
    Ok((table, report, energy))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let (table, report, energy) = run_example()?;
    for ((z, v), ci) in table.z_grid.iter().zip(&table.values).zip(&table.ci) {
        println!("z = {z:<5} J_hom = {:<24} ± {ci:.2e}", v.map_or("failed".into(), |v| v.to_string()));
    }
    for c in &report.checks {
        println!("{:<20} {:?}  {}", c.name, c.passed, c.detail);
    }
    println!("E_hom of the cracked deformation: {energy}");
    if let Some(path) = std::env::args().nth(1) {
        table.save(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
