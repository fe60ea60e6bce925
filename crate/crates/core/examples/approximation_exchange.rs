//! Replacing each potential by its tangent line below the knot `z_L`
//! lowers every cell value; the values increase with `L` and reach the
//! exact one once the knot is below every strain.
//!
//! Run with `cargo run --release --example approximation_exchange`.

use homchain::cell::{estimate_levels, knot};
use homchain::engine::SolverConfig;
use homchain::medium::{catalog, ChainModel};
use homchain::Result;

pub struct LevelRow {
    pub level: Option<usize>,
    pub knot: Option<f64>,
    pub value: f64,
}

pub fn run_example() -> Result<Vec<LevelRow>> {
    let model = ChainModel::build(catalog::deterministic(1.0, 1.0, 1), 0)?;
    let class = *model.class();
    let levels = [None, Some(0), Some(1), Some(2), Some(3)];
    let est = estimate_levels(&model, 0.15, &[20, 40], 2, (0.0, 1.0), &levels, &SolverConfig::default())?;
    Ok(est
        .into_iter()
        .map(|e| LevelRow { level: e.level, knot: e.level.map(|l| knot(&class, l)), value: e.estimate.to_f64() })
        .collect())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    for r in run_example()? {
        match (r.level, r.knot) {
            (Some(l), Some(k)) => println!("L = {l}  knot {k:.4}  value {:.6e}", r.value),
            _ => println!("exact            value {:.6e}", r.value),
        }
    }
    Ok(())
}
