//! Minimizing the discrete chain energy under a stretch `ℓ` beyond the well:
//! one bond breaks and the minimum approaches `J(δ)` at rate `1/n`.
//!
//! Run with `cargo run --release --example chain_minimization [out.csv]`.

use homchain::chain::{minimize_chain, BoundaryCondition, Deformation};
use homchain::engine::SolverConfig;
use homchain::medium::{catalog, ChainModel};
use homchain::stats::fit_inverse;
use homchain::Result;

pub fn run_example() -> Result<(Vec<(usize, f64)>, f64, Deformation)> {
    let model = ChainModel::build(catalog::deterministic(2.0, 1.0, 1), 0)?;
    let bc = BoundaryCondition::new(3.0)?;
    let cfg = SolverConfig::default();
    let mut rows = Vec::new();
    let mut last = None;
    for n in [250, 500, 1000, 2000] {
        let m = minimize_chain(&model, n, 1, &bc, &cfg)?;
        rows.push((n, m.value.to_f64()));
        last = Some(m.deformation);
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| (r.1 + 1.0).abs()).collect();
    Ok((rows, fit_inverse(&ns, &errs), last.unwrap()))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let (rows, c, u) = run_example()?;
    for (n, v) in rows {
        println!("n = {n:<5} min E = {v:.8}  |min + 1| * n = {:.4}", (v + 1.0).abs() * n as f64);
    }
    println!("fitted |min + 1| ~ {c:.4} / n");
    let crack = u.strains().iter().position(|&s| s > 10.0);
    println!("broken bond at index {crack:?}");
    if let Some(path) = std::env::args().nth(1) {
        u.write_csv(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
