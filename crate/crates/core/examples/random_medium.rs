//! Random chains: sampling potentials site by site, ergodic averages and
//! the stationarity check.
//!
//! Run with `cargo run --release --example random_medium`.

use homchain::medium::{catalog, stationarity_check, stationary_distribution, ChainModel, Quantity};
use homchain::Result;

pub struct MediumRow {
    pub name: &'static str,
    pub expectation: f64,
    pub average: f64,
}

pub fn run_example() -> Result<(Vec<MediumRow>, Vec<f64>, bool)> {
    let mut rows = Vec::new();
    for (name, spec) in [
        ("uniform box", catalog::uniform_box(1)),
        ("two-valued", catalog::two_valued(1)),
        ("markov", catalog::markov_two_state(1)),
    ] {
        let model = ChainModel::build(spec.clone(), 42)?;
        rows.push(MediumRow {
            name,
            expectation: spec.expectation(Quantity::Delta)?,
            average: model.sample_average(Quantity::Delta, 1, 100_000, (0.0, 1.0))?,
        });
    }
    let pi = stationary_distribution(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
    let stationary = stationarity_check(&catalog::uniform_box(1), 2_000, &[0, 5, -9])?.passed;
    Ok((rows, pi, stationary))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let model = ChainModel::build(catalog::two_valued(1), 7)?;
    for i in 0..5 {
        let (d, e) = model.potential_at(i, 1)?.lj_params().unwrap();
        println!("site {i}: delta = {d}, epsilon = {e}");
    }
    let (rows, pi, stationary) = run_example()?;
    for r in rows {
        println!("{:<12} E[delta] = {:.4}  average over 1e5 sites = {:.4}", r.name, r.expectation, r.average);
    }
    println!("stationary law of the Markov chain: {pi:?}");
    println!("site marginals agree: {stationary}");
    Ok(())
}
