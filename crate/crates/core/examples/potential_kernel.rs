//! Lennard-Jones type potentials: evaluation, class membership and the
//! tangent-line approximation below a knot.
//!
//! Run with `cargo run --release --example potential_kernel`.

use homchain::cell::knot;
use homchain::potential::{
    check_class_membership, membership_grid, slope_lower_bound, ApproxPotential, ClassParams, GeneralPotential,
    PotentialSpec,
};
use homchain::Result;

pub struct KernelSummary {
    pub well: (f64, f64),
    pub general_well: (f64, f64),
    pub member: bool,
    pub approx_gap: f64,
    pub slope_bound: f64,
}

pub fn run_example() -> Result<KernelSummary> {
    let j = PotentialSpec::classical(1.5, 3.5)?;
    let well = j.minimizer()?;

    // The same shape registered as a black-box evaluator.
    let g = GeneralPotential::register("lj_unit", 0.0, |z| z.powi(-12) - 2.0 * z.powi(-6), None)?;
    let general_well = PotentialSpec::General(g).minimizer()?;

    let class = ClassParams::covering_classical((1.0, 2.0), (3.0, 4.0));
    let report = check_class_membership(&j, &class, &membership_grid(&j, &class))?;

    let z_star = knot(&class, 0);
    let approx = ApproxPotential::new(j.clone(), &class, z_star)?;
    let z = 0.5 * z_star;
    let gap = j.value(z).to_f64() - approx.value(z).to_f64();

    Ok(KernelSummary {
        well,
        general_well,
        member: report.passed(),
        approx_gap: gap,
        slope_bound: slope_lower_bound(&class, z_star),
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let s = run_example()?;
    println!("classical (1.5, 3.5): well at {:.6}, depth {:.6}", s.well.0, s.well.1);
    println!("registered z^-12 - 2 z^-6: well at {:.6}, depth {:.6}", s.general_well.0, s.general_well.1);
    println!("member of the covering class: {}", s.member);
    println!("exact minus approximate value at half the first knot: {:.3e}", s.approx_gap);
    println!("slope bound M at the first knot: {:.3e}", s.slope_bound);
    Ok(())
}
