//! Pressure, equilibrium state and the pressure curve on the golden mean shift.

use symdyn::measures::{integrate_potential, metric_entropy, Potential};
use symdyn::pressure::{equilibrium_state, pressure_curve, pressure_curve_csv, pressure_gradient_hessian};
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let sft = Sft::golden_mean();
    let phi = Potential::symbol_value(&sft);
    let report = equilibrium_state(&sft, &phi)?;
    let mu = &report.equilibrium;
    println!("P(phi) = {:.10}, variational gap {:.1e}", report.value, report.gap);
    println!(
        "h(mu) + int phi dmu = {:.10} + {:.10} = {:.10}",
        metric_entropy(mu),
        integrate_potential(mu, &phi)?,
        metric_entropy(mu) + integrate_potential(mu, &phi)?
    );

    let pair = Potential::from_fn(&sft, 2, |w| if w == [0, 0] { 1.0 } else { 0.0 })?;
    let d = pressure_gradient_hessian(&sft, &[&phi, &pair], &[0.5, -0.3])?;
    println!("gradient {:?}, hessian eigenvalues {:?}", d.gradient, d.hessian_eigenvalues);

    let grid: Vec<f64> = (-8..=8).map(|i| i as f64 * 0.5).collect();
    print!("{}", pressure_curve_csv(&pressure_curve(&sft, &phi, &grid)?));
    Ok(())
}
