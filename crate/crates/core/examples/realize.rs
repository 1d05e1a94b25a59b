//! Ergodic Markov measures with a prescribed average and entropy.

use symdyn::measures::Potential;
use symdyn::realize::{realize_target, sweep_csv, sweep_feasible_region, EntropyGrid, RealizationTarget};
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let sft = Sft::full_shift(2);
    let phi = Potential::symbol_value(&sft);
    let r = realize_target(&sft, &phi, &RealizationTarget::new(0.3, 0.25))?;
    let c = &r.certificate;
    println!(
        "order {} measure: level {:.9}, entropy {:.6}, ergodic {}, dial s = {:.4} after {} steps",
        c.order,
        c.level,
        c.entropy,
        c.ergodic,
        c.s,
        c.trace.len()
    );
    for row in r.measure.kernel_rows() {
        println!("  {row:?}");
    }

    let grid_a: Vec<f64> = (1..10).map(|i| i as f64 * 0.1).collect();
    let grid_h = EntropyGrid::Relative(vec![0.0, 0.25, 0.5, 0.75, 0.99]);
    print!("{}", sweep_csv(&sweep_feasible_region(&sft, &phi, &grid_a, &grid_h, 1e-6, 1e-3, 0)));
    Ok(())
}
