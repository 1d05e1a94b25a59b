//! Top Lyapunov exponent, fiber exponents and spectrum of a 2x2 cocycle.

use symdyn::applications::{
    cocycle_entropy_spectrum, cocycle_spectrum_csv, cocycle_top_exponent, elliptic_witness, fiber_exponent, Cocycle,
};
use symdyn::measures::MarkovMeasure;
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let cocycle = Cocycle::new(vec![[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [0.0, 1.0]]])?;
    let nu = MarkovMeasure::bernoulli(&[0.5, 0.5])?;
    let e = cocycle_top_exponent(&cocycle, &nu, 12, 0)?;
    println!(
        "exponent ~ {:.6} (increment {:.6}, Fekete bound {:.6}, exact to n = {}, subadditive {})",
        e.estimate, e.increment_estimate, e.fekete_bound, e.exact_up_to, e.subadditive
    );
    println!("elliptic witness: {:?}", elliptic_witness(&cocycle, 8)?);

    for word in [vec![0], vec![1], vec![0, 1]] {
        let x = fiber_exponent(&cocycle, &word, [1.0, 0.0], 1000)?;
        println!("fiber exponent along {word:?}: {x:.6}");
    }

    let levels: Vec<f64> = (1..8).map(|i| i as f64 * 0.15).collect();
    let rows = cocycle_entropy_spectrum(&cocycle, &Sft::full_shift(2), &levels, &[1, 2, 4])?;
    print!("{}", cocycle_spectrum_csv(&rows));
    Ok(())
}
