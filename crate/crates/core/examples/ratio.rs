//! Spectrum of a ratio of Birkhoff sums and mixing weights that hit a target
//! vector of ratios.

use symdyn::measures::{integrate_potential, Potential};
use symdyn::spectrum::{interpolate_ratio_weights, ratio_range, ratio_spectrum_level};
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let sft = Sft::full_shift(2);
    let phi = Potential::symbol_value(&sft);
    let psi = Potential::from_fn(&sft, 1, |w| 1.0 + 2.0 * w[0] as f64)?;
    let (lo, hi) = ratio_range(&sft, &phi, &psi)?;
    println!("ratio range [{lo:.6}, {hi:.6}]");
    for i in 1..10 {
        let a = lo + (hi - lo) * i as f64 / 10.0;
        let s = ratio_spectrum_level(&sft, &phi, &psi, a)?;
        let check = integrate_potential(&s.witness, &phi)? / integrate_potential(&s.witness, &psi)?;
        println!("a = {a:.4}: H = {:.6}, witness ratio {check:.6}", s.entropy);
    }

    // four corners around the target (0.3, 0.6)
    let pairs = vec![
        (vec![0.5, 0.9], vec![1.0, 1.0]),
        (vec![0.1, 0.8], vec![1.0, 1.0]),
        (vec![0.4, 0.2], vec![1.0, 0.5]),
        (vec![0.2, 0.1], vec![1.0, 1.0]),
    ];
    let theta = interpolate_ratio_weights(&pairs, &[0.3, 0.6])?;
    let ratio = |i: usize| {
        let p: f64 = pairs.iter().zip(&theta).map(|((p, _), t)| t * p[i]).sum();
        let q: f64 = pairs.iter().zip(&theta).map(|((_, q), t)| t * q[i]).sum();
        p / q
    };
    println!("weights {theta:.4?} give ratios ({:.6}, {:.6})", ratio(0), ratio(1));
    Ok(())
}
