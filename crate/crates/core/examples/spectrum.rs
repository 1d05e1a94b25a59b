//! Entropy spectrum of a Birkhoff average and a two-potential rotation set.

use symdyn::measures::Potential;
use symdyn::spectrum::{entropy_spectrum_curve, rotation_interval, rotation_set};
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let sft = Sft::full_shift(2);
    let phi = Potential::symbol_value(&sft);
    let (lo, hi) = rotation_interval(&sft, &phi)?;
    println!("rotation interval [{}, {}] from cycles {:?}, {:?}", lo.mean, hi.mean, lo.word, hi.word);

    let levels: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    let curve = entropy_spectrum_curve(&sft, &phi, &levels)?;
    println!("a,H(a),q");
    for i in 0..levels.len() {
        println!("{:.2},{:.8},{:.6}", curve.levels[i], curve.entropy[i], curve.q_dual[i]);
    }
    println!("concave {}", curve.concave_certificate);

    let golden = Sft::golden_mean();
    let psi = Potential::from_fn(&golden, 2, |w| (w[0] * w[1]) as f64 + 0.5 * w[0] as f64)?;
    let chi = Potential::symbol_value(&golden);
    let rot = rotation_set(&golden, &[&chi, &psi], 32)?;
    println!("rotation set: affine dimension {}, vertices {:?}", rot.affine_dim, rot.vertices);
    Ok(())
}
