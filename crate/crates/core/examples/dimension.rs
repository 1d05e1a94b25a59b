//! Dimension spectrum of the constant-exponent horseshoe model: realized
//! ergodic dimensions fill `[0, 2)`.

use symdyn::applications::{dimension_spectrum, geometry_profile, HyperbolicModel};
use symdyn::measures::{MarkovMeasure, Potential};
use symdyn::sft::Sft;

fn main() -> symdyn::Result<()> {
    let base = Sft::full_shift(2);
    let l2 = 2f64.ln();
    let model = HyperbolicModel::new(base.clone(), Potential::constant(&base, l2), Potential::constant(&base, -l2), 1, 1)?;
    let g = geometry_profile(&model, &MarkovMeasure::bernoulli(&[0.5, 0.5])?)?;
    println!("maximal measure: dim_H {:.6}, dim_u {:.6}, r {:?}", g.dim_h, g.dim_u, g.r);
    let start = std::time::Instant::now();
    let spectrum = dimension_spectrum(&model, 0.05)?;
    print!("{}", spectrum.to_csv());
    println!(
        "control {} at level {:.6}; sup estimate {:.6}; covered {} ({} gaps) in {:.1?}",
        spectrum.control,
        spectrum.level,
        spectrum.sup_estimate,
        spectrum.covered,
        spectrum.gaps.len(),
        start.elapsed()
    );
    Ok(())
}
