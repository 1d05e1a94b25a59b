//! Multi-horseshoe for two Bernoulli measures on the full 2-shift.

use symdyn::horseshoe::{multi_horseshoe, HorseshoeRequest};
use symdyn::measures::MarkovMeasure;

fn main() -> symdyn::Result<()> {
    let mu1 = MarkovMeasure::bernoulli(&[0.9, 0.1])?;
    let mu2 = MarkovMeasure::bernoulli(&[0.1, 0.9])?;
    let start = std::time::Instant::now();
    let result = multi_horseshoe(&HorseshoeRequest::new(vec![mu1, mu2], 0.1, 0.1))?;
    let c = &result.certificate;
    println!("word length {}, marker {:?}", result.word_length, result.marker);
    for (i, e) in c.entropy.iter().enumerate() {
        println!(
            "measure {i}: h = {:.4}, log|W|/n = {:.4}, graph entropy = {:.4}, sampled d_H = {:.4}",
            e.measure_entropy, e.floor, e.graph_entropy, c.sampled_distance[i]
        );
    }
    println!("hull distance {:.4}", c.sampled_hull_distance);
    println!("lambda nodes {}, marker return {}", result.lambda.labels.len(), c.marker_return);
    println!("passed {} in {:.1?}", c.passed, start.elapsed());
    Ok(())
}
