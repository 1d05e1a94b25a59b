//! Topological entropy, cyclic structure and word counts of a few shifts.

use symdyn::sft::{
    enumerate_words_and_cycles, higher_block_recode, structure_profile, topological_entropy, EnumerationMode, Sft,
};

fn main() -> symdyn::Result<()> {
    let shifts = [
        Sft::full_shift(3),
        Sft::golden_mean(),
        Sft::cycle(4),
        Sft::from_rows("even blocks", &["0110", "0010", "1001", "1000"])?,
    ];
    for sft in &shifts {
        let s = structure_profile(sft);
        println!(
            "{:<14} h = {:.6}  irreducible {}  period {}  primitive {}",
            sft.label,
            topological_entropy(sft)?,
            s.irreducible,
            s.period,
            s.primitive
        );
    }

    let golden = Sft::golden_mean();
    for n in 1..=8 {
        let words = enumerate_words_and_cycles(&golden, n, EnumerationMode::Words)?;
        let cycles = enumerate_words_and_cycles(&golden, n, EnumerationMode::Cycles)?;
        println!("n = {n}: {} words, {} periodic points", words.len(), cycles.len());
    }

    let rec = higher_block_recode(&golden, 3)?;
    let word = vec![0, 1, 0, 0, 1, 0];
    let codes = rec.encode(&word)?;
    println!("3-block codes of {word:?}: {codes:?}, decoded {:?}", rec.decode(&codes));
    Ok(())
}
