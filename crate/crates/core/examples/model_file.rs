//! Loading a JSON model file and writing specs back out.

use symdyn::measures::{integrate_potential, metric_entropy};
use symdyn::model::{measure_spec, parse_model};
use symdyn::pressure::equilibrium_state;

fn main() -> symdyn::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/models/golden.json");
    let model = parse_model(path)?;
    println!("shift: {} on {} symbols", model.sft.label, model.sft.alphabet_size());
    let phi = model.potential("phi")?;
    for name in ["parry", "lazy"] {
        let mu = model.measure(name)?;
        println!("{name}: entropy {:.6}, int phi {:.6}", metric_entropy(mu), integrate_potential(mu, phi)?);
    }
    let eq = equilibrium_state(&model.sft, phi)?;
    println!("{}", serde_json::to_string_pretty(&measure_spec(&eq.equilibrium)).unwrap());

    if let Err(e) = model.measure("absent") {
        println!("{} error: {e}", e.kind());
    }
    Ok(())
}
