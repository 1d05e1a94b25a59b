//! The `symdyn` command line: one model file, one subcommand per computation.
//!
//! Curves go out as CSV, certificates and witnesses as JSON. Exit status is
//! 0 on success, 1 on a domain error (with a JSON payload on stderr) and 2 on
//! a usage error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::applications::{
    cocycle_entropy_spectrum, cocycle_spectrum_csv, cocycle_top_exponent, dimension_spectrum, elliptic_witness,
    fiber_exponent, geometry_profile, lyapunov_rotation_set, lyapunov_vector_profile,
};
use crate::error::{Error, Result};
use crate::format::rounded_json;
use crate::horseshoe::{multi_horseshoe, HorseshoeRequest};
use crate::measures::{profile, Potential};
use crate::model::{measure_spec, parse_model, Model};
use crate::pressure::{equilibrium_state, pressure_curve, pressure_curve_csv};
use crate::realize::{realize_target, sweep_csv, sweep_feasible_region, EntropyGrid, RealizationTarget};
use crate::sft::{parse_block, structure_profile, topological_entropy};
use crate::spectrum::{entropy_spectrum_curve, rotation_set};

#[derive(Debug, Parser)]
#[command(name = "symdyn", version, about = "Thermodynamic formalism on subshifts of finite type")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON model file.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol_level: f64,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub tol_entropy: f64,
}

/// An inclusive grid written `a:b:n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Grid, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected a:b:n, got `{s}`"));
        }
        let a: f64 = parts[0].parse().map_err(|_| format!("bad start `{}`", parts[0]))?;
        let b: f64 = parts[1].parse().map_err(|_| format!("bad end `{}`", parts[1]))?;
        let n: usize = parts[2].parse().map_err(|_| format!("bad count `{}`", parts[2]))?;
        if n == 0 || !a.is_finite() || !b.is_finite() {
            return Err("grid needs finite ends and at least one point".into());
        }
        if n == 1 {
            return Ok(Grid(vec![a]));
        }
        Ok(Grid((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Topological entropy, irreducibility data and measure profiles.
    Entropy {
        /// Measures to profile; all when absent.
        #[arg(long = "measure")]
        measures: Vec<String>,
        /// Potentials integrated in each profile; all when absent.
        #[arg(long = "potential")]
        potentials: Vec<String>,
    },
    /// Pressure and equilibrium state, or the curve q ↦ P(qφ).
    Pressure {
        #[arg(long)]
        potential: String,
        #[arg(long, allow_hyphen_values = true)]
        grid_q: Option<Grid>,
    },
    /// Entropy spectrum CSV for one potential; rotation set JSON for several.
    Spectrum {
        #[arg(long = "potential", required = true)]
        potentials: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        levels: Option<Grid>,
        #[arg(long, default_value_t = 64)]
        directions: usize,
    },
    /// Ergodic Markov measure with a prescribed average and entropy, or a sweep.
    Realize {
        #[arg(long)]
        potential: String,
        #[arg(long, requires = "entropy", conflicts_with = "levels")]
        level: Option<f64>,
        #[arg(long)]
        entropy: Option<f64>,
        #[arg(long, requires = "grid_h", allow_hyphen_values = true)]
        levels: Option<Grid>,
        #[arg(long)]
        grid_h: Option<Grid>,
        /// Read the entropy grid as fractions of the spectrum at each level.
        #[arg(long)]
        relative: bool,
    },
    /// Multi-horseshoe around a family of Markov measures.
    Horseshoe {
        #[arg(long = "measure", required = true)]
        measures: Vec<String>,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        zeta: f64,
        #[arg(long)]
        word_length: Option<usize>,
        #[arg(long)]
        marker: Option<String>,
        /// Words listed per set in the output.
        #[arg(long, default_value_t = 8)]
        word_limit: usize,
    },
    /// Dimension spectrum CSV, or the geometry profile of one measure.
    Dimension {
        #[arg(long)]
        hyperbolic: String,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
        /// Lyapunov rotation set of the bundles instead.
        #[arg(long)]
        lyapunov: bool,
        #[arg(long, default_value_t = 64)]
        directions: usize,
    },
    /// Top exponent of a cocycle, or its entropy spectrum over `--levels`.
    Cocycle {
        #[arg(long)]
        cocycle: String,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 8)]
        witness_length: usize,
        #[arg(long, allow_hyphen_values = true)]
        levels: Option<Grid>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        depths: Vec<usize>,
    },
    /// Fiber exponent of a direction along a periodic orbit.
    Fiber {
        #[arg(long)]
        cocycle: String,
        #[arg(long)]
        word: String,
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        vector: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status. Results go to `--out` or `stdout`; diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.global.jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::InvalidInput(e.to_string())),
        },
        None => execute(&cli),
    };
    let emitted = result.and_then(|text| match &cli.global.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string())),
    });
    match emitted {
        Ok(()) => 0,
        Err(e) => {
            let payload = json!({ "error": e.kind(), "message": e.to_string() });
            let _ = writeln!(stderr, "{payload}");
            1
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(&rounded_json(value)).expect("serializable");
    s.push('\n');
    s
}

fn potentials<'a>(model: &'a Model, names: &[String]) -> Result<Vec<&'a Potential>> {
    names.iter().map(|n| model.potential(n)).collect()
}

fn execute(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let path = g
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--model is required".into()))?;
    let model = parse_model(path)?;
    let sft = &model.sft;
    match &cli.command {
        Command::Entropy { measures, potentials: pots } => {
            let pot_names: Vec<String> = if pots.is_empty() {
                model.potentials.keys().cloned().collect()
            } else {
                pots.clone()
            };
            let mu_names: Vec<String> = if measures.is_empty() {
                model.measures.keys().cloned().collect()
            } else {
                measures.clone()
            };
            let phis = potentials(&model, &pot_names)?;
            let mut profiles = serde_json::Map::new();
            for name in &mu_names {
                let p = profile(model.measure(name)?, &phis)?;
                profiles.insert(name.clone(), serde_json::to_value(p).expect("serializable"));
            }
            Ok(pretty(&json!({
                "topological_entropy": topological_entropy(sft)?,
                "structure": structure_profile(sft),
                "potentials": pot_names,
                "measures": profiles,
            })))
        }
        Command::Pressure { potential, grid_q } => {
            let phi = model.potential(potential)?;
            match grid_q {
                Some(grid) => Ok(pressure_curve_csv(&pressure_curve(sft, phi, &grid.0)?)),
                None => {
                    let report = equilibrium_state(sft, phi)?;
                    let eq = profile(&report.equilibrium, &[phi])?;
                    Ok(pretty(&json!({
                        "pressure": report.value,
                        "variational_gap": report.gap,
                        "entropy": eq.entropy,
                        "average": eq.averages[0],
                        "equilibrium": measure_spec(&report.equilibrium),
                    })))
                }
            }
        }
        Command::Spectrum {
            potentials: names,
            levels,
            directions,
        } => {
            let phis = potentials(&model, names)?;
            if phis.len() == 1 {
                let grid = levels
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("--levels is required for one potential".into()))?;
                Ok(entropy_spectrum_curve(sft, phis[0], &grid.0)?.to_csv())
            } else {
                Ok(pretty(&rotation_set(sft, &phis, *directions)?))
            }
        }
        Command::Realize {
            potential,
            level,
            entropy,
            levels,
            grid_h,
            relative,
        } => {
            let phi = model.potential(potential)?;
            match (level, entropy, levels, grid_h) {
                (Some(a), Some(h), None, _) => {
                    let mut target = RealizationTarget::new(*a, *h);
                    target.tol_level = g.tol_level;
                    target.tol_entropy = g.tol_entropy;
                    target.seed = g.seed;
                    let r = realize_target(sft, phi, &target)?;
                    let doc = json!({
                        "certificate": rounded_json(&r.certificate),
                        "measure": measure_spec(&r.measure),
                    });
                    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
                    s.push('\n');
                    Ok(s)
                }
                (None, None, Some(la), Some(lh)) => {
                    let grid = if *relative {
                        EntropyGrid::Relative(lh.0.clone())
                    } else {
                        EntropyGrid::Absolute(lh.0.clone())
                    };
                    let rows = sweep_feasible_region(sft, phi, &la.0, &grid, g.tol_level, g.tol_entropy, g.seed);
                    Ok(sweep_csv(&rows))
                }
                _ => Err(Error::InvalidInput(
                    "give --level with --entropy, or --levels with --grid-h".into(),
                )),
            }
        }
        Command::Horseshoe {
            measures,
            eta,
            zeta,
            word_length,
            marker,
            word_limit,
        } => {
            let mus = measures
                .iter()
                .map(|n| model.measure(n).cloned())
                .collect::<Result<Vec<_>>>()?;
            let mut req = HorseshoeRequest::new(mus, *eta, *zeta);
            req.word_length = *word_length;
            req.marker = marker.as_deref().map(parse_block).transpose()?;
            req.seed = g.seed;
            let mut s = multi_horseshoe(&req)?.to_json(*word_limit);
            s.push('\n');
            Ok(s)
        }
        Command::Dimension {
            hyperbolic,
            measure,
            resolution,
            lyapunov,
            directions,
        } => {
            let geo = model.hyperbolic_model(hyperbolic)?;
            match (measure, lyapunov) {
                (Some(name), false) => {
                    let mu = model.measure(name)?;
                    let mut doc = serde_json::to_value(geometry_profile(geo, mu)?).expect("serializable");
                    if !geo.bundles.is_empty() {
                        doc["lyapunov"] = json!(lyapunov_vector_profile(geo, mu)?);
                    }
                    Ok(pretty(&doc))
                }
                (None, true) => Ok(pretty(&lyapunov_rotation_set(geo, *directions)?)),
                (None, false) => Ok(dimension_spectrum(geo, *resolution)?.to_csv()),
                (Some(_), true) => Err(Error::InvalidInput("--measure and --lyapunov are exclusive".into())),
            }
        }
        Command::Cocycle {
            cocycle,
            measure,
            n_max,
            witness_length,
            levels,
            depths,
        } => {
            let c = model.cocycle(cocycle)?;
            if let Some(grid) = levels {
                return Ok(cocycle_spectrum_csv(&cocycle_entropy_spectrum(c, sft, &grid.0, depths)?));
            }
            let name = measure
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("--measure or --levels is required".into()))?;
            let exponent = cocycle_top_exponent(c, model.measure(name)?, *n_max, g.seed)?;
            let witness = elliptic_witness(c, *witness_length)?;
            Ok(pretty(&json!({
                "exponent": exponent,
                "elliptic_witness": witness.map(|w| crate::sft::format_block(&w)),
            })))
        }
        Command::Fiber { cocycle, word, vector, n } => {
            let c = model.cocycle(cocycle)?;
            if vector.len() != 2 {
                return Err(Error::InvalidInput("--vector takes two components".into()));
            }
            let w = parse_block(word)?;
            let value = fiber_exponent(c, &w, [vector[0], vector[1]], *n)?;
            Ok(pretty(&json!({ "word": word, "vector": vector, "n": n, "exponent": value })))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_inclusive() {
        let g: Grid = "0.05:0.95:19".parse().unwrap();
        assert_eq!(g.0.len(), 19);
        assert!((g.0[18] - 0.95).abs() < 1e-15);
        assert!("1:2".parse::<Grid>().is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["symdyn", "bogus"], &mut out, &mut err), 2);
    }

    #[test]
    fn domain_errors_emit_a_payload() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["symdyn", "--model", "/nonexistent.json", "entropy"], &mut out, &mut err);
        assert_eq!(code, 1);
        let v: serde_json::Value = serde_json::from_slice(&err).unwrap();
        assert_eq!(v["error"], "Io");
    }
}
