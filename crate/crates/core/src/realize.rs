//! Ergodic Markov measures with a prescribed Birkhoff level and entropy.
//!
//! The top of the region at level `a` is the Gibbs witness of `H(a)`. Below
//! it, the measure is the level-`a` equilibrium state of `q₁φ + s·F` where
//! `F` marks the transitions that leave the two extremal periodic orbits of
//! `φ`. The block order is chosen so that those orbits share no state; as
//! `s → −∞` the measure concentrates on mixtures of the two orbits, so its
//! entropy falls continuously from `H(a)` towards zero. `q₁` is re-solved at
//! every `s` to keep the level at `a`, and `s` is found by bisection.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::measures::{
    integrate_potential, metric_entropy, support_is_irreducible, MarkovMeasure, Mixture, Potential,
};
use crate::pressure::{edge_values, EdgeModel, GibbsState};
use crate::sft::{format_block, higher_block_recode_with, Caps, Sft};
use crate::solve::{bracketed_root, increasing_root};
use crate::spectrum::{entropy_spectrum_level, mean_cycle, one_dim_weight, LevelSpectrum, INTERIOR_MARGIN};

/// Most negative penalty tried before giving up on the floor.
const PENALTY_CAP: f64 = -512.0;
/// Largest block order tried for the low anchor.
const ORDER_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationTarget {
    pub level: f64,
    pub entropy: f64,
    pub tol_level: f64,
    pub tol_entropy: f64,
    pub seed: u64,
}

impl RealizationTarget {
    pub fn new(level: f64, entropy: f64) -> RealizationTarget {
        RealizationTarget {
            level,
            entropy,
            tol_level: 1e-6,
            tol_entropy: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopAnchor {
    pub q: f64,
    pub entropy: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowAnchor {
    /// Periodic words with the minimal and maximal mean of `φ`.
    pub words: [String; 2],
    pub means: [f64; 2],
    /// Block order of the chain; the anchor orbits share no state at it.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialStep {
    pub s: f64,
    pub q1: f64,
    pub entropy: f64,
    pub level: f64,
}

/// Everything needed to audit a realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub seed: u64,
    pub target_level: f64,
    pub target_entropy: f64,
    pub top_anchor: TopAnchor,
    pub low_anchor: Option<LowAnchor>,
    /// Dial evaluations sorted by `s`; entropies are nondecreasing in `s`.
    pub trace: Vec<DialStep>,
    pub s: f64,
    pub q1: f64,
    pub order: usize,
    pub level: f64,
    pub entropy: f64,
    pub level_residual: f64,
    pub entropy_residual: f64,
    pub ergodic: bool,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&crate::format::rounded_json(self)).expect("serializable")
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub measure: MarkovMeasure,
    pub certificate: Certificate,
}

pub fn realize_target(sft: &Sft, phi: &Potential, target: &RealizationTarget) -> Result<Realization> {
    if !(target.tol_level > 0.0 && target.tol_entropy > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let (a, h) = (target.level, target.entropy);
    let top = match entropy_spectrum_level(sft, phi, a) {
        Ok(t) => t,
        Err(Error::LevelOutsideInterior { lo, hi, .. }) => {
            return Err(Error::NotInterior {
                level: a,
                entropy: h,
                reason: format!("level outside the open rotation interval ({lo}, {hi})"),
            })
        }
        Err(Error::DegenerateDirection { value }) => {
            return Err(Error::NotInterior {
                level: a,
                entropy: h,
                reason: format!("the rotation set is the single point {value}"),
            })
        }
        Err(e) => return Err(e),
    };
    if !(h > 0.0) {
        return Err(Error::NotInterior {
            level: a,
            entropy: h,
            reason: "entropy must be positive; zero entropy is reached by periodic mixtures".into(),
        });
    }
    if h > top.entropy + target.tol_entropy {
        return Err(Error::NotInterior {
            level: a,
            entropy: h,
            reason: format!("entropy exceeds H(a) = {}", top.entropy),
        });
    }
    let top_anchor = TopAnchor {
        q: top.q,
        entropy: top.entropy,
        level: top.witness_level,
    };
    if h >= top.entropy - target.tol_entropy / 4.0 {
        return finish(phi, target, top_anchor, None, Vec::new(), 0.0, top.q, top.witness);
    }
    let mut order = low_anchor_order(sft, phi)?;
    let mut floor = top.entropy;
    loop {
        match dial(sft, phi, target, &top, order) {
            Ok((low, trace, s, q1, measure)) => {
                return finish(phi, target, top_anchor, Some(low), trace, s, q1, measure);
            }
            Err(Error::FloorNotReached { floor: f, .. }) if order * 2 <= ORDER_CAP => {
                floor = f;
                order *= 2;
            }
            Err(Error::Overflow { .. }) => {
                return Err(Error::FloorNotReached {
                    floor,
                    target: h,
                    word_length: order,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    phi: &Potential,
    target: &RealizationTarget,
    top_anchor: TopAnchor,
    low_anchor: Option<LowAnchor>,
    trace: Vec<DialStep>,
    s: f64,
    q1: f64,
    measure: MarkovMeasure,
) -> Result<Realization> {
    let level = integrate_potential(&measure, phi)?;
    let entropy = metric_entropy(&measure);
    let certificate = Certificate {
        seed: target.seed,
        target_level: target.level,
        target_entropy: target.entropy,
        top_anchor,
        low_anchor,
        trace,
        s,
        q1,
        order: measure.order(),
        level,
        entropy,
        level_residual: (level - target.level).abs(),
        entropy_residual: (entropy - target.entropy).abs(),
        ergodic: measure.is_ergodic() && support_is_irreducible(&measure),
    };
    if certificate.level_residual > target.tol_level || certificate.entropy_residual > target.tol_entropy {
        return Err(Error::CertificateFailed(format!(
            "residuals {} (level) and {} (entropy) exceed the tolerances",
            certificate.level_residual, certificate.entropy_residual
        )));
    }
    Ok(Realization { measure, certificate })
}

/// Smallest block order at which the two extremal orbits share no state.
fn low_anchor_order(sft: &Sft, phi: &Potential) -> Result<usize> {
    let model = EdgeModel::new(sft, &[phi])?;
    let lo = mean_cycle(&model, &[1.0], false)?;
    let hi = mean_cycle(&model, &[1.0], true)?;
    Ok(model.graph().k.max(lo.word.len() + hi.word.len()))
}

type DialOutcome = (LowAnchor, Vec<DialStep>, f64, f64, MarkovMeasure);

fn dial(sft: &Sft, phi: &Potential, target: &RealizationTarget, top: &LevelSpectrum, order: usize) -> Result<DialOutcome> {
    let (a, h) = (target.level, target.entropy);
    let base_model = EdgeModel::new(sft, &[phi])?;
    let lo = mean_cycle(&base_model, &[1.0], false)?;
    let hi = mean_cycle(&base_model, &[1.0], true)?;
    let graph = Arc::new(higher_block_recode_with(sft, order, &Caps::default())?);
    let on_orbit = |b: &[usize]| in_orbit(b, &lo.word) || in_orbit(b, &hi.word);
    let features = vec![
        edge_values(&graph, |b| phi.eval(b)),
        edge_values(&graph, |b| if on_orbit(b) { 0.0 } else { 1.0 }),
    ];
    let model = EdgeModel::from_parts(Arc::new(sft.clone()), graph, features)?;
    let low = LowAnchor {
        words: [format_block(&lo.word), format_block(&hi.word)],
        means: [lo.mean, hi.mean],
        order,
    };

    let level_tol = (target.tol_level * 1e-3).max(1e-12);
    let mut warm: Option<GibbsState> = None;
    let mut trace: Vec<DialStep> = Vec::new();
    let at = |s: f64, warm: &mut Option<GibbsState>, trace: &mut Vec<DialStep>| -> Result<GibbsState> {
        let mut inner = warm.clone();
        let (q1, _) = increasing_root(
            |q| {
                let st = model.solve(&[q, s], inner.as_ref())?;
                let r = st.averages[0] - a;
                inner = Some(st);
                Ok(r)
            },
            level_tol,
        )?;
        let st = model.solve(&[q1, s], inner.as_ref())?;
        trace.push(DialStep {
            s,
            q1,
            entropy: st.entropy,
            level: st.averages[0],
        });
        *warm = Some(st.clone());
        Ok(st)
    };

    // grow the penalty until the entropy drops below the target
    let mut s_hi = 0.0;
    let mut e_hi = top.entropy;
    let mut s = -1.0;
    let low_state = loop {
        let st = at(s, &mut warm, &mut trace)?;
        if st.entropy <= h {
            break st;
        }
        s_hi = s;
        e_hi = st.entropy;
        s *= 2.0;
        if s < PENALTY_CAP {
            return Err(Error::FloorNotReached {
                floor: st.entropy,
                target: h,
                word_length: order,
            });
        }
    };
    let tol = target.tol_entropy / 4.0;
    let chosen = if (low_state.entropy - h).abs() <= tol {
        s
    } else {
        let (root, _) = bracketed_root(
            |x| Ok(at(x, &mut warm, &mut trace)?.entropy - h),
            s,
            s_hi,
            low_state.entropy - h,
            e_hi - h,
            tol,
        )?;
        root
    };
    let state = at(chosen, &mut warm, &mut trace)?;
    let q1 = trace.last().map_or(0.0, |t| t.q1);
    trace.sort_by(|x, y| x.s.total_cmp(&y.s));
    trace.dedup_by(|x, y| x.s == y.s);
    Ok((low, trace, chosen, q1, state.measure))
}

/// `block` is a segment of the periodic sequence `word^∞`.
fn in_orbit(block: &[usize], word: &[usize]) -> bool {
    let p = word.len();
    (0..p).any(|r| block.iter().enumerate().all(|(t, &x)| word[(r + t) % p] == x))
}

/// Two periodic orbits and the weight that puts their mixture at level `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroEntropyMixture {
    /// Periodic words with means below and above the level.
    pub words: [Vec<usize>; 2],
    pub means: [f64; 2],
    /// Weights on `words[0]` and `words[1]`.
    pub weights: [f64; 2],
    pub level: f64,
    pub entropy: f64,
    /// Always false: a nontrivial mixture of two orbits is not ergodic.
    pub ergodic: bool,
}

impl ZeroEntropyMixture {
    pub fn to_mixture(&self, sft: &Sft) -> Result<Mixture<MarkovMeasure>> {
        Ok(Mixture {
            components: vec![
                (self.weights[0], MarkovMeasure::periodic(sft, &self.words[0])?),
                (self.weights[1], MarkovMeasure::periodic(sft, &self.words[1])?),
            ],
        })
    }
}

pub fn zero_entropy_at_level(sft: &Sft, phi: &Potential, a: f64) -> Result<ZeroEntropyMixture> {
    let model = EdgeModel::new(sft, &[phi])?;
    let lo = mean_cycle(&model, &[1.0], false)?;
    let hi = mean_cycle(&model, &[1.0], true)?;
    if !(a > lo.mean + INTERIOR_MARGIN && a < hi.mean - INTERIOR_MARGIN) {
        return Err(Error::NotInterior {
            level: a,
            entropy: 0.0,
            reason: format!("level outside the open rotation interval ({}, {})", lo.mean, hi.mean),
        });
    }
    let theta = one_dim_weight((hi.mean, 1.0), (lo.mean, 1.0), a);
    Ok(ZeroEntropyMixture {
        level: (1.0 - theta) * lo.mean + theta * hi.mean,
        words: [lo.word, hi.word],
        means: [lo.mean, hi.mean],
        weights: [1.0 - theta, theta],
        entropy: 0.0,
        ergodic: false,
    })
}

/// Entropy grid for a sweep: absolute values, or fractions of `H(a)`.
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyGrid {
    Absolute(Vec<f64>),
    Relative(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepStatus {
    Realized {
        level: f64,
        entropy: f64,
        ergodic: bool,
        level_residual: f64,
        entropy_residual: f64,
    },
    Skipped {
        reason: String,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub h: f64,
    #[serde(flatten)]
    pub status: SweepStatus,
}

/// Runs `realize_target` on every grid point; rows come back in grid order
/// (levels outer, entropies inner).
pub fn sweep_feasible_region(
    sft: &Sft,
    phi: &Potential,
    grid_a: &[f64],
    grid_h: &EntropyGrid,
    tol_level: f64,
    tol_entropy: f64,
    seed: u64,
) -> Vec<SweepRow> {
    let hs: Vec<(f64, Result<f64>)> = grid_a
        .par_iter()
        .map(|&a| (a, entropy_spectrum_level(sft, phi, a).map(|s| s.entropy)))
        .collect();
    let mut points: Vec<(f64, f64, Option<String>)> = Vec::new();
    for (a, top) in &hs {
        let values: Vec<f64> = match (grid_h, top) {
            (EntropyGrid::Absolute(v), _) => v.clone(),
            (EntropyGrid::Relative(v), Ok(t)) => v.iter().map(|f| f * t).collect(),
            (EntropyGrid::Relative(v), Err(_)) => v.clone(),
        };
        for h in values {
            let skip = match top {
                Err(e) => Some(format!("NotInterior: {e}")),
                Ok(t) if !(h > 0.0) => Some(format!("NotInterior: entropy {h} is not positive (H(a) = {t})")),
                Ok(t) if h >= *t => Some(format!("NotInterior: entropy {h} is not below H(a) = {t} (margin {})", t - h)),
                Ok(_) => None,
            };
            points.push((*a, h, skip));
        }
    }
    points
        .par_iter()
        .map(|(a, h, skip)| {
            let status = match skip {
                Some(reason) => SweepStatus::Skipped { reason: reason.clone() },
                None => {
                    let target = RealizationTarget {
                        level: *a,
                        entropy: *h,
                        tol_level,
                        tol_entropy,
                        seed,
                    };
                    match realize_target(sft, phi, &target) {
                        Ok(r) => SweepStatus::Realized {
                            level: r.certificate.level,
                            entropy: r.certificate.entropy,
                            ergodic: r.certificate.ergodic,
                            level_residual: r.certificate.level_residual,
                            entropy_residual: r.certificate.entropy_residual,
                        },
                        Err(e) => SweepStatus::Failed {
                            error: format!("{}: {e}", e.kind()),
                        },
                    }
                }
            };
            SweepRow { a: *a, h: *h, status }
        })
        .collect()
}

/// Columns: `a,h,status,level,entropy,ergodic,level_residual,entropy_residual,reason`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("a,h,status,level,entropy,ergodic,level_residual,entropy_residual,reason\n");
    for r in rows {
        let tail = match &r.status {
            SweepStatus::Realized {
                level,
                entropy,
                ergodic,
                level_residual,
                entropy_residual,
            } => format!(
                "realized,{},{},{},{},{},",
                sig(*level),
                sig(*entropy),
                ergodic,
                sig(*level_residual),
                sig(*entropy_residual)
            ),
            SweepStatus::Skipped { reason } => format!("skipped,,,,,,\"{}\"", reason.replace('"', "'")),
            SweepStatus::Failed { error } => format!("failed,,,,,,\"{}\"", error.replace('"', "'")),
        };
        out.push_str(&format!("{},{},{}\n", sig(r.a), sig(r.h), tail));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::CylinderMeasure;

    fn setup() -> (Sft, Potential) {
        let s = Sft::full_shift(2);
        let p = Potential::symbol_value(&s);
        (s, p)
    }

    #[test]
    fn top_of_region_is_bernoulli() {
        let (s, p) = setup();
        let r = realize_target(&s, &p, &RealizationTarget::new(0.5, 2f64.ln())).unwrap();
        assert!((r.measure.cylinder(&[1]) - 0.5).abs() < 1e-9);
        assert!(r.certificate.low_anchor.is_none());
    }

    #[test]
    fn interior_target() {
        let (s, p) = setup();
        let r = realize_target(&s, &p, &RealizationTarget::new(0.5, 0.2)).unwrap();
        assert!((metric_entropy(&r.measure) - 0.2).abs() <= 1e-3);
        assert!((integrate_potential(&r.measure, &p).unwrap() - 0.5).abs() <= 1e-6);
        assert!(r.certificate.ergodic);
        let e: Vec<f64> = r.certificate.trace.iter().map(|t| t.entropy).collect();
        assert!(e.windows(2).all(|w| w[0] <= w[1] + 1e-6));
    }

    #[test]
    fn boundary_targets_rejected() {
        let (s, p) = setup();
        for (a, h) in [(0.5, 0.0), (1.0, 0.1), (0.5, 0.8)] {
            assert!(matches!(
                realize_target(&s, &p, &RealizationTarget::new(a, h)),
                Err(Error::NotInterior { .. })
            ));
        }
    }

    #[test]
    fn zero_entropy_mixtures() {
        let (s, p) = setup();
        let z = zero_entropy_at_level(&s, &p, 0.5).unwrap();
        assert_eq!(z.weights, [0.5, 0.5]);
        let z = zero_entropy_at_level(&s, &p, 0.25).unwrap();
        assert_eq!(z.words[0], vec![0]);
        assert!((z.weights[0] - 0.75).abs() < 1e-15);
        assert!(!z.ergodic);
        let m = z.to_mixture(&s).unwrap();
        assert_eq!(m.entropy(), 0.0);
        assert!((m.integrate(&p).unwrap() - 0.25).abs() < 1e-15);
        assert!(zero_entropy_at_level(&s, &p, 0.0).is_err());
    }

    #[test]
    fn determinism() {
        let (s, p) = setup();
        let t = RealizationTarget::new(0.3, 0.25);
        let a = realize_target(&s, &p, &t).unwrap().certificate.to_json();
        let b = realize_target(&s, &p, &t).unwrap().certificate.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_marks_skips() {
        let (s, p) = setup();
        let rows = sweep_feasible_region(
            &s,
            &p,
            &[1.5, 0.5],
            &EntropyGrid::Absolute(vec![0.3, 0.9]),
            1e-6,
            1e-3,
            0,
        );
        assert_eq!(rows.len(), 4);
        assert!(matches!(rows[0].status, SweepStatus::Skipped { .. }));
        assert!(matches!(rows[2].status, SweepStatus::Realized { .. }));
        assert!(matches!(rows[3].status, SweepStatus::Skipped { .. }));
        assert_eq!(sweep_csv(&rows).lines().count(), 5);
    }
}
