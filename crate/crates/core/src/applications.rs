//! Dimension-type spectra of symbolic hyperbolic models, and Lyapunov
//! exponents of locally constant SL(2,R) cocycles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::measures::{integrate_potential, metric_entropy, support_is_irreducible, MarkovMeasure, Potential};
use crate::pressure::{equilibrium_state, pressure};
use crate::realize::{realize_target, RealizationTarget};
use crate::sft::{higher_block_recode, structure_profile, topological_entropy, Sft};
use crate::solve::{bracketed_root, increasing_root};
use crate::spectrum::{entropy_spectrum_level, rotation_interval, rotation_set, RotationSet, DEGENERATE_WIDTH};

/// One bundle of an average-conformal splitting: `∫ψ dμ / d` is the
/// exponent, repeated `d` times.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub psi: Potential,
    pub dim: usize,
}

/// Symbolic model of a hyperbolic system: `ψ^u` and `ψ^s` are the log
/// Jacobians along the unstable and stable bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicModel {
    pub base: Sft,
    pub psi_u: Potential,
    pub psi_s: Potential,
    pub d_u: usize,
    pub d_s: usize,
    /// Finer splitting for Lyapunov vectors; empty means `[(ψ^u, d_u), (ψ^s, d_s)]`.
    pub bundles: Vec<Bundle>,
}

impl HyperbolicModel {
    pub fn new(base: Sft, psi_u: Potential, psi_s: Potential, d_u: usize, d_s: usize) -> Result<HyperbolicModel> {
        if d_u == 0 || d_s == 0 {
            return Err(Error::InvalidInput("bundle dimensions must be positive".into()));
        }
        if !(psi_u.min_value() > 0.0) {
            return Err(Error::InvalidInput(format!(
                "psi_u must be positive on every block (minimum {})",
                psi_u.min_value()
            )));
        }
        if !(psi_s.max_value() < 0.0) {
            return Err(Error::InvalidInput(format!(
                "psi_s must be negative on every block (maximum {})",
                psi_s.max_value()
            )));
        }
        Ok(HyperbolicModel {
            base,
            psi_u,
            psi_s,
            d_u,
            d_s,
            bundles: Vec::new(),
        })
    }

    /// Scales positive `raw_u` and negative `raw_s` so that `P(−ψ^u) = 0`
    /// and `P(ψ^s) = 0`, the pressure normalisation of a conformal repeller
    /// and its inverse.
    pub fn normalized(base: Sft, raw_u: &Potential, raw_s: &Potential, d_u: usize, d_s: usize) -> Result<HyperbolicModel> {
        if !(raw_u.min_value() > 0.0 && raw_s.max_value() < 0.0) {
            return Err(Error::InvalidInput("raw_u must be positive and raw_s negative".into()));
        }
        let bowen = |raw: &Potential, sign: f64| -> Result<f64> {
            let (t, _) = increasing_root(|t| Ok(-pressure(&base, &raw.map(|v| sign * t * v))?), 1e-12)?;
            Ok(t)
        };
        let tu = bowen(raw_u, -1.0)?;
        let ts = bowen(raw_s, 1.0)?;
        HyperbolicModel::new(base.clone(), raw_u.map(|v| tu * v), raw_s.map(|v| ts * v), d_u, d_s)
    }

    pub fn with_bundles(mut self, bundles: Vec<Bundle>) -> Result<HyperbolicModel> {
        if bundles.iter().any(|b| b.dim == 0) {
            return Err(Error::BundleMismatch("bundle dimensions must be positive".into()));
        }
        self.bundles = bundles;
        Ok(self)
    }

    fn bundle_list(&self) -> Vec<(&Potential, usize)> {
        if self.bundles.is_empty() {
            vec![(&self.psi_u, self.d_u), (&self.psi_s, self.d_s)]
        } else {
            self.bundles.iter().map(|b| (&b.psi, b.dim)).collect()
        }
    }
}

/// `𝒬(x, y, z) = d_u z / x − d_s z / y`; with `(x, y, z) = (∫ψ^u, ∫ψ^s, h)`
/// it is the dimension, with `z = 1` the first return rate.
pub fn q_map(d_u: usize, d_s: usize, x: f64, y: f64, z: f64) -> f64 {
    d_u as f64 * z / x - d_s as f64 * z / y
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryProfile {
    pub entropy: f64,
    pub chi_u: f64,
    pub chi_s: f64,
    pub dim_h: f64,
    pub dim_u: f64,
    /// Geometric pressure `h − ∫ψ^u`.
    pub p_u: f64,
    /// First return rate; absent when `h = 0`.
    pub r: Option<f64>,
    /// Manning's `δ = h / χ_u`.
    pub delta: f64,
}

fn same_base(a: &Sft, b: &Sft) -> bool {
    a.successor_lists() == b.successor_lists()
}

pub fn geometry_profile(model: &HyperbolicModel, mu: &MarkovMeasure) -> Result<GeometryProfile> {
    if !same_base(mu.base(), &model.base) {
        return Err(Error::InvalidInput("measure lives on a different shift".into()));
    }
    let h = metric_entropy(mu);
    let iu = integrate_potential(mu, &model.psi_u)?;
    let is = integrate_potential(mu, &model.psi_s)?;
    let chi_u = iu / model.d_u as f64;
    let chi_s = is / model.d_s as f64;
    Ok(GeometryProfile {
        entropy: h,
        chi_u,
        chi_s,
        dim_h: h / chi_u - h / chi_s,
        dim_u: h / iu,
        p_u: h - iu,
        r: (h > 0.0).then(|| q_map(model.d_u, model.d_s, iu, is, 1.0)),
        delta: h / chi_u,
    })
}

/// A realized ergodic measure and its dimension.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionPoint {
    #[serde(skip)]
    pub measure: MarkovMeasure,
    pub target: f64,
    pub dim: f64,
    pub entropy: f64,
    pub chi_u: f64,
    pub chi_s: f64,
    pub ergodic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionSpectrum {
    /// Level of the control potential along which measures are realized.
    pub level: f64,
    pub control: String,
    pub resolution: f64,
    pub points: Vec<DimensionPoint>,
    pub sup_estimate: f64,
    /// Every cell `[k·res, (k+1)·res)` below the sup estimate holds a point.
    pub covered: bool,
    pub gaps: Vec<[f64; 2]>,
}

impl DimensionSpectrum {
    /// Columns: `target,dim,entropy,chi_u,chi_s,ergodic`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,dim,entropy,chi_u,chi_s,ergodic\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sig(p.target),
                sig(p.dim),
                sig(p.entropy),
                sig(p.chi_u),
                sig(p.chi_s),
                p.ergodic
            ));
        }
        out
    }
}

/// Realizes ergodic measures whose dimensions fill `[0, sup)` at the given
/// resolution. Measures are taken along one level of a control potential
/// (`ψ^u`, `ψ^s`, or a symbol indicator, whichever first has a nontrivial
/// rotation interval), where entropy can be dialled from `H(a)` down to 0.
pub fn dimension_spectrum(model: &HyperbolicModel, resolution: f64) -> Result<DimensionSpectrum> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    let base = &model.base;
    if !structure_profile(base).irreducible {
        return Err(Error::InvalidInput("base shift must be irreducible".into()));
    }
    let dim_of = |mu: &MarkovMeasure| geometry_profile(model, mu).map(|g| g.dim_h);
    if topological_entropy(base)? <= 1e-12 {
        let eq = equilibrium_state(base, &Potential::constant(base, 0.0))?.equilibrium;
        let g = geometry_profile(model, &eq)?;
        return Ok(DimensionSpectrum {
            level: 0.0,
            control: "none".into(),
            resolution,
            points: vec![DimensionPoint {
                measure: eq.clone(),
                target: 0.0,
                dim: g.dim_h,
                entropy: g.entropy,
                chi_u: g.chi_u,
                chi_s: g.chi_s,
                ergodic: support_is_irreducible(&eq),
            }],
            sup_estimate: 0.0,
            covered: true,
            gaps: Vec::new(),
        });
    }
    let mut candidates = vec![("psi_u".to_string(), model.psi_u.clone()), ("psi_s".to_string(), model.psi_s.clone())];
    for s in 0..base.alphabet_size() {
        candidates.push((format!("indicator of symbol {s}"), Potential::indicator(base, s)));
    }
    let mut control = None;
    for (name, phi) in candidates {
        let (lo, hi) = rotation_interval(base, &phi)?;
        if hi.mean - lo.mean >= DEGENERATE_WIDTH {
            control = Some((name, phi, lo.mean, hi.mean));
            break;
        }
    }
    let (control, phi, lo, hi) = control.ok_or_else(|| Error::InvalidInput("no potential has a nontrivial rotation interval".into()))?;

    // Sup estimate: Gibbs witnesses along the level grid, refined around the
    // best level, plus equilibrium states of −tψ^u.
    let top_dim = |a: f64| -> Result<f64> { dim_of(&entropy_spectrum_level(base, &phi, a)?.witness) };
    let grid: Vec<f64> = (1..=41).map(|k| lo + (hi - lo) * k as f64 / 42.0).collect();
    let dims: Vec<f64> = grid.par_iter().map(|&a| top_dim(a)).collect::<Result<_>>()?;
    let best = (0..grid.len()).max_by(|&i, &j| dims[i].total_cmp(&dims[j])).unwrap();
    let (mut x0, mut x1) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let (c, d) = (x1 - golden * (x1 - x0), x0 + golden * (x1 - x0));
        if top_dim(c)? >= top_dim(d)? {
            x1 = d;
        } else {
            x0 = c;
        }
    }
    let mut level = 0.5 * (x0 + x1);
    let mut level_dim = top_dim(level)?;
    if dims[best] > level_dim {
        level = grid[best];
        level_dim = dims[best];
    }
    let mut sup_estimate = level_dim;
    for k in 0..=8 {
        let t = k as f64 / 4.0;
        let eq = equilibrium_state(base, &model.psi_u.map(|v| -t * v))?.equilibrium;
        sup_estimate = sup_estimate.max(dim_of(&eq)?);
    }
    let top_entropy = entropy_spectrum_level(base, &phi, level)?.entropy;

    let cells = ((sup_estimate + 1e-9) / resolution).floor() as usize;
    let targets: Vec<f64> = (0..cells)
        .map(|k| (k as f64 + 0.5) * resolution)
        .filter(|&d| d < level_dim)
        .collect();
    let realize_dim = |h: f64| -> Result<(f64, DimensionPoint)> {
        let r = realize_target(base, &phi, &RealizationTarget::new(level, h))?;
        let g = geometry_profile(model, &r.measure)?;
        Ok((
            g.dim_h,
            DimensionPoint {
                ergodic: support_is_irreducible(&r.measure),
                measure: r.measure,
                target: 0.0,
                dim: g.dim_h,
                entropy: g.entropy,
                chi_u: g.chi_u,
                chi_s: g.chi_s,
            },
        ))
    };
    let mut points: Vec<DimensionPoint> = targets
        .par_iter()
        .map(|&d| {
            let mut found = None;
            let root = bracketed_root(
                |h| {
                    let (dim, p) = realize_dim(h)?;
                    found = Some(p);
                    Ok(dim - d)
                },
                0.0,
                top_entropy,
                -d,
                level_dim - d,
                resolution / 4.0,
            );
            match (root, found) {
                (Ok(_), Some(p)) => Ok(Some(DimensionPoint { target: d, ..p })),
                (Ok(_), None) | (Err(Error::NonConvergence { .. }), _) => Ok(None),
                (Err(e), _) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    points.sort_by(|a, b| a.target.total_cmp(&b.target));
    let gaps: Vec<[f64; 2]> = (0..cells)
        .map(|k| [k as f64 * resolution, (k + 1) as f64 * resolution])
        .filter(|cell| !points.iter().any(|p| p.ergodic && p.dim >= cell[0] && p.dim < cell[1]))
        .collect();
    Ok(DimensionSpectrum {
        level,
        control,
        resolution,
        covered: gaps.is_empty(),
        gaps,
        points,
        sup_estimate,
    })
}

/// Lyapunov vector of `mu`: each bundle exponent repeated by its dimension,
/// in nonincreasing order.
pub fn lyapunov_vector_profile(model: &HyperbolicModel, mu: &MarkovMeasure) -> Result<Vec<f64>> {
    if !same_base(mu.base(), &model.base) {
        return Err(Error::BundleMismatch("measure lives on a different shift".into()));
    }
    let mut out = Vec::new();
    for (psi, d) in model.bundle_list() {
        let chi = integrate_potential(mu, psi).map_err(|e| Error::BundleMismatch(e.to_string()))? / d as f64;
        out.extend(std::iter::repeat(chi).take(d));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Rotation set of the normalized bundle potentials `(ψ^1/d_1, …)`.
pub fn lyapunov_rotation_set(model: &HyperbolicModel, direction_count: usize) -> Result<RotationSet> {
    let scaled: Vec<Potential> = model
        .bundle_list()
        .iter()
        .map(|(psi, d)| psi.map(|v| v / *d as f64))
        .collect();
    let refs: Vec<&Potential> = scaled.iter().collect();
    rotation_set(&model.base, &refs, direction_count)
}

/// Real 2×2 matrix `[[a, b], [c, d]]`.
pub type Mat2 = [[f64; 2]; 2];

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Operator norm, the largest singular value.
pub fn operator_norm(a: &Mat2) -> f64 {
    let p = (a[0][0] + a[1][1]).hypot(a[1][0] - a[0][1]);
    let q = (a[0][0] - a[1][1]).hypot(a[1][0] + a[0][1]);
    0.5 * (p + q)
}

/// Generators of a one-step SL(2,R) cocycle over the full shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cocycle {
    pub matrices: Vec<Mat2>,
}

impl Cocycle {
    pub fn new(matrices: Vec<Mat2>) -> Result<Cocycle> {
        if matrices.is_empty() {
            return Err(Error::InvalidInput("a cocycle needs at least one matrix".into()));
        }
        for (i, a) in matrices.iter().enumerate() {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if (det - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("matrix {i} has determinant {det}, not 1")));
            }
        }
        Ok(Cocycle { matrices })
    }

    /// `A_{w_{n−1}} ⋯ A_{w_0}`.
    pub fn product(&self, word: &[usize]) -> Mat2 {
        word.iter().fold(IDENTITY, |p, &s| mul(&self.matrices[s], &p))
    }
}

/// Words up to this many are integrated exactly.
const EXACT_WORD_CAP: usize = 1 << 26;
const MONTE_CARLO_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleExponent {
    /// `a_n = ∫ log‖Aⁿ‖ dν` for `n = 1..=n_max`.
    pub a: Vec<f64>,
    /// `a_n` is exact for `n ≤ exact_up_to`, sampled beyond.
    pub exact_up_to: usize,
    /// `a_{n_max} / n_max`.
    pub estimate: f64,
    /// `a_{n_max} − a_{n_max − 1}`.
    pub increment_estimate: f64,
    /// `min_{k ≤ n} a_k / k` for each `n`.
    pub upper_bounds: Vec<f64>,
    pub fekete_bound: f64,
    /// `a_{m+n} ≤ a_m + a_n + 1e-9` on the exact range.
    pub subadditive: bool,
}

/// One-step transitions of `nu` indexed by the next symbol.
struct Chain {
    order: usize,
    /// `next[state][symbol] = (state, probability)`.
    next: Vec<Vec<Option<(usize, f64)>>>,
}

impl Chain {
    fn new(nu: &MarkovMeasure) -> Chain {
        let g = nu.graph();
        let n = nu.base().alphabet_size();
        let next = (0..g.blocks.len())
            .map(|i| {
                let mut row = vec![None; n];
                for (&j, &p) in g.sft.successors(i).iter().zip(&nu.kernel()[i]) {
                    row[*g.blocks[j].last().unwrap()] = Some((j, p));
                }
                row
            })
            .collect();
        Chain { order: nu.order(), next }
    }
}

pub fn cocycle_top_exponent(cocycle: &Cocycle, nu: &MarkovMeasure, n_max: usize, seed: u64) -> Result<CocycleExponent> {
    let n_sym = cocycle.matrices.len();
    if nu.base().alphabet_size() != n_sym {
        return Err(Error::InvalidInput(format!(
            "measure has {} symbols but the cocycle has {n_sym} matrices",
            nu.base().alphabet_size()
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    let mut exact = 0;
    while exact < n_max && n_sym.checked_pow(exact as u32 + 1).is_some_and(|c| c <= EXACT_WORD_CAP) {
        exact += 1;
    }
    let mut a = vec![0.0; n_max + 1];
    let chain = Chain::new(nu);
    let m = chain.order;
    // Words shorter than the chain order have no state yet; enumerate them
    // directly, then continue from every admissible m-block.
    let g = nu.graph();
    for len in 1..=exact.min(m) {
        for word in higher_block_recode(nu.base(), len)?.blocks {
            let p = crate::measures::CylinderMeasure::cylinder(nu, &word);
            if p > 0.0 {
                a[len] += p * operator_norm(&cocycle.product(&word)).ln();
            }
        }
    }
    if exact > m {
        let starts: Vec<(usize, f64, Mat2)> = (0..g.blocks.len())
            .filter(|&i| nu.stationary()[i] > 0.0)
            .map(|i| (i, nu.stationary()[i], cocycle.product(&g.blocks[i])))
            .collect();
        let partial: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&(state, p, prod)| {
                let mut acc = vec![[0.0; 2]; exact + 1];
                dfs(&chain, cocycle, state, p, prod, m, exact, &mut acc);
                acc.iter().map(|[s, c]| s + c).collect()
            })
            .collect();
        for acc in partial {
            for k in m + 1..=exact {
                a[k] += acc[k];
            }
        }
    }
    if exact < n_max {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths: Vec<Vec<usize>> = (0..MONTE_CARLO_SAMPLES).map(|_| nu.sample_path(n_max, &mut rng)).collect();
        let sums: Vec<Vec<f64>> = paths
            .par_iter()
            .map(|path| {
                let mut prod = IDENTITY;
                let mut scale = 0.0;
                let mut out = vec![0.0; n_max + 1];
                for (k, &s) in path.iter().enumerate() {
                    prod = mul(&cocycle.matrices[s], &prod);
                    let norm = operator_norm(&prod);
                    out[k + 1] = scale + norm.ln();
                    if norm > 1e100 {
                        prod.iter_mut().flatten().for_each(|v| *v /= norm);
                        scale += norm.ln();
                    }
                }
                out
            })
            .collect();
        for k in exact + 1..=n_max {
            a[k] = sums.iter().map(|s| s[k]).sum::<f64>() / MONTE_CARLO_SAMPLES as f64;
        }
    }
    let a: Vec<f64> = a[1..].to_vec();
    let mut upper_bounds = Vec::with_capacity(n_max);
    let mut best = f64::INFINITY;
    for (k, v) in a.iter().enumerate() {
        best = best.min(v / (k + 1) as f64);
        upper_bounds.push(best);
    }
    let mut subadditive = true;
    for p in 1..=exact {
        for q in 1..=exact - p {
            if a[p + q - 1] > a[p - 1] + a[q - 1] + 1e-9 {
                subadditive = false;
            }
        }
    }
    Ok(CocycleExponent {
        estimate: a[n_max - 1] / n_max as f64,
        increment_estimate: if n_max >= 2 { a[n_max - 1] - a[n_max - 2] } else { a[0] },
        exact_up_to: exact,
        fekete_bound: best,
        upper_bounds,
        subadditive,
        a,
    })
}

/// Neumaier-compensated `acc += x`, stored as `[sum, compensation]`.
fn add_compensated(acc: &mut [f64; 2], x: f64) {
    let t = acc[0] + x;
    if acc[0].abs() >= x.abs() {
        acc[1] += (acc[0] - t) + x;
    } else {
        acc[1] += (x - t) + acc[0];
    }
    acc[0] = t;
}

#[allow(clippy::too_many_arguments)]
fn dfs(chain: &Chain, cocycle: &Cocycle, state: usize, p: f64, prod: Mat2, len: usize, max: usize, acc: &mut [[f64; 2]]) {
    if len == max {
        return;
    }
    for (s, step) in chain.next[state].iter().enumerate() {
        let Some((next, q)) = *step else { continue };
        let w = p * q;
        if w <= 0.0 {
            continue;
        }
        let next_prod = mul(&cocycle.matrices[s], &prod);
        add_compensated(&mut acc[len + 1], w * operator_norm(&next_prod).ln());
        dfs(chain, cocycle, next, w, next_prod, len + 1, max, acc);
    }
}

/// First word (by length, then lexicographically) of length at most `max_len`
/// whose product is elliptic, `|trace| < 2`.
pub fn elliptic_witness(cocycle: &Cocycle, max_len: usize) -> Result<Option<Vec<usize>>> {
    if max_len > 16 {
        return Err(Error::InvalidInput("search length is limited to 16".into()));
    }
    let n = cocycle.matrices.len();
    let mut layer: Vec<(Vec<usize>, Mat2)> = vec![(Vec::new(), IDENTITY)];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * n);
        for (word, prod) in &layer {
            for s in 0..n {
                let p = mul(&cocycle.matrices[s], prod);
                let mut w = word.clone();
                w.push(s);
                next.push((w, p));
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some((w, _)) = next.iter().find(|(_, p)| (p[0][0] + p[1][1]).abs() < 2.0 - 1e-12) {
            return Ok(Some(w.clone()));
        }
        layer = next;
    }
    Ok(None)
}

/// `(1/n) log` of the derivative of the projective action of `Aⁿ(ξ)` at the
/// direction `v`, with `ξ` the word repeated periodically. For `det A = 1`
/// the derivative of `v ↦ Av/‖Av‖` on the circle is `1/‖Av‖²`.
pub fn fiber_exponent(cocycle: &Cocycle, word: &[usize], v: [f64; 2], n: usize) -> Result<f64> {
    if word.is_empty() || n == 0 {
        return Err(Error::InvalidInput("word and n must be nonempty".into()));
    }
    if let Some(&s) = word.iter().find(|&&s| s >= cocycle.matrices.len()) {
        return Err(Error::InvalidInput(format!("symbol {s} has no matrix")));
    }
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("direction must be nonzero".into()));
    }
    let mut x = [v[0] / norm, v[1] / norm];
    let mut log_derivative = 0.0;
    for k in 0..n {
        let a = &cocycle.matrices[word[k % word.len()]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let y = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        let len = (y[0] * y[0] + y[1] * y[1]).sqrt();
        log_derivative += (det.abs() / (len * len)).ln();
        x = [y[0] / len, y[1] / len];
    }
    Ok(log_derivative / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleSpectrumRow {
    /// Block length of the approximant `(1/k) log‖A^k‖`.
    pub k: usize,
    pub level: f64,
    /// `H(a)` of the approximant; absent outside its rotation interval.
    pub entropy: Option<f64>,
    pub interval: [f64; 2],
}

/// Lyapunov–entropy spectrum through the locally constant approximants
/// `φ_k(w) = (1/k) log‖A^k(w)‖` on `base`.
pub fn cocycle_entropy_spectrum(cocycle: &Cocycle, base: &Sft, levels: &[f64], depths: &[usize]) -> Result<Vec<CocycleSpectrumRow>> {
    if base.alphabet_size() != cocycle.matrices.len() {
        return Err(Error::InvalidInput("base alphabet and cocycle size differ".into()));
    }
    let mut rows = Vec::new();
    for &k in depths {
        let phi = Potential::from_fn(base, k, |w| operator_norm(&cocycle.product(w)).ln() / k as f64)?;
        let (lo, hi) = rotation_interval(base, &phi)?;
        let out: Vec<CocycleSpectrumRow> = levels
            .par_iter()
            .map(|&a| {
                let entropy = match entropy_spectrum_level(base, &phi, a) {
                    Ok(s) => Some(s.entropy),
                    Err(Error::LevelOutsideInterior { .. }) | Err(Error::DegenerateDirection { .. }) => None,
                    Err(e) => return Err(e),
                };
                Ok(CocycleSpectrumRow {
                    k,
                    level: a,
                    entropy,
                    interval: [lo.mean, hi.mean],
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(out);
    }
    Ok(rows)
}

/// Columns: `k,level,H,lo,hi`; `H` is empty outside the interval.
pub fn cocycle_spectrum_csv(rows: &[CocycleSpectrumRow]) -> String {
    let mut out = String::from("k,level,H,lo,hi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k,
            sig(r.level),
            r.entropy.map(sig).unwrap_or_default(),
            sig(r.interval[0]),
            sig(r.interval[1])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_model() -> HyperbolicModel {
        let base = Sft::full_shift(2);
        let l2 = 2f64.ln();
        HyperbolicModel::new(base.clone(), Potential::constant(&base, l2), Potential::constant(&base, -l2), 1, 1).unwrap()
    }

    #[test]
    fn geometry_of_the_maximal_measure() {
        let model = constant_model();
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let g = geometry_profile(&model, &mu).unwrap();
        let l2 = 2f64.ln();
        assert!((g.dim_h - 2.0).abs() < 1e-12);
        assert!((g.dim_u - 1.0).abs() < 1e-12);
        assert!(g.p_u.abs() < 1e-12);
        assert!((g.r.unwrap() - 2.0 / l2).abs() < 1e-12);
        assert!((g.delta - 1.0).abs() < 1e-12);
        let periodic = MarkovMeasure::periodic(&model.base, &[0, 1]).unwrap();
        let g = geometry_profile(&model, &periodic).unwrap();
        assert_eq!(g.dim_h, 0.0);
        assert!((g.p_u + l2).abs() < 1e-12);
        assert_eq!(g.r, None);
    }

    #[test]
    fn doubling_psi_u_with_two_dimensions_keeps_chi_u() {
        let base = Sft::full_shift(2);
        let l2 = 2f64.ln();
        let model =
            HyperbolicModel::new(base.clone(), Potential::constant(&base, 2.0 * l2), Potential::constant(&base, -l2), 2, 1).unwrap();
        let g = geometry_profile(&model, &MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap()).unwrap();
        assert!((g.chi_u - l2).abs() < 1e-12);
        assert!((g.dim_u - 0.5).abs() < 1e-12);
        assert!((g.dim_h - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let base = Sft::full_shift(2);
        let bad = HyperbolicModel::new(base.clone(), Potential::symbol_value(&base), Potential::constant(&base, -1.0), 1, 1);
        assert!(matches!(bad, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn normalized_model_has_zero_pressure() {
        let base = Sft::golden_mean();
        let raw_u = Potential::from_fn(&base, 1, |b| 1.0 + b[0] as f64).unwrap();
        let raw_s = Potential::from_fn(&base, 1, |b| -2.0 - b[0] as f64).unwrap();
        let model = HyperbolicModel::normalized(base.clone(), &raw_u, &raw_s, 1, 1).unwrap();
        assert!(pressure(&base, &model.psi_u.map(|v| -v)).unwrap().abs() < 1e-10);
        assert!(pressure(&base, &model.psi_s).unwrap().abs() < 1e-10);
    }

    #[test]
    fn lyapunov_vectors() {
        let base = Sft::full_shift(2);
        let model = constant_model();
        let mu = MarkovMeasure::bernoulli(&[0.3, 0.7]).unwrap();
        let l2 = 2f64.ln();
        let v = lyapunov_vector_profile(&model, &mu).unwrap();
        assert!((v[0] - l2).abs() < 1e-12 && (v[1] + l2).abs() < 1e-12);
        let bundles = vec![
            Bundle {
                psi: Potential::constant(&base, 2f64.ln()),
                dim: 1,
            },
            Bundle {
                psi: Potential::constant(&base, 3f64.ln() * 2.0),
                dim: 2,
            },
        ];
        let model = model.with_bundles(bundles).unwrap();
        let v = lyapunov_vector_profile(&model, &mu).unwrap();
        let l3 = 3f64.ln();
        assert!((v[0] - l3).abs() < 1e-12 && (v[1] - l3).abs() < 1e-12 && (v[2] - l2).abs() < 1e-12);
    }

    #[test]
    fn rotation_cocycle_has_zero_exponent() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = Cocycle::new(vec![[[c, -s], [s, c]], [[c, s], [-s, c]]]).unwrap();
        let nu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let e = cocycle_top_exponent(&rot, &nu, 10, 0).unwrap();
        assert!(e.a.iter().all(|v| v.abs() < 1e-12));
        assert!(fiber_exponent(&rot, &[0, 1, 1], [1.0, 2.0], 30).unwrap().abs() < 1e-12);
    }

    #[test]
    fn elliptic_witnesses() {
        let quarter = Cocycle::new(vec![[[0.0, -1.0], [1.0, 0.0]]]).unwrap();
        assert_eq!(elliptic_witness(&quarter, 3).unwrap(), Some(vec![0]));
        let diag = Cocycle::new(vec![[[2.0, 0.0], [0.0, 0.5]]]).unwrap();
        assert_eq!(elliptic_witness(&diag, 8).unwrap(), None);
        // both generators are hyperbolic, the product has trace 1.75
        let pair = Cocycle::new(vec![[[2.0, 0.0], [0.0, 0.5]], [[0.25, 0.75], [-0.5, 2.5]]]).unwrap();
        assert_eq!(elliptic_witness(&pair, 1).unwrap(), None);
        assert_eq!(elliptic_witness(&pair, 2).unwrap(), Some(vec![0, 1]));
    }

    #[test]
    fn operator_norm_matches_svd() {
        let a = [[1.5, -0.3], [0.7, 0.2]];
        let m = nalgebra::Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
        let sv = m.singular_values();
        assert!((operator_norm(&a) - sv.max()).abs() < 1e-12);
    }
}
