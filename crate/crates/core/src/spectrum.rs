//! Rotation sets, the conditional variational principle `H(a)`, ratio
//! spectra and the ratio interpolation weights.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::measures::{MarkovMeasure, Potential};
use crate::perron;
use crate::pressure::{derivatives, EdgeModel, GibbsState};
use crate::sft::{topological_entropy, Sft};
use crate::solve::increasing_root;

/// Levels closer than this to the rotation-interval boundary are rejected.
pub const INTERIOR_MARGIN: f64 = 1e-9;
/// Rotation intervals narrower than this are treated as a single point.
pub const DEGENERATE_WIDTH: f64 = 1e-8;
const RANK_TOL: f64 = 1e-8;

/// A periodic orbit attaining an extremal mean of an edge function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleWitness {
    pub mean: f64,
    /// One period, as base symbols.
    pub word: Vec<usize>,
    /// Cycle averages of every feature of the model.
    pub averages: Vec<f64>,
}

/// Maximum (or minimum) mean cycle of `Σ c_k f_k` by Karp's algorithm, run
/// on every strongly connected component.
pub fn mean_cycle(model: &EdgeModel, c: &[f64], maximize: bool) -> Result<CycleWitness> {
    let g = &model.graph().sft;
    let succ = g.successor_lists();
    let n = succ.len();
    let sign = if maximize { 1.0 } else { -1.0 };
    let weight = |i: usize, t: usize| -> f64 {
        sign * (0..model.feature_count())
            .map(|k| c[k] * model.feature(k)[i][t])
            .sum::<f64>()
    };
    let (comp, ncomp) = perron::scc(succ);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    for cid in 0..ncomp {
        let verts: Vec<usize> = (0..n).filter(|&v| comp[v] == cid).collect();
        let len = verts.len();
        let mut local = vec![usize::MAX; n];
        for (k, &v) in verts.iter().enumerate() {
            local[v] = k;
        }
        // incoming edges inside the component: (from_local, edge index t)
        let mut incoming: Vec<Vec<(usize, usize)>> = vec![Vec::new(); len];
        for (k, &v) in verts.iter().enumerate() {
            for (t, &w) in succ[v].iter().enumerate() {
                if local[w] != usize::MAX {
                    incoming[local[w]].push((k, t));
                }
            }
        }
        if incoming.iter().all(|e| e.is_empty()) {
            continue;
        }
        let ninf = f64::NEG_INFINITY;
        let mut d = vec![vec![ninf; len]; len + 1];
        let mut parent = vec![vec![(usize::MAX, usize::MAX); len]; len + 1];
        d[0].iter_mut().for_each(|x| *x = 0.0);
        for k in 1..=len {
            for v in 0..len {
                for &(u, t) in &incoming[v] {
                    if d[k - 1][u] == ninf {
                        continue;
                    }
                    let cand = d[k - 1][u] + weight(verts[u], t);
                    if cand > d[k][v] {
                        d[k][v] = cand;
                        parent[k][v] = (u, t);
                    }
                }
            }
        }
        let mut star: Option<(f64, usize)> = None;
        for v in 0..len {
            if d[len][v] == ninf {
                continue;
            }
            let mut worst = f64::INFINITY;
            for k in 0..len {
                if d[k][v] > ninf {
                    worst = worst.min((d[len][v] - d[k][v]) / (len - k) as f64);
                }
            }
            if star.map_or(true, |s| worst > s.0) {
                star = Some((worst, v));
            }
        }
        let Some((value, v_star)) = star else { continue };
        // walk back along the optimal length-n walk into v*
        let mut walk = vec![(v_star, usize::MAX); len + 1];
        let mut x = v_star;
        for k in (1..=len).rev() {
            let (u, t) = parent[k][x];
            walk[k - 1] = (u, t);
            x = u;
        }
        // walk[k] = (vertex at step k, edge index taken to reach step k+1)
        let mut cycle_best: Option<(f64, Vec<(usize, usize)>)> = None;
        for j in 1..=len {
            for i in (0..j).rev() {
                if walk[i].0 == walk[j].0 {
                    let edges: Vec<(usize, usize)> = walk[i..j].iter().map(|&(u, t)| (verts[u], t)).collect();
                    let mean = edges.iter().map(|&(u, t)| weight(u, t)).sum::<f64>() / edges.len() as f64;
                    if cycle_best.as_ref().map_or(true, |b| mean > b.0) {
                        cycle_best = Some((mean, edges));
                    }
                    break;
                }
            }
        }
        let (mean, edges) = cycle_best.expect("a walk of n edges repeats a vertex");
        debug_assert!((mean - value).abs() <= 1e-9 * (1.0 + value.abs()));
        if best.as_ref().map_or(true, |b| mean > b.0) {
            best = Some((mean, edges));
        }
    }
    let (mean, edges) = best.ok_or(Error::EmptySystem)?;
    let rec = model.graph();
    let word = edges
        .iter()
        .map(|&(u, t)| *rec.blocks[g.successors(u)[t]].last().unwrap())
        .collect();
    let averages = (0..model.feature_count())
        .map(|k| edges.iter().map(|&(u, t)| model.feature(k)[u][t]).sum::<f64>() / edges.len() as f64)
        .collect();
    Ok(CycleWitness {
        mean: sign * mean,
        word,
        averages,
    })
}

/// Exact rotation interval `[min ∫φ, max ∫φ]` with extremal cycles.
pub fn rotation_interval(sft: &Sft, phi: &Potential) -> Result<(CycleWitness, CycleWitness)> {
    let model = EdgeModel::new(sft, &[phi])?;
    Ok((mean_cycle(&model, &[1.0], false)?, mean_cycle(&model, &[1.0], true)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerPoint {
    pub point: Vec<f64>,
    /// Dual vector whose equilibrium state has this point as its averages.
    pub witness_q: Vec<f64>,
}

/// Outer and inner approximations of `{∫Φ dμ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationSet {
    pub dimension_ambient: usize,
    pub affine_dim: usize,
    /// Coordinates (0-based) that chart the affine hull.
    pub i_aff: Vec<usize>,
    pub vertices: Vec<Vec<f64>>,
    pub inner_points: Vec<InnerPoint>,
    /// The rank decision was within a factor 10 of the tolerance.
    pub degenerate_tolerance: bool,
}

impl RotationSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

pub fn rotation_set(sft: &Sft, potentials: &[&Potential], direction_count: usize) -> Result<RotationSet> {
    let d = potentials.len();
    if d == 0 || d > 8 {
        return Err(Error::InvalidInput("between 1 and 8 potentials are supported".into()));
    }
    let model = EdgeModel::new(sft, potentials)?;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        points.push(mean_cycle(&model, &e, true)?.averages);
        points.push(mean_cycle(&model, &e, false)?.averages);
    }
    let centre = model.solve(&vec![0.0; d], None)?;
    let mut witnesses: Vec<(Vec<f64>, Vec<f64>)> = vec![(centre.averages.clone(), vec![0.0; d])];
    if d >= 2 {
        for u in directions(d, direction_count) {
            let mut prev: Option<GibbsState> = None;
            let mut t = 1.0;
            while t <= 64.0 {
                let q: Vec<f64> = u.iter().map(|x| x * t).collect();
                let s = model.solve(&q, prev.as_ref())?;
                let stable = prev.as_ref().is_some_and(|p| {
                    p.averages.iter().zip(&s.averages).all(|(a, b)| (a - b).abs() < 1e-9)
                });
                if t <= 1.0 {
                    witnesses.push((s.averages.clone(), q.clone()));
                }
                prev = Some(s);
                if stable {
                    break;
                }
                t *= 2.0;
            }
            points.push(prev.expect("at least one step").averages);
        }
    }
    let vertices = dedup(points);
    let (affine_dim, degenerate_tolerance, diffs) = affine_rank(&vertices, d);
    let i_aff = pivot_columns(&diffs, affine_dim);
    let chart = |p: &[f64]| -> Vec<f64> { i_aff.iter().map(|&i| p[i]).collect() };
    let hull: Vec<Vec<f64>> = vertices.iter().map(|v| chart(v)).collect();
    let vertices = extreme_points(vertices, &hull, affine_dim);
    let inner_points = witnesses
        .into_iter()
        .filter(|(p, _)| inside_chart(&hull, &chart(p), affine_dim))
        .map(|(point, witness_q)| InnerPoint { point, witness_q })
        .collect();
    Ok(RotationSet {
        dimension_ambient: d,
        affine_dim,
        i_aff,
        vertices,
        inner_points,
        degenerate_tolerance,
    })
}

/// Keeps the candidates that are extreme in the chart, for charts of
/// dimension at most 2.
fn extreme_points(points: Vec<Vec<f64>>, chart: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => points.into_iter().take(1).collect(),
        1 => {
            let by = |i: &usize, j: &usize| chart[*i][0].total_cmp(&chart[*j][0]);
            let lo = (0..chart.len()).min_by(by).expect("nonempty");
            let hi = (0..chart.len()).max_by(by).expect("nonempty");
            vec![points[lo].clone(), points[hi].clone()]
        }
        2 => convex_hull_2d(chart)
            .iter()
            .filter_map(|h| chart.iter().position(|c| c == h))
            .map(|i| points[i].clone())
            .collect(),
        _ => points,
    }
}

fn directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..count.max(4))
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count.max(4) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..count.max(2 * d))
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

fn dedup(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-9))
        {
            out.push(p);
        }
    }
    out
}

fn affine_rank(vertices: &[Vec<f64>], d: usize) -> (usize, bool, Vec<Vec<f64>>) {
    let diffs: Vec<Vec<f64>> = vertices[1..]
        .iter()
        .map(|v| v.iter().zip(&vertices[0]).map(|(a, b)| a - b).collect())
        .collect();
    if diffs.is_empty() {
        return (0, false, diffs);
    }
    let m = DMatrix::from_fn(diffs.len(), d, |i, j| diffs[i][j]);
    let sv = m.svd(false, false).singular_values;
    let rank = sv.iter().filter(|s| **s > RANK_TOL).count();
    let near = sv.iter().any(|s| *s > RANK_TOL / 10.0 && *s < RANK_TOL * 10.0);
    (rank, near, diffs)
}

/// Greedy column pivoting: picks `rank` coordinates whose projection keeps
/// the rank of the difference vectors.
fn pivot_columns(diffs: &[Vec<f64>], rank: usize) -> Vec<usize> {
    if rank == 0 {
        return Vec::new();
    }
    let mut rows: Vec<Vec<f64>> = diffs.to_vec();
    let d = rows[0].len();
    let mut chosen = Vec::new();
    let mut used_rows = vec![false; rows.len()];
    for _ in 0..rank {
        let mut best: Option<(f64, usize, usize)> = None;
        for col in 0..d {
            if chosen.contains(&col) {
                continue;
            }
            for (r, row) in rows.iter().enumerate() {
                if used_rows[r] {
                    continue;
                }
                let v = row[col].abs();
                if best.map_or(true, |b| v > b.0 + 1e-12) {
                    best = Some((v, r, col));
                }
            }
        }
        let Some((_, r, col)) = best else { break };
        used_rows[r] = true;
        chosen.push(col);
        let pivot = rows[r].clone();
        for (k, row) in rows.iter_mut().enumerate() {
            if k != r && pivot[col] != 0.0 {
                let f = row[col] / pivot[col];
                for (x, p) in row.iter_mut().zip(&pivot) {
                    *x -= f * p;
                }
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Membership in the convex hull of `hull` with margin, for charts of
/// dimension at most 2.
fn inside_chart(hull: &[Vec<f64>], p: &[f64], dim: usize) -> bool {
    match dim {
        0 => true,
        1 => {
            let lo = hull.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = hull.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            p[0] > lo + INTERIOR_MARGIN && p[0] < hi - INTERIOR_MARGIN
        }
        2 => {
            let poly = convex_hull_2d(hull);
            if poly.len() < 3 {
                return false;
            }
            (0..poly.len()).all(|i| {
                let a = &poly[i];
                let b = &poly[(i + 1) % poly.len()];
                let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                let cross = ex * (p[1] - a[1]) - ey * (p[0] - a[0]);
                cross / (ex * ex + ey * ey).sqrt() > INTERIOR_MARGIN
            })
        }
        _ => false,
    }
}

/// Counter-clockwise hull by the monotone chain.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64], a: &[f64], b: &[f64]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// `H(a)` with its dual parameter and the Gibbs witness.
#[derive(Debug, Clone)]
pub struct LevelSpectrum {
    pub level: f64,
    pub entropy: f64,
    pub q: f64,
    pub witness: MarkovMeasure,
    pub witness_entropy: f64,
    pub witness_level: f64,
}

/// Solves `∫f dμ_q = a` for the equilibrium family of `q·f` on a model with
/// a single feature. Returns the Gibbs state at the root.
pub(crate) fn dual_level(model: &EdgeModel, a: f64, tol: f64) -> Result<(f64, GibbsState)> {
    let mut last: Option<GibbsState> = None;
    let (q, _) = increasing_root(
        |q| {
            let s = model.solve(&[q], last.as_ref())?;
            let r = s.averages[0] - a;
            last = Some(s);
            Ok(r)
        },
        tol,
    )?;
    let state = model.solve(&[q], last.as_ref())?;
    Ok((q, state))
}

/// Conditional variational principle `H(a) = inf_q P(qφ) − qa`.
///
/// When the rotation interval is a single point the spectrum exists only at
/// that level, where it equals the topological entropy; other levels give
/// `DegenerateDirection`.
pub fn entropy_spectrum_level(sft: &Sft, phi: &Potential, a: f64) -> Result<LevelSpectrum> {
    let model = EdgeModel::new(sft, &[phi])?;
    level_on_model(&model, sft, a)
}

pub(crate) fn level_on_model(model: &EdgeModel, sft: &Sft, a: f64) -> Result<LevelSpectrum> {
    let lo = mean_cycle(model, &[1.0], false)?.mean;
    let hi = mean_cycle(model, &[1.0], true)?.mean;
    if hi - lo < DEGENERATE_WIDTH {
        if (a - lo).abs() <= DEGENERATE_WIDTH {
            let s = model.solve(&[0.0], None)?;
            return Ok(LevelSpectrum {
                level: a,
                entropy: topological_entropy(sft)?,
                q: 0.0,
                witness_entropy: s.entropy,
                witness_level: s.averages[0],
                witness: s.measure,
            });
        }
        return Err(Error::DegenerateDirection { value: lo });
    }
    if !(a > lo + INTERIOR_MARGIN && a < hi - INTERIOR_MARGIN) {
        return Err(Error::LevelOutsideInterior { level: a, lo, hi });
    }
    let (q, s) = dual_level(model, a, 1e-11)?;
    Ok(LevelSpectrum {
        level: a,
        entropy: (s.pressure - q * a).max(0.0),
        q,
        witness_entropy: s.entropy,
        witness_level: s.averages[0],
        witness: s.measure,
    })
}

/// Entropy spectrum of the ratio `∫φ / ∫ψ` at level `a`.
pub fn ratio_spectrum_level(sft: &Sft, phi: &Potential, psi: &Potential, a: f64) -> Result<LevelSpectrum> {
    let min = psi.min_value();
    if !(min > 0.0) {
        return Err(Error::PsiNotPositive { min });
    }
    let chi = Potential::combine(sft, &[(1.0, phi), (-a, psi)])?;
    let model = EdgeModel::new(sft, &[&chi])?;
    let lo = mean_cycle(&model, &[1.0], false)?.mean;
    let hi = mean_cycle(&model, &[1.0], true)?.mean;
    if hi - lo >= DEGENERATE_WIDTH && !(0.0 > lo + INTERIOR_MARGIN && 0.0 < hi - INTERIOR_MARGIN) {
        let (rlo, rhi) = ratio_range(sft, phi, psi)?;
        return Err(Error::LevelOutsideInterior {
            level: a,
            lo: rlo,
            hi: rhi,
        });
    }
    let mut out = level_on_model(&model, sft, 0.0).map_err(|e| match e {
        Error::DegenerateDirection { .. } => match ratio_range(sft, phi, psi) {
            Ok((rlo, rhi)) => Error::LevelOutsideInterior {
                level: a,
                lo: rlo,
                hi: rhi,
            },
            Err(e) => e,
        },
        e => e,
    })?;
    let mphi = crate::measures::integrate_potential(&out.witness, phi)?;
    let mpsi = crate::measures::integrate_potential(&out.witness, psi)?;
    out.level = a;
    out.witness_level = mphi / mpsi;
    Ok(out)
}

/// `[min ∫φ/∫ψ, max ∫φ/∫ψ]` over invariant measures, by bisection on the
/// sign of the extremal means of `φ − rψ`.
pub fn ratio_range(sft: &Sft, phi: &Potential, psi: &Potential) -> Result<(f64, f64)> {
    let model = EdgeModel::new(sft, &[phi, psi])?;
    let bound = |maximize: bool| -> Result<f64> {
        // extremal ratios are attained on cycles; bracket by the block ratios
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (b, v) in phi.lift(sft, phi.depth().max(psi.depth()))?.values() {
            let r = v / psi.eval(b);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let m = mean_cycle(&model, &[1.0, -mid], maximize)?.mean;
            let above = if maximize { m > 0.0 } else { m >= 0.0 };
            if above {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    Ok((bound(false)?, bound(true)?))
}

/// `(a, h)` lies in the interior of `{(∫φ dμ, h_μ)}`.
pub fn is_interior_point(sft: &Sft, phi: &Potential, a: f64, h: f64) -> Result<bool> {
    match entropy_spectrum_level(sft, phi, a) {
        Ok(s) => Ok(h > 0.0 && h < s.entropy),
        Err(Error::LevelOutsideInterior { .. }) | Err(Error::DegenerateDirection { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// `H` on a grid of levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCurve {
    pub levels: Vec<f64>,
    #[serde(rename = "H")]
    pub entropy: Vec<f64>,
    pub q_dual: Vec<f64>,
    pub witness_entropy: Vec<f64>,
    pub witness_level: Vec<f64>,
    pub concave_certificate: bool,
}

impl SpectrumCurve {
    /// Columns: `a,H,q,witness_entropy,witness_level`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,H,q,witness_entropy,witness_level\n");
        for i in 0..self.levels.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                sig(self.levels[i]),
                sig(self.entropy[i]),
                sig(self.q_dual[i]),
                sig(self.witness_entropy[i]),
                sig(self.witness_level[i])
            ));
        }
        out
    }
}

pub fn entropy_spectrum_curve(sft: &Sft, phi: &Potential, levels: &[f64]) -> Result<SpectrumCurve> {
    let model = EdgeModel::new(sft, &[phi])?;
    let rows: Vec<LevelSpectrum> = levels
        .par_iter()
        .map(|&a| level_on_model(&model, sft, a))
        .collect::<Result<_>>()?;
    let entropy: Vec<f64> = rows.iter().map(|r| r.entropy).collect();
    let concave_certificate = concave(levels, &entropy, 1e-6);
    Ok(SpectrumCurve {
        levels: levels.to_vec(),
        q_dual: rows.iter().map(|r| r.q).collect(),
        witness_entropy: rows.iter().map(|r| r.witness_entropy).collect(),
        witness_level: rows.iter().map(|r| r.witness_level).collect(),
        entropy,
        concave_certificate,
    })
}

/// Second divided differences, scaled to unit spacing, are at most `tol`.
pub fn concave(x: &[f64], y: &[f64], tol: f64) -> bool {
    (1..x.len().saturating_sub(1)).all(|i| {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let slope_r = (y[i + 1] - y[i]) / h2;
        let slope_l = (y[i] - y[i - 1]) / h1;
        (slope_r - slope_l) * 0.5 * (h1 + h2) <= tol
    })
}

/// Multi-dimensional level: `H(a) = inf_q P(q·Φ) − q·a`.
#[derive(Debug, Clone)]
pub struct VectorLevelSpectrum {
    pub entropy: f64,
    pub q: Vec<f64>,
    pub witness: MarkovMeasure,
    pub residual: f64,
}

/// Damped Newton on `∇P(q) = a` with a ridge-regularized Hessian.
pub fn entropy_spectrum_point(sft: &Sft, potentials: &[&Potential], a: &[f64]) -> Result<VectorLevelSpectrum> {
    let d = potentials.len();
    if a.len() != d {
        return Err(Error::InvalidInput("level dimension does not match the potentials".into()));
    }
    let model = EdgeModel::new(sft, potentials)?;
    let mut q = vec![0.0; d];
    let objective = |s: &GibbsState, q: &[f64]| s.pressure - q.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    let mut state = model.solve(&q, None)?;
    for _ in 0..200 {
        let r: Vec<f64> = state.averages.iter().zip(a).map(|(g, t)| g - t).collect();
        let res = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if res < 1e-10 {
            return Ok(VectorLevelSpectrum {
                entropy: objective(&state, &q).max(0.0),
                q,
                witness: state.measure,
                residual: res,
            });
        }
        let der = derivatives(&model, &q)?;
        let h = DMatrix::from_fn(d, d, |i, j| der.hessian[i][j] + if i == j { 1e-10 } else { 0.0 });
        let step = h
            .lu()
            .solve(&nalgebra::DVector::from_vec(r.clone()))
            .ok_or_else(|| Error::InvalidInput("singular Hessian".into()))?;
        let f0 = objective(&state, &q);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = q.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            let s = model.solve(&cand, Some(&state))?;
            if objective(&s, &cand) <= f0 + 1e-14 || t < 1e-8 {
                q = cand;
                state = s;
                break;
            }
            t *= 0.5;
        }
    }
    let res = state
        .averages
        .iter()
        .zip(a)
        .map(|(g, t)| (g - t).abs())
        .fold(0.0, f64::max);
    Err(Error::NonConvergence {
        iterations: 200,
        residual: res,
    })
}

/// Weights `θ_ξ` with `Σθ = 1` whose combined ratios `Σθp_i / Σθq_i` equal
/// the target. Entry `ξ` of `pairs` is `(p^ξ, q^ξ)`; bit `i` of `ξ` clear
/// means `p_i/q_i ≥ target_i`, set means `≤`.
pub fn interpolate_ratio_weights(pairs: &[(Vec<f64>, Vec<f64>)], target: &[f64]) -> Result<Vec<f64>> {
    let d = target.len();
    if d == 0 || pairs.len() != 1 << d {
        return Err(Error::InvalidInput(format!("need 2^{d} pairs, got {}", pairs.len())));
    }
    for (xi, (p, q)) in pairs.iter().enumerate() {
        if p.len() != d || q.len() != d {
            return Err(Error::InvalidInput(format!("pair {xi} has the wrong dimension")));
        }
        for i in 0..d {
            if !(q[i] > 0.0) {
                return Err(Error::InvalidInput(format!("denominator {i} of pair {xi} is not positive")));
            }
            let r = p[i] / q[i];
            let plus = xi >> i & 1 == 0;
            if (plus && r < target[i]) || (!plus && r > target[i]) {
                return Err(Error::StraddlingViolated {
                    index: xi,
                    coordinate: i,
                });
            }
        }
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    Ok(interpolate(pairs, &idx, target, d))
}

/// Weights over `idx` (a face of the cube) matching the first `k` targets.
fn interpolate(pairs: &[(Vec<f64>, Vec<f64>)], idx: &[usize], target: &[f64], k: usize) -> Vec<f64> {
    if k == 0 {
        return vec![1.0];
    }
    let half = idx.len() / 2;
    let (plus, minus) = idx.split_at(half);
    let tp = interpolate(pairs, plus, target, k - 1);
    let tm = interpolate(pairs, minus, target, k - 1);
    let c = k - 1;
    let agg = |face: &[usize], w: &[f64]| -> (f64, f64) {
        face.iter().zip(w).fold((0.0, 0.0), |acc, (&xi, &t)| {
            (acc.0 + t * pairs[xi].0[c], acc.1 + t * pairs[xi].1[c])
        })
    };
    let (p1, q1) = agg(plus, &tp);
    let (p2, q2) = agg(minus, &tm);
    let tau = one_dim_weight((p1, q1), (p2, q2), target[c]);
    tp.iter()
        .map(|t| tau * t)
        .chain(tm.iter().map(|t| (1.0 - tau) * t))
        .collect()
}

/// `θ` with `(θp¹ + (1−θ)p²) / (θq¹ + (1−θ)q²) = a` when `p¹/q¹ ≥ a ≥ p²/q²`.
pub fn one_dim_weight(first: (f64, f64), second: (f64, f64), a: f64) -> f64 {
    let up = first.0 - a * first.1;
    let down = a * second.1 - second.0;
    if up + down <= 0.0 {
        return 1.0;
    }
    (down / (up + down)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_entropy(a: f64) -> f64 {
        -(a * a.ln() + (1.0 - a) * (1.0 - a).ln())
    }

    #[test]
    fn karp_on_symbol_value() {
        let s = Sft::full_shift(2);
        let phi = Potential::symbol_value(&s);
        let (lo, hi) = rotation_interval(&s, &phi).unwrap();
        assert_eq!((lo.mean, hi.mean), (0.0, 1.0));
        assert_eq!((lo.word.clone(), hi.word.clone()), (vec![0], vec![1]));
        let g = Sft::golden_mean();
        let one = Potential::indicator(&g, 1);
        let (lo, hi) = rotation_interval(&g, &one).unwrap();
        assert_eq!(lo.mean, 0.0);
        assert!((hi.mean - 0.5).abs() < 1e-15);
        assert_eq!(hi.word.len(), 2);
    }

    #[test]
    fn karp_depth_two() {
        let s = Sft::full_shift(2);
        // rewards alternation
        let phi = Potential::from_fn(&s, 2, |b| if b[0] != b[1] { 1.0 } else { -0.5 }).unwrap();
        let (lo, hi) = rotation_interval(&s, &phi).unwrap();
        assert!((hi.mean - 1.0).abs() < 1e-15);
        assert!((lo.mean + 0.5).abs() < 1e-15);
        assert_eq!(hi.word.len(), 2);
    }

    #[test]
    fn rotation_set_examples() {
        let s = Sft::full_shift(2);
        let phi = Potential::symbol_value(&s);
        let r = rotation_set(&s, &[&phi], 8).unwrap();
        assert_eq!(r.affine_dim, 1);
        assert_eq!(r.i_aff, vec![0]);
        assert!(r.inner_points.iter().any(|p| (p.point[0] - 0.5).abs() < 1e-12));
        let c = Potential::constant(&s, 2.5);
        let r = rotation_set(&s, &[&c], 8).unwrap();
        assert_eq!(r.affine_dim, 0);
        assert_eq!(r.vertices, vec![vec![2.5]]);
        let r = rotation_set(&s, &[&phi, &phi], 8).unwrap();
        assert_eq!(r.affine_dim, 1);
        assert_eq!(r.i_aff, vec![0]);
        let three = Sft::full_shift(3);
        let a = Potential::indicator(&three, 1);
        let b = Potential::indicator(&three, 2);
        let r = rotation_set(&three, &[&a, &b], 12).unwrap();
        assert_eq!(r.affine_dim, 2);
        assert!(!r.inner_points.is_empty());
    }

    #[test]
    fn symmetric_level() {
        let s = Sft::full_shift(2);
        let phi = Potential::symbol_value(&s);
        let l = entropy_spectrum_level(&s, &phi, 0.5).unwrap();
        assert!((l.entropy - 2f64.ln()).abs() < 1e-10);
        assert!(l.q.abs() < 1e-9);
        for a in [0.1, 0.25, 0.75] {
            let l = entropy_spectrum_level(&s, &phi, a).unwrap();
            assert!((l.entropy - binary_entropy(a)).abs() < 1e-9);
            assert!((l.witness_level - a).abs() < 1e-8);
            assert!((l.witness_entropy - l.entropy).abs() < 1e-8);
        }
        assert!(matches!(
            entropy_spectrum_level(&s, &phi, 1.0),
            Err(Error::LevelOutsideInterior { .. })
        ));
    }

    #[test]
    fn degenerate_direction() {
        let s = Sft::full_shift(2);
        let c = Potential::constant(&s, 0.3);
        let l = entropy_spectrum_level(&s, &c, 0.3).unwrap();
        assert!((l.entropy - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            entropy_spectrum_level(&s, &c, 0.4),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn ratio_reduces_with_unit_denominator() {
        let s = Sft::full_shift(2);
        let phi = Potential::symbol_value(&s);
        let one = Potential::constant(&s, 1.0);
        let r = ratio_spectrum_level(&s, &phi, &one, 0.3).unwrap();
        let l = entropy_spectrum_level(&s, &phi, 0.3).unwrap();
        assert!((r.entropy - l.entropy).abs() < 1e-10);
        assert!(matches!(
            ratio_spectrum_level(&s, &one, &one, 0.5),
            Err(Error::LevelOutsideInterior { .. })
        ));
        assert!(ratio_spectrum_level(&s, &one, &one, 1.0).is_ok());
        let neg = Potential::symbol_value(&s);
        assert!(matches!(
            ratio_spectrum_level(&s, &phi, &neg, 0.3),
            Err(Error::PsiNotPositive { .. })
        ));
        let (lo, hi) = ratio_range(&s, &phi, &Potential::from_fn(&s, 1, |b| 2.0 - b[0] as f64).unwrap()).unwrap();
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_examples() {
        let w = interpolate_ratio_weights(&[(vec![3.0], vec![2.0]), (vec![1.0], vec![2.0])], &[0.5]).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
        let w = interpolate_ratio_weights(&[(vec![3.0], vec![2.0]), (vec![1.0], vec![2.0])], &[1.5]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        let bad = interpolate_ratio_weights(&[(vec![1.0], vec![2.0]), (vec![3.0], vec![2.0])], &[1.0]);
        assert_eq!(
            bad,
            Err(Error::StraddlingViolated {
                index: 0,
                coordinate: 0
            })
        );
    }

    #[test]
    fn concavity_check() {
        assert!(concave(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.5], 1e-12));
        assert!(!concave(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.5], 1e-12));
    }

    #[test]
    fn vector_level_matches_scalar() {
        let s = Sft::full_shift(3);
        let a = Potential::indicator(&s, 1);
        let b = Potential::indicator(&s, 2);
        let v = entropy_spectrum_point(&s, &[&a, &b], &[0.2, 0.3]).unwrap();
        let exact = -(0.2f64 * 0.2f64.ln() + 0.3 * 0.3f64.ln() + 0.5 * 0.5f64.ln());
        assert!((v.entropy - exact).abs() < 1e-9);
    }
}
