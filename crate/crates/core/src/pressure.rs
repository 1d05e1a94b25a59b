//! Pressure, Gibbs equilibrium states and pressure derivatives for locally
//! constant potentials.
//!
//! A depth-`k` potential lives on the edges of the `m`-block graph with
//! `m = max(k − 1, 1)`; the pressure is the log of the Perron root of the
//! edge-weighted matrix `M_ij = e^{φ(i,j)}`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{dense_stationary, MarkovMeasure, Potential};
use crate::perron::{self, PowerOptions, SparseMatrix};
use crate::sft::{higher_block_recode_with, structure_profile, Caps, Recoding, Sft};

/// Edge-weight spread (in nats) above which matrices are balanced before
/// exponentiation.
const BALANCE_SPREAD: f64 = 30.0;

/// Linear family `q ↦ Σ q_k f_k` of edge functions on a block graph.
#[derive(Debug, Clone)]
pub struct EdgeModel {
    base: Arc<Sft>,
    graph: Arc<Recoding>,
    period: usize,
    irreducible: bool,
    /// `features[k][i][t]`: value of `f_k` on the edge `i -> successors(i)[t]`.
    features: Vec<Vec<Vec<f64>>>,
    pub opts: PowerOptions,
}

/// Equilibrium state of one member of an [`EdgeModel`] family.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub pressure: f64,
    pub entropy: f64,
    /// `∫ f_k dμ` for each feature.
    pub averages: Vec<f64>,
    pub measure: MarkovMeasure,
    right: Vec<f64>,
    left: Vec<f64>,
}

impl GibbsState {
    /// `|h + Σ q_k ∫f_k − P|`.
    pub fn gap(&self, q: &[f64]) -> f64 {
        let integral: f64 = q.iter().zip(&self.averages).map(|(a, b)| a * b).sum();
        (self.entropy + integral - self.pressure).abs()
    }
}

pub(crate) fn order_for(potentials: &[&Potential]) -> usize {
    potentials
        .iter()
        .map(|p| p.depth().saturating_sub(1))
        .max()
        .unwrap_or(1)
        .max(1)
}

impl EdgeModel {
    pub fn new(sft: &Sft, potentials: &[&Potential]) -> Result<EdgeModel> {
        EdgeModel::with_order(sft, potentials, order_for(potentials))
    }

    /// Uses the `order`-block graph, which must be at least as deep as the
    /// potentials need.
    pub fn with_order(sft: &Sft, potentials: &[&Potential], order: usize) -> Result<EdgeModel> {
        if order < order_for(potentials) {
            return Err(Error::InvalidInput("block order too small for the potentials".into()));
        }
        let graph = Arc::new(higher_block_recode_with(sft, order, &Caps::default())?);
        let features = potentials
            .iter()
            .map(|phi| edge_values(&graph, |b| phi.eval(b)))
            .collect();
        EdgeModel::from_parts(Arc::new(sft.clone()), graph, features)
    }

    pub(crate) fn from_parts(
        base: Arc<Sft>,
        graph: Arc<Recoding>,
        features: Vec<Vec<Vec<f64>>>,
    ) -> Result<EdgeModel> {
        if !base.is_essential() {
            return Err(Error::InvalidInput("the SFT must be essential".into()));
        }
        let profile = structure_profile(&graph.sft);
        Ok(EdgeModel {
            base,
            graph,
            period: profile.period,
            irreducible: profile.irreducible,
            features,
            opts: PowerOptions::default(),
        })
    }

    pub fn base(&self) -> &Sft {
        &self.base
    }

    pub fn graph(&self) -> &Recoding {
        &self.graph
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Edge values of feature `k`.
    pub fn feature(&self, k: usize) -> &[Vec<f64>] {
        &self.features[k]
    }

    fn combined(&self, q: &[f64]) -> Vec<Vec<f64>> {
        let g = &self.graph.sft;
        (0..g.alphabet_size())
            .map(|i| {
                (0..g.successors(i).len())
                    .map(|t| self.features.iter().zip(q).map(|(f, c)| c * f[i][t]).sum())
                    .collect()
            })
            .collect()
    }

    /// Replaces `w_ij` by `w_ij + x_j − x_i` with `x` an approximate log
    /// right Perron vector, so that `exp` of the result has a moderate
    /// dynamic range. The matrix changes by a diagonal similarity, which
    /// keeps the spectral radius and the Gibbs kernel.
    fn balanced(&self, w: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
        let (lo, hi) = w
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo <= BALANCE_SPREAD {
            return None;
        }
        let g = &self.graph.sft;
        let n = g.alphabet_size();
        let lse = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
            let v: Vec<f64> = vals.collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        };
        let mut x = vec![0.0; n];
        for _ in 0..(10 * n + 100).min(5000) {
            let y: Vec<f64> = (0..n)
                .map(|i| lse(&mut g.successors(i).iter().zip(&w[i]).map(|(&j, &v)| v + x[j])))
                .collect();
            let (glo, ghi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), i| {
                (a.min(y[i] - x[i]), b.max(y[i] - x[i]))
            });
            if ghi - glo < 1e-3 {
                break;
            }
            let level = 0.5 * (glo + ghi);
            for i in 0..n {
                let (a, b) = (y[i], x[i] + level);
                x[i] = a.max(b) + (-(a - b).abs()).exp().ln_1p();
            }
            let top = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            x.iter_mut().for_each(|v| *v -= top);
        }
        Some(
            (0..n)
                .map(|i| g.successors(i).iter().zip(&w[i]).map(|(&j, &v)| v + x[j] - x[i]).collect())
                .collect(),
        )
    }

    fn weighted(&self, w: &[Vec<f64>]) -> (SparseMatrix, f64) {
        let wmax = w
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let g = &self.graph.sft;
        let rows = (0..g.alphabet_size())
            .map(|i| {
                g.successors(i)
                    .iter()
                    .zip(&w[i])
                    .map(|(&j, &v)| (j, (v - wmax).exp()))
                    .collect()
            })
            .collect();
        (SparseMatrix { rows }, wmax)
    }

    /// Pressure of `Σ q_k f_k`; the maximum over irreducible components when
    /// the graph is reducible.
    pub fn pressure(&self, q: &[f64]) -> Result<f64> {
        self.check(q)?;
        let w = self.combined(q);
        if self.irreducible {
            let (m, shift) = self.weighted(&self.balanced(&w).unwrap_or(w));
            return Ok(perron::perron(&m, self.period, None, &self.opts)?.lambda.ln() + shift);
        }
        let succ = self.graph.sft.successor_lists();
        let (comp, ncomp) = perron::scc(succ);
        let mut best: Option<f64> = None;
        for c in 0..ncomp {
            let verts: Vec<usize> = (0..succ.len()).filter(|&v| comp[v] == c).collect();
            let mut local = vec![usize::MAX; succ.len()];
            for (k, &v) in verts.iter().enumerate() {
                local[v] = k;
            }
            let mut sub = vec![Vec::new(); verts.len()];
            let mut rows = vec![Vec::new(); verts.len()];
            let mut wmax = f64::NEG_INFINITY;
            for (k, &v) in verts.iter().enumerate() {
                for (t, &j) in succ[v].iter().enumerate() {
                    if local[j] != usize::MAX {
                        sub[k].push(local[j]);
                        rows[k].push((local[j], w[v][t]));
                        wmax = wmax.max(w[v][t]);
                    }
                }
            }
            if sub.iter().all(|r| r.is_empty()) {
                continue;
            }
            let (p, _) = perron::period_and_classes(&sub, 0);
            for row in rows.iter_mut() {
                for e in row.iter_mut() {
                    e.1 = (e.1 - wmax).exp();
                }
            }
            let lam = perron::perron(&SparseMatrix { rows }, p, None, &self.opts)?.lambda;
            let v = lam.ln() + wmax;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        best.ok_or(Error::EmptySystem)
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.features.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                self.features.len(),
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Equilibrium state of `Σ q_k f_k`, optionally warm-started from a
    /// nearby state of the same model.
    pub fn solve(&self, q: &[f64], warm: Option<&GibbsState>) -> Result<GibbsState> {
        self.check(q)?;
        if !self.irreducible {
            return Err(Error::InvalidInput(
                "equilibrium states need an irreducible SFT".into(),
            ));
        }
        let w = self.combined(q);
        let balanced = self.balanced(&w);
        let warm = if balanced.is_some() { None } else { warm };
        let (m, shift) = self.weighted(balanced.as_ref().unwrap_or(&w));
        let pf = perron::perron(
            &m,
            self.period,
            warm.map(|s| (s.right.as_slice(), s.left.as_slice())),
            &self.opts,
        )?;
        let lambda = pf.lambda;
        let r = &pf.right;
        let l = &pf.left;
        let kernel: Vec<Vec<f64>> = m
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut out: Vec<f64> = row.iter().map(|&(j, v)| v * r[j] / (lambda * r[i])).collect();
                let s: f64 = out.iter().sum();
                out.iter_mut().for_each(|p| *p /= s);
                out
            })
            .collect();
        let stationary = match dense_stationary(&self.graph, &kernel) {
            Some(pi) => pi,
            None => {
                let mut pi: Vec<f64> = l.iter().zip(r).map(|(a, b)| a * b).collect();
                let z: f64 = pi.iter().sum();
                pi.iter_mut().for_each(|p| *p /= z);
                pi
            }
        };

        let mut entropy = 0.0;
        let mut averages = vec![0.0; self.features.len()];
        for (i, row) in kernel.iter().enumerate() {
            let pi = stationary[i];
            for (t, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let mass = pi * p;
                    entropy -= mass * p.ln();
                    for (k, f) in self.features.iter().enumerate() {
                        averages[k] += mass * f[i][t];
                    }
                }
            }
        }
        let measure = MarkovMeasure::assemble(self.base.clone(), self.graph.clone(), kernel, stationary);
        Ok(GibbsState {
            pressure: lambda.ln() + shift,
            entropy: entropy.max(0.0),
            averages,
            measure,
            right: pf.right,
            left: pf.left,
        })
    }
}

/// Evaluates `f` on the `(m+1)`-block of every edge of an m-block graph.
pub(crate) fn edge_values(graph: &Recoding, f: impl Fn(&[usize]) -> f64) -> Vec<Vec<f64>> {
    let g = &graph.sft;
    (0..g.alphabet_size())
        .map(|i| {
            g.successors(i)
                .iter()
                .map(|&j| f(&graph.edge_block(i, j)))
                .collect()
        })
        .collect()
}

/// Pressure value together with its equilibrium state.
#[derive(Debug, Clone)]
pub struct PressureReport {
    pub value: f64,
    pub equilibrium: MarkovMeasure,
    /// `|h_eq + ∫φ dμ_eq − P|`.
    pub gap: f64,
}

/// `P(φ)` in nats.
pub fn pressure(sft: &Sft, phi: &Potential) -> Result<f64> {
    EdgeModel::new(sft, &[phi])?.pressure(&[1.0])
}

/// The unique equilibrium state of `φ` on an irreducible SFT.
pub fn equilibrium_state(sft: &Sft, phi: &Potential) -> Result<PressureReport> {
    let state = EdgeModel::new(sft, &[phi])?.solve(&[1.0], None)?;
    Ok(PressureReport {
        value: state.pressure,
        gap: state.gap(&[1.0]),
        equilibrium: state.measure,
    })
}

/// Value, gradient and Hessian of `q ↦ P(q·Φ)`.
#[derive(Debug, Clone, Serialize)]
pub struct PressureDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    /// Eigenvalues of the symmetrized Hessian, ascending.
    pub hessian_eigenvalues: Vec<f64>,
}

const HESSIAN_STEP: f64 = 1e-4;

pub fn pressure_gradient_hessian(sft: &Sft, potentials: &[&Potential], q: &[f64]) -> Result<PressureDerivatives> {
    if potentials.is_empty() || potentials.len() > 8 {
        return Err(Error::InvalidInput("between 1 and 8 potentials are supported".into()));
    }
    let model = EdgeModel::new(sft, potentials)?;
    derivatives(&model, q)
}

pub(crate) fn derivatives(model: &EdgeModel, q: &[f64]) -> Result<PressureDerivatives> {
    let d = q.len();
    let centre = model.solve(q, None)?;
    let mut hessian = vec![vec![0.0; d]; d];
    for l in 0..d {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[l] += HESSIAN_STEP;
        qm[l] -= HESSIAN_STEP;
        let gp = model.solve(&qp, Some(&centre))?.averages;
        let gm = model.solve(&qm, Some(&centre))?.averages;
        for k in 0..d {
            hessian[k][l] = (gp[k] - gm[k]) / (2.0 * HESSIAN_STEP);
        }
    }
    for k in 0..d {
        for l in 0..k {
            let s = 0.5 * (hessian[k][l] + hessian[l][k]);
            hessian[k][l] = s;
            hessian[l][k] = s;
        }
    }
    let mat = DMatrix::from_fn(d, d, |i, j| hessian[i][j]);
    let mut eig: Vec<f64> = mat.symmetric_eigenvalues().iter().cloned().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(PressureDerivatives {
        value: centre.pressure,
        gradient: centre.averages,
        hessian,
        hessian_eigenvalues: eig,
    })
}

/// One row of a pressure curve `q ↦ P(qφ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressurePoint {
    pub q: f64,
    pub value: f64,
    pub gradient: f64,
}

/// Evaluates `P(qφ)` and its derivative on a grid, in grid order.
pub fn pressure_curve(sft: &Sft, phi: &Potential, grid: &[f64]) -> Result<Vec<PressurePoint>> {
    let model = EdgeModel::new(sft, &[phi])?;
    grid.par_iter()
        .map(|&q| {
            let s = model.solve(&[q], None)?;
            Ok(PressurePoint {
                q,
                value: s.pressure,
                gradient: s.averages[0],
            })
        })
        .collect()
}

pub fn pressure_curve_csv(points: &[PressurePoint]) -> String {
    use crate::format::sig;
    let mut out = String::from("q,P,gradient\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", sig(p.q), sig(p.value), sig(p.gradient)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{integrate_potential, metric_entropy, CylinderMeasure};
    use crate::sft::topological_entropy;

    fn tilt(t: f64) -> (Sft, Potential) {
        let s = Sft::full_shift(2);
        let p = Potential::from_fn(&s, 1, |b| if b[0] == 1 { t } else { 0.0 }).unwrap();
        (s, p)
    }

    #[test]
    fn zero_and_constant_potentials() {
        let g = Sft::golden_mean();
        let h = topological_entropy(&g).unwrap();
        let zero = Potential::constant(&g, 0.0);
        assert!((pressure(&g, &zero).unwrap() - h).abs() < 1e-12);
        let c = Potential::constant(&g, 1.7);
        assert!((pressure(&g, &c).unwrap() - h - 1.7).abs() < 1e-12);
        let rep = equilibrium_state(&g, &zero).unwrap();
        assert!((metric_entropy(&rep.equilibrium) - h).abs() < 1e-10);
        assert!(rep.gap < 1e-9);
    }

    #[test]
    fn bernoulli_tilt_closed_form() {
        for t in [-1.0, 0.0, 1.0, 2.0] {
            let (s, p) = tilt(t);
            let rep = equilibrium_state(&s, &p).unwrap();
            let f: f64 = 1.0 + f64::exp(t);
            assert!((rep.value - f.ln()).abs() < 1e-12);
            let p1 = t.exp() / f;
            assert!((rep.equilibrium.cylinder(&[1]) - p1).abs() < 1e-12);
            assert!(rep.gap < 1e-9);
        }
    }

    #[test]
    fn periodic_graph_pressure() {
        let c = Sft::cycle(3);
        let phi = Potential::from_fn(&c, 1, |b| b[0] as f64).unwrap();
        let rep = equilibrium_state(&c, &phi).unwrap();
        assert!((rep.value - 1.0).abs() < 1e-12);
        assert!((integrate_potential(&rep.equilibrium, &phi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reducible_pressure_is_component_max() {
        let s = Sft::from_rows("two loops", &["11", "01"]).unwrap();
        let phi = Potential::from_fn(&s, 1, |b| if b[0] == 1 { 0.5 } else { 0.2 }).unwrap();
        assert!((pressure(&s, &phi).unwrap() - 0.5).abs() < 1e-12);
        assert!(equilibrium_state(&s, &phi).is_err());
    }

    #[test]
    fn gradient_at_zero_is_one_half() {
        let (s, _) = tilt(0.0);
        let phi = Potential::symbol_value(&s);
        let d = pressure_gradient_hessian(&s, &[&phi], &[0.0]).unwrap();
        assert!((d.gradient[0] - 0.5).abs() < 1e-12);
        assert!((d.hessian[0][0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn curve_csv_rows() {
        let (s, _) = tilt(0.0);
        let phi = Potential::symbol_value(&s);
        let pts = pressure_curve(&s, &phi, &[-1.0, 0.0, 1.0]).unwrap();
        let csv = pressure_curve_csv(&pts);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(2).unwrap().starts_with("0,0.69314718056,0.5"));
    }
}
