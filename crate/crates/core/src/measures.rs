//! Locally constant potentials, Markov measures on SFTs, periodic and mixed
//! measures, and the weak* metric `ρ` with its Hausdorff distance.
//!
//! `ρ` is the series `Σ_j |∫φ_j dμ − ∫φ_j dν| / 2^j` over cylinder indicators
//! `φ_j`, enumerated by depth first and lexicographic block second, over all
//! `N^d` blocks of the alphabet (so indices do not depend on admissibility).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::perron::{self, PowerOptions, SparseMatrix};
use crate::sft::{format_block, higher_block_recode_with, structure_profile, Caps, Recoding, Sft, Word};

/// Function on admissible blocks of a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    depth: usize,
    values: BTreeMap<Vec<usize>, f64>,
}

impl Potential {
    /// Checks that exactly the admissible `depth`-blocks carry values.
    pub fn new(sft: &Sft, depth: usize, values: BTreeMap<Vec<usize>, f64>) -> Result<Potential> {
        if depth == 0 {
            return Err(Error::InvalidInput("potential depth must be at least 1".into()));
        }
        for (b, v) in &values {
            if b.len() != depth {
                return Err(Error::InvalidInput(format!(
                    "block {} has length {} but the depth is {depth}",
                    format_block(b),
                    b.len()
                )));
            }
            if !sft.is_admissible(b) {
                return Err(Error::InvalidInput(format!(
                    "value given on inadmissible block {}",
                    format_block(b)
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite value on {}", format_block(b))));
            }
        }
        let blocks = higher_block_recode_with(sft, depth, &Caps::default())?.blocks;
        if let Some(missing) = blocks.iter().find(|b| !values.contains_key(*b)) {
            return Err(Error::InvalidInput(format!(
                "admissible block {} has no value",
                format_block(missing)
            )));
        }
        Ok(Potential { depth, values })
    }

    pub fn from_fn(sft: &Sft, depth: usize, f: impl Fn(&[usize]) -> f64) -> Result<Potential> {
        let blocks = higher_block_recode_with(sft, depth.max(1), &Caps::default())?.blocks;
        let values = blocks.into_iter().map(|b| {
            let v = f(&b);
            (b, v)
        });
        Potential::new(sft, depth, values.collect())
    }

    pub fn constant(sft: &Sft, c: f64) -> Potential {
        Potential::from_fn(sft, 1, |_| c).expect("depth-1 potential")
    }

    /// `φ(x) = x_0` as a real number.
    pub fn symbol_value(sft: &Sft) -> Potential {
        Potential::from_fn(sft, 1, |b| b[0] as f64).expect("depth-1 potential")
    }

    pub fn indicator(sft: &Sft, symbol: usize) -> Potential {
        Potential::from_fn(sft, 1, |b| if b[0] == symbol { 1.0 } else { 0.0 }).expect("depth-1 potential")
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.values
    }

    /// Value on the leading `depth` symbols of `window`.
    pub fn eval(&self, window: &[usize]) -> f64 {
        self.values[&window[..self.depth]]
    }

    pub fn min_value(&self) -> f64 {
        self.values.values().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.values().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Potential {
        Potential {
            depth: self.depth,
            values: self.values.iter().map(|(b, v)| (b.clone(), f(*v))).collect(),
        }
    }

    /// Same function viewed at a larger depth.
    pub fn lift(&self, sft: &Sft, depth: usize) -> Result<Potential> {
        if depth < self.depth {
            return Err(Error::InvalidInput("cannot lower a potential's depth".into()));
        }
        if depth == self.depth {
            return Ok(self.clone());
        }
        Potential::from_fn(sft, depth, |b| self.eval(b))
    }

    /// `Σ c_i φ_i` at the largest depth among the terms.
    pub fn combine(sft: &Sft, terms: &[(f64, &Potential)]) -> Result<Potential> {
        let depth = terms.iter().map(|t| t.1.depth).max().unwrap_or(1);
        Potential::from_fn(sft, depth, |b| terms.iter().map(|(c, p)| c * p.eval(b)).sum())
    }
}

/// Anything that assigns probabilities to cylinders `[b_0 … b_{k-1}]`.
pub trait CylinderMeasure {
    fn alphabet_size(&self) -> usize;
    fn cylinder(&self, block: &[usize]) -> f64;
}

/// Stationary Markov chain of order `m` on an SFT: a chain on admissible
/// m-blocks whose transitions are the overlaps of the m-block recoding.
#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    base: Arc<Sft>,
    graph: Arc<Recoding>,
    /// `kernel[i][t]` is the probability of `i -> graph.sft.successors(i)[t]`.
    kernel: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    ergodic: bool,
}

fn block_graph(base: &Sft, order: usize) -> Result<Arc<Recoding>> {
    Ok(Arc::new(higher_block_recode_with(base, order, &Caps::default())?))
}

impl MarkovMeasure {
    /// Builds a measure from next-symbol rows, one per admissible m-block in
    /// lexicographic order; each row has one entry per symbol.
    pub fn build(base: &Sft, order: usize, rows: &[Vec<f64>]) -> Result<MarkovMeasure> {
        let graph = block_graph(base, order.max(1))?;
        let n = base.alphabet_size();
        if rows.len() != graph.blocks.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} kernel rows (admissible {}-blocks), got {}",
                graph.blocks.len(),
                order,
                rows.len()
            )));
        }
        let mut kernel = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!("kernel row {i} must have {n} entries")));
            }
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::NotStochastic { row: i, sum: row.iter().sum() });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotStochastic { row: i, sum });
            }
            let last = *graph.blocks[i].last().unwrap();
            for (s, &p) in row.iter().enumerate() {
                if p > 0.0 && !base.allows(last, s) {
                    return Err(Error::Inadmissible {
                        from: last,
                        to: s,
                        position: i,
                    });
                }
            }
            let aligned = graph
                .sft
                .successors(i)
                .iter()
                .map(|&j| row[*graph.blocks[j].last().unwrap()])
                .collect();
            kernel.push(aligned);
        }
        let support: Vec<Vec<usize>> = (0..kernel.len())
            .map(|i| {
                let succ = graph.sft.successors(i);
                let row: &Vec<f64> = &kernel[i];
                succ.iter().zip(row).filter(|(_, p)| **p > 0.0).map(|(&j, _)| j).collect()
            })
            .collect();
        let dense = if perron::scc(&support).1 == 1 {
            dense_stationary(&graph, &kernel)
        } else {
            None
        };
        let stationary = match dense {
            Some(pi) => pi,
            None => stationary_of(&graph, &kernel)?,
        };
        Ok(MarkovMeasure::assemble(Arc::new(base.clone()), graph, kernel, stationary))
    }

    pub(crate) fn assemble(
        base: Arc<Sft>,
        graph: Arc<Recoding>,
        mut kernel: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    ) -> MarkovMeasure {
        for row in kernel.iter_mut() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        let support: Vec<Vec<usize>> = (0..kernel.len())
            .map(|i| {
                graph
                    .sft
                    .successors(i)
                    .iter()
                    .zip(&kernel[i])
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(&j, _)| j)
                    .collect()
            })
            .collect();
        let ergodic = support_irreducible(&support, &stationary);
        MarkovMeasure {
            base,
            graph,
            kernel,
            stationary,
            ergodic,
        }
    }

    /// i.i.d. measure on the full shift with the given symbol weights.
    pub fn bernoulli(probs: &[f64]) -> Result<MarkovMeasure> {
        let base = Sft::full_shift(probs.len());
        let rows = vec![probs.to_vec(); probs.len()];
        MarkovMeasure::build(&base, 1, &rows)
    }

    /// Periodic-orbit measure of a cyclically admissible word, as a chain of
    /// order `len(word)` (so that the phase is visible in the state).
    pub fn periodic(base: &Sft, word: &[usize]) -> Result<MarkovMeasure> {
        if !base.is_cyclically_admissible(word) {
            return Err(Error::InvalidInput(format!(
                "{} is not cyclically admissible",
                format_block(word)
            )));
        }
        let period = minimal_period(word);
        let w = &word[..period];
        let graph = block_graph(base, period)?;
        let mut stationary = vec![0.0; graph.blocks.len()];
        let mut next_of = std::collections::HashMap::new();
        for r in 0..period {
            let block: Vec<usize> = (0..period).map(|t| w[(r + t) % period]).collect();
            let idx = graph.index[&block];
            stationary[idx] += 1.0 / period as f64;
            next_of.insert(idx, w[(r + period) % period]);
        }
        let kernel = (0..graph.blocks.len())
            .map(|i| {
                let succ = graph.sft.successors(i);
                let target = next_of.get(&i).copied();
                let mut row = vec![0.0; succ.len()];
                let pick = succ
                    .iter()
                    .position(|&j| Some(*graph.blocks[j].last().unwrap()) == target)
                    .unwrap_or(0);
                if !row.is_empty() {
                    row[pick] = 1.0;
                }
                row
            })
            .collect();
        Ok(MarkovMeasure::assemble(Arc::new(base.clone()), graph, kernel, stationary))
    }

    pub fn base(&self) -> &Sft {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.graph.k
    }

    pub fn graph(&self) -> &Recoding {
        &self.graph
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Aligned with `graph().sft.successors(i)`.
    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn is_ergodic(&self) -> bool {
        self.ergodic
    }

    /// Next-symbol rows in the model-file layout.
    pub fn kernel_rows(&self) -> Vec<Vec<f64>> {
        let n = self.base.alphabet_size();
        (0..self.kernel.len())
            .map(|i| {
                let mut row = vec![0.0; n];
                for (&j, &p) in self.graph.sft.successors(i).iter().zip(&self.kernel[i]) {
                    row[*self.graph.blocks[j].last().unwrap()] += p;
                }
                row
            })
            .collect()
    }

    /// Support graph: transitions with positive probability.
    pub fn support(&self) -> Vec<Vec<usize>> {
        (0..self.kernel.len())
            .map(|i| {
                self.graph
                    .sft
                    .successors(i)
                    .iter()
                    .zip(&self.kernel[i])
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(&j, _)| j)
                    .collect()
            })
            .collect()
    }

    /// Support restricted to states of positive stationary mass, as an SFT
    /// on those states (the recurrent part of the chain).
    pub fn support_sft(&self) -> Result<Sft> {
        let keep: Vec<usize> = (0..self.stationary.len()).filter(|&i| self.stationary[i] > 0.0).collect();
        let mut local = vec![usize::MAX; self.stationary.len()];
        for (k, &i) in keep.iter().enumerate() {
            local[i] = k;
        }
        let support = self.support();
        let succ = keep
            .iter()
            .map(|&i| support[i].iter().filter(|&&j| local[j] != usize::MAX).map(|&j| local[j]).collect())
            .collect();
        Sft::from_successors(format!("supp({})", self.base.label), succ)
    }

    /// Same measure presented as a chain of higher order.
    pub fn lift(&self, order: usize) -> Result<MarkovMeasure> {
        let m = self.order();
        if order <= m {
            return Ok(self.clone());
        }
        let graph = block_graph(&self.base, order)?;
        let stationary: Vec<f64> = graph.blocks.iter().map(|b| self.cylinder(b)).collect();
        let kernel = (0..graph.blocks.len())
            .map(|i| {
                let tail = &graph.blocks[i][order - m..];
                let from = self.graph.index[tail];
                graph
                    .sft
                    .successors(i)
                    .iter()
                    .map(|&j| {
                        let s = *graph.blocks[j].last().unwrap();
                        self.transition(from, s)
                    })
                    .collect()
            })
            .collect();
        Ok(MarkovMeasure::assemble(self.base.clone(), graph, kernel, stationary))
    }

    /// Probability of appending symbol `s` from state `from`.
    fn transition(&self, from: usize, s: usize) -> f64 {
        self.graph
            .sft
            .successors(from)
            .iter()
            .zip(&self.kernel[from])
            .find(|(&j, _)| *self.graph.blocks[j].last().unwrap() == s)
            .map_or(0.0, |(_, &p)| p)
    }

    /// Samples an orbit segment of `len` symbols from the stationary chain.
    pub fn sample_path<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut state = pick(&self.stationary, rng);
        let mut out = self.graph.blocks[state].clone();
        while out.len() < len {
            let t = pick(&self.kernel[state], rng);
            state = self.graph.sft.successors(state)[t];
            out.push(*self.graph.blocks[state].last().unwrap());
        }
        out.truncate(len);
        out
    }
}

fn pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub(crate) fn minimal_period(word: &[usize]) -> usize {
    let n = word.len();
    (1..=n)
        .find(|&p| n % p == 0 && (0..n).all(|i| word[i] == word[(i + p) % n]))
        .unwrap_or(n)
}

fn support_irreducible(support: &[Vec<usize>], stationary: &[f64]) -> bool {
    let keep: Vec<usize> = (0..stationary.len()).filter(|&i| stationary[i] > 0.0).collect();
    if keep.is_empty() {
        return false;
    }
    let mut local = vec![usize::MAX; stationary.len()];
    for (k, &i) in keep.iter().enumerate() {
        local[i] = k;
    }
    let succ: Vec<Vec<usize>> = keep
        .iter()
        .map(|&i| support[i].iter().filter(|&&j| local[j] != usize::MAX).map(|&j| local[j]).collect())
        .collect();
    perron::scc(&succ).1 == 1
}

const DENSE_STATIONARY_LIMIT: usize = 256;

/// Stationary law of an irreducible kernel by a dense linear solve, for
/// small graphs.
pub(crate) fn dense_stationary(graph: &Recoding, kernel: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = kernel.len();
    if n > DENSE_STATIONARY_LIMIT {
        return None;
    }
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (i, row) in kernel.iter().enumerate() {
        for (&j, &p) in graph.sft.successors(i).iter().zip(row) {
            a[(j, i)] += p;
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs)?;
    if pi.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return None;
    }
    let pi: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let z: f64 = pi.iter().sum();
    Some(pi.into_iter().map(|p| p / z).collect())
}

/// Stationary vector by power iteration on the transposed lazy chain
/// `(P + I)/2`, which has the same fixed vectors and no periodicity.
fn stationary_of(graph: &Recoding, kernel: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = kernel.len();
    let mut rows = vec![Vec::new(); n];
    for i in 0..n {
        for (&j, &p) in graph.sft.successors(i).iter().zip(&kernel[i]) {
            if p > 0.0 {
                rows[j].push((i, p));
            }
        }
    }
    let t = SparseMatrix { rows };
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let opts = PowerOptions::default();
    for _ in 0..opts.max_iterations {
        for (i, row) in t.rows.iter().enumerate() {
            y[i] = 0.5 * x[i] + 0.5 * row.iter().map(|&(j, p)| p * x[j]).sum::<f64>();
        }
        let s: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= s);
        let diff = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        std::mem::swap(&mut x, &mut y);
        if diff < 1e-16 {
            return Ok(x);
        }
    }
    // Accept if the fixed-vector residual is already within tolerance.
    let mut res = 0.0f64;
    for (i, row) in t.rows.iter().enumerate() {
        let v: f64 = row.iter().map(|&(j, p)| p * x[j]).sum();
        res = res.max((v - x[i]).abs());
    }
    if res <= 1e-12 {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            iterations: opts.max_iterations,
            residual: res,
        })
    }
}

impl CylinderMeasure for MarkovMeasure {
    fn alphabet_size(&self) -> usize {
        self.base.alphabet_size()
    }

    fn cylinder(&self, block: &[usize]) -> f64 {
        let m = self.order();
        if block.is_empty() {
            return 1.0;
        }
        if block.len() < m {
            return self
                .graph
                .blocks
                .iter()
                .zip(&self.stationary)
                .filter(|(b, _)| b.starts_with(block))
                .map(|(_, p)| p)
                .sum();
        }
        let Some(&start) = self.graph.index.get(&block[..m]) else {
            return 0.0;
        };
        let mut p = self.stationary[start];
        let mut state = start;
        for &s in &block[m..] {
            if p == 0.0 {
                return 0.0;
            }
            let succ = self.graph.sft.successors(state);
            match succ.iter().position(|&j| *self.graph.blocks[j].last().unwrap() == s) {
                Some(t) => {
                    p *= self.kernel[state][t];
                    state = succ[t];
                }
                None => return 0.0,
            }
        }
        p
    }
}

/// Invariant measure on a periodic orbit, given by one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicMeasure {
    pub word: Vec<usize>,
    pub alphabet_size: usize,
}

impl CylinderMeasure for PeriodicMeasure {
    fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn cylinder(&self, block: &[usize]) -> f64 {
        let n = self.word.len();
        let hits = (0..n)
            .filter(|&i| block.iter().enumerate().all(|(t, &s)| self.word[(i + t) % n] == s))
            .count();
        hits as f64 / n as f64
    }
}

/// Finite convex combination of invariant measures. Mixtures of Markov
/// chains need not be Markov, so they are kept as weighted lists.
#[derive(Debug, Clone)]
pub struct Mixture<M> {
    pub components: Vec<(f64, M)>,
}

impl<M: CylinderMeasure> CylinderMeasure for Mixture<M> {
    fn alphabet_size(&self) -> usize {
        self.components.first().map_or(0, |c| c.1.alphabet_size())
    }

    fn cylinder(&self, block: &[usize]) -> f64 {
        self.components.iter().map(|(w, m)| w * m.cylinder(block)).sum()
    }
}

impl Mixture<MarkovMeasure> {
    /// Entropy is affine on invariant measures.
    pub fn entropy(&self) -> f64 {
        self.components.iter().map(|(w, m)| w * metric_entropy(m)).sum()
    }

    pub fn integrate(&self, phi: &Potential) -> Result<f64> {
        self.components
            .iter()
            .map(|(w, m)| integrate_potential(m, phi).map(|v| w * v))
            .sum()
    }
}

/// Entropy and Birkhoff integrals of a measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureProfile {
    pub entropy: f64,
    pub averages: Vec<f64>,
}

impl MeasureProfile {
    pub fn csv_header(count: usize) -> String {
        let mut h = String::from("entropy");
        for i in 0..count {
            h.push_str(&format!(",average_{i}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = crate::format::sig(self.entropy);
        for a in &self.averages {
            r.push(',');
            r.push_str(&crate::format::sig(*a));
        }
        r
    }
}

/// `h = −Σ_i π_i Σ_j P_ij log P_ij` in nats.
pub fn metric_entropy(mu: &MarkovMeasure) -> f64 {
    let mut h = 0.0;
    for (pi, row) in mu.stationary.iter().zip(&mu.kernel) {
        if *pi <= 0.0 {
            continue;
        }
        for &p in row {
            if p > 0.0 {
                h -= pi * p * p.ln();
            }
        }
    }
    h.max(0.0)
}

/// `∫φ dμ` as an exact edge-weighted sum; the measure is lifted when the
/// potential is deeper than its transitions.
pub fn integrate_potential(mu: &MarkovMeasure, phi: &Potential) -> Result<f64> {
    let need = phi.depth().saturating_sub(1).max(1);
    let lifted;
    let mu = if need > mu.order() {
        lifted = mu.lift(need)?;
        &lifted
    } else {
        mu
    };
    let g = &mu.graph;
    let mut total = 0.0;
    for (i, (pi, row)) in mu.stationary.iter().zip(&mu.kernel).enumerate() {
        if *pi <= 0.0 {
            continue;
        }
        for (&j, &p) in g.sft.successors(i).iter().zip(row) {
            if p > 0.0 {
                let mut block = g.blocks[i].clone();
                block.push(*g.blocks[j].last().unwrap());
                total += pi * p * phi.eval(&block);
            }
        }
    }
    Ok(total)
}

pub fn profile(mu: &MarkovMeasure, potentials: &[&Potential]) -> Result<MeasureProfile> {
    Ok(MeasureProfile {
        entropy: metric_entropy(mu),
        averages: potentials
            .iter()
            .map(|p| integrate_potential(mu, p))
            .collect::<Result<_>>()?,
    })
}

/// Cyclic Birkhoff means over a word, i.e. integrals against the periodic
/// measure it spells; the entropy of that measure is zero.
pub fn empirical_profile(sft: &Sft, word: &Word, potentials: &[&Potential]) -> Result<MeasureProfile> {
    let w = &word.symbols;
    sft.check_word(w)?;
    if w.is_empty() {
        return Err(Error::InvalidInput("empty word".into()));
    }
    if !sft.allows(*w.last().unwrap(), w[0]) {
        return Err(Error::Inadmissible {
            from: *w.last().unwrap(),
            to: w[0],
            position: w.len() - 1,
        });
    }
    let n = w.len();
    let mut averages = Vec::with_capacity(potentials.len());
    for phi in potentials {
        if n < phi.depth() {
            return Err(Error::InvalidInput(format!(
                "word length {n} is shorter than the potential depth {}",
                phi.depth()
            )));
        }
        let mut s = 0.0;
        let mut window = vec![0; phi.depth()];
        for i in 0..n {
            for (t, slot) in window.iter_mut().enumerate() {
                *slot = w[(i + t) % n];
            }
            s += phi.eval(&window);
        }
        averages.push(s / n as f64);
    }
    Ok(MeasureProfile {
        entropy: 0.0,
        averages,
    })
}

/// Smallest truncation index `J` with tail bound `2^{1−J} ≤ tol`.
pub fn rho_truncation(tol: f64) -> usize {
    let mut j = 1usize;
    while 2f64.powi(1 - j as i32) > tol && j < 1000 {
        j += 1;
    }
    j
}

/// The first `count` cylinders of the fixed enumeration.
pub fn cylinder_enumeration(alphabet: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    let mut depth = 1;
    while out.len() < count {
        let mut block = vec![0usize; depth];
        loop {
            out.push(block.clone());
            if out.len() == count {
                return out;
            }
            // lexicographic increment
            let mut pos = depth;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                block[pos] += 1;
                if block[pos] < alphabet {
                    break;
                }
                block[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        depth += 1;
    }
    out
}

/// Depth of the deepest cylinder used by `rho_distance` at this tolerance.
pub fn rho_depth(alphabet: usize, tol: f64) -> usize {
    let j = rho_truncation(tol);
    let (mut total, mut depth, mut layer) = (0usize, 0usize, 1usize);
    while total < j {
        depth += 1;
        layer = layer.saturating_mul(alphabet.max(1));
        total = total.saturating_add(layer);
    }
    depth
}

/// Cylinder probabilities up to a fixed depth, indexed by the big-endian
/// base-`N` code of the block.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMeasure {
    pub alphabet: usize,
    pub tables: Vec<Vec<f64>>,
}

pub(crate) fn block_code(block: &[usize], alphabet: usize) -> usize {
    block.iter().fold(0, |c, &s| c * alphabet + s)
}

impl TabulatedMeasure {
    pub fn from_measure<M: CylinderMeasure + ?Sized>(mu: &M, depth: usize) -> TabulatedMeasure {
        let n = mu.alphabet_size();
        let tables = (1..=depth)
            .map(|d| {
                let count = n.pow(d as u32);
                (0..count)
                    .map(|code| {
                        let mut block = vec![0; d];
                        let mut c = code;
                        for slot in block.iter_mut().rev() {
                            *slot = c % n;
                            c /= n;
                        }
                        mu.cylinder(&block)
                    })
                    .collect()
            })
            .collect();
        TabulatedMeasure { alphabet: n, tables }
    }

    pub fn depth(&self) -> usize {
        self.tables.len()
    }
}

impl CylinderMeasure for TabulatedMeasure {
    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    /// Blocks deeper than the table are outside its domain and read as 0.
    fn cylinder(&self, block: &[usize]) -> f64 {
        if block.is_empty() {
            return 1.0;
        }
        self.tables
            .get(block.len() - 1)
            .map_or(0.0, |t| t[block_code(block, self.alphabet)])
    }
}

/// Truncated weak* distance, within `tol` of the full series.
pub fn rho_distance<A: CylinderMeasure + ?Sized, B: CylinderMeasure + ?Sized>(mu: &A, nu: &B, tol: f64) -> f64 {
    let n = mu.alphabet_size().max(nu.alphabet_size());
    let j_max = rho_truncation(tol);
    cylinder_enumeration(n, j_max)
        .iter()
        .enumerate()
        .map(|(j, c)| (mu.cylinder(c) - nu.cylinder(c)).abs() / 2f64.powi(j as i32 + 1))
        .sum()
}

/// Hausdorff distance between finite measure samples under `ρ`.
pub fn measure_set_distance<A, B>(set_a: &[A], set_b: &[B], tol: f64) -> Result<f64>
where
    A: CylinderMeasure + Sync,
    B: CylinderMeasure + Sync,
{
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::EmptySet);
    }
    let d: Vec<Vec<f64>> = set_a
        .par_iter()
        .map(|a| set_b.iter().map(|b| rho_distance(a, b, tol)).collect())
        .collect();
    Ok(directed_sup_inf(&d).max(directed_sup_inf(&transpose(&d))))
}

pub(crate) fn directed_sup_inf(d: &[Vec<f64>]) -> f64 {
    d.iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn transpose(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if d.is_empty() {
        return Vec::new();
    }
    (0..d[0].len()).map(|j| d.iter().map(|r| r[j]).collect()).collect()
}

/// Symbolic stand-in for the metric on orbits: `2^{-k}` where `k` is the
/// first index at which the forward sequences disagree.
pub fn cylinder_metric(x: &[usize], y: &[usize]) -> f64 {
    match x.iter().zip(y).position(|(a, b)| a != b) {
        Some(k) => 2f64.powi(-(k as i32)),
        None => 0.0,
    }
}

/// Structure check used by callers that want ergodicity confirmed from the
/// support graph alone.
pub fn support_is_irreducible(mu: &MarkovMeasure) -> bool {
    mu.support_sft().map(|s| structure_profile(&s).irreducible).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parry_golden() -> MarkovMeasure {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        MarkovMeasure::build(&Sft::golden_mean(), 1, &[vec![1.0 / phi, 1.0 / (phi * phi)], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn bernoulli_stationary_and_entropy() {
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        assert!((mu.stationary()[0] - 0.5).abs() < 1e-15);
        assert!((metric_entropy(&mu) - 2f64.ln()).abs() < 1e-15);
        assert!(mu.is_ergodic());
    }

    #[test]
    fn three_cycle_permutation() {
        let base = Sft::full_shift(3);
        let mu = MarkovMeasure::build(
            &base,
            1,
            &[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
        )
        .unwrap();
        for p in mu.stationary() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(metric_entropy(&mu), 0.0);
        assert!(mu.is_ergodic());
    }

    #[test]
    fn parry_stationary_against_dense_eigensolve() {
        let mu = parry_golden();
        // left fixed vector of the kernel by a dense linear solve
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let p = nalgebra::Matrix2::new(1.0 / phi, 1.0 / (phi * phi), 1.0, 0.0);
        let mut sys = p.transpose() - nalgebra::Matrix2::identity();
        sys[(1, 0)] = 1.0;
        sys[(1, 1)] = 1.0;
        let dense = sys.lu().solve(&nalgebra::Vector2::new(0.0, 1.0)).unwrap();
        assert!((mu.stationary()[0] - dense[0]).abs() < 1e-3);
        assert!((mu.stationary()[0] / mu.stationary()[1] - phi * phi).abs() < 1e-3);
        let stat = nalgebra::Vector2::new(mu.stationary()[0], mu.stationary()[1]);
        let fixed = p.transpose() * stat;
        assert!((fixed - stat).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_kernels() {
        let base = Sft::full_shift(2);
        let err = MarkovMeasure::build(&base, 1, &[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
        let g = Sft::golden_mean();
        let err = MarkovMeasure::build(&g, 1, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { from: 1, to: 1, .. }));
    }

    #[test]
    fn reducible_support_is_flagged_not_rejected() {
        let base = Sft::full_shift(2);
        let mu = MarkovMeasure::build(&base, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(!mu.is_ergodic());
    }

    #[test]
    fn bernoulli_entropy_matches_block_entropy() {
        let mu = MarkovMeasure::bernoulli(&[0.25, 0.75]).unwrap();
        let exact = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((metric_entropy(&mu) - exact).abs() < 1e-14);
        // H_12 / 12 from cylinder probabilities
        let mut h12 = 0.0;
        for code in 0..(1u32 << 12) {
            let block: Vec<usize> = (0..12).map(|t| ((code >> t) & 1) as usize).collect();
            let p = mu.cylinder(&block);
            h12 -= p * p.ln();
        }
        assert!((h12 / 12.0 - exact).abs() < 1e-3);
    }

    #[test]
    fn periodic_measures() {
        let base = Sft::full_shift(2);
        let mu = MarkovMeasure::periodic(&base, &[0, 0, 0, 1]).unwrap();
        assert_eq!(metric_entropy(&mu), 0.0);
        assert!(mu.is_ergodic());
        let phi = Potential::symbol_value(&base);
        assert!((integrate_potential(&mu, &phi).unwrap() - 0.25).abs() < 1e-15);
        let pm = PeriodicMeasure {
            word: vec![0, 0, 0, 1],
            alphabet_size: 2,
        };
        for c in cylinder_enumeration(2, 30) {
            assert!((pm.cylinder(&c) - mu.cylinder(&c)).abs() < 1e-15);
        }
    }

    #[test]
    fn integration_examples() {
        let base = Sft::full_shift(2);
        let mu = MarkovMeasure::bernoulli(&[0.25, 0.75]).unwrap();
        let c = Potential::constant(&base, 3.5);
        assert!((integrate_potential(&mu, &c).unwrap() - 3.5).abs() < 1e-14);
        let phi = Potential::symbol_value(&base);
        assert!((integrate_potential(&mu, &phi).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn depth_two_integral_matches_orbit_sampling() {
        let g = Sft::golden_mean();
        let mu = parry_golden();
        let phi = Potential::from_fn(&g, 2, |b| match (b[0], b[1]) {
            (0, 0) => 1.0,
            (0, 1) => -2.0,
            _ => 0.5,
        })
        .unwrap();
        let exact = integrate_potential(&mu, &phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let path = mu.sample_path(n + 1, &mut rng);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for w in path.windows(2) {
            let v = phi.eval(w);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // correlated samples: inflate the naive error bar generously
        let sigma = (var / n as f64).sqrt() * 3.0;
        assert!((mean - exact).abs() < 3.0 * sigma, "{mean} vs {exact}");
    }

    #[test]
    fn integral_of_deep_potential_lifts() {
        let base = Sft::full_shift(2);
        let mu = MarkovMeasure::bernoulli(&[0.3, 0.7]).unwrap();
        let phi = Potential::from_fn(&base, 3, |b| if b == [1, 0, 1] { 1.0 } else { 0.0 }).unwrap();
        let v = integrate_potential(&mu, &phi).unwrap();
        assert!((v - 0.7 * 0.3 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn empirical_examples() {
        let base = Sft::full_shift(2);
        let phi = Potential::symbol_value(&base);
        let p = empirical_profile(&base, &base.word(vec![0, 1, 0, 1]), &[&phi]).unwrap();
        assert_eq!(p.averages, vec![0.5]);
        let p = empirical_profile(&base, &base.word(vec![0, 0, 0, 0]), &[&phi]).unwrap();
        assert_eq!((p.averages[0], p.entropy), (0.0, 0.0));
        let g = Sft::golden_mean();
        let bad = empirical_profile(&g, &g.word(vec![1, 1]), &[&Potential::symbol_value(&g)]);
        assert!(matches!(bad, Err(Error::Inadmissible { .. })));
        let mu = MarkovMeasure::bernoulli(&[0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = mu.sample_path(10_000, &mut rng);
        let p = empirical_profile(&base, &base.word(w), &[&phi]).unwrap();
        assert!((p.averages[0] - 0.75).abs() < 0.02);
    }

    #[test]
    fn rho_examples() {
        let a = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let b = MarkovMeasure::bernoulli(&[0.0, 1.0]).unwrap();
        assert_eq!(rho_distance(&a, &a, 1e-9), 0.0);
        let d1 = rho_distance(&a, &b, 1e-9);
        let d2 = rho_distance(&a, &b, 1e-9);
        assert_eq!(d1.to_bits(), d2.to_bits());
        assert!(d1 > 0.0 && d1 <= 2.0);
        // pinned value of the fixed enumeration
        assert!((d1 - RHO_HALF_VS_ONE).abs() < 1e-12, "{d1:.17}");
    }

    // Bernoulli(1/2) vs the fixed point 1^∞ at tol 1e-9 (regression pin).
    const RHO_HALF_VS_ONE: f64 = 0.443_401_337_441_173_4;

    #[test]
    fn rho_truncation_tail() {
        assert_eq!(rho_truncation(1.0), 1);
        assert_eq!(rho_truncation(0.25), 3);
        let e = cylinder_enumeration(2, 7);
        assert_eq!(e[0], vec![0]);
        assert_eq!(e[2], vec![0, 0]);
        assert_eq!(e[5], vec![1, 1]);
        assert_eq!(e[6], vec![0, 0, 0]);
    }

    #[test]
    fn set_distance_examples() {
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let nu = MarkovMeasure::bernoulli(&[0.1, 0.9]).unwrap();
        let a = vec![mu.clone()];
        let b = vec![mu.clone(), nu.clone()];
        assert_eq!(measure_set_distance(&a, &a, 1e-9).unwrap(), 0.0);
        let d = measure_set_distance(&a, &b, 1e-9).unwrap();
        assert!((d - rho_distance(&mu, &nu, 1e-9)).abs() < 1e-15);
        let empty: Vec<MarkovMeasure> = Vec::new();
        assert_eq!(measure_set_distance(&a, &empty, 1e-9), Err(Error::EmptySet));
    }

    #[test]
    fn mixture_affinity() {
        let base = Sft::full_shift(2);
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let nu = MarkovMeasure::periodic(&base, &[0]).unwrap();
        let mix = Mixture {
            components: vec![(0.3, mu.clone()), (0.7, nu.clone())],
        };
        assert!((mix.entropy() - 0.3 * 2f64.ln()).abs() < 1e-15);
        let phi = Potential::symbol_value(&base);
        assert!((mix.integrate(&phi).unwrap() - 0.15).abs() < 1e-15);
    }
}
