//! Word horseshoes: free concatenations of words that start and end with a
//! common marker block, and the multi-horseshoe built from typical words of
//! several Markov measures.
//!
//! Typical-word sets are far too large to list, so `multi_horseshoe` keeps
//! them implicit. Words are paths in a layered lattice whose nodes record the
//! position, the current symbol and the cyclic 2-block counts so far; a word
//! is typical for `μ_i` when a certified upper bound on the `ρ`-distance
//! between its periodic measure and `μ_i` is at most `ζ/4`.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::{rounded_json, sig};
use crate::measures::{
    cylinder_enumeration, metric_entropy, minimal_period, rho_truncation, CylinderMeasure, MarkovMeasure,
    PeriodicMeasure,
};
use crate::sft::{format_block, structure_profile, topological_entropy, Sft};

/// Truncation tolerance of every `ρ` evaluated here.
pub const RHO_TOL: f64 = 1e-6;
const NODE_CAP: usize = 4_000_000;
const FIRST_WORD_LENGTH: usize = 16;
const LAST_WORD_LENGTH: usize = 128;
const MARKER_SEARCH_CAP: usize = 1 << 20;
const MARKER_WINDOWS: usize = 100;

#[derive(Debug, Clone)]
pub struct HorseshoeRequest {
    pub measures: Vec<MarkovMeasure>,
    pub eta: f64,
    pub zeta: f64,
    /// `None` tries 16, 32, 64 and 128 until the certificate passes.
    pub word_length: Option<usize>,
    /// `None` picks the shortest admissible cycle word charged by every measure.
    pub marker: Option<Vec<usize>>,
    pub seed: u64,
}

impl HorseshoeRequest {
    pub fn new(measures: Vec<MarkovMeasure>, eta: f64, zeta: f64) -> HorseshoeRequest {
        HorseshoeRequest {
            measures,
            eta,
            zeta,
            word_length: None,
            marker: None,
            seed: 0,
        }
    }
}

/// A word shift presented as a vertex shift whose vertices carry base symbols.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Horseshoe {
    /// Vertex shift on word-graph nodes.
    pub sft: Sft,
    /// Base symbol carried by each node; applying it along paths embeds the
    /// word shift into the base SFT.
    pub labels: Vec<usize>,
    /// For a sub-horseshoe, the ids of its nodes in the ambient one.
    pub nodes: Vec<usize>,
    pub word_length: usize,
    pub word_count: f64,
    /// `log|W| / n`.
    pub entropy: f64,
}

impl Horseshoe {
    /// No words: one start node and no edges.
    fn empty(symbol: usize, n: usize) -> Horseshoe {
        Horseshoe {
            sft: Sft::from_successors("empty horseshoe", vec![Vec::new()]).expect("one vertex"),
            labels: vec![symbol],
            nodes: vec![0],
            word_length: n,
            word_count: 0.0,
            entropy: f64::NEG_INFINITY,
        }
    }

    pub fn project(&self, path: &[usize]) -> Vec<usize> {
        path.iter().map(|&v| self.labels[v]).collect()
    }
}

/// Shortest primitive cycle word charged by every measure; ties are broken
/// lexicographically.
pub fn select_marker(base: &Sft, measures: &[&dyn CylinderMeasure]) -> Result<Vec<usize>> {
    let n = base.alphabet_size();
    let mut len = 1;
    while n.checked_pow(len as u32).is_some_and(|c| c <= MARKER_SEARCH_CAP) {
        for code in 0..n.pow(len as u32) {
            let mut word = vec![0; len];
            let mut c = code;
            for slot in word.iter_mut().rev() {
                *slot = c % n;
                c /= n;
            }
            if base.is_cyclically_admissible(&word)
                && minimal_period(&word) == len
                && measures.iter().all(|m| m.cylinder(&word) > 0.0)
            {
                return Ok(word);
            }
        }
        len += 1;
    }
    Err(Error::MarkerIncompatible)
}

fn check_marker(base: &Sft, marker: &[usize]) -> Result<()> {
    if marker.is_empty() {
        return Err(Error::InvalidInput("marker must be nonempty".into()));
    }
    base.check_word(marker)?;
    if !base.is_cyclically_admissible(marker) {
        return Err(Error::InvalidInput(format!(
            "marker {} cannot follow itself",
            format_block(marker)
        )));
    }
    if minimal_period(marker) != marker.len() {
        return Err(Error::InvalidInput(format!(
            "marker {} is not primitive",
            format_block(marker)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypicalWords {
    pub words: Vec<Vec<usize>>,
    pub requested: usize,
    pub attempts: usize,
    /// Fewer than `requested` distinct words were found.
    pub maxed_out: bool,
    /// `log|W| / n`, absent when no word was found.
    pub floor: Option<f64>,
}

/// Distinct `n`-words sampled from `mu` that start and end with `marker` and
/// whose periodic measures lie within `ζ/4` of `mu`.
pub fn sample_typical_words(
    mu: &MarkovMeasure,
    n: usize,
    marker: &[usize],
    zeta: f64,
    needed: usize,
    seed: u64,
) -> Result<TypicalWords> {
    check_marker(mu.base(), marker)?;
    if !mu.is_ergodic() {
        return Err(Error::InvalidInput("measure must be ergodic".into()));
    }
    if n < 2 * marker.len() || n < mu.order() {
        return Err(Error::InvalidInput(format!(
            "word length {n} is shorter than twice the marker or the measure order"
        )));
    }
    if mu.cylinder(marker) <= 0.0 {
        return Err(Error::MarkerIncompatible);
    }
    let alphabet = mu.base().alphabet_size();
    let cylinders = cylinder_enumeration(alphabet, rho_truncation(RHO_TOL));
    let target = cylinder_vector(mu, &cylinders);
    let budget = needed.saturating_mul(64).clamp(1024, 200_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = BTreeSet::new();
    let mut attempts = 0;
    while found.len() < needed && attempts < budget {
        attempts += 1;
        let w = mu.sample_path(n, &mut rng);
        if !w.starts_with(marker) || !w.ends_with(marker) || found.contains(&w) {
            continue;
        }
        let nu = PeriodicMeasure {
            word: w.clone(),
            alphabet_size: alphabet,
        };
        if rho_vec(&cylinder_vector(&nu, &cylinders), &target) <= zeta / 4.0 {
            found.insert(w);
        }
    }
    let words: Vec<Vec<usize>> = found.into_iter().collect();
    let floor = (!words.is_empty()).then(|| (words.len() as f64).ln() / n as f64);
    Ok(TypicalWords {
        maxed_out: words.len() < needed,
        words,
        requested: needed,
        attempts,
        floor,
    })
}

/// Free concatenations of the words of `W`, presented by the prefix tree of
/// `W` with every complete word linked back to the first symbols.
pub fn build_word_horseshoe(base: &Sft, words: &[Vec<usize>], n: usize, marker: &[usize]) -> Result<Horseshoe> {
    let words: BTreeSet<&Vec<usize>> = words.iter().collect();
    if words.is_empty() {
        return Err(Error::EmptySet);
    }
    for w in &words {
        let reject = |reason: String| Error::GluingInadmissible {
            word: format_block(w),
            reason,
        };
        if w.len() != n {
            return Err(reject(format!("length {} differs from {n}", w.len())));
        }
        if !base.is_admissible(w) {
            return Err(reject("not admissible in the base shift".into()));
        }
        if !w.starts_with(marker) || !w.ends_with(marker) {
            return Err(reject("does not start and end with the marker".into()));
        }
    }
    for a in &words {
        for b in &words {
            if !base.allows(*a.last().unwrap(), b[0]) {
                return Err(Error::GluingInadmissible {
                    word: format!("{}{}", format_block(a), format_block(b)),
                    reason: "concatenation is not admissible".into(),
                });
            }
        }
    }
    let mut index: HashMap<&[usize], usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut succ: Vec<Vec<usize>> = Vec::new();
    for w in &words {
        for t in 1..=n {
            if !index.contains_key(&w[..t]) {
                index.insert(&w[..t], labels.len());
                labels.push(w[t - 1]);
                succ.push(Vec::new());
                if t > 1 {
                    let parent = index[&w[..t - 1]];
                    let child = labels.len() - 1;
                    succ[parent].push(child);
                }
            }
        }
    }
    let roots: Vec<usize> = words.iter().map(|w| index[&w[..1]]).collect::<BTreeSet<_>>().into_iter().collect();
    for w in &words {
        succ[index[&w[..]]].extend(&roots);
    }
    let count = words.len() as f64;
    Ok(Horseshoe {
        sft: Sft::from_successors(format!("word horseshoe ({} words of length {n})", words.len()), succ)?,
        nodes: (0..labels.len()).collect(),
        labels,
        word_length: n,
        word_count: count,
        entropy: count.ln() / n as f64,
    })
}

fn cylinder_vector<M: CylinderMeasure + ?Sized>(mu: &M, cylinders: &[Vec<usize>]) -> Vec<f64> {
    cylinders.iter().map(|c| mu.cylinder(c)).collect()
}

/// `ρ` from cylinder vectors in the enumeration order.
fn rho_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(j, (x, y))| (x - y).abs() / 2f64.powi(j as i32 + 1))
        .sum()
}

/// Upper bound on `ρ(ν_w, μ)` from the cyclic 2-block counts of `w`. Depth
/// one and two terms are exact; depth three uses the interval
/// `[f_ab + f_bc − f_b, min(f_ab, f_bc)]`; deeper terms use `[0, min f]`.
fn rho_upper(counts: &[u16], n: usize, alphabet: usize, cylinders: &[Vec<usize>], mu: &[f64]) -> f64 {
    let total = n as f64;
    let pair = |a: usize, b: usize| counts[a * alphabet + b] as f64 / total;
    let single = |a: usize| (0..alphabet).map(|b| pair(a, b)).sum::<f64>();
    let mut sum = 0.0;
    for (j, (c, &m)) in cylinders.iter().zip(mu).enumerate() {
        let term = match c.len() {
            1 => (single(c[0]) - m).abs(),
            2 => (pair(c[0], c[1]) - m).abs(),
            _ => {
                let hi = c.windows(2).map(|w| pair(w[0], w[1])).fold(f64::INFINITY, f64::min);
                let lo = if c.len() == 3 {
                    (pair(c[0], c[1]) + pair(c[1], c[2]) - single(c[1])).max(0.0)
                } else {
                    0.0
                };
                (lo - m).abs().max((hi - m).abs())
            }
        };
        sum += term / 2f64.powi(j as i32 + 1);
    }
    sum
}

/// Layered word lattice after pruning. Node 0 is the start of a word; a
/// node's layer is its position in the word.
#[derive(Debug, Clone)]
struct Lattice {
    n: usize,
    labels: Vec<usize>,
    layer: Vec<usize>,
    succ: Vec<Vec<usize>>,
    /// `accept[v]` has bit `i` set when final node `v` ends a word of `W_i`.
    accept: Vec<u64>,
    /// `completions[i][v]`: words of `W_i` through `v`.
    completions: Vec<Vec<f64>>,
}

struct Targets {
    alphabet: usize,
    cylinders: Vec<Vec<usize>>,
    vectors: Vec<Vec<f64>>,
    pair_caps: Vec<Vec<f64>>,
    symbol_caps: Vec<Vec<f64>>,
}

impl Targets {
    fn new(measures: &[MarkovMeasure], n: usize, zeta: f64) -> Targets {
        let alphabet = measures[0].base().alphabet_size();
        let cylinders = cylinder_enumeration(alphabet, rho_truncation(RHO_TOL).max(alphabet + alphabet * alphabet));
        let vectors: Vec<Vec<f64>> = measures.iter().map(|m| cylinder_vector(m, &cylinders)).collect();
        let slack = |j: usize| n as f64 * 2f64.powi(j as i32 + 1) * zeta / 4.0 + 1e-9;
        let symbol_caps = vectors
            .iter()
            .map(|v| (0..alphabet).map(|a| n as f64 * v[a] + slack(a)).collect())
            .collect();
        let pair_caps = vectors
            .iter()
            .map(|v| (0..alphabet * alphabet).map(|k| n as f64 * v[alphabet + k] + slack(alphabet + k)).collect())
            .collect();
        let cylinders = cylinders[..rho_truncation(RHO_TOL)].to_vec();
        let vectors = vectors.into_iter().map(|v| v[..cylinders.len()].to_vec()).collect();
        Targets {
            alphabet,
            cylinders,
            vectors,
            pair_caps,
            symbol_caps,
        }
    }

    /// Measures whose caps the counts still respect.
    fn feasible(&self, counts: &[u16]) -> u64 {
        let a = self.alphabet;
        let mut mask = 0u64;
        for i in 0..self.vectors.len() {
            let pairs_ok = counts.iter().zip(&self.pair_caps[i]).all(|(&c, &cap)| c as f64 <= cap);
            let symbols_ok = (0..a).all(|s| {
                let out: u32 = counts[s * a..(s + 1) * a].iter().map(|&c| c as u32).sum();
                out as f64 <= self.symbol_caps[i][s]
            });
            if pairs_ok && symbols_ok {
                mask |= 1 << i;
            }
        }
        mask
    }
}

fn build_lattice(base: &Sft, targets: &Targets, n: usize, marker: &[usize], zeta: f64) -> Result<Lattice> {
    let a = targets.alphabet;
    let m = targets.vectors.len();
    let l = marker.len();
    let forced = |t: usize| -> Option<usize> {
        if t < l {
            Some(marker[t])
        } else if t >= n - l {
            Some(marker[t - (n - l)])
        } else {
            None
        }
    };
    let mut labels = vec![marker[0]];
    let mut layer = vec![0usize];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new()];
    let mut mask = vec![(1u64 << m) - 1];
    let mut prev: Vec<(usize, Vec<u16>)> = vec![(0, vec![0u16; a * a])];
    for t in 1..n {
        let mut index: HashMap<(usize, Vec<u16>), usize> = HashMap::new();
        let mut current: Vec<(usize, Vec<u16>)> = Vec::new();
        for (parent, counts) in &prev {
            let from = labels[*parent];
            let choices: Vec<usize> = match forced(t) {
                Some(s) if base.allows(from, s) => vec![s],
                Some(_) => Vec::new(),
                None => base.successors(from).to_vec(),
            };
            for s in choices {
                let mut next = counts.clone();
                next[from * a + s] += 1;
                if t == n - 1 {
                    next[s * a + marker[0]] += 1;
                }
                let key = (s, next);
                let id = match index.get(&key) {
                    Some(&id) => id,
                    None => {
                        let feasible = targets.feasible(&key.1);
                        if feasible == 0 {
                            continue;
                        }
                        let id = labels.len();
                        if id >= NODE_CAP {
                            return Err(Error::Overflow {
                                what: "horseshoe lattice nodes",
                                count: id + 1,
                                cap: NODE_CAP,
                            });
                        }
                        labels.push(s);
                        layer.push(t);
                        succ.push(Vec::new());
                        mask.push(feasible);
                        index.insert(key.clone(), id);
                        current.push((id, key.1));
                        id
                    }
                };
                succ[*parent].push(id);
            }
        }
        prev = current;
    }
    let mut accept = vec![0u64; labels.len()];
    for (v, counts) in &prev {
        for i in 0..m {
            if mask[*v] >> i & 1 == 1
                && rho_upper(counts, n, a, &targets.cylinders, &targets.vectors[i]) <= zeta / 4.0
            {
                accept[*v] |= 1 << i;
            }
        }
    }
    // Node ids increase with the layer, so one reverse sweep counts completions.
    let mut completions = vec![vec![0.0; labels.len()]; m];
    for v in (0..labels.len()).rev() {
        for (i, b) in completions.iter_mut().enumerate() {
            b[v] = if layer[v] == n - 1 {
                (accept[v] >> i & 1) as f64
            } else {
                succ[v].iter().map(|&u| b[u]).sum()
            };
        }
    }
    let keep: Vec<usize> = (0..labels.len()).filter(|&v| completions.iter().any(|b| b[v] > 0.0)).collect();
    if keep.first() != Some(&0) {
        return Err(Error::EmptySet);
    }
    let mut new_id = vec![usize::MAX; labels.len()];
    for (k, &v) in keep.iter().enumerate() {
        new_id[v] = k;
    }
    Ok(Lattice {
        n,
        labels: keep.iter().map(|&v| labels[v]).collect(),
        layer: keep.iter().map(|&v| layer[v]).collect(),
        succ: keep
            .iter()
            .map(|&v| succ[v].iter().filter(|&&u| new_id[u] != usize::MAX).map(|&u| new_id[u]).collect())
            .collect(),
        accept: keep.iter().map(|&v| accept[v]).collect(),
        completions: completions
            .iter()
            .map(|b| keep.iter().map(|&v| b[v]).collect())
            .collect(),
    })
}

impl Lattice {
    fn is_final(&self, v: usize) -> bool {
        self.layer[v] == self.n - 1
    }

    /// Node weight selecting the members of `subset` (all measures when `None`).
    fn member(&self, subset: Option<usize>, v: usize) -> bool {
        match subset {
            Some(i) => self.completions[i][v] > 0.0,
            None => self.completions.iter().any(|b| b[v] > 0.0),
        }
    }

    fn accepts(&self, subset: Option<usize>, v: usize) -> bool {
        match subset {
            Some(i) => self.accept[v] >> i & 1 == 1,
            None => self.accept[v] != 0,
        }
    }

    /// Vertex shift on the member nodes, with closing edges back to the start.
    fn horseshoe(&self, subset: Option<usize>) -> Result<Horseshoe> {
        let nodes: Vec<usize> = (0..self.labels.len()).filter(|&v| self.member(subset, v)).collect();
        if nodes.is_empty() {
            return Ok(Horseshoe::empty(self.labels[0], self.n));
        }
        let mut local = vec![usize::MAX; self.labels.len()];
        for (k, &v) in nodes.iter().enumerate() {
            local[v] = k;
        }
        let succ = nodes
            .iter()
            .map(|&v| {
                if self.is_final(v) {
                    if self.accepts(subset, v) {
                        vec![0]
                    } else {
                        Vec::new()
                    }
                } else {
                    self.succ[v].iter().filter(|&&u| local[u] != usize::MAX).map(|&u| local[u]).collect()
                }
            })
            .collect();
        let word_count = match subset {
            Some(i) => self.completions[i][0],
            None => self.union_count(),
        };
        let name = match subset {
            Some(i) => format!("horseshoe of measure {i}"),
            None => "horseshoe".to_string(),
        };
        Ok(Horseshoe {
            sft: Sft::from_successors(name, succ)?,
            labels: nodes.iter().map(|&v| self.labels[v]).collect(),
            nodes,
            word_length: self.n,
            word_count,
            entropy: word_count.ln() / self.n as f64,
        })
    }

    fn union_count(&self) -> f64 {
        let mut count = vec![0.0; self.labels.len()];
        for v in (0..self.labels.len()).rev() {
            count[v] = if self.is_final(v) {
                (self.accept[v] != 0) as u8 as f64
            } else {
                self.succ[v].iter().map(|&u| count[u]).sum()
            };
        }
        count[0]
    }

    /// Edge probabilities of the chain that draws a word of `W_i` with
    /// probability `Σ θ_i / |W_i|` and walks it.
    fn mixture_chain(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let weight: Vec<f64> = (0..self.labels.len())
            .map(|v| {
                theta
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * self.completions[i][v] / self.completions[i][0])
                    .sum()
            })
            .collect();
        self.normalized(|_, u| weight[u])
    }

    fn random_chain(&self, subset: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let jitter: Vec<f64> = (0..self.labels.len()).map(|_| rng.gen_range(0.25..4.0)).collect();
        self.normalized(|v, u| {
            if !self.member(subset, u) || (self.is_final(u) && !self.accepts(subset, u)) {
                return 0.0;
            }
            let w = match subset {
                Some(i) => self.completions[i][u],
                None => self.completions.iter().map(|b| b[u]).sum(),
            };
            w * jitter[u] * jitter[v].sqrt()
        })
    }

    fn normalized(&self, weight: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
        self.succ
            .iter()
            .enumerate()
            .map(|(v, row)| {
                let w: Vec<f64> = row.iter().map(|&u| weight(v, u)).collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    w.iter().map(|x| x / total).collect()
                } else {
                    vec![0.0; row.len()]
                }
            })
            .collect()
    }

    /// Cylinder vector of the stationary chain with edge law `p`; final
    /// nodes carrying mass return to the start.
    fn chain_vector(&self, p: &[Vec<f64>], cylinders: &[Vec<usize>]) -> Vec<f64> {
        let size = self.labels.len();
        let mut visit = vec![0.0; size];
        visit[0] = 1.0;
        for v in 0..size {
            for (&u, &q) in self.succ[v].iter().zip(&p[v]) {
                visit[u] += visit[v] * q;
            }
        }
        let stationary: Vec<f64> = visit.iter().map(|x| x / self.n as f64).collect();
        let advance = |x: &[f64], s: usize| -> Vec<f64> {
            let mut y = vec![0.0; size];
            for v in 0..size {
                if x[v] == 0.0 {
                    continue;
                }
                if self.is_final(v) {
                    if self.labels[0] == s {
                        y[0] += x[v];
                    }
                } else {
                    for (&u, &q) in self.succ[v].iter().zip(&p[v]) {
                        if self.labels[u] == s {
                            y[u] += x[v] * q;
                        }
                    }
                }
            }
            y
        };
        // Cylinders come in depth-then-lexicographic order, so each one
        // extends a prefix seen earlier; keep the prefix vectors by block.
        let mut memo: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        let mut out = Vec::with_capacity(cylinders.len());
        for c in cylinders {
            let x = if c.len() == 1 {
                (0..size)
                    .map(|v| if self.labels[v] == c[0] { stationary[v] } else { 0.0 })
                    .collect()
            } else {
                let parent = memo
                    .get(&c[..c.len() - 1])
                    .cloned()
                    .unwrap_or_else(|| self.prefix_vector(&stationary, &c[..c.len() - 1], &advance));
                advance(&parent, c[c.len() - 1])
            };
            out.push(x.iter().sum());
            memo.insert(c.clone(), x);
        }
        out
    }

    fn prefix_vector(&self, stationary: &[f64], block: &[usize], advance: &impl Fn(&[f64], usize) -> Vec<f64>) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.labels.len())
            .map(|v| if self.labels[v] == block[0] { stationary[v] } else { 0.0 })
            .collect();
        for &s in &block[1..] {
            x = advance(&x, s);
        }
        x
    }

    /// Uniform word of `W_i`, or of the union when `subset` is `None`.
    fn sample_word(&self, subset: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let i = subset.unwrap_or_else(|| {
            let nonempty: Vec<usize> = (0..self.completions.len()).filter(|&i| self.completions[i][0] > 0.0).collect();
            nonempty[rng.gen_range(0..nonempty.len())]
        });
        let b = &self.completions[i];
        let mut v = 0;
        let mut word = vec![self.labels[0]];
        while !self.is_final(v) {
            let total: f64 = self.succ[v].iter().map(|&u| b[u]).sum();
            let mut r = rng.gen::<f64>() * total;
            let mut next = *self.succ[v].iter().rev().find(|&&u| b[u] > 0.0).expect("member node continues");
            for &u in &self.succ[v] {
                if r < b[u] {
                    next = u;
                    break;
                }
                r -= b[u];
            }
            v = next;
            word.push(self.labels[v]);
        }
        word
    }

    /// Lexicographically first words of `W_i` (depth-first over the lattice).
    fn first_words(&self, subset: Option<usize>, limit: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, vec![self.labels[0]])];
        while let Some((v, word)) = stack.pop() {
            if out.len() >= limit {
                break;
            }
            if self.is_final(v) {
                if self.accepts(subset, v) {
                    out.push(word);
                }
                continue;
            }
            let mut next: Vec<usize> = self.succ[v].iter().copied().filter(|&u| self.member(subset, u)).collect();
            next.sort_by_key(|&u| std::cmp::Reverse(self.labels[u]));
            for u in next {
                let mut w = word.clone();
                w.push(self.labels[u]);
                stack.push((u, w));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBound {
    /// `h_{μ_i}`.
    pub measure_entropy: f64,
    /// `log|W_i| / n`.
    pub floor: f64,
    /// Topological entropy of the node graph of `Λ_i`.
    pub graph_entropy: f64,
    pub passed: bool,
}

/// Checks on a multi-horseshoe. Distances are sampled estimates: suprema
/// over finitely many invariant measures of the horseshoes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorseshoeCertificate {
    pub seed: u64,
    pub eta: f64,
    pub zeta: f64,
    pub entropy: Vec<EntropyBound>,
    /// Sampled `d_H({μ_i}, M(Λ_i))`.
    pub sampled_distance: Vec<f64>,
    /// Sampled `d_H(cov{μ_i}, M(Λ))`.
    pub sampled_hull_distance: f64,
    pub samples_per_measure: usize,
    pub hull_samples: usize,
    pub hull_grid: usize,
    pub marker_windows: usize,
    pub marker_return: bool,
    pub irreducible: bool,
    /// `Λ` has the entropy of the whole base shift.
    pub lambda_is_whole_shift: bool,
    pub passed: bool,
    /// First violated bound, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HorseshoeResult {
    pub lambda: Horseshoe,
    pub lambda_i: Vec<Horseshoe>,
    pub marker: Vec<usize>,
    pub word_length: usize,
    /// Length of one glued period, `n·l` with `l = 1`.
    pub block_length: usize,
    pub certificate: HorseshoeCertificate,
    lattice: Lattice,
}

#[derive(Serialize)]
struct WordSetSummary {
    count: f64,
    floor: f64,
    first_words: Vec<String>,
}

#[derive(Serialize)]
struct GraphSummary<'a> {
    labels: &'a [usize],
    successors: &'a [Vec<usize>],
    nodes: &'a [usize],
    entropy: f64,
}

#[derive(Serialize)]
struct ResultJson<'a> {
    marker: String,
    word_length: usize,
    block_length: usize,
    word_sets: Vec<WordSetSummary>,
    lambda: GraphSummary<'a>,
    lambda_i: Vec<GraphSummary<'a>>,
    certificate: &'a HorseshoeCertificate,
}

impl HorseshoeResult {
    /// Up to `limit` words of `W_i` in lexicographic order.
    pub fn words(&self, i: usize, limit: usize) -> Vec<Vec<usize>> {
        self.lattice.first_words(Some(i), limit)
    }

    /// A uniformly random word of `W_i`.
    pub fn sample_word<R: Rng>(&self, i: usize, rng: &mut R) -> Vec<usize> {
        let mut chacha = ChaCha8Rng::seed_from_u64(rng.gen());
        self.lattice.sample_word(Some(i), &mut chacha)
    }

    pub fn to_json(&self, word_limit: usize) -> String {
        fn summary(h: &Horseshoe) -> GraphSummary<'_> {
            GraphSummary {
                labels: &h.labels,
                successors: h.sft.successor_lists(),
                nodes: &h.nodes,
                entropy: h.entropy,
            }
        }
        let doc = ResultJson {
            marker: format_block(&self.marker),
            word_length: self.word_length,
            block_length: self.block_length,
            word_sets: self
                .lambda_i
                .iter()
                .enumerate()
                .map(|(i, h)| WordSetSummary {
                    count: h.word_count,
                    floor: h.entropy,
                    first_words: self.words(i, word_limit).iter().map(|w| format_block(w)).collect(),
                })
                .collect(),
            lambda: summary(&self.lambda),
            lambda_i: self.lambda_i.iter().map(summary).collect(),
            certificate: &self.certificate,
        };
        serde_json::to_string_pretty(&rounded_json(&doc)).expect("serializable")
    }
}

pub fn multi_horseshoe(req: &HorseshoeRequest) -> Result<HorseshoeResult> {
    let measures = &req.measures;
    if measures.is_empty() || measures.len() > 64 {
        return Err(Error::InvalidInput("between 1 and 64 measures are required".into()));
    }
    if !(req.eta > 0.0 && req.zeta > 0.0) {
        return Err(Error::InvalidInput("eta and zeta must be positive".into()));
    }
    let base = measures[0].base();
    if measures.iter().any(|m| m.base().successor_lists() != base.successor_lists()) {
        return Err(Error::InvalidInput("measures live on different shifts".into()));
    }
    if !structure_profile(base).irreducible {
        return Err(Error::InvalidInput("base shift must be irreducible".into()));
    }
    if let Some(i) = measures.iter().position(|m| !m.is_ergodic()) {
        return Err(Error::InvalidInput(format!("measure {i} is not ergodic")));
    }
    let cylinders = cylinder_enumeration(base.alphabet_size(), rho_truncation(RHO_TOL));
    let vectors: Vec<Vec<f64>> = measures.iter().map(|m| cylinder_vector(m, &cylinders)).collect();
    for i in 0..vectors.len() {
        for j in 0..i {
            if rho_vec(&vectors[i], &vectors[j]) <= 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "measures {j} and {i} coincide; pairwise distances must be positive"
                )));
            }
        }
    }
    let marker = match &req.marker {
        Some(w) => {
            check_marker(base, w)?;
            if measures.iter().any(|m| m.cylinder(w) <= 0.0) {
                return Err(Error::MarkerIncompatible);
            }
            w.clone()
        }
        None => {
            let refs: Vec<&dyn CylinderMeasure> = measures.iter().map(|m| m as &dyn CylinderMeasure).collect();
            select_marker(base, &refs)?
        }
    };
    let min_length = (2 * marker.len()).max(measures.iter().map(|m| m.order()).max().unwrap_or(1));
    let lengths: Vec<usize> = match req.word_length {
        Some(n) if n < min_length => {
            return Err(Error::InvalidInput(format!(
                "word length {n} is below {min_length} (twice the marker length, at least the measure order)"
            )))
        }
        Some(n) => vec![n],
        None => std::iter::successors(Some(FIRST_WORD_LENGTH.max(min_length)), |n| Some(n * 2))
            .take_while(|&n| n <= LAST_WORD_LENGTH.max(min_length))
            .collect(),
    };
    let mut last = None;
    for n in lengths {
        let result = attempt(base, req, &marker, n)?;
        if result.certificate.passed {
            return Ok(result);
        }
        last = Some(result);
    }
    let failure = last
        .and_then(|r| r.certificate.failure)
        .unwrap_or_else(|| "no word length was tried".into());
    Err(Error::CertificateFailed(failure))
}

fn attempt(base: &Sft, req: &HorseshoeRequest, marker: &[usize], n: usize) -> Result<HorseshoeResult> {
    let measures = &req.measures;
    let m = measures.len();
    let targets = Targets::new(measures, n, req.zeta);
    let lattice = match build_lattice(base, &targets, n, marker, req.zeta) {
        Ok(l) => l,
        Err(Error::EmptySet) => return Ok(empty_result(req, marker, n, m)),
        Err(e) => return Err(e),
    };
    let lambda = lattice.horseshoe(None)?;
    let lambda_i: Vec<Horseshoe> = (0..m).map(|i| lattice.horseshoe(Some(i))).collect::<Result<_>>()?;
    let mut failure: Option<String> = None;
    let mut fail = |msg: String| {
        if failure.is_none() {
            failure = Some(msg);
        }
    };

    let mut entropy = Vec::with_capacity(m);
    for (i, h) in lambda_i.iter().enumerate() {
        let measure_entropy = metric_entropy(&measures[i]);
        let (floor, graph_entropy) = if h.word_count > 0.0 {
            (h.entropy, topological_entropy(&h.sft)?)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        let passed = floor > measure_entropy - req.eta;
        if !passed {
            fail(format!(
                "entropy floor {} of measure {i} is not above h - eta = {} at word length {n}",
                sig(floor),
                sig(measure_entropy - req.eta)
            ));
        }
        if h.word_count > 1.0 && (graph_entropy - floor).abs() > 1e-9 {
            fail(format!(
                "graph entropy {} of measure {i} disagrees with log|W|/n = {}",
                sig(graph_entropy),
                sig(floor)
            ));
        }
        entropy.push(EntropyBound {
            measure_entropy,
            floor: if floor.is_finite() { floor } else { 0.0 },
            graph_entropy,
            passed,
        });
    }
    let irreducible = structure_profile(&lambda.sft).irreducible
        && lambda_i.iter().all(|h| h.word_count > 0.0 && structure_profile(&h.sft).irreducible);
    if !irreducible {
        fail("a horseshoe is empty or not irreducible".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let cylinders = &targets.cylinders;
    let periodic = |subset: Option<usize>, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..24)
            .map(|k| {
                let word: Vec<usize> = (0..=k % 3).flat_map(|_| lattice.sample_word(subset, rng)).collect();
                let nu = PeriodicMeasure {
                    word,
                    alphabet_size: base.alphabet_size(),
                };
                cylinder_vector(&nu, cylinders)
            })
            .collect()
    };

    let mut sampled_distance = Vec::with_capacity(m);
    let mut samples_per_measure = 0;
    for i in 0..m {
        if lambda_i[i].word_count == 0.0 {
            sampled_distance.push(f64::INFINITY);
            continue;
        }
        let mut samples = periodic(Some(i), &mut rng);
        let mut theta = vec![0.0; m];
        theta[i] = 1.0;
        samples.push(lattice.chain_vector(&lattice.mixture_chain(&theta), cylinders));
        for _ in 0..4 {
            let p = lattice.random_chain(Some(i), &mut rng);
            samples.push(lattice.chain_vector(&p, cylinders));
        }
        samples_per_measure = samples.len();
        let d = samples.iter().map(|s| rho_vec(s, &targets.vectors[i])).fold(0.0, f64::max);
        if !(d < req.zeta) {
            fail(format!("sampled distance {} to measure {i} is not below zeta", sig(d)));
        }
        sampled_distance.push(d);
    }

    let grid = simplex_grid(m);
    let hull: Vec<Vec<f64>> = grid
        .iter()
        .map(|theta| {
            (0..cylinders.len())
                .map(|j| theta.iter().zip(&targets.vectors).map(|(t, v)| t * v[j]).sum())
                .collect()
        })
        .collect();
    let mut samples = periodic(None, &mut rng);
    if lambda_i.iter().all(|h| h.word_count > 0.0) {
        for theta in simplex_points(m, 20) {
            samples.push(lattice.chain_vector(&lattice.mixture_chain(&theta), cylinders));
        }
    }
    for _ in 0..4 {
        let p = lattice.random_chain(None, &mut rng);
        samples.push(lattice.chain_vector(&p, cylinders));
    }
    let pairwise = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter()
            .map(|x| b.iter().map(|y| rho_vec(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let sampled_hull_distance = pairwise(&samples, &hull).max(pairwise(&hull, &samples));
    if !(sampled_hull_distance < req.zeta) {
        fail(format!(
            "sampled distance {} between the hull and the horseshoe is not below zeta",
            sig(sampled_hull_distance)
        ));
    }

    let marker_return = (0..MARKER_WINDOWS).all(|_| {
        let window = random_window(&lambda, 10 * n, &mut rng);
        returns_to_marker(&window, marker, n)
    });
    if !marker_return {
        fail("a window of the horseshoe misses the marker period".into());
    }

    let lambda_is_whole_shift = lambda.word_count > 0.0 && lambda.entropy >= topological_entropy(base)? - 1e-12;
    Ok(HorseshoeResult {
        certificate: HorseshoeCertificate {
            seed: req.seed,
            eta: req.eta,
            zeta: req.zeta,
            entropy,
            sampled_distance,
            sampled_hull_distance,
            samples_per_measure,
            hull_samples: samples.len(),
            hull_grid: grid.len(),
            marker_windows: MARKER_WINDOWS,
            marker_return,
            irreducible,
            lambda_is_whole_shift,
            passed: failure.is_none(),
            failure,
        },
        lambda,
        lambda_i,
        marker: marker.to_vec(),
        word_length: n,
        block_length: n,
        lattice,
    })
}

fn empty_result(req: &HorseshoeRequest, marker: &[usize], n: usize, m: usize) -> HorseshoeResult {
    let empty = Horseshoe::empty(marker[0], n);
    HorseshoeResult {
        lambda: empty.clone(),
        lambda_i: vec![empty; m],
        marker: marker.to_vec(),
        word_length: n,
        block_length: n,
        certificate: HorseshoeCertificate {
            seed: req.seed,
            eta: req.eta,
            zeta: req.zeta,
            entropy: Vec::new(),
            sampled_distance: Vec::new(),
            sampled_hull_distance: f64::INFINITY,
            samples_per_measure: 0,
            hull_samples: 0,
            hull_grid: 0,
            marker_windows: 0,
            marker_return: false,
            irreducible: false,
            lambda_is_whole_shift: false,
            passed: false,
            failure: Some(format!("no word of length {n} is typical for every measure")),
        },
        lattice: Lattice {
            n,
            labels: vec![marker[0]],
            layer: vec![0],
            succ: vec![Vec::new()],
            accept: vec![0],
            completions: vec![vec![0.0]; m],
        },
    }
}

/// Points of the probability simplex with denominators `k`.
fn simplex_points(m: usize, k: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == m - 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / k as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(m, left - c, k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, k, k, &mut Vec::new(), &mut out);
    out
}

fn simplex_grid(m: usize) -> Vec<Vec<f64>> {
    let k = match m {
        1 => 1,
        2 => 200,
        3 => 40,
        4 => 12,
        _ => 4,
    };
    simplex_points(m, k)
}

fn random_window(h: &Horseshoe, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v = rng.gen_range(0..h.labels.len());
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(h.labels[v]);
        let succ = h.sft.successors(v);
        v = succ[rng.gen_range(0..succ.len())];
    }
    out
}

/// Some phase `p` has the marker at every position `≡ p mod n` that fits.
fn returns_to_marker(window: &[usize], marker: &[usize], n: usize) -> bool {
    (0..n).any(|p| {
        (p..window.len())
            .step_by(n)
            .filter(|&s| s + marker.len() <= window.len())
            .all(|s| window[s..s + marker.len()] == *marker)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::rho_distance;

    #[test]
    fn word_horseshoe_examples() {
        let full = Sft::full_shift(2);
        let h = build_word_horseshoe(&full, &[vec![0], vec![1]], 1, &[]).unwrap();
        assert!((topological_entropy(&h.sft).unwrap() - 2f64.ln()).abs() < 1e-12);
        let one = build_word_horseshoe(&full, &[vec![0, 1, 1, 0]], 4, &[0]).unwrap();
        assert_eq!(one.entropy, 0.0);
        assert!(topological_entropy(&one.sft).unwrap().abs() < 1e-12);
        let eight: Vec<Vec<usize>> = (0..8)
            .map(|k| {
                let mut w = vec![0; 16];
                w[5] = k & 1;
                w[6] = (k >> 1) & 1;
                w[7] = (k >> 2) & 1;
                w
            })
            .collect();
        let h = build_word_horseshoe(&full, &eight, 16, &[0]).unwrap();
        assert!((topological_entropy(&h.sft).unwrap() - 8f64.ln() / 16.0).abs() < 1e-9);
        let bad = build_word_horseshoe(&Sft::golden_mean(), &[vec![0, 1, 1, 0]], 4, &[0]);
        assert!(matches!(bad, Err(Error::GluingInadmissible { .. })));
    }

    #[test]
    fn vector_rho_matches_rho_distance() {
        let a = MarkovMeasure::bernoulli(&[0.3, 0.7]).unwrap();
        let b = PeriodicMeasure {
            word: vec![0, 1, 1, 0, 1],
            alphabet_size: 2,
        };
        let cyl = cylinder_enumeration(2, rho_truncation(RHO_TOL));
        let v = rho_vec(&cylinder_vector(&a, &cyl), &cylinder_vector(&b, &cyl));
        assert!((v - rho_distance(&a, &b, RHO_TOL)).abs() < 1e-15);
    }

    #[test]
    fn rho_bound_dominates_exact_distance() {
        let mu = MarkovMeasure::bernoulli(&[0.8, 0.2]).unwrap();
        let cyl = cylinder_enumeration(2, rho_truncation(RHO_TOL));
        let target = cylinder_vector(&mu, &cyl);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w: Vec<usize> = (0..24).map(|_| rng.gen_range(0..2)).collect();
            let mut counts = vec![0u16; 4];
            for t in 0..w.len() {
                counts[w[t] * 2 + w[(t + 1) % w.len()]] += 1;
            }
            let nu = PeriodicMeasure {
                word: w.clone(),
                alphabet_size: 2,
            };
            let exact = rho_vec(&cylinder_vector(&nu, &cyl), &target);
            assert!(rho_upper(&counts, w.len(), 2, &cyl, &target) >= exact - 1e-15);
        }
    }

    #[test]
    fn typical_words_of_a_cycle_and_a_bad_marker() {
        let full = Sft::full_shift(2);
        let cycle = MarkovMeasure::periodic(&full, &[0]).unwrap();
        let w = sample_typical_words(&cycle, 12, &[0], 0.1, 5, 0).unwrap();
        assert_eq!(w.words, vec![vec![0; 12]]);
        assert_eq!(w.floor, Some(0.0));
        assert!(w.maxed_out);
        assert_eq!(
            sample_typical_words(&cycle, 12, &[1], 0.1, 5, 0),
            Err(Error::MarkerIncompatible)
        );
    }

    #[test]
    fn bernoulli_half_typical_words() {
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let w = sample_typical_words(&mu, 32, &[0], 0.1, 2000, 7).unwrap();
        assert!(w.words.len() > 1000);
        for word in &w.words {
            assert_eq!(word[0], 0);
            assert_eq!(word[31], 0);
            let nu = PeriodicMeasure {
                word: word.clone(),
                alphabet_size: 2,
            };
            assert!(rho_distance(&nu, &mu, RHO_TOL) <= 0.025 + 1e-6);
        }
    }

    #[test]
    fn single_measure_horseshoe() {
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let r = multi_horseshoe(&HorseshoeRequest::new(vec![mu], 0.1, 0.1)).unwrap();
        assert!(r.certificate.passed);
        assert!(r.lambda_i[0].entropy >= 2f64.ln() - 0.1);
        for w in r.words(0, 20) {
            assert_eq!(w.len(), r.word_length);
            assert!(w.starts_with(&r.marker) && w.ends_with(&r.marker));
        }
    }

    #[test]
    fn equal_measures_are_rejected() {
        let mu = MarkovMeasure::bernoulli(&[0.9, 0.1]).unwrap();
        let r = multi_horseshoe(&HorseshoeRequest::new(vec![mu.clone(), mu], 0.1, 0.1));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn marker_phase_check() {
        assert!(returns_to_marker(&[1, 0, 0, 1, 0, 0, 1, 0], &[1], 3));
        assert!(!returns_to_marker(&[1, 0, 1, 0, 0, 0], &[1], 3));
    }
}
