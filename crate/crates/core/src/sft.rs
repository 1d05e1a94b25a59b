//! Two-sided subshifts of finite type: construction, essentialization,
//! irreducibility and period, topological entropy, higher-block recoding and
//! word/cycle enumeration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perron::{self, PowerOptions, SparseMatrix};

/// Caps that keep combinatorial operations from blowing up.
#[derive(Debug, Clone, Copy)]
pub struct Caps {
    pub max_blocks: usize,
    pub max_words: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_blocks: 200_000,
            max_words: 2_000_000,
        }
    }
}

/// A vertex shift on `alphabet_size` symbols. `succ[i]` lists, in increasing
/// order, the symbols allowed to follow `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sft {
    alphabet_size: usize,
    succ: Vec<Vec<usize>>,
    pub label: String,
}

impl Sft {
    pub fn from_successors(label: impl Into<String>, mut succ: Vec<Vec<usize>>) -> Result<Sft> {
        let n = succ.len();
        if n == 0 {
            return Err(Error::InvalidInput("alphabet must be nonempty".into()));
        }
        for (i, row) in succ.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&j) = row.last() {
                if j >= n {
                    return Err(Error::InvalidInput(format!(
                        "symbol {i} has successor {j} outside the alphabet"
                    )));
                }
            }
        }
        Ok(Sft {
            alphabet_size: n,
            succ,
            label: label.into(),
        })
    }

    pub fn from_matrix(label: impl Into<String>, matrix: &[Vec<bool>]) -> Result<Sft> {
        let n = matrix.len();
        if matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("transition matrix must be square".into()));
        }
        let succ = matrix
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j).collect())
            .collect();
        Sft::from_successors(label, succ)
    }

    /// Parses rows of `0`/`1` characters, e.g. `["11", "10"]`.
    pub fn from_rows<S: AsRef<str>>(label: impl Into<String>, rows: &[S]) -> Result<Sft> {
        let matrix = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.as_ref()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::InvalidInput(format!(
                            "row {i}: unexpected character {other:?}"
                        ))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Sft::from_matrix(label, &matrix)
    }

    pub fn full_shift(n: usize) -> Sft {
        let succ = (0..n).map(|_| (0..n).collect()).collect();
        Sft::from_successors(format!("full-{n}"), succ).expect("nonempty alphabet")
    }

    /// 0 may be followed by anything, 1 only by 0.
    pub fn golden_mean() -> Sft {
        Sft::from_successors("golden-mean", vec![vec![0, 1], vec![0]]).unwrap()
    }

    /// Single periodic orbit `0 -> 1 -> ... -> p-1 -> 0`.
    pub fn cycle(p: usize) -> Sft {
        let succ = (0..p).map(|i| vec![(i + 1) % p]).collect();
        Sft::from_successors(format!("cycle-{p}"), succ).expect("nonempty alphabet")
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn successor_lists(&self) -> &[Vec<usize>] {
        &self.succ
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.succ[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn is_admissible(&self, symbols: &[usize]) -> bool {
        symbols.iter().all(|&s| s < self.alphabet_size)
            && symbols.windows(2).all(|w| self.allows(w[0], w[1]))
    }

    /// Admissible and closable into a periodic point.
    pub fn is_cyclically_admissible(&self, symbols: &[usize]) -> bool {
        !symbols.is_empty()
            && self.is_admissible(symbols)
            && self.allows(*symbols.last().unwrap(), symbols[0])
    }

    pub fn word(&self, symbols: Vec<usize>) -> Word {
        let admissible = self.is_admissible(&symbols);
        Word {
            symbols,
            admissible,
        }
    }

    pub fn check_word(&self, symbols: &[usize]) -> Result<()> {
        if let Some(&s) = symbols.iter().find(|&&s| s >= self.alphabet_size) {
            return Err(Error::InvalidInput(format!("symbol {s} outside the alphabet")));
        }
        for (p, w) in symbols.windows(2).enumerate() {
            if !self.allows(w[0], w[1]) {
                return Err(Error::Inadmissible {
                    from: w[0],
                    to: w[1],
                    position: p,
                });
            }
        }
        Ok(())
    }

    /// 0/1 row strings, the model-file encoding.
    pub fn matrix_rows(&self) -> Vec<String> {
        (0..self.alphabet_size)
            .map(|i| {
                (0..self.alphabet_size)
                    .map(|j| if self.allows(i, j) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }

    /// Largest sub-SFT in which every symbol has a predecessor and a
    /// successor, together with the original index of every kept symbol.
    pub fn essential_part(&self) -> Result<(Sft, Vec<usize>)> {
        let n = self.alphabet_size;
        let mut alive = vec![true; n];
        loop {
            let mut indeg = vec![0usize; n];
            let mut outdeg = vec![0usize; n];
            for i in (0..n).filter(|&i| alive[i]) {
                for &j in self.succ[i].iter().filter(|&&j| alive[j]) {
                    outdeg[i] += 1;
                    indeg[j] += 1;
                }
            }
            let mut changed = false;
            for i in 0..n {
                if alive[i] && (indeg[i] == 0 || outdeg[i] == 0) {
                    alive[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        if kept.is_empty() {
            return Err(Error::EmptySystem);
        }
        let mut renumber = vec![usize::MAX; n];
        for (new, &old) in kept.iter().enumerate() {
            renumber[old] = new;
        }
        let succ = kept
            .iter()
            .map(|&i| {
                self.succ[i]
                    .iter()
                    .filter(|&&j| alive[j])
                    .map(|&j| renumber[j])
                    .collect()
            })
            .collect();
        Ok((Sft::from_successors(self.label.clone(), succ)?, kept))
    }

    pub fn is_essential(&self) -> bool {
        let mut has_in = vec![false; self.alphabet_size];
        for row in &self.succ {
            for &j in row {
                has_in[j] = true;
            }
        }
        self.succ.iter().all(|r| !r.is_empty()) && has_in.iter().all(|b| *b)
    }
}

/// Finite block over an alphabet with its admissibility flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub symbols: Vec<usize>,
    pub admissible: bool,
}

impl Word {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_block(&self.symbols))
    }
}

const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Block written with one character per symbol (alphabets up to 36), or
/// dot-separated indices for larger alphabets.
pub fn format_block(symbols: &[usize]) -> String {
    if symbols.iter().all(|&s| s < DIGITS.len()) {
        symbols.iter().map(|&s| DIGITS[s] as char).collect()
    } else {
        symbols.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(".")
    }
}

pub fn parse_block(text: &str) -> Result<Vec<usize>> {
    if text.contains('.') {
        return text
            .split('.')
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidInput(format!("bad block {text:?}")))
            })
            .collect();
    }
    text.bytes()
        .map(|b| {
            DIGITS
                .iter()
                .position(|&d| d == b.to_ascii_lowercase())
                .ok_or_else(|| Error::InvalidInput(format!("bad block {text:?}")))
        })
        .collect()
}

/// Irreducibility, period and cyclic classes of an SFT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureProfile {
    pub irreducible: bool,
    pub period: usize,
    pub primitive: bool,
    pub cyclic_classes: Vec<Vec<usize>>,
}

pub fn validate_essential(sft: &Sft) -> Result<Sft> {
    sft.essential_part().map(|(s, _)| s)
}

pub fn structure_profile(sft: &Sft) -> StructureProfile {
    let (comp, ncomp) = perron::scc(&sft.succ);
    let irreducible = ncomp == 1;
    if irreducible {
        let (period, classes) = perron::period_and_classes(&sft.succ, 0);
        let mut cyclic_classes = vec![Vec::new(); period];
        for (v, &c) in classes.iter().enumerate() {
            cyclic_classes[c].push(v);
        }
        return StructureProfile {
            irreducible,
            period,
            primitive: period == 1,
            cyclic_classes,
        };
    }
    // Reducible: report the gcd of the periods of the nontrivial components.
    let mut period = 0;
    for c in 0..ncomp {
        let (sub, _) = component_subgraph(sft, &comp, c);
        if sub.iter().map(Vec::len).sum::<usize>() > 0 {
            period = perron::gcd(period, perron::period_and_classes(&sub, 0).0);
        }
    }
    StructureProfile {
        irreducible,
        period: period.max(1),
        primitive: false,
        cyclic_classes: Vec::new(),
    }
}

fn component_subgraph(sft: &Sft, comp: &[usize], c: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let verts: Vec<usize> = (0..sft.alphabet_size).filter(|&v| comp[v] == c).collect();
    let mut local = HashMap::new();
    for (k, &v) in verts.iter().enumerate() {
        local.insert(v, k);
    }
    let sub = verts
        .iter()
        .map(|&v| {
            sft.succ[v]
                .iter()
                .filter_map(|w| local.get(w).copied())
                .collect()
        })
        .collect();
    (sub, verts)
}

/// Spectral radius of an irreducible 0/1 graph. Periodic graphs are reduced
/// to `T^p` on one cyclic class, then the p-th root is taken.
pub(crate) fn irreducible_radius(succ: &[Vec<usize>], opts: &PowerOptions) -> Result<f64> {
    let (p, classes) = perron::period_and_classes(succ, 0);
    let m = SparseMatrix {
        rows: succ
            .iter()
            .map(|r| r.iter().map(|&j| (j, 1.0)).collect())
            .collect(),
    };
    if p == 1 {
        return Ok(perron::perron(&m, 1, None, opts)?.lambda);
    }
    let class0: Vec<usize> = (0..succ.len()).filter(|&v| classes[v] == 0).collect();
    let mut local = vec![usize::MAX; succ.len()];
    for (k, &v) in class0.iter().enumerate() {
        local[v] = k;
    }
    // Row v of T^p restricted to class 0, by pushing an indicator p steps.
    let mut rows = Vec::with_capacity(class0.len());
    for &v in &class0 {
        let mut cur: HashMap<usize, f64> = HashMap::from([(v, 1.0)]);
        for _ in 0..p {
            let mut next: HashMap<usize, f64> = HashMap::new();
            for (&u, &w) in &cur {
                for &x in &succ[u] {
                    *next.entry(x).or_insert(0.0) += w;
                }
            }
            cur = next;
        }
        let mut row: Vec<(usize, f64)> = cur
            .into_iter()
            .filter(|(u, _)| local[*u] != usize::MAX)
            .map(|(u, w)| (local[u], w))
            .collect();
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    let lam = perron::perron(&SparseMatrix { rows }, 1, None, opts)?.lambda;
    Ok(lam.powf(1.0 / p as f64))
}

/// Topological entropy in nats: log of the spectral radius of the
/// transition matrix (maximum over the irreducible components).
pub fn topological_entropy(sft: &Sft) -> Result<f64> {
    topological_entropy_with(sft, &PowerOptions::default())
}

pub fn topological_entropy_with(sft: &Sft, opts: &PowerOptions) -> Result<f64> {
    let (comp, ncomp) = perron::scc(&sft.succ);
    let mut best: Option<f64> = None;
    for c in 0..ncomp {
        let (sub, _) = component_subgraph(sft, &comp, c);
        if sub.iter().all(|r| r.is_empty()) {
            continue;
        }
        let r = irreducible_radius(&sub, opts)?;
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    match best {
        Some(r) => Ok(r.ln().max(0.0)),
        None => Err(Error::EmptySystem),
    }
}

/// The k-block presentation of an SFT together with both dictionaries.
/// Block `i` is `blocks[i]`; code `i -> j` is allowed iff the blocks overlap
/// in `k - 1` symbols and the combined `(k+1)`-block is admissible.
#[derive(Debug, Clone)]
pub struct Recoding {
    pub k: usize,
    pub sft: Sft,
    pub blocks: Vec<Vec<usize>>,
    pub index: HashMap<Vec<usize>, usize>,
}

impl Recoding {
    /// Sliding k-block codes of an admissible word of length ≥ k.
    pub fn encode(&self, word: &[usize]) -> Result<Vec<usize>> {
        if word.len() < self.k {
            return Err(Error::InvalidInput(format!(
                "word of length {} is shorter than the block length {}",
                word.len(),
                self.k
            )));
        }
        word.windows(self.k)
            .map(|w| {
                self.index
                    .get(w)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("block {} is not admissible", format_block(w))))
            })
            .collect()
    }

    pub fn decode(&self, codes: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(codes.len() + self.k);
        if let Some(&first) = codes.first() {
            out.extend_from_slice(&self.blocks[first]);
            for &c in &codes[1..] {
                out.push(*self.blocks[c].last().unwrap());
            }
        }
        out
    }

    /// The (k+1)-block spelled by the edge `i -> j`.
    pub fn edge_block(&self, i: usize, j: usize) -> Vec<usize> {
        let mut b = self.blocks[i].clone();
        b.push(*self.blocks[j].last().unwrap());
        b
    }
}

pub fn higher_block_recode(sft: &Sft, k: usize) -> Result<Recoding> {
    higher_block_recode_with(sft, k, &Caps::default())
}

pub fn higher_block_recode_with(sft: &Sft, k: usize, caps: &Caps) -> Result<Recoding> {
    if k == 0 {
        return Err(Error::InvalidInput("block length must be at least 1".into()));
    }
    let blocks = admissible_words(sft, k, caps.max_blocks, "k-block alphabet")?;
    let index: HashMap<Vec<usize>, usize> =
        blocks.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
    let succ = blocks
        .iter()
        .map(|b| {
            let last = *b.last().unwrap();
            sft.successors(last)
                .iter()
                .filter_map(|&s| {
                    let mut next = b[1..].to_vec();
                    next.push(s);
                    index.get(&next).copied()
                })
                .collect()
        })
        .collect();
    let label = format!("{}[{k}-block]", sft.label);
    Ok(Recoding {
        k,
        sft: Sft::from_successors(label, succ)?,
        blocks,
        index,
    })
}

fn admissible_words(sft: &Sft, n: usize, cap: usize, what: &'static str) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    fn rec(
        sft: &Sft,
        n: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
        what: &'static str,
    ) -> Result<()> {
        if stack.len() == n {
            if out.len() >= cap {
                return Err(Error::Overflow {
                    what,
                    count: out.len() + 1,
                    cap,
                });
            }
            out.push(stack.clone());
            return Ok(());
        }
        let choices: Vec<usize> = match stack.last() {
            None => (0..sft.alphabet_size()).collect(),
            Some(&l) => sft.successors(l).to_vec(),
        };
        for s in choices {
            stack.push(s);
            rec(sft, n, stack, out, cap, what)?;
            stack.pop();
        }
        Ok(())
    }
    rec(sft, n, &mut stack, &mut out, cap, what)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    Words,
    Cycles,
}

/// All admissible n-words in lexicographic order, or all n-words that close
/// up into periodic points (one per starting phase).
pub fn enumerate_words_and_cycles(sft: &Sft, n: usize, mode: EnumerationMode) -> Result<Vec<Word>> {
    enumerate_words_and_cycles_with(sft, n, mode, &Caps::default())
}

pub fn enumerate_words_and_cycles_with(
    sft: &Sft,
    n: usize,
    mode: EnumerationMode,
    caps: &Caps,
) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidInput("word length must be at least 1".into()));
    }
    let words = admissible_words(sft, n, caps.max_words, "word enumeration")?;
    Ok(words
        .into_iter()
        .filter(|w| mode == EnumerationMode::Words || sft.allows(*w.last().unwrap(), w[0]))
        .map(|symbols| Word {
            symbols,
            admissible: true,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn essentialization_examples() {
        let full = Sft::full_shift(2);
        assert_eq!(validate_essential(&full).unwrap(), full);
        let dead = Sft::from_rows("x", &["01", "00"]).unwrap();
        assert_eq!(validate_essential(&dead), Err(Error::EmptySystem));
        let half = Sft::from_rows("y", &["11", "00"]).unwrap();
        let (ess, kept) = half.essential_part().unwrap();
        assert_eq!(ess.alphabet_size(), 1);
        assert_eq!(kept, vec![0]);
        assert!(ess.allows(0, 0));
        // idempotent
        assert_eq!(validate_essential(&ess).unwrap(), ess);
    }

    #[test]
    fn structure_examples() {
        let p = structure_profile(&Sft::full_shift(2));
        assert!(p.irreducible && p.primitive && p.period == 1);
        let p = structure_profile(&Sft::cycle(2));
        assert_eq!(p.period, 2);
        assert_eq!(p.cyclic_classes, vec![vec![0], vec![1]]);
        assert!(!p.primitive);
        let p = structure_profile(&Sft::golden_mean());
        assert!(p.irreducible && p.period == 1);
        let red = Sft::from_rows("r", &["11", "01"]).unwrap();
        assert!(!structure_profile(&red).irreducible);
    }

    #[test]
    fn entropy_examples() {
        assert!((topological_entropy(&Sft::full_shift(2)).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(topological_entropy(&Sft::cycle(5)).unwrap().abs() < 1e-12);
        let g = topological_entropy(&Sft::golden_mean()).unwrap();
        assert!((g - ((1.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-12);
        let cyc3_full = Sft::from_rows("p", &["011", "101", "110"]).unwrap();
        assert!((topological_entropy(&cyc3_full).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn periodic_graph_entropy() {
        // two loops of length 3 through vertex 0: entropy log(2)/3
        let succ = vec![vec![1, 3], vec![2], vec![0], vec![4], vec![0]];
        let s = Sft::from_successors("loops", succ).unwrap();
        let h = topological_entropy(&s).unwrap();
        // cycles of length 3 only: 0-1-2-0, 0-3-4-0
        assert!((h - 2f64.ln() / 3.0).abs() < 1e-12);
        assert_eq!(structure_profile(&s).period, 3);
    }

    #[test]
    fn recoding_examples() {
        let r = higher_block_recode(&Sft::full_shift(2), 2).unwrap();
        assert_eq!(r.sft.alphabet_size(), 4);
        assert!((topological_entropy(&r.sft).unwrap() - 2f64.ln()).abs() < 1e-10);
        let g = higher_block_recode(&Sft::golden_mean(), 2).unwrap();
        assert_eq!(g.blocks, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        let id = higher_block_recode(&Sft::golden_mean(), 1).unwrap();
        assert_eq!(id.sft.successor_lists(), Sft::golden_mean().successor_lists());
        let capped = higher_block_recode_with(
            &Sft::full_shift(2),
            10,
            &Caps {
                max_blocks: 100,
                max_words: 100,
            },
        );
        assert!(matches!(capped, Err(Error::Overflow { .. })));
    }

    #[test]
    fn enumeration_examples() {
        let c = enumerate_words_and_cycles(&Sft::full_shift(2), 3, EnumerationMode::Cycles).unwrap();
        assert_eq!(c.len(), 8);
        let w = enumerate_words_and_cycles(&Sft::golden_mean(), 4, EnumerationMode::Words).unwrap();
        assert_eq!(w.len(), 8);
        let c = enumerate_words_and_cycles(&Sft::golden_mean(), 4, EnumerationMode::Cycles).unwrap();
        assert_eq!(c.len(), 7);
        let one = enumerate_words_and_cycles(&Sft::cycle(1), 5, EnumerationMode::Cycles).unwrap();
        assert_eq!(one.len(), 1);
        // lexicographic order
        assert!(w.windows(2).all(|p| p[0].symbols < p[1].symbols));
    }

    #[test]
    fn block_text_roundtrip() {
        assert_eq!(parse_block("0a1").unwrap(), vec![0, 10, 1]);
        assert_eq!(format_block(&[40, 2]), "40.2");
        assert_eq!(parse_block("40.2").unwrap(), vec![40, 2]);
    }
}
