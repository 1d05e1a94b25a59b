//! Independent oracles for Markov measures on full shifts.
#![allow(dead_code)]

/// Stationary law, entropy and symbol-value average of an order-`m` chain on
/// the full `k`-shift. States are `m`-blocks read as base-`k` numbers; a
/// state steps to `(b·k + s) mod k^m` on emitting `s`.
pub struct ChainFacts {
    pub stationary: Vec<f64>,
    pub entropy: f64,
    /// Mean of the emitted symbol under `value`.
    pub averages: Vec<f64>,
    pub irreducible_support: bool,
}

pub fn full_shift_chain(k: usize, order: usize, rows: &[Vec<f64>], values: &[&dyn Fn(usize) -> f64]) -> ChainFacts {
    let states = k.pow(order as u32);
    assert_eq!(rows.len(), states);
    let next = |b: usize, s: usize| (b * k + s) % states;
    let pi = stationary(states, |b, s| rows[b][s], k, next);
    let mut entropy = 0.0;
    let mut averages = vec![0.0; values.len()];
    for b in 0..states {
        for s in 0..k {
            let p = rows[b][s];
            if p > 0.0 && pi[b] > 0.0 {
                entropy -= pi[b] * p * p.ln();
                for (acc, v) in averages.iter_mut().zip(values) {
                    *acc += pi[b] * p * v(s);
                }
            }
        }
    }
    let support: Vec<bool> = pi.iter().map(|&x| x > 1e-13).collect();
    let edges = |b: usize| (0..k).filter(move |&s| rows[b][s] > 0.0).map(move |s| next(b, s));
    let start = support.iter().position(|&x| x).unwrap();
    let forward = reach(states, start, |b| edges(b).collect());
    let mut rev = vec![Vec::new(); states];
    for b in 0..states {
        for c in edges(b) {
            rev[c].push(b);
        }
    }
    let backward = reach(states, start, |b| rev[b].clone());
    let irreducible_support = (0..states).all(|b| !support[b] || (forward[b] && backward[b]))
        && (0..states).all(|b| !support[b] || edges(b).all(|c| support[c]));
    ChainFacts {
        stationary: pi,
        entropy,
        averages,
        irreducible_support,
    }
}

fn reach(n: usize, start: usize, succ: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(b) = stack.pop() {
        for c in succ(b) {
            if !seen[c] {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    seen
}

/// Solves `π P = π`, `Σπ = 1` by Gaussian elimination with partial pivoting.
fn stationary(n: usize, p: impl Fn(usize, usize) -> f64, k: usize, next: impl Fn(usize, usize) -> usize) -> Vec<f64> {
    // rows of (Pᵀ − I), last row replaced by ones
    let mut a = vec![vec![0.0; n + 1]; n];
    for b in 0..n {
        for s in 0..k {
            a[next(b, s)][b] += p(b, s);
        }
        a[b][b] -= 1.0;
    }
    for x in a[n - 1].iter_mut().take(n) {
        *x = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for x in a[col].iter_mut() {
            *x /= d;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..n).map(|r| a[r][n].max(0.0)).collect()
}

pub fn binary_entropy(a: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    f(a) + f(1.0 - a)
}
