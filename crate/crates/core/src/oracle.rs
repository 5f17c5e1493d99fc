//! Exact absorption probabilities for lattice versions of the pair-transfer
//! walk, by direct linear solves over the transient states.
//!
//! Lattice states are integer vectors summing to `M`. From a state with `s`
//! positive coordinates the chain picks an ordered pair `(i, j)` of them with
//! probability `1 / (s (s - 1))` and moves one unit from `j` to `i`; this is
//! `PairTransfer` with `h = 1/M`. A move that empties a coordinate lands on a
//! lower-dimensional face, whose own chain is solved first and supplies the
//! boundary values.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TRANSIENT_CAP: usize = 200_000;
/// Cap on stored band entries of a single factorization.
pub const DEFAULT_BAND_CAP: usize = 50_000_000;

/// Probability that the fair +-1 walk on `0..=m` started at `start_k` ends at
/// `m`, from the tridiagonal system `(I - Q) x = b`.
pub fn gamblers_ruin(start_k: u64, m: u64) -> Result<f64> {
    if m < 1 {
        return Err(Error::config("grid", "grid resolution must be at least 1"));
    }
    if start_k > m {
        return Err(Error::config("start", format!("start {start_k} lies outside 0..={m}")));
    }
    if start_k == 0 {
        return Ok(0.0);
    }
    if start_k == m {
        return Ok(1.0);
    }
    // transient states 1..m-1: x_k - x_{k-1}/2 - x_{k+1}/2 = [k == m-1] / 2
    let len = (m - 1) as usize;
    let (sub, sup) = (-0.5f64, -0.5f64);
    let mut diag = vec![1.0f64; len];
    let mut rhs = vec![0.0; len];
    rhs[len - 1] = 0.5;
    // Thomas elimination
    for k in 1..len {
        let w = sub / diag[k - 1];
        diag[k] -= w * sup;
        rhs[k] -= w * rhs[k - 1];
    }
    if diag.iter().any(|d| d.abs() < 1e-300 || !d.is_finite()) {
        return Err(Error::SolverFailure("zero pivot in tridiagonal solve".into()));
    }
    let mut x = vec![0.0; len];
    x[len - 1] = rhs[len - 1] / diag[len - 1];
    for k in (0..len - 1).rev() {
        x[k] = (rhs[k] - sup * x[k + 1]) / diag[k];
    }
    Ok(x[start_k as usize - 1])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeChain {
    n: usize,
    m: u32,
    transient_cap: usize,
    band_cap: usize,
}

impl LatticeChain {
    pub fn new(n: usize, m: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("n", "need at least two coordinates"));
        }
        if m < 1 {
            return Err(Error::config("grid", "grid resolution must be at least 1"));
        }
        Ok(LatticeChain {
            n,
            m,
            transient_cap: DEFAULT_TRANSIENT_CAP,
            band_cap: DEFAULT_BAND_CAP,
        })
    }

    pub fn with_caps(mut self, transient_cap: usize, band_cap: usize) -> Self {
        self.transient_cap = transient_cap;
        self.band_cap = band_cap;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> u32 {
        self.m
    }

    fn check_point(&self, x: &[u32]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let sum: u64 = x.iter().map(|&v| v as u64).sum();
        if sum != self.m as u64 {
            return Err(Error::config(
                "start",
                format!("lattice point sums to {sum}, not {}", self.m),
            ));
        }
        Ok(())
    }

    /// One-step transitions from `x` as `(target, probability)`. Empty for
    /// vertices.
    pub fn transitions(&self, x: &[u32]) -> Result<Vec<(Vec<u32>, f64)>> {
        self.check_point(x)?;
        let support: Vec<usize> = (0..self.n).filter(|&i| x[i] > 0).collect();
        let s = support.len();
        if s < 2 {
            return Ok(Vec::new());
        }
        let p = 1.0 / (s * (s - 1)) as f64;
        let mut out = Vec::with_capacity(s * (s - 1));
        for &i in &support {
            for &j in &support {
                if i != j {
                    let mut y = x.to_vec();
                    y[i] += 1;
                    y[j] -= 1;
                    out.push((y, p));
                }
            }
        }
        Ok(out)
    }

    /// Number of interior states of a face with `s` coordinates.
    fn interior_count(&self, s: usize) -> usize {
        binomial(self.m as usize - 1, s - 1)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Compositions of `total` into `parts` positive integers, lexicographic.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 1..=left.saturating_sub(parts as u32 - 1) {
            prefix.push(v);
            rec(left - v, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if total as usize >= parts {
        rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// Square band matrix stored row by row, factorized in place by LU without
/// pivoting. Used only for diagonally dominant M-matrices.
struct BandMatrix {
    size: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(size: usize, bw: usize) -> Self {
        BandMatrix {
            size,
            bw,
            data: vec![0.0; size * (2 * bw + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (2 * self.bw + 1) + (j + self.bw - i)]
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, bw) = (self.size, self.bw);
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::SolverFailure(format!("pivot {pivot} at row {k}")));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let l = self.get(i, k) / pivot;
                if l == 0.0 {
                    continue;
                }
                *self.at(i, k) = l;
                for j in k + 1..=last {
                    let u = self.get(k, j);
                    if u != 0.0 {
                        *self.at(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves in place for a column-major block of `cols` right-hand sides.
    fn solve(&self, rhs: &mut [f64], cols: usize) {
        let (n, bw) = (self.size, self.bw);
        for c in 0..cols {
            let b = &mut rhs[c * n..(c + 1) * n];
            for i in 0..n {
                let first = i.saturating_sub(bw);
                let mut acc = b[i];
                for (j, bj) in b.iter().enumerate().take(i).skip(first) {
                    acc -= self.get(i, j) * bj;
                }
                b[i] = acc;
            }
            for i in (0..n).rev() {
                let last = (i + bw).min(n - 1);
                let mut acc = b[i];
                for (j, bj) in b.iter().enumerate().take(last + 1).skip(i + 1) {
                    acc -= self.get(i, j) * bj;
                }
                b[i] = acc / self.get(i, i);
            }
        }
    }
}

type FaceSolution = HashMap<Vec<u32>, Vec<f64>>;

struct Solver<'a> {
    chain: &'a LatticeChain,
    faces: HashMap<Vec<usize>, FaceSolution>,
}

impl Solver<'_> {
    fn value(&self, y: &[u32]) -> Vec<f64> {
        let support: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0).collect();
        if support.len() == 1 {
            let mut e = vec![0.0; y.len()];
            e[support[0]] = 1.0;
            return e;
        }
        self.faces[&support][y].clone()
    }

    fn solve_face(&mut self, support: &[usize]) -> Result<()> {
        if support.len() < 2 || self.faces.contains_key(support) {
            return Ok(());
        }
        for skip in 0..support.len() {
            let sub: Vec<usize> = support
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != skip)
                .map(|(_, &i)| i)
                .collect();
            self.solve_face(&sub)?;
        }

        let chain = self.chain;
        let n = chain.n;
        let states: Vec<Vec<u32>> = compositions(chain.m, support.len())
            .into_iter()
            .map(|c| {
                let mut full = vec![0u32; n];
                for (&i, v) in support.iter().zip(c) {
                    full[i] = v;
                }
                full
            })
            .collect();
        let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(k, s)| (s.as_slice(), k)).collect();
        let size = states.len();

        let trans: Vec<Vec<(Vec<u32>, f64)>> = states.iter().map(|s| chain.transitions(s)).collect::<Result<_>>()?;
        let mut bw = 0;
        for (k, ts) in trans.iter().enumerate() {
            for (y, _) in ts {
                if let Some(&l) = index.get(y.as_slice()) {
                    bw = bw.max(k.abs_diff(l));
                }
            }
        }
        let entries = size.saturating_mul(2 * bw + 1);
        if entries > chain.band_cap {
            return Err(Error::SizeExceeded {
                what: "band storage",
                size: entries,
                cap: chain.band_cap,
            });
        }

        let mut a = BandMatrix::zeros(size, bw);
        // right-hand sides, column-major: one column per target vertex
        let mut rhs = vec![0.0; size * n];
        for (k, ts) in trans.iter().enumerate() {
            *a.at(k, k) += 1.0;
            for (y, p) in ts {
                match index.get(y.as_slice()) {
                    Some(&l) => *a.at(k, l) -= p,
                    None => {
                        for (v, val) in self.value(y).into_iter().enumerate() {
                            rhs[v * size + k] += p * val;
                        }
                    }
                }
            }
        }
        a.factorize()?;
        a.solve(&mut rhs, n);

        let solution = states
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                let row = (0..n).map(|v| rhs[v * size + k]).collect();
                (s, row)
            })
            .collect();
        self.faces.insert(support.to_vec(), solution);
        Ok(())
    }
}

/// Exact absorption probability at each vertex from the lattice point
/// `start`, solving each face of the start's support once.
pub fn lattice_absorption(chain: &LatticeChain, start: &[u32]) -> Result<Vec<f64>> {
    chain.check_point(start)?;
    let support: Vec<usize> = (0..chain.n).filter(|&i| start[i] > 0).collect();
    let s = support.len();
    let transient: usize = (2..=s)
        .map(|k| binomial(s, k).saturating_mul(chain.interior_count(k)))
        .fold(0usize, |a, b| a.saturating_add(b));
    if transient > chain.transient_cap {
        return Err(Error::SizeExceeded {
            what: "transient states",
            size: transient,
            cap: chain.transient_cap,
        });
    }
    let mut solver = Solver {
        chain,
        faces: HashMap::new(),
    };
    solver.solve_face(&support)?;
    let out = solver.value(start);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite absorption probability".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub start: Vec<u32>,
    pub absorption: Vec<f64>,
    #[serde(rename = "M")]
    pub m: u32,
}
