//! Finite-dimensional measurement Hamiltonians with sector structure.
//!
//! The joint space is `H_m (x) (H_1 (+) ... (+) H_n)`, rewritten as the direct
//! sum of sectors `H_m (x) H_i`. Vectors are stored sector-major: sector `i`
//! is a contiguous slice of length `m * d_i`, and inside a sector the element
//! for apparatus index `a` and particle index `b` sits at `a * d_i + b`.
//!
//! A sector-preserving Hamiltonian has the form `H_1 (x) I_1 (+) ... (+) H_n (x) I_n`
//! with Hermitian `m x m` apparatus blocks `H_i`. Evolution exponentiates each
//! apparatus block separately, so sector norms are conserved exactly up to
//! rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexPoint;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Max-entry tolerance for Hermiticity of constructed blocks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Max-entry tolerance for the invariance and product-form checks.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Tolerance on the norm of a joint state.
pub const STATE_NORM_TOL: f64 = 1e-12;
/// Default cap on `m * D`.
pub const DEFAULT_SIZE_CAP: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DimsFile")]
pub struct Dims {
    m: usize,
    d: Vec<usize>,
}

#[derive(Deserialize)]
struct DimsFile {
    m: usize,
    d: Vec<usize>,
}

impl TryFrom<DimsFile> for Dims {
    type Error = Error;

    fn try_from(f: DimsFile) -> Result<Self> {
        Dims::new(f.m, f.d)
    }
}

impl Dims {
    pub fn new(m: usize, d: Vec<usize>) -> Result<Self> {
        Dims::with_cap(m, d, DEFAULT_SIZE_CAP)
    }

    pub fn with_cap(m: usize, d: Vec<usize>, cap: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::config("dims.m", "apparatus dimension must be at least 1"));
        }
        if d.is_empty() || d.iter().any(|&di| di < 1) {
            return Err(Error::config("dims.d", "every sector needs dimension at least 1"));
        }
        let total: usize = d.iter().sum();
        if total < 2 {
            return Err(Error::config("dims.d", "total particle dimension must be at least 2"));
        }
        if m * total > cap {
            return Err(Error::SizeExceeded {
                what: "joint dimension m*D",
                size: m * total,
                cap,
            });
        }
        Ok(Dims { m, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> &[usize] {
        &self.d
    }

    /// Number of sectors.
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Total particle dimension `D`.
    pub fn particle_dim(&self) -> usize {
        self.d.iter().sum()
    }

    /// Joint dimension `m * D`.
    pub fn size(&self) -> usize {
        self.m * self.particle_dim()
    }

    /// Offset of sector `i` in the joint vector.
    pub fn sector_offset(&self, i: usize) -> usize {
        self.m * self.d[..i].iter().sum::<usize>()
    }

    pub fn sector_len(&self, i: usize) -> usize {
        self.m * self.d[i]
    }

    /// Offset of `H_i` inside the particle space.
    pub fn particle_offset(&self, i: usize) -> usize {
        self.d[..i].iter().sum()
    }

    fn sector_of(&self) -> Vec<usize> {
        (0..self.n())
            .flat_map(|i| std::iter::repeat_n(i, self.sector_len(i)))
            .collect()
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |B - B^dagger|` entry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

/// `(A + A^dagger) / 2` with standard complex normal entries in `A`.
pub fn random_hermitian<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    let a = CMatrix::from_fn(m, m, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&a + a.adjoint()).scale(0.5)
}

/// Unit vector with standard complex normal direction.
pub fn random_unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(len, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = v.norm();
    v.unscale(norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHamiltonian {
    dims: Dims,
    apparatus: Vec<CMatrix>,
}

impl BlockHamiltonian {
    /// Builds `H_1 (x) I_1 (+) ... (+) H_n (x) I_n` from the apparatus blocks.
    pub fn assemble(dims: Dims, apparatus_blocks: Vec<CMatrix>) -> Result<Self> {
        if apparatus_blocks.len() != dims.n() {
            return Err(Error::DimensionMismatch {
                expected: dims.n(),
                got: apparatus_blocks.len(),
            });
        }
        for (i, b) in apparatus_blocks.iter().enumerate() {
            if b.nrows() != dims.m() || b.ncols() != dims.m() {
                return Err(Error::DimensionMismatch {
                    expected: dims.m(),
                    got: b.nrows().max(b.ncols()),
                });
            }
            if !(hermitian_defect(b) <= HERMITIAN_TOL) {
                return Err(Error::NotHermitian(format!("apparatus block {i}")));
            }
        }
        Ok(BlockHamiltonian {
            dims,
            apparatus: apparatus_blocks,
        })
    }

    /// `hbar (x) I_p`: every sector carries the same apparatus block.
    pub fn uniform_block(hbar: &CMatrix, dims: Dims) -> Result<Self> {
        let blocks = vec![hbar.clone(); dims.n()];
        BlockHamiltonian::assemble(dims, blocks)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn apparatus_blocks(&self) -> &[CMatrix] {
        &self.apparatus
    }

    /// The operator `H_i (x) I_{d_i}` on sector `i`.
    pub fn sector_block(&self, i: usize) -> CMatrix {
        self.apparatus[i].kronecker(&CMatrix::identity(self.dims.d[i], self.dims.d[i]))
    }

    /// Full `m*D x m*D` matrix.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.dims.size();
        let mut h = CMatrix::zeros(n, n);
        for i in 0..self.dims.n() {
            let off = self.dims.sector_offset(i);
            let len = self.dims.sector_len(i);
            h.view_mut((off, off), (len, len)).copy_from(&self.sector_block(i));
        }
        h
    }

    /// Diagonalizes every apparatus block once.
    pub fn propagator(&self) -> Result<Propagator> {
        let spectra = self
            .apparatus
            .iter()
            .enumerate()
            .map(|(i, b)| {
                SymmetricEigen::try_new(b.clone(), f64::EPSILON, 10_000)
                    .map(|e| (e.eigenvalues, e.eigenvectors))
                    .ok_or_else(|| Error::EigenFailure(format!("apparatus block {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Propagator {
            dims: self.dims.clone(),
            spectra,
        })
    }
}

/// Spectral decompositions of the apparatus blocks, reusable across times.
#[derive(Debug, Clone)]
pub struct Propagator {
    dims: Dims,
    spectra: Vec<(DVector<f64>, CMatrix)>,
}

impl Propagator {
    /// `exp(-i H_i t)` on the apparatus space.
    pub fn apparatus_unitary(&self, i: usize, t: f64) -> CMatrix {
        let (vals, vecs) = &self.spectra[i];
        let phases = CVector::from_iterator(vals.len(), vals.iter().map(|&e| Complex64::from_polar(1.0, -e * t)));
        let mut scaled = vecs.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *p;
        }
        scaled * vecs.adjoint()
    }

    pub fn apply(&self, s: &JointState, t: f64) -> Result<JointState> {
        if s.dims != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.size(),
                got: s.dims.size(),
            });
        }
        if t == 0.0 {
            return Ok(s.clone());
        }
        let m = self.dims.m();
        let mut out = s.v.clone();
        for i in 0..self.dims.n() {
            let d = self.dims.d[i];
            let off = self.dims.sector_offset(i);
            let u = self.apparatus_unitary(i, t);
            // the sector slice read as an m x d matrix, row-major
            let slice = CMatrix::from_fn(m, d, |a, b| s.v[off + a * d + b]);
            let evolved = u * slice;
            for a in 0..m {
                for b in 0..d {
                    out[off + a * d + b] = evolved[(a, b)];
                }
            }
        }
        Ok(JointState {
            dims: self.dims.clone(),
            v: out,
        })
    }
}

/// `exp(-i H t) s`, sector by sector.
pub fn evolve(h: &BlockHamiltonian, s: &JointState, t: f64) -> Result<JointState> {
    if !t.is_finite() {
        return Err(Error::config("t", "time must be finite"));
    }
    h.propagator()?.apply(s, t)
}

/// Evolves to every time in `times`, in parallel; output order follows `times`.
pub fn evolve_many(h: &BlockHamiltonian, s: &JointState, times: &[f64]) -> Result<Vec<JointState>> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("times", "times must be finite"));
    }
    let prop = h.propagator()?;
    times.par_iter().map(|&t| prop.apply(s, t)).collect()
}

/// `exp(-i H t) v` for an arbitrary Hermitian matrix on the joint space, via
/// one dense eigendecomposition.
pub fn evolve_dense(h: &CMatrix, v: &CVector, t: f64) -> Result<CVector> {
    if h.nrows() != v.len() || !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: h.nrows(),
        });
    }
    if !(hermitian_defect(h) <= STRUCTURE_TOL) {
        return Err(Error::NotHermitian("operator".into()));
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("dense operator".into()))?;
    let coeffs = eig.eigenvectors.adjoint() * v;
    let phased = CVector::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t)),
    );
    Ok(&eig.eigenvectors * phased)
}

fn check_operator(h: &CMatrix, dims: &Dims) -> Result<()> {
    if h.nrows() != dims.size() || h.ncols() != dims.size() {
        return Err(Error::DimensionMismatch {
            expected: dims.size(),
            got: h.nrows().max(h.ncols()),
        });
    }
    if !(hermitian_defect(h) <= STRUCTURE_TOL) {
        return Err(Error::NotHermitian("operator".into()));
    }
    Ok(())
}

/// Whether `H (H_m (x) H_w) ⊆ H_m (x) H_w` for the set of sectors `w`:
/// `max |((I - P_w) H P_w)_jk| <= 1e-10`.
pub fn check_invariance(h: &CMatrix, dims: &Dims, w: &[usize]) -> Result<bool> {
    check_operator(h, dims)?;
    if let Some(&bad) = w.iter().find(|&&i| i >= dims.n()) {
        return Err(Error::DimensionMismatch {
            expected: dims.n(),
            got: bad + 1,
        });
    }
    let mut in_w = vec![false; dims.n()];
    for &i in w {
        in_w[i] = true;
    }
    let sector = dims.sector_of();
    for col in 0..h.ncols() {
        if !in_w[sector[col]] {
            continue;
        }
        for row in 0..h.nrows() {
            if !in_w[sector[row]] && h[(row, col)].norm() > STRUCTURE_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every subset of sectors, as sorted index lists.
pub fn all_subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u64..(1u64 << n)).map(move |mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
}

/// Whether `h` is sector-preserving and each sector block factors as
/// `A (x) I_{d_i}`. The candidate `A` is the average of the `d_i` diagonal
/// sub-blocks.
pub fn verify_form(h: &CMatrix, dims: &Dims) -> Result<bool> {
    check_operator(h, dims)?;
    for i in 0..dims.n() {
        if !check_invariance(h, dims, &[i])? {
            return Ok(false);
        }
    }
    let m = dims.m();
    for i in 0..dims.n() {
        let d = dims.d[i];
        let off = dims.sector_offset(i);
        let block = h.view((off, off), (m * d, m * d));
        let avg = CMatrix::from_fn(m, m, |a, c| {
            (0..d).map(|b| block[(a * d + b, c * d + b)]).sum::<Complex64>() / d as f64
        });
        let product = avg.kronecker(&CMatrix::identity(d, d));
        if max_abs(&(block - product)) > STRUCTURE_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    dims: Dims,
    v: CVector,
}

impl JointState {
    /// Requires unit norm within `STATE_NORM_TOL`.
    pub fn new(dims: Dims, v: CVector) -> Result<Self> {
        if v.len() != dims.size() {
            return Err(Error::DimensionMismatch {
                expected: dims.size(),
                got: v.len(),
            });
        }
        let norm = v.norm();
        if !((norm - 1.0).abs() <= STATE_NORM_TOL) {
            return Err(Error::DegenerateState(format!("state norm {norm}, expected 1")));
        }
        Ok(JointState { dims, v })
    }

    pub fn normalized(dims: Dims, v: CVector) -> Result<Self> {
        if v.len() != dims.size() {
            return Err(Error::DimensionMismatch {
                expected: dims.size(),
                got: v.len(),
            });
        }
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateState(format!("state norm {norm}")));
        }
        Ok(JointState {
            dims,
            v: v.unscale(norm),
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn vector(&self) -> &CVector {
        &self.v
    }

    pub fn sector(&self, i: usize) -> &[Complex64] {
        let off = self.dims.sector_offset(i);
        &self.v.as_slice()[off..off + self.dims.sector_len(i)]
    }
}

/// `g (x) (phi_1 (+) ... (+) phi_n)`, normalized.
pub fn product_state(g: &CVector, phi_parts: &[CVector], dims: &Dims) -> Result<JointState> {
    if g.len() != dims.m() {
        return Err(Error::DimensionMismatch {
            expected: dims.m(),
            got: g.len(),
        });
    }
    if phi_parts.len() != dims.n() {
        return Err(Error::DimensionMismatch {
            expected: dims.n(),
            got: phi_parts.len(),
        });
    }
    for (phi, &d) in phi_parts.iter().zip(&dims.d) {
        if phi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: phi.len(),
            });
        }
    }
    if g.norm() == 0.0 {
        return Err(Error::DegenerateState("apparatus factor is zero".into()));
    }
    if phi_parts.iter().map(|p| p.norm_squared()).sum::<f64>() == 0.0 {
        return Err(Error::DegenerateState("particle factor is zero".into()));
    }
    let mut v = Vec::with_capacity(dims.size());
    for phi in phi_parts {
        for a in g.iter() {
            for b in phi.iter() {
                v.push(a * b);
            }
        }
    }
    JointState::normalized(dims.clone(), CVector::from_vec(v))
}

/// Squared norm of each sector slice.
pub fn simplex_map(s: &JointState) -> SimplexPoint {
    let weights: Vec<f64> = (0..s.dims.n())
        .map(|i| s.sector(i).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let total: f64 = weights.iter().sum();
    SimplexPoint::from_raw(weights.into_iter().map(|w| w / total).collect())
}

/// Partial trace over the apparatus: a `D x D` density matrix.
pub fn reduced_particle_state(s: &JointState) -> CMatrix {
    let dims = &s.dims;
    let m = dims.m();
    let big_d = dims.particle_dim();
    // amplitude for apparatus index a and particle index p
    let amp = |a: usize, i: usize, b: usize| s.v[dims.sector_offset(i) + a * dims.d[i] + b];
    let index: Vec<(usize, usize)> = (0..dims.n())
        .flat_map(|i| (0..dims.d[i]).map(move |b| (i, b)))
        .collect();
    CMatrix::from_fn(big_d, big_d, |p, q| {
        let (i, b) = index[p];
        let (j, c) = index[q];
        (0..m).map(|a| amp(a, i, b) * amp(a, j, c).conj()).sum()
    })
}

/// Dense operator file: `{ "dims": {...}, "size": N, "data": [[re, im], ...] }`,
/// row-major. `dims` is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseOperatorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    pub size: usize,
    pub data: Vec<Complex64>,
}

impl DenseOperatorFile {
    pub fn from_matrix(h: &CMatrix, dims: Option<Dims>) -> Self {
        DenseOperatorFile {
            dims,
            size: h.nrows(),
            data: h.transpose().iter().copied().collect(),
        }
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        if self.data.len() != self.size * self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size * self.size,
                got: self.data.len(),
            });
        }
        Ok(CMatrix::from_row_slice(self.size, self.size, &self.data))
    }
}

/// `{ "dims": {...}, "blocks": [[[re, im], ...], ...] }`, each block an
/// `m x m` apparatus matrix, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockHamiltonianFile {
    pub dims: Dims,
    pub blocks: Vec<Vec<Complex64>>,
}

impl From<&BlockHamiltonian> for BlockHamiltonianFile {
    fn from(h: &BlockHamiltonian) -> Self {
        BlockHamiltonianFile {
            dims: h.dims.clone(),
            blocks: h
                .apparatus
                .iter()
                .map(|b| b.transpose().iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<BlockHamiltonianFile> for BlockHamiltonian {
    type Error = Error;

    fn try_from(f: BlockHamiltonianFile) -> Result<Self> {
        let m = f.dims.m();
        let blocks = f
            .blocks
            .iter()
            .map(|b| {
                if b.len() != m * m {
                    return Err(Error::DimensionMismatch {
                        expected: m * m,
                        got: b.len(),
                    });
                }
                Ok(CMatrix::from_row_slice(m, m, b))
            })
            .collect::<Result<Vec<_>>>()?;
        BlockHamiltonian::assemble(f.dims, blocks)
    }
}

/// `{ "dims": {...}, "v": [[re, im], ...] }`, sector-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointStateFile {
    pub dims: Dims,
    pub v: Vec<Complex64>,
}

impl From<&JointState> for JointStateFile {
    fn from(s: &JointState) -> Self {
        JointStateFile {
            dims: s.dims.clone(),
            v: s.v.iter().copied().collect(),
        }
    }
}

impl TryFrom<JointStateFile> for JointState {
    type Error = Error;

    /// Normalizes the stored vector.
    fn try_from(f: JointStateFile) -> Result<Self> {
        JointState::normalized(f.dims, CVector::from_vec(f.v))
    }
}

/// CSV `t,a_1,...,a_n` of sector weights along a trajectory.
pub fn trajectory_csv(times: &[f64], states: &[JointState]) -> String {
    let n = states.first().map(|s| s.dims.n()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",a_{i}"));
    }
    out.push('\n');
    for (t, s) in times.iter().zip(states) {
        out.push_str(&t.to_string());
        for a in simplex_map(s).coords() {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}

/// Basis vector `e_k` of length `len`.
pub fn basis_vector(len: usize, k: usize) -> CVector {
    let mut v = CVector::from_element(len, ZERO);
    v[k] = ONE;
    v
}
