//! Operator algebra on finite tensor-product spaces.
//!
//! Factor ordering is big-endian: for `dims = [d_S, d_E]` the basis index of
//! `|s⟩⊗|e⟩` is `s * d_E + e`. The system is always the leftmost factor.

use std::ops::Range;

use nalgebra::SymmetricEigen;

use crate::{CMat, CVec, Error, Result, C64};

/// Hermiticity tolerance used by the validity predicates.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Trace and positivity tolerance for states.
pub const STATE_TOL: f64 = 1e-9;

/// Dense square complex matrix with a declared tensor factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    data: CMat,
    dims: Vec<usize>,
}

impl Operator {
    pub fn new(data: CMat, dims: Vec<usize>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let prod: usize = dims.iter().product();
        if dims.is_empty() || prod != data.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "factor dims {:?} do not multiply to {}",
                dims,
                data.nrows()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite matrix entry".into()));
        }
        Ok(Operator { data, dims })
    }

    /// Single-factor operator.
    pub fn from_matrix(data: CMat) -> Result<Self> {
        let d = data.nrows();
        Self::new(data, vec![d])
    }

    pub fn identity(dims: &[usize]) -> Self {
        let d = dims.iter().product();
        Operator {
            data: CMat::identity(d, d),
            dims: dims.to_vec(),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.data
    }

    pub fn into_matrix(self) -> CMat {
        self.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// `max |A - A†|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.data)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Operator {
            data: self.data.kronecker(&other.data),
            dims,
        }
    }

    /// `tr[A²]`, real part.
    pub fn purity(&self) -> f64 {
        hs_inner(&self.data, &self.data).re
    }

    /// Checks the density-matrix invariants: Hermitian, unit trace, PSD.
    pub fn validate_state(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let eig = SymmetricEigen::new(hermitian_part(&self.data));
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

/// Density matrix. Pure states created from a ket keep the ket so that
/// propagation can stay in vector form.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    op: Operator,
    ket: Option<CVec>,
}

impl State {
    /// Validates the operator as a density matrix.
    pub fn new(op: Operator) -> Result<Self> {
        op.validate_state()?;
        Ok(State { op, ket: None })
    }

    /// Normalises `ket` and builds `|ψ⟩⟨ψ|`.
    pub fn from_ket(ket: CVec, dims: Vec<usize>) -> Result<Self> {
        let norm = ket.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        let ket = ket / C64::new(norm, 0.0);
        let op = Operator::new(&ket * ket.adjoint(), dims)?;
        Ok(State { op, ket: Some(ket) })
    }

    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let d: usize = dims.iter().product();
        let data = CMat::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        State {
            op: Operator {
                data,
                dims: dims.to_vec(),
            },
            ket: None,
        }
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &CMat {
        &self.op.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.op.dims
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn ket(&self) -> Option<&CVec> {
        self.ket.as_ref()
    }

    pub fn purity(&self) -> f64 {
        match &self.ket {
            Some(_) => 1.0,
            None => self.op.purity(),
        }
    }

    pub fn kron(&self, other: &State) -> State {
        let ket = match (&self.ket, &other.ket) {
            (Some(a), Some(b)) => Some(a.kronecker(b)),
            _ => None,
        };
        State {
            op: self.op.kron(&other.op),
            ket,
        }
    }
}

/// Energies and spectral projectors of a Hermitian operator, `H = Σ E_n P_n`.
///
/// Projectors are stored implicitly: eigenvector columns sorted by energy plus
/// the column range of each (possibly degenerate) level.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    energies: Vec<f64>,
    vectors: CMat,
    blocks: Vec<Range<usize>>,
    level_of: Vec<usize>,
    degeneracy_tolerance: f64,
    dims: Vec<usize>,
}

impl SpectralDecomposition {
    /// Distinct energies, ascending.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn num_levels(&self) -> usize {
        self.energies.len()
    }

    /// Unitary whose columns are the energy eigenvectors.
    pub fn eigenvectors(&self) -> &CMat {
        &self.vectors
    }

    /// Column range of level `n` within [`Self::eigenvectors`].
    pub fn block(&self, n: usize) -> Range<usize> {
        self.blocks[n].clone()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Level index of eigenvector column `col`.
    pub fn level_of(&self, col: usize) -> usize {
        self.level_of[col]
    }

    /// Energy attached to eigenvector column `col` (its level energy).
    pub fn column_energy(&self, col: usize) -> f64 {
        self.energies[self.level_of[col]]
    }

    pub fn is_degenerate(&self) -> bool {
        self.energies.len() < self.vectors.ncols()
    }

    pub fn degeneracy_tolerance(&self) -> f64 {
        self.degeneracy_tolerance
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self, n: usize) -> usize {
        self.blocks[n].len()
    }

    pub fn projector(&self, n: usize) -> Operator {
        let cols = self.vectors.columns_range(self.blocks[n].clone());
        Operator {
            data: cols * cols.adjoint(),
            dims: self.dims.clone(),
        }
    }

    pub fn projectors(&self) -> Vec<Operator> {
        (0..self.num_levels()).map(|n| self.projector(n)).collect()
    }

    /// `Σ_n E_n P_n`.
    pub fn reconstruct(&self) -> CMat {
        let mut scaled = self.vectors.clone();
        for (col, mut c) in scaled.column_iter_mut().enumerate() {
            c *= C64::new(self.column_energy(col), 0.0);
        }
        scaled * self.vectors.adjoint()
    }

    /// Smallest nonzero gap between distinct levels.
    pub fn min_gap(&self) -> Option<f64> {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Rotates an operator into the energy eigenbasis: `V† A V`.
    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        self.vectors.adjoint() * a * &self.vectors
    }

    pub fn from_eigenbasis(&self, a: &CMat) -> CMat {
        &self.vectors * a * self.vectors.adjoint()
    }
}

/// Default degeneracy tolerance `1e-9 · max|E|`.
pub fn default_degeneracy_tolerance(eigenvalues: &[f64]) -> f64 {
    1e-9 * eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
}

/// Diagonalises a Hermitian operator, merging eigenvalues that lie within
/// `tol` of their neighbour into one degenerate level. `None` selects
/// [`default_degeneracy_tolerance`].
pub fn spectral_decompose(h: &Operator, tol: Option<f64>) -> Result<SpectralDecomposition> {
    let herm = h.hermiticity_error();
    let scale = h.data.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    if herm > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(herm));
    }
    let eig = SymmetricEigen::try_new(hermitian_part(&h.data), 1e-14, 0)
        .ok_or(Error::DecompositionFailed)?;
    let d = h.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if sorted.iter().any(|e| !e.is_finite()) {
        return Err(Error::DecompositionFailed);
    }
    let mut vectors = CMat::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let tol = tol.unwrap_or_else(|| default_degeneracy_tolerance(&sorted));

    let mut blocks: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    for i in 1..=d {
        if i == d || sorted[i] - sorted[i - 1] > tol {
            blocks.push(start..i);
            start = i;
        }
    }
    let energies = blocks
        .iter()
        .map(|b| sorted[b.clone()].iter().sum::<f64>() / b.len() as f64)
        .collect();
    let mut level_of = vec![0; d];
    for (n, b) in blocks.iter().enumerate() {
        for c in b.clone() {
            level_of[c] = n;
        }
    }
    Ok(SpectralDecomposition {
        energies,
        vectors,
        blocks,
        level_of,
        degeneracy_tolerance: tol,
        dims: h.dims.clone(),
    })
}

/// A pair of distinct transitions whose gaps coincide within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct NearResonance {
    pub first: (usize, usize),
    pub second: (usize, usize),
    pub gap_difference: f64,
}

fn positive_gaps(spec: &SpectralDecomposition) -> Vec<(f64, usize, usize)> {
    let e = spec.energies();
    let mut gaps = Vec::with_capacity(e.len() * e.len().saturating_sub(1) / 2);
    for m in 0..e.len() {
        for n in 0..m {
            gaps.push((e[m] - e[n], m, n));
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    gaps
}

/// True iff all nonzero gaps `E_m - E_n` are pairwise distinct within
/// `gap_tol`.
pub fn check_nonresonance(spec: &SpectralDecomposition, gap_tol: f64) -> bool {
    positive_gaps(spec)
        .windows(2)
        .all(|w| w[1].0 - w[0].0 > gap_tol)
}

/// Lists adjacent gap pairs closer than `gap_tol`, at most `limit` of them.
pub fn near_resonances(
    spec: &SpectralDecomposition,
    gap_tol: f64,
    limit: usize,
) -> Vec<NearResonance> {
    positive_gaps(spec)
        .windows(2)
        .filter(|w| w[1].0 - w[0].0 <= gap_tol)
        .take(limit)
        .map(|w| NearResonance {
            first: (w[0].1, w[0].2),
            second: (w[1].1, w[1].2),
            gap_difference: w[1].0 - w[0].0,
        })
        .collect()
}

/// Traces out every factor except `keep`.
pub fn partial_trace(a: &Operator, keep: usize) -> Result<Operator> {
    let dims = a.dims();
    if dims.len() < 2 || keep >= dims.len() {
        return Err(Error::BadFactorIndex {
            index: keep,
            factors: dims.len(),
        });
    }
    let left: usize = dims[..keep].iter().product();
    let dk = dims[keep];
    let right: usize = dims[keep + 1..].iter().product();
    let mut out = CMat::zeros(dk, dk);
    let m = a.matrix();
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..left {
                for r in 0..right {
                    let row = (l * dk + i) * right + r;
                    let col = (l * dk + j) * right + r;
                    acc += m[(row, col)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(Operator {
        data: out,
        dims: vec![dk],
    })
}

pub(crate) fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Hilbert–Schmidt inner product `tr[A† B]`.
pub(crate) fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest eigenvalue of a Hermitian matrix.
pub(crate) fn max_eigenvalue(m: &CMat) -> f64 {
    SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(K ⊗ I_e) M` computed without forming the Kronecker product.
pub(crate) fn left_mul_system(k: &CMat, m: &CMat, d_e: usize) -> CMat {
    let d_s = k.nrows();
    let mut out = CMat::zeros(d_s * d_e, m.ncols());
    for s in 0..d_s {
        for t in 0..k.ncols() {
            let w = k[(s, t)];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let src = m.rows(t * d_e, d_e);
            let mut dst = out.rows_mut(s * d_e, d_e);
            dst.zip_apply(&src, |a, b| *a += w * b);
        }
    }
    out
}

/// `(K ⊗ I_e) v`.
pub(crate) fn apply_system_vec(k: &CMat, v: &CVec, d_e: usize) -> CVec {
    let d_s = k.nrows();
    let mut out = CVec::zeros(d_s * d_e);
    for s in 0..d_s {
        for t in 0..k.ncols() {
            let w = k[(s, t)];
            for e in 0..d_e {
                out[s * d_e + e] += w * v[t * d_e + e];
            }
        }
    }
    out
}
