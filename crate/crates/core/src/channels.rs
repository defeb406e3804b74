//! CP maps in Kraus form, instruments, and the superoperators built from a
//! spectral decomposition.

use nalgebra::SymmetricEigen;
use rand::Rng;

use crate::qmath::{hermitian_part, hermiticity_error, left_mul_system, max_eigenvalue, Operator, SpectralDecomposition, HERMITIAN_TOL};
use crate::rng::{random_complex_matrix, seeded};
use crate::{CMat, CVec, Error, Result, C64};

/// Eigenvalue cutoff when reading a Kraus rank off the Choi matrix.
pub const KRAUS_RANK_CUTOFF: f64 = 1e-12;

/// Completely positive map on the system, `A(ρ) = Σ_β K_β ρ K_β†`.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    kraus: Vec<CMat>,
    label: String,
}

impl CPMap {
    pub fn new(kraus: Vec<CMat>, label: impl Into<String>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::DimensionMismatch("CP map needs at least one Kraus operator".into()))?;
        let d = first.nrows();
        for k in &kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operators must all be {d}x{d}, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        Ok(CPMap {
            kraus,
            label: label.into(),
        })
    }

    pub fn identity(d: usize) -> Self {
        CPMap {
            kraus: vec![CMat::identity(d, d)],
            label: "identity".into(),
        }
    }

    /// Single-Kraus map `ρ ↦ K ρ K†`.
    pub fn single(k: CMat, label: impl Into<String>) -> Result<Self> {
        Self::new(vec![k], label)
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &CPMap) -> CPMap {
        let mut kraus = Vec::with_capacity(self.kraus.len() * first.kraus.len());
        for a in &self.kraus {
            for b in &first.kraus {
                kraus.push(a * b);
            }
        }
        CPMap {
            kraus,
            label: format!("{}*{}", self.label, first.label),
        }
    }

    /// Applies the map to a `d×d` matrix on the system alone.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.nrows(), rho.ncols());
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// Heisenberg-picture dual `A†(X) = Σ K† X K`.
    pub fn apply_adjoint(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(x.nrows(), x.ncols());
        for k in &self.kraus {
            out += k.adjoint() * x * k;
        }
        out
    }

    /// Σ K†K.
    pub fn povm_matrix(&self) -> CMat {
        let d = self.dim();
        self.apply_adjoint(&CMat::identity(d, d))
    }

    pub fn is_trace_nonincreasing(&self, tol: f64) -> bool {
        max_eigenvalue(&self.povm_matrix()) <= 1.0 + tol
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let d = self.dim();
        (self.povm_matrix() - CMat::identity(d, d)).camax() <= tol
    }
}

/// Set of CP maps indexed by outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    outcomes: Vec<CPMap>,
    completeness: bool,
}

impl Instrument {
    /// Builds an instrument; completeness is detected from the outcome sum.
    pub fn new(outcomes: Vec<CPMap>) -> Result<Self> {
        let d = outcomes
            .first()
            .ok_or_else(|| Error::DimensionMismatch("instrument needs an outcome".into()))?
            .dim();
        if outcomes.iter().any(|o| o.dim() != d) {
            return Err(Error::DimensionMismatch("instrument outcomes differ in dimension".into()));
        }
        let mut sum = CMat::zeros(d, d);
        for o in &outcomes {
            sum += o.povm_matrix();
        }
        let completeness = (sum - CMat::identity(d, d)).camax() <= 1e-9;
        Ok(Instrument {
            outcomes,
            completeness,
        })
    }

    /// The one-outcome "do nothing" instrument.
    pub fn trivial(d: usize) -> Self {
        Instrument {
            outcomes: vec![CPMap::identity(d)],
            completeness: true,
        }
    }

    /// Projective measurement onto the columns of a unitary `basis`.
    pub fn projective(basis: &CMat) -> Result<Self> {
        let outcomes = basis
            .column_iter()
            .enumerate()
            .map(|(i, c)| CPMap::single(c * c.adjoint(), format!("proj{i}")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(outcomes)
    }

    pub fn outcomes(&self) -> &[CPMap] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.completeness
    }

    pub fn dim(&self) -> usize {
        self.outcomes[0].dim()
    }

    /// The channel obtained by ignoring the outcome.
    pub fn sum_map(&self) -> CPMap {
        let kraus = self.outcomes.iter().flat_map(|o| o.kraus.iter().cloned()).collect();
        CPMap {
            kraus,
            label: "sum".into(),
        }
    }
}

/// `U = Σ_n e^{-i E_n dt} P_n` as a single-Kraus map.
pub fn unitary_superop(spec: &SpectralDecomposition, dt: f64) -> CPMap {
    let v = spec.eigenvectors();
    let mut scaled = v.clone();
    for (col, mut c) in scaled.column_iter_mut().enumerate() {
        c *= C64::from_polar(1.0, -spec.column_energy(col) * dt);
    }
    CPMap {
        kraus: vec![scaled * v.adjoint()],
        label: format!("U({dt})"),
    }
}

/// Dephasing map `$(A) = Σ_n P_n A P_n`.
pub fn dephase(spec: &SpectralDecomposition, a: &Operator) -> Result<Operator> {
    if a.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} vs Hamiltonian dim {}",
            a.dim(),
            spec.dim()
        )));
    }
    let out = dephase_matrix(spec, a.matrix());
    Operator::new(out, a.dims().to_vec())
}

pub(crate) fn dephase_matrix(spec: &SpectralDecomposition, a: &CMat) -> CMat {
    let mut m = spec.to_eigenbasis(a);
    mask_off_block(spec, &mut m);
    spec.from_eigenbasis(&m)
}

/// Zeroes every eigenbasis entry connecting different energy levels.
pub(crate) fn mask_off_block(spec: &SpectralDecomposition, m: &mut CMat) {
    let d = m.nrows();
    for j in 0..d {
        let lj = spec.level_of(j);
        for i in 0..d {
            if spec.level_of(i) != lj {
                m[(i, j)] = C64::new(0.0, 0.0);
            }
        }
    }
}

/// Where a system map acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embed {
    /// The operator lives on the system alone.
    Whole,
    /// The operator is `S ⊗ rest`; act on the leftmost factor as `K ⊗ I`.
    System,
}

/// `Σ_β (K_β ⊗ I) A (K_β† ⊗ I)`.
pub fn apply_cp(map: &CPMap, a: &Operator, embed: Embed) -> Result<Operator> {
    let d_s = map.dim();
    match embed {
        Embed::Whole => {
            if a.dim() != d_s {
                return Err(Error::DimensionMismatch(format!(
                    "map on dim {d_s} applied to dim {}",
                    a.dim()
                )));
            }
            Operator::new(map.apply(a.matrix()), a.dims().to_vec())
        }
        Embed::System => {
            if a.dims()[0] != d_s {
                return Err(Error::DimensionMismatch(format!(
                    "map on dim {d_s} applied to leading factor {}",
                    a.dims()[0]
                )));
            }
            let d_rest = a.dim() / d_s;
            let mut out = CMat::zeros(a.dim(), a.dim());
            for k in map.kraus() {
                let left = left_mul_system(k, a.matrix(), d_rest);
                let both = left_mul_system(k, &left.adjoint(), d_rest);
                out += both.adjoint();
            }
            Operator::new(out, a.dims().to_vec())
        }
    }
}

/// POVM element `Σ_β K_β† K_β`.
pub fn povm_element(map: &CPMap) -> Operator {
    let d = map.dim();
    Operator::new(map.povm_matrix(), vec![d]).expect("square Kraus sum")
}

/// Largest eigenvalue of a Hermitian PSD operator.
pub fn povm_norm(a: &Operator) -> Result<f64> {
    let herm = hermiticity_error(a.matrix());
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    Ok(max_eigenvalue(a.matrix()))
}

/// `Σ_α K_α ⊗ K_α*`, the natural (transfer) representation.
pub fn transfer_matrix(map: &CPMap) -> CMat {
    let d = map.dim();
    let mut t = CMat::zeros(d * d, d * d);
    for k in map.kraus() {
        t += k.kronecker(&k.conjugate());
    }
    t
}

/// Largest singular value of `Σ_α K_α ⊗ K_α*`.
pub fn schatten_channel_norm(map: &CPMap) -> f64 {
    transfer_matrix(map)
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Random Kraus operator with uniform complex entries, divided by its
/// largest singular value.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    loop {
        let k = random_complex_matrix(rng, d, d);
        let smax = k.singular_values().iter().cloned().fold(0.0, f64::max);
        if smax > 1e-12 {
            return k / C64::new(smax, 0.0);
        }
    }
}

/// Single-Kraus random outcome, deterministic in `seed`.
pub fn random_rank1_instrument(seed: u64, d_s: usize) -> CPMap {
    let mut rng = seeded(seed);
    CPMap {
        kraus: vec![random_kraus(&mut rng, d_s)],
        label: format!("random({seed})"),
    }
}

/// Choi matrix `Σ_ab A(|a⟩⟨b|) ⊗ |a⟩⟨b|`, output leg first.
pub fn choi(map: &CPMap) -> CMat {
    let d = map.dim();
    let mut c = CMat::zeros(d * d, d * d);
    for k in map.kraus() {
        // vec(K) with row index o*d + i
        let v = CVec::from_iterator(d * d, (0..d * d).map(|r| k[(r / d, r % d)]));
        c += &v * v.adjoint();
    }
    c
}

/// Orthogonal Kraus operators from the Choi eigendecomposition.
pub fn canonical_kraus(map: &CPMap) -> Vec<CMat> {
    let d = map.dim();
    let eig = SymmetricEigen::new(hermitian_part(&choi(map)));
    let mut out = Vec::new();
    for (n, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > KRAUS_RANK_CUTOFF {
            let v = eig.eigenvectors.column(n);
            let s = C64::new(lam.sqrt(), 0.0);
            out.push(CMat::from_fn(d, d, |o, i| v[o * d + i] * s));
        }
    }
    out
}

/// Size of the minimal Kraus representation.
pub fn kraus_rank(map: &CPMap) -> usize {
    let eig = SymmetricEigen::new(hermitian_part(&choi(map)));
    eig.eigenvalues.iter().filter(|&&l| l > KRAUS_RANK_CUTOFF).count()
}

/// Replace channel `ρ ↦ tr[ρ] |φ⟩⟨φ|`, Kraus `{|φ⟩⟨a|}`.
pub fn replace_channel(phi: &CVec) -> CPMap {
    let d = phi.len();
    let phi = phi / C64::new(phi.norm(), 0.0);
    let kraus = (0..d)
        .map(|a| {
            let mut k = CMat::zeros(d, d);
            k.set_column(a, &phi);
            k
        })
        .collect();
    CPMap {
        kraus,
        label: "replace".into(),
    }
}

/// Qubit depolarising channel `ρ ↦ (1-p) ρ + p I/2`.
pub fn depolarizing_qubit(p: f64) -> CPMap {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let paulis = [
        CMat::from_row_slice(2, 2, &[o, z, z, o]),
        CMat::from_row_slice(2, 2, &[z, o, o, z]),
        CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    ];
    let w = [(1.0 - 0.75 * p).sqrt(), (p / 4.0).sqrt(), (p / 4.0).sqrt(), (p / 4.0).sqrt()];
    let kraus = paulis
        .iter()
        .zip(w)
        .map(|(s, w)| s * C64::new(w, 0.0))
        .collect();
    CPMap {
        kraus,
        label: format!("depol({p})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{spectral_decompose, State};
    use crate::rng::{random_density_matrix, random_hermitian};

    fn sigma_z_spec() -> SpectralDecomposition {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        spectral_decompose(&Operator::from_matrix(m).unwrap(), None).unwrap()
    }

    #[test]
    fn unitary_at_zero_and_pi() {
        let spec = sigma_z_spec();
        let u0 = unitary_superop(&spec, 0.0);
        assert!((&u0.kraus()[0] - CMat::identity(2, 2)).norm() < 1e-12);
        let upi = unitary_superop(&spec, std::f64::consts::PI);
        assert!((&upi.kraus()[0] + CMat::identity(2, 2)).norm() < 1e-12);
        assert!(upi.is_trace_preserving(1e-9));
    }

    #[test]
    fn unitary_preserves_purity() {
        let mut rng = seeded(2);
        let h = Operator::from_matrix(random_hermitian(&mut rng, 5)).unwrap();
        let spec = spectral_decompose(&h, None).unwrap();
        let psi = State::from_ket(crate::rng::random_ket(&mut rng, 5), vec![5]).unwrap();
        let out = unitary_superop(&spec, 1.7).apply(psi.matrix());
        let purity = crate::qmath::hs_inner(&out, &out).re;
        assert!((purity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dephase_plus_state() {
        let spec = sigma_z_spec();
        let h = C64::new(0.5, 0.0);
        let plus = Operator::from_matrix(CMat::from_element(2, 2, h)).unwrap();
        let out = dephase(&spec, &plus).unwrap();
        assert!((out.matrix() - CMat::identity(2, 2) * h).norm() < 1e-12);
    }

    #[test]
    fn dephase_degenerate_matches_projector_sum() {
        let mut h = CMat::zeros(3, 3);
        h[(2, 2)] = C64::new(1.0, 0.0);
        let spec = spectral_decompose(&Operator::from_matrix(h).unwrap(), Some(1e-9)).unwrap();
        let mut rng = seeded(7);
        let rho = random_density_matrix(&mut rng, 3);
        let got = dephase(&spec, &Operator::from_matrix(rho.clone()).unwrap()).unwrap();
        // explicit projectors onto span{e0,e1} and e2
        let mut p0 = CMat::zeros(3, 3);
        p0[(0, 0)] = C64::new(1.0, 0.0);
        p0[(1, 1)] = C64::new(1.0, 0.0);
        let mut p1 = CMat::zeros(3, 3);
        p1[(2, 2)] = C64::new(1.0, 0.0);
        let want = &p0 * &rho * &p0 + &p1 * &rho * &p1;
        assert!((got.matrix() - want).norm() < 1e-12);
        assert!(got.matrix()[(0, 1)].norm() > 1e-3);
    }

    #[test]
    fn apply_cp_flip() {
        let mut k = CMat::zeros(2, 2);
        k[(0, 1)] = C64::new(1.0, 0.0);
        let map = CPMap::single(k, "flip").unwrap();
        let mut rho = CMat::zeros(2, 2);
        rho[(1, 1)] = C64::new(1.0, 0.0);
        let out = apply_cp(&map, &Operator::from_matrix(rho).unwrap(), Embed::Whole).unwrap();
        assert!((out.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(out.matrix()[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn apply_cp_system_matches_kron() {
        let mut rng = seeded(12);
        let map = CPMap::new(vec![random_kraus(&mut rng, 2) * C64::new(0.6, 0.0), random_kraus(&mut rng, 2) * C64::new(0.6, 0.0)], "m").unwrap();
        let rho = Operator::new(random_density_matrix(&mut rng, 6), vec![2, 3]).unwrap();
        let got = apply_cp(&map, &rho, Embed::System).unwrap();
        let mut want = CMat::zeros(6, 6);
        for k in map.kraus() {
            let kk = k.kronecker(&CMat::identity(3, 3));
            want += &kk * rho.matrix() * kk.adjoint();
        }
        assert!((got.matrix() - want).norm() < 1e-12);
        assert!(got.trace().re <= 1.0 + 1e-10);
    }

    #[test]
    fn povm_of_scaled_projector() {
        let mut p = CMat::zeros(2, 2);
        p[(0, 0)] = C64::new(0.5f64.sqrt(), 0.0);
        let map = CPMap::single(p, "p").unwrap();
        let e = povm_element(&map);
        assert!((e.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((povm_norm(&e).unwrap() - 0.5).abs() < 1e-12);
        assert!((povm_norm(&povm_element(&CPMap::identity(3))).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schatten_norm_simple_cases() {
        assert!((schatten_channel_norm(&CPMap::identity(2)) - 1.0).abs() < 1e-12);
        let mut rng = seeded(1);
        let u = crate::rng::random_unitary(&mut rng, 3);
        let map = CPMap::single(u, "u").unwrap();
        assert!((schatten_channel_norm(&map) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_rank1_is_deterministic_and_valid() {
        assert_eq!(random_rank1_instrument(0, 2), random_rank1_instrument(0, 2));
        for seed in 0..1000 {
            let m = random_rank1_instrument(seed, 2);
            assert_eq!(m.kraus().len(), 1);
            let n = povm_norm(&povm_element(&m)).unwrap();
            assert!(n <= 1.0 + 1e-9, "seed {seed}: {n}");
        }
    }

    #[test]
    fn kraus_ranks() {
        assert_eq!(kraus_rank(&depolarizing_qubit(0.5)), 4);
        assert_eq!(kraus_rank(&CPMap::identity(2)), 1);
        let mut rng = seeded(3);
        let u = crate::rng::random_unitary(&mut rng, 2);
        // two proportional Kraus operators collapse to one
        let m = CPMap::new(vec![&u * C64::new(0.6, 0.0), &u * C64::new(0.8, 0.0)], "dup").unwrap();
        assert_eq!(kraus_rank(&m), 1);
        let canon = canonical_kraus(&m);
        let rho = random_density_matrix(&mut rng, 2);
        let direct = m.apply(&rho);
        let via = CPMap::new(canon, "c").unwrap().apply(&rho);
        assert!((direct - via).norm() < 1e-10);
    }

    #[test]
    fn replace_channel_outputs_phi() {
        let mut rng = seeded(5);
        let phi = crate::rng::random_ket(&mut rng, 3);
        let m = replace_channel(&phi);
        assert!(m.is_trace_preserving(1e-12));
        let rho = random_density_matrix(&mut rng, 3);
        assert!((m.apply(&rho) - &phi * phi.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn instrument_completeness() {
        let basis = CMat::identity(2, 2);
        let inst = Instrument::projective(&basis).unwrap();
        assert!(inst.is_complete());
        assert_eq!(inst.len(), 2);
        let half = Instrument::new(vec![inst.outcomes()[0].clone()]).unwrap();
        assert!(!half.is_complete());
    }
}
