use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::qmath::{spectral_decompose, Operator, SpectralDecomposition, State};
use crate::rng::{random_ket, seeded};
use crate::{Error, Result, C64};

/// Qubit coupled to a random-matrix bath,
/// `H = (ω/2)σ_z ⊗ I + (Δ/2)σ_x ⊗ I + I ⊗ H_E + λ σ_x ⊗ B`.
#[derive(Debug, Clone)]
pub struct RandomBathModel {
    pub omega: f64,
    pub delta: f64,
    pub lambda: f64,
    pub d_e: usize,
    pub seed: u64,
    pub bath_energies: Vec<f64>,
    /// Coupling operator, real symmetric with zero diagonal.
    pub b: DMatrix<f64>,
    /// Full Hamiltonian on `2 ⊗ d_E`; real symmetric.
    pub h_real: DMatrix<f64>,
}

impl RandomBathModel {
    pub fn dim(&self) -> usize {
        2 * self.d_e
    }

    pub fn h_se(&self) -> Operator {
        Operator::new(self.h_real.map(|x| C64::new(x, 0.0)), vec![2, self.d_e]).expect("square")
    }

    pub fn b_operator(&self) -> Operator {
        Operator::from_matrix(self.b.map(|x| C64::new(x, 0.0))).expect("square")
    }

    pub fn spectral(&self) -> Result<SpectralDecomposition> {
        spectral_decompose(&self.h_se(), None)
    }

    /// Real eigendecomposition, energies ascending.
    pub fn real_eigen(&self) -> Result<RealEigen> {
        let eig = SymmetricEigen::try_new(self.h_real.clone(), 1e-14, 0).ok_or(Error::DecompositionFailed)?;
        let d = self.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut v = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            v.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(RealEigen {
            energies,
            vt: v.transpose(),
            v,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RealEigen {
    pub energies: DVector<f64>,
    pub v: DMatrix<f64>,
    pub vt: DMatrix<f64>,
}

impl RealEigen {
    pub fn min_relative_gap(&self) -> f64 {
        let e = &self.energies;
        let width = (e[e.len() - 1] - e[0]).abs().max(1.0);
        e.as_slice()
            .windows(2)
            .map(|w| (w[1] - w[0]) / width)
            .fold(f64::INFINITY, f64::min)
    }
}

fn pauli_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// Samples bath energies, the banded coupling and assembles `H_SE`.
///
/// `B = (R + Rᵀ)/2` with the diagonal removed, then every entry with
/// `|ε_j − ε_k| ≥ ω` zeroed.
pub fn build_random_bath(omega: f64, delta: f64, lambda: f64, d_e: usize, seed: u64) -> RandomBathModel {
    let mut rng = seeded(seed);
    let eps: Vec<f64> = (0..d_e).map(|_| rng.gen::<f64>()).collect();
    let mut r = DMatrix::zeros(d_e, d_e);
    for i in 0..d_e {
        for j in 0..d_e {
            r[(i, j)] = rng.gen_range(-1.0..=1.0);
        }
    }
    let mut b = (&r + r.transpose()) * 0.5;
    for j in 0..d_e {
        for k in 0..d_e {
            if j == k || (eps[j] - eps[k]).abs() >= omega {
                b[(j, k)] = 0.0;
            }
        }
    }
    let sz = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let h_s = sz * (omega / 2.0) + pauli_x() * (delta / 2.0);
    let h_e = DMatrix::from_diagonal(&DVector::from_vec(eps.clone()));
    let h = h_s.kronecker(&DMatrix::identity(d_e, d_e))
        + DMatrix::identity(2, 2).kronecker(&h_e)
        + pauli_x().kronecker(&b) * lambda;
    RandomBathModel {
        omega,
        delta,
        lambda,
        d_e,
        seed,
        bath_energies: eps,
        b,
        h_real: h,
    }
}

/// Uniform complex components on `[-1, 1]`, normalised.
pub fn random_pure_state(d: usize, seed: u64) -> State {
    let mut rng = seeded(seed);
    State::from_ket(random_ket(&mut rng, d), vec![d]).expect("nonzero ket")
}
