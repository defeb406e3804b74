//! Seeded randomness and the ordered parallel map used by every sampler.
//!
//! All streams are ChaCha8 seeded from `(master, tags…)` through a splitmix64
//! mixer, so a cell's draws never depend on which worker ran it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CMat, CVec, C64};

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of counters into an independent seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, tags: &[u64]) -> SimRng {
    seeded(derive_seed(master, tags))
}

/// Complex number with real and imaginary parts i.i.d. uniform on [-1, 1].
pub fn uniform_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
}

pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    // fill row-major so the draw order matches reading the matrix
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = uniform_complex(rng);
        }
    }
    m
}

/// Unnormalised vector with uniform complex components.
pub fn random_complex_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CVec {
    CVec::from_iterator(d, (0..d).map(|_| uniform_complex(rng)))
}

/// Normalised random ket.
pub fn random_ket<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CVec {
    loop {
        let v = random_complex_vector(rng, d);
        let n = v.norm();
        if n > 1e-12 {
            return v / C64::new(n, 0.0);
        }
    }
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let g = random_complex_matrix(rng, d, d);
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

/// Full-rank density matrix `G G† / tr[G G†]`.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let g = random_complex_matrix(rng, d, d);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    m / C64::new(tr, 0.0)
}

/// Random unitary from the QR factor of a random complex matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    random_complex_matrix(rng, d, d).qr().q()
}

/// Maps `f` over `0..n` and returns results in index order. Runs on the
/// current rayon pool when the `parallel` feature is on.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
