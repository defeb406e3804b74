//! Writing products of system operators as combinations of CP instruments.
//!
//! Left multiplication by `X` is polarised as
//! `Xρ = ¼ Σ_{m=0..3} i^m (X + i^m) ρ (X + i^m)†`, every term being a
//! single-Kraus CP map. Each Kraus operator is rescaled to unit spectral norm
//! so it is a valid instrument outcome, and the scale moves into the weight.

use super::MultitimeInstrument;
use crate::channels::CPMap;
use crate::{CMat, Error, Result, C64};

/// Largest `k` accepted; `4^k` instruments are produced.
pub const MAX_DECOMPOSITION_STEPS: usize = 4;

fn spectral_norm(m: &CMat) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

fn step_terms(x: &CMat) -> Vec<(C64, CMat)> {
    let d = x.nrows();
    let id = CMat::identity(d, d);
    let scale = x.camax().max(1.0);
    // X ∝ I needs no polarisation
    let a = x.trace() / C64::new(d as f64, 0.0);
    if (x - &id * a).camax() <= 1e-14 * scale {
        return vec![(a, id)];
    }
    let mut terms = Vec::with_capacity(4);
    let mut phase = C64::new(1.0, 0.0);
    for _ in 0..4 {
        let k = x + &id * phase;
        let c = spectral_norm(&k);
        if c > 1e-14 * scale {
            terms.push((phase * C64::new(0.25 * c * c, 0.0), k / C64::new(c, 0.0)));
        }
        phase *= C64::new(0.0, 1.0);
    }
    terms
}

/// Weights `α_i` and CP instruments `A^(i)` with
/// `Σ_i α_i ⟨A^(i)⟩ = tr[X_k U_k ⋯ X_1 U_1(ρ)]`; `ops[0]` acts first.
pub fn decompose_observable(ops: &[CMat]) -> Result<Vec<(C64, MultitimeInstrument)>> {
    let k = ops.len();
    if k == 0 {
        return Err(Error::DimensionMismatch("no operators given".into()));
    }
    if k > MAX_DECOMPOSITION_STEPS {
        return Err(Error::TooManyTerms(4usize.saturating_pow(k as u32)));
    }
    let d = ops[0].nrows();
    if ops.iter().any(|x| x.nrows() != d || x.ncols() != d) {
        return Err(Error::DimensionMismatch("operators must be square and equal-sized".into()));
    }
    let per_step: Vec<Vec<(C64, CMat)>> = ops.iter().map(step_terms).collect();
    let mut out: Vec<(C64, Vec<CPMap>)> = vec![(C64::new(1.0, 0.0), Vec::new())];
    for (step, terms) in per_step.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * terms.len());
        for (w, maps) in &out {
            for (m, (a, kraus)) in terms.iter().enumerate() {
                let mut maps = maps.clone();
                maps.push(CPMap::single(kraus.clone(), format!("s{step}t{m}"))?);
                next.push((w * a, maps));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(w, maps)| Ok((w, MultitimeInstrument::new(maps)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_complex_matrix, random_density_matrix, seeded};

    #[test]
    fn identity_is_single_term() {
        let terms = decompose_observable(&[CMat::identity(2, 2)]).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].0 - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_step_reproduces_left_multiplication() {
        let mut rng = seeded(1);
        let x = random_complex_matrix(&mut rng, 3, 3);
        let rho = random_density_matrix(&mut rng, 3);
        let terms = decompose_observable(std::slice::from_ref(&x)).unwrap();
        let mut acc = CMat::zeros(3, 3);
        for (w, instr) in &terms {
            acc += instr.per_step()[0].apply(&rho) * *w;
            assert!(instr.per_step()[0].is_trace_nonincreasing(1e-12));
        }
        assert!((acc - &x * &rho).norm() < 1e-12);
    }

    #[test]
    fn guard() {
        let ops = vec![CMat::identity(2, 2); 5];
        assert!(matches!(decompose_observable(&ops), Err(Error::TooManyTerms(1024))));
    }

    #[test]
    fn minus_identity_drops_no_weight() {
        let x = CMat::identity(2, 2) * C64::new(-2.0, 0.0);
        let terms = decompose_observable(&[x]).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].0 + C64::new(2.0, 0.0)).norm() < 1e-15);
    }
}
