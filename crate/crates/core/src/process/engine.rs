//! Propagation of system–environment operators in the energy eigenbasis.
//!
//! A state is either a short list of dyads `Σ |k⟩⟨b|` or a dense matrix, all
//! coordinates taken in the eigenbasis of `H`. Free evolution is then a phase
//! per coordinate and dephasing is a block mask; system maps round-trip
//! through the computational basis where `K ⊗ I` is cheap.

use nalgebra::SymmetricEigen;

use crate::channels::{mask_off_block, CPMap};
use crate::qmath::{apply_system_vec, hermitian_part, left_mul_system, SpectralDecomposition, State};
use crate::{CMat, CVec, C64};

#[derive(Debug, Clone)]
pub(crate) struct Dyad {
    pub ket: CVec,
    /// `None` means the bra equals the ket.
    pub bra: Option<CVec>,
}

#[derive(Debug, Clone)]
pub(crate) enum Rep {
    Dyads(Vec<Dyad>),
    Dense(CMat),
}

/// What happens between two free intervals.
#[derive(Debug, Clone, Copy)]
pub(crate) enum StepOp<'m> {
    Cp(&'m CPMap),
    /// Left multiplication `ρ ↦ (X ⊗ I) ρ`.
    Left(&'m CMat),
}

/// One free interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Interval {
    Time(f64),
    Dephase,
}

pub(crate) struct Engine<'a> {
    spec: &'a SpectralDecomposition,
    d_e: usize,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a SpectralDecomposition, d_e: usize) -> Self {
        Engine { spec, d_e }
    }

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn dense_threshold(&self) -> usize {
        (self.dim() / 2).max(1)
    }

    pub fn initial(&self, rho: &State) -> Rep {
        let v = self.spec.eigenvectors();
        if let Some(ket) = rho.ket() {
            return Rep::Dyads(vec![Dyad {
                ket: v.ad_mul(ket),
                bra: None,
            }]);
        }
        let eig = SymmetricEigen::new(hermitian_part(rho.matrix()));
        let cutoff = 1e-14 * eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let support: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > cutoff)
            .collect();
        if support.len() <= self.dense_threshold() {
            let dyads = support
                .iter()
                .map(|&i| {
                    let u = eig.eigenvectors.column(i) * C64::new(eig.eigenvalues[i].sqrt(), 0.0);
                    Dyad {
                        ket: v.ad_mul(&u),
                        bra: None,
                    }
                })
                .collect();
            Rep::Dyads(dyads)
        } else {
            Rep::Dense(self.spec.to_eigenbasis(rho.matrix()))
        }
    }

    pub fn free(&self, rep: &mut Rep, interval: Interval) {
        match interval {
            Interval::Time(dt) => self.evolve(rep, dt),
            Interval::Dephase => self.dephase(rep),
        }
    }

    pub fn evolve(&self, rep: &mut Rep, dt: f64) {
        let phases: Vec<C64> = (0..self.dim())
            .map(|i| C64::from_polar(1.0, -self.spec.column_energy(i) * dt))
            .collect();
        match rep {
            Rep::Dyads(dyads) => {
                for dy in dyads {
                    dy.ket.iter_mut().zip(&phases).for_each(|(c, p)| *c *= p);
                    if let Some(b) = dy.bra.as_mut() {
                        b.iter_mut().zip(&phases).for_each(|(c, p)| *c *= p);
                    }
                }
            }
            Rep::Dense(m) => {
                let d = m.nrows();
                for j in 0..d {
                    let pj = phases[j].conj();
                    for i in 0..d {
                        m[(i, j)] *= phases[i] * pj;
                    }
                }
            }
        }
    }

    pub fn dephase(&self, rep: &mut Rep) {
        match rep {
            Rep::Dense(m) => mask_off_block(self.spec, m),
            Rep::Dyads(dyads) => {
                let d = self.dim();
                let mut m = CMat::zeros(d, d);
                for block in self.spec.blocks() {
                    for dy in dyads.iter() {
                        let bra = dy.bra.as_ref().unwrap_or(&dy.ket);
                        for j in block.clone() {
                            let bj = bra[j].conj();
                            for i in block.clone() {
                                m[(i, j)] += dy.ket[i] * bj;
                            }
                        }
                    }
                }
                *rep = Rep::Dense(m);
            }
        }
    }

    /// `V† (K ⊗ I) V c`.
    fn sys_vec(&self, k: &CMat, c_comp: &CVec) -> CVec {
        self.spec
            .eigenvectors()
            .ad_mul(&apply_system_vec(k, c_comp, self.d_e))
    }

    pub fn apply(&self, rep: &Rep, op: StepOp) -> Rep {
        let v = self.spec.eigenvectors();
        match rep {
            Rep::Dyads(dyads) => {
                let mut out = Vec::new();
                for dy in dyads {
                    let w_ket = v * &dy.ket;
                    let w_bra = dy.bra.as_ref().map(|b| v * b);
                    match op {
                        StepOp::Cp(map) => {
                            for k in map.kraus() {
                                out.push(Dyad {
                                    ket: self.sys_vec(k, &w_ket),
                                    bra: w_bra.as_ref().map(|w| self.sys_vec(k, w)),
                                });
                            }
                        }
                        StepOp::Left(x) => out.push(Dyad {
                            ket: self.sys_vec(x, &w_ket),
                            bra: Some(dy.bra.clone().unwrap_or_else(|| dy.ket.clone())),
                        }),
                    }
                }
                if out.len() > self.dense_threshold() {
                    Rep::Dense(self.densify(&out))
                } else {
                    Rep::Dyads(out)
                }
            }
            Rep::Dense(m) => {
                let y = self.spec.from_eigenbasis(m);
                let z = match op {
                    StepOp::Cp(map) => {
                        let mut z = CMat::zeros(y.nrows(), y.ncols());
                        for k in map.kraus() {
                            let left = left_mul_system(k, &y, self.d_e);
                            z += left_mul_system(k, &left.adjoint(), self.d_e).adjoint();
                        }
                        z
                    }
                    StepOp::Left(x) => left_mul_system(x, &y, self.d_e),
                };
                Rep::Dense(self.spec.to_eigenbasis(&z))
            }
        }
    }

    fn densify(&self, dyads: &[Dyad]) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for dy in dyads {
            let bra = dy.bra.as_ref().unwrap_or(&dy.ket);
            m.ger(C64::new(1.0, 0.0), &dy.ket, &bra.conjugate(), C64::new(1.0, 0.0));
        }
        m
    }

    pub fn trace(&self, rep: &Rep) -> C64 {
        match rep {
            Rep::Dyads(dyads) => dyads
                .iter()
                .map(|dy| match &dy.bra {
                    Some(b) => b.dotc(&dy.ket),
                    None => C64::new(dy.ket.norm_squared(), 0.0),
                })
                .sum(),
            Rep::Dense(m) => m.trace(),
        }
    }

    /// `tr[O_k F_k ⋯ O_1 F_1 (ρ)]` for free intervals `F` and operations `O`.
    pub fn run(&self, init: &Rep, intervals: &[Interval], ops: &[StepOp]) -> C64 {
        let mut rep = init.clone();
        for (iv, op) in intervals.iter().zip(ops) {
            self.free(&mut rep, *iv);
            rep = self.apply(&rep, *op);
        }
        self.trace(&rep)
    }

    /// Probabilities of every outcome string of a sequence of instruments,
    /// with step 1 varying fastest.
    pub fn distribution(
        &self,
        init: &Rep,
        intervals: &[Interval],
        steps: &[&[CPMap]],
    ) -> Vec<f64> {
        let total: usize = steps.iter().map(|s| s.len()).product();
        let mut out = vec![0.0; total];
        self.branch(init.clone(), intervals, steps, 0, 0, 1, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &self,
        mut rep: Rep,
        intervals: &[Interval],
        steps: &[&[CPMap]],
        level: usize,
        index: usize,
        stride: usize,
        out: &mut [f64],
    ) {
        if level == steps.len() {
            out[index] = self.trace(&rep).re;
            return;
        }
        self.free(&mut rep, intervals[level]);
        let n = steps[level].len();
        for (x, map) in steps[level].iter().enumerate() {
            let next = self.apply(&rep, StepOp::Cp(map));
            self.branch(next, intervals, steps, level + 1, index + x * stride, stride * n, out);
        }
    }
}
