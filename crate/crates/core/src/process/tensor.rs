//! Choi-state process tensors.
//!
//! Slot layout for `k` steps, most significant first:
//!
//! ```text
//!   [ i_k, o_k, i_{k-1}, o_{k-1}, …, i_1, o_1 ]
//!
//!   ρ ─U_1─┬─ o_1 ──▶ A_1 ──▶ i_1 ─┬─U_2─ ⋯ ─U_k─┬─ o_k ──▶ A_k ──▶ i_k ─ tr
//! ```
//!
//! `o_ℓ` is the system leaving the process into instrument `ℓ`, `i_ℓ` the
//! system the instrument hands back. The earliest step occupies the least
//! significant factors. An instrument outcome contributes its Choi matrix
//! `C_ℓ = Σ_ab A_ℓ(|a⟩⟨b|) ⊗ |a⟩⟨b|` on `(i_ℓ, o_ℓ)`, and
//! `⟨A⟩ = Σ_IJ Υ_IJ (C_k ⊗ ⋯ ⊗ C_1)_IJ = tr[Υ Cᵀ]`, i.e. each slot pair is
//! transposed.

use super::engine::Interval;
use super::{MultitimeInstrument, ProcessSpec};
use crate::channels::{choi, dephase_matrix, unitary_superop};
use crate::qmath::Operator;
use crate::{CMat, Error, Result, C64};

/// Largest Choi dimension `d_S^{2k}` that will be materialised.
pub const MAX_TENSOR_DIM: usize = 4096;
/// Largest intermediate register `d_S^{2(k-1)} · d_S · d_E`.
pub const MAX_REGISTER_DIM: usize = 2048;

#[derive(Debug, Clone)]
pub struct ProcessTensor {
    choi: Operator,
    steps: usize,
    d_s: usize,
    normalization: f64,
}

impl ProcessTensor {
    pub fn choi(&self) -> &Operator {
        &self.choi
    }

    pub fn matrix(&self) -> &CMat {
        self.choi.matrix()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    /// Contraction with the all-identity instrument.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub(crate) fn from_parts(choi: CMat, steps: usize, d_s: usize) -> Result<Self> {
        let choi = Operator::new(choi, vec![d_s; 2 * steps])?;
        let mut t = ProcessTensor {
            choi,
            steps,
            d_s,
            normalization: 0.0,
        };
        t.normalization = contract(&t, &MultitimeInstrument::identity(d_s, steps))?.re;
        Ok(t)
    }
}

fn check_size(d_s: usize, d: usize, steps: usize) -> Result<()> {
    let full = d_s
        .checked_pow(2 * steps as u32)
        .filter(|&n| n <= MAX_TENSOR_DIM)
        .ok_or_else(|| Error::TooLarge(format!("d_S^(2k) = {d_s}^{} exceeds {MAX_TENSOR_DIM}", 2 * steps)))?;
    let register = (full / (d_s * d_s)) * d;
    if register > MAX_REGISTER_DIM {
        return Err(Error::TooLarge(format!(
            "intermediate register {register} exceeds {MAX_REGISTER_DIM}"
        )));
    }
    Ok(())
}

fn build(spec: &ProcessSpec, intervals: &[Interval]) -> Result<ProcessTensor> {
    let d_s = spec.d_s();
    let d_e = spec.d_e();
    let d = d_s * d_e;
    let k = spec.steps();
    check_size(d_s, d, k)?;
    let h = spec.hamiltonian();

    let mut r = spec.rho().matrix().clone();
    let mut anc = 1usize;
    for (step, iv) in intervals.iter().enumerate() {
        // free evolution on each (a, b) block of the register
        let u = match iv {
            Interval::Time(dt) => Some(unitary_superop(h, *dt).kraus()[0].clone()),
            Interval::Dephase => None,
        };
        for a in 0..anc {
            for b in 0..anc {
                let block = r.view((a * d, b * d), (d, d)).into_owned();
                let next = match &u {
                    Some(u) => u * block * u.adjoint(),
                    None => dephase_matrix(h, &block),
                };
                r.view_mut((a * d, b * d), (d, d)).copy_from(&next);
            }
        }

        if step + 1 < k {
            // hand o to the ancilla, feed a fresh input i tied to s'
            let new_anc = d_s * d_s * anc;
            let mut next = CMat::zeros(new_anc * d, new_anc * d);
            for i in 0..d_s {
                for o in 0..d_s {
                    for a in 0..anc {
                        for e in 0..d_e {
                            let row = (((i * d_s + o) * anc + a) * d_s + i) * d_e + e;
                            let src_row = (a * d_s + o) * d_e + e;
                            for j in 0..d_s {
                                for p in 0..d_s {
                                    for b in 0..anc {
                                        let col0 = (((j * d_s + p) * anc + b) * d_s + j) * d_e;
                                        let src0 = (b * d_s + p) * d_e;
                                        for f in 0..d_e {
                                            next[(row, col0 + f)] = r[(src_row, src0 + f)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            r = next;
            anc = new_anc;
        }
    }

    // last output: trace E, identity on the final input slot
    let m_dim = d_s * anc;
    let mut m = CMat::zeros(m_dim, m_dim);
    for o in 0..d_s {
        for a in 0..anc {
            for p in 0..d_s {
                for b in 0..anc {
                    let mut acc = C64::new(0.0, 0.0);
                    for e in 0..d_e {
                        acc += r[((a * d_s + o) * d_e + e, (b * d_s + p) * d_e + e)];
                    }
                    m[(o * anc + a, p * anc + b)] = acc;
                }
            }
        }
    }
    let choi = CMat::identity(d_s, d_s).kronecker(&m);
    ProcessTensor::from_parts(choi, k, d_s)
}

/// Choi matrix of the process with the spec's schedule.
pub fn build_process_tensor(spec: &ProcessSpec) -> Result<ProcessTensor> {
    build(spec, &spec.intervals())
}

/// Choi matrix of the equilibrium process: dephasing on every interval.
pub fn build_equilibrium_tensor(spec: &ProcessSpec) -> Result<ProcessTensor> {
    build(spec, &vec![Interval::Dephase; spec.steps()])
}

/// `Σ_IJ Υ_IJ (C_k ⊗ ⋯ ⊗ C_1)_IJ`.
pub fn contract(tensor: &ProcessTensor, instr: &MultitimeInstrument) -> Result<C64> {
    if instr.steps() != tensor.steps || instr.dim() != tensor.d_s {
        return Err(Error::DimensionMismatch(format!(
            "{}-step instrument on dim {} vs {}-step tensor on dim {}",
            instr.steps(),
            instr.dim(),
            tensor.steps,
            tensor.d_s
        )));
    }
    let mut c = CMat::from_element(1, 1, C64::new(1.0, 0.0));
    for map in instr.per_step().iter().rev() {
        c = c.kronecker(&choi(map));
    }
    Ok(tensor
        .matrix()
        .iter()
        .zip(c.iter())
        .map(|(u, c)| u * c)
        .sum())
}

/// Contracts the last step with the identity instrument, giving the
/// `(k-1)`-step marginal process.
pub fn marginalize(tensor: &ProcessTensor) -> Result<ProcessTensor> {
    if tensor.steps < 2 {
        return Err(Error::DimensionMismatch("cannot marginalise a one-step process".into()));
    }
    let d_s = tensor.d_s;
    let rest = tensor.matrix().nrows() / (d_s * d_s);
    let u = tensor.matrix();
    let mut out = CMat::zeros(rest, rest);
    for a in 0..rest {
        for b in 0..rest {
            let mut acc = C64::new(0.0, 0.0);
            for o in 0..d_s {
                for p in 0..d_s {
                    acc += u[((o * d_s + o) * rest + a, (p * d_s + p) * rest + b)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    ProcessTensor::from_parts(out, tensor.steps - 1, d_s)
}

/// Evaluates both sides of `tr[μ x ν y π z] = tr[Ξ R]` for `μ, ν, π` on
/// `F ⊗ G` and `x, y, z` on `F`, with
/// `R = Σ x_bc y_de z_fa |bdf⟩⟨ace|` and `Ξ = tr_G[μ * ν * π]`.
pub fn link_product_demo(
    mu: &Operator,
    nu: &Operator,
    pi: &Operator,
    x: &Operator,
    y: &Operator,
    z: &Operator,
) -> Result<(C64, C64)> {
    let dims = mu.dims();
    if dims.len() != 2 || nu.dims() != dims || pi.dims() != dims {
        return Err(Error::DimensionMismatch("μ, ν, π must share dims [d_F, d_G]".into()));
    }
    let (df, dg) = (dims[0], dims[1]);
    for s in [x, y, z] {
        if s.dim() != df {
            return Err(Error::DimensionMismatch(format!(
                "x, y, z must be {df}-dimensional, got {}",
                s.dim()
            )));
        }
    }
    let ig = CMat::identity(dg, dg);
    let xe = x.matrix().kronecker(&ig);
    let ye = y.matrix().kronecker(&ig);
    let ze = z.matrix().kronecker(&ig);
    let lhs = (mu.matrix() * xe * nu.matrix() * ye * pi.matrix() * ze).trace();

    let (m, n, p) = (mu.matrix(), nu.matrix(), pi.matrix());
    let at = |i: usize, g: usize| i * dg + g;
    let tri = |a: usize, c: usize, e: usize| (a * df + c) * df + e;
    let d3 = df * df * df;
    let mut xi = CMat::zeros(d3, d3);
    for a in 0..df {
        for b in 0..df {
            for c in 0..df {
                for d in 0..df {
                    for e in 0..df {
                        for f in 0..df {
                            let mut acc = C64::new(0.0, 0.0);
                            for al in 0..dg {
                                for be in 0..dg {
                                    for ga in 0..dg {
                                        acc += m[(at(a, al), at(b, be))]
                                            * n[(at(c, be), at(d, ga))]
                                            * p[(at(e, ga), at(f, al))];
                                    }
                                }
                            }
                            xi[(tri(a, c, e), tri(b, d, f))] = acc;
                        }
                    }
                }
            }
        }
    }
    let (xm, ym, zm) = (x.matrix(), y.matrix(), z.matrix());
    let mut r = CMat::zeros(d3, d3);
    for a in 0..df {
        for b in 0..df {
            for c in 0..df {
                for d in 0..df {
                    for e in 0..df {
                        for f in 0..df {
                            r[(tri(b, d, f), tri(a, c, e))] = xm[(b, c)] * ym[(d, e)] * zm[(f, a)];
                        }
                    }
                }
            }
        }
    }
    let rhs = (xi * r).trace();
    Ok((lhs, rhs))
}
