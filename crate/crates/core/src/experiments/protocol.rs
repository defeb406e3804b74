//! The measure / re-prepare / measure protocol on the random-bath model.
//!
//! Step 1 applies one of `n_aminus` random single-Kraus outcomes `K_w` and
//! re-prepares the system in `φ₂`; step 2 applies `K₂` and re-prepares `φ₃`;
//! step 3 applies `K₃`. For each `A_+` draw `(φ₂, φ₃, K₂, K₃, Δt)` the
//! non-Markovianity is `max_w P(+|w) − min_w P(+|w)`.
//!
//! `H_SE` is real symmetric, so its eigenvectors are real and every
//! propagation below is a real matrix product on split real/imaginary parts.
//! For `Ω` all intermediate states are diagonal in the energy basis
//! (nondegenerate spectrum) and each step is a `d × d` transfer matrix built
//! from Hadamard products of eigenvector overlaps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::model::{RandomBathModel, RealEigen};
use crate::channels::{random_kraus, replace_channel, CPMap, Instrument};
use crate::nonmarkov::{conditional_probabilities, non_markovianity, CausalBreakProtocol, EPS_RARE};
use crate::process::{ProcessSpec, Schedule};
use crate::qmath::{spectral_decompose, State};
use crate::rng::{random_ket, stream};
use crate::{CMat, CVec, Error, Result, C64};

/// Free-evolution intervals between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    /// `Δt ~ U[5, 50]`.
    Long,
    /// `Δt ~ U[0.01, 0.5]`.
    Short,
    /// Every interval replaced by dephasing, i.e. `Ω`.
    Dephased,
}

impl TimeMode {
    pub fn window(self) -> Option<(f64, f64)> {
        match self {
            TimeMode::Long => Some((5.0, 50.0)),
            TimeMode::Short => Some((0.01, 0.5)),
            TimeMode::Dephased => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeMode::Long => "long",
            TimeMode::Short => "short",
            TimeMode::Dephased => "dephased",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(TimeMode::Long),
            "short" => Ok(TimeMode::Short),
            "dephased" => Ok(TimeMode::Dephased),
            _ => Err(Error::Parse(format!("unknown time mode '{s}'"))),
        }
    }

    /// Maps a unit uniform onto the mode's window.
    pub fn interval(self, u: f64) -> Option<f64> {
        self.window().map(|(a, b)| a + (b - a) * u)
    }
}

impl std::fmt::Display for TimeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolCounts {
    pub n_aminus: usize,
    pub n_aplus: usize,
    pub n_models: usize,
}

impl Default for ProtocolCounts {
    fn default() -> Self {
        ProtocolCounts {
            n_aminus: 20,
            n_aplus: 25,
            n_models: 40,
        }
    }
}

/// One sampled `A_+` together with the unit uniforms behind its intervals.
#[derive(Debug, Clone)]
pub struct APlusDraw {
    pub phi2: CVec,
    pub phi3: CVec,
    pub k2: CMat,
    pub k3: CMat,
    pub unit_times: [f64; 3],
}

impl APlusDraw {
    pub fn times(&self, mode: TimeMode) -> Option<[f64; 3]> {
        let w = mode.window()?;
        Some(self.unit_times.map(|u| w.0 + (w.1 - w.0) * u))
    }
}

/// Every instrument used on one `(H, ρ)` pair. Shared by all time modes.
#[derive(Debug, Clone)]
pub struct ProtocolDraws {
    pub a_minus: Vec<CMat>,
    pub a_plus: Vec<APlusDraw>,
}

impl ProtocolDraws {
    pub fn sample(seed: u64, n_aminus: usize, n_aplus: usize) -> Self {
        let mut rng = stream(seed, &[0]);
        let a_minus = (0..n_aminus).map(|_| random_kraus(&mut rng, 2)).collect();
        let a_plus = (0..n_aplus)
            .map(|j| {
                let mut rng = stream(seed, &[1, j as u64]);
                let phi2 = random_ket(&mut rng, 2);
                let phi3 = random_ket(&mut rng, 2);
                let k2 = random_kraus(&mut rng, 2);
                let k3 = random_kraus(&mut rng, 2);
                let unit_times = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                APlusDraw {
                    phi2,
                    phi3,
                    k2,
                    k3,
                    unit_times,
                }
            })
            .collect();
        ProtocolDraws { a_minus, a_plus }
    }
}

/// `max_w P(+|w) − min_w P(+|w)` over outcomes with nonnegligible marginal.
fn spread(joint: &[f64], marginal: &[f64]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut count = 0;
    for (j, m) in joint.iter().zip(marginal) {
        if *m > EPS_RARE {
            let p = j / m;
            lo = lo.min(p);
            hi = hi.max(p);
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::InsufficientColumns(count));
    }
    Ok(hi - lo)
}

fn to_split(cols: &[CVec]) -> DMatrix<f64> {
    let d = cols[0].len();
    let m = cols.len();
    DMatrix::from_fn(d, 2 * m, |i, j| if j < m { cols[j][i].re } else { cols[j - m][i].im })
}

fn from_split(x: &DMatrix<f64>) -> Vec<CVec> {
    let m = x.ncols() / 2;
    (0..m)
        .map(|j| CVec::from_fn(x.nrows(), |i, _| C64::new(x[(i, j)], x[(i, j + m)])))
        .collect()
}

/// `(K ⊗ I) v` split into the two environment blocks.
fn system_blocks(k: &CMat, v: &CVec, d_e: usize) -> [CVec; 2] {
    let b0 = v.rows(0, d_e);
    let b1 = v.rows(d_e, d_e);
    [b0 * k[(0, 0)] + b1 * k[(0, 1)], b0 * k[(1, 0)] + b1 * k[(1, 1)]]
}

fn product(phi: &CVec, e: &CVec) -> CVec {
    let d_e = e.len();
    CVec::from_fn(2 * d_e, |i, _| phi[i / d_e] * e[i % d_e])
}

fn re_herm(k: &CMat) -> [[f64; 2]; 2] {
    let g = k.adjoint() * k;
    [[g[(0, 0)].re, g[(0, 1)].re], [g[(1, 0)].re, g[(1, 1)].re]]
}

/// Precomputed eigenbasis data for one `(H, ψ)` pair.
pub struct Fig2Evaluator {
    eig: RealEigen,
    d_e: usize,
    /// `Vᵀ ψ`.
    c0: CVec,
    p0: DVector<f64>,
    /// `O_{ut} = V_uᵀ V_t`, indexed `2u + t`.
    overlaps: Vec<DMatrix<f64>>,
    /// Hadamard products `O_a ∘ O_b` for `a ≤ b`.
    hadamard: Vec<((usize, usize), DMatrix<f64>)>,
    /// `H_ab p0`.
    hp0: Vec<DVector<f64>>,
}

impl Fig2Evaluator {
    pub fn new(model: &RandomBathModel, psi: &CVec) -> Result<Self> {
        let d_e = model.d_e;
        let d = model.dim();
        if psi.len() != d {
            return Err(Error::DimensionMismatch(format!("state dim {} vs {d}", psi.len())));
        }
        let eig = model.real_eigen()?;
        let scale = eig.energies.amax().max(f64::MIN_POSITIVE);
        let min_gap = eig
            .energies
            .as_slice()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap <= 1e-9 * scale {
            return Err(Error::InvalidState("degenerate spectrum; use the generic evaluator".into()));
        }
        let c0 = CVec::from_fn(d, |n, _| {
            (0..d).fold(C64::new(0.0, 0.0), |acc, i| acc + psi[i] * eig.v[(i, n)])
        });
        let p0 = c0.map(|c| c.norm_sqr());
        let vs = [eig.v.rows(0, d_e).into_owned(), eig.v.rows(d_e, d_e).into_owned()];
        let o01 = vs[0].transpose() * &vs[1];
        let overlaps = vec![
            vs[0].transpose() * &vs[0],
            o01.clone(),
            o01.transpose(),
            vs[1].transpose() * &vs[1],
        ];
        let mut hadamard = Vec::with_capacity(10);
        for a in 0..4 {
            for b in a..4 {
                hadamard.push(((a, b), overlaps[a].component_mul(&overlaps[b])));
            }
        }
        let hp0 = hadamard.iter().map(|(_, h)| h * &p0).collect();
        Ok(Fig2Evaluator {
            eig,
            d_e,
            c0,
            p0,
            overlaps,
            hadamard,
            hp0,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.d_e
    }

    fn propagate(&self, cols: &[CVec], dt: f64) -> Vec<CVec> {
        let mut y = &self.eig.vt * to_split(cols);
        let m = cols.len();
        for n in 0..self.dim() {
            let (s, c) = (self.eig.energies[n] * dt).sin_cos();
            for j in 0..m {
                let (a, b) = (y[(n, j)], y[(n, j + m)]);
                y[(n, j)] = a * c + b * s;
                y[(n, j + m)] = b * c - a * s;
            }
        }
        from_split(&(&self.eig.v * y))
    }

    /// `p(w, +)` and `p(w)` under unitary evolution with intervals `dt`.
    pub fn upsilon_probabilities(&self, a_minus: &[CMat], draw: &APlusDraw, dt: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
        let d_e = self.d_e;
        let chi = self.evolved_initial(dt[0]);
        let mut marg = Vec::with_capacity(a_minus.len());
        let mut cols = Vec::with_capacity(2 * a_minus.len());
        for k in a_minus {
            let blocks = system_blocks(k, &chi, d_e);
            marg.push(blocks[0].norm_squared() + blocks[1].norm_squared());
            cols.extend(blocks.iter().map(|e| product(&draw.phi2, e)));
        }
        let z = self.propagate(&cols, dt[1]);
        let mut cols3 = Vec::with_capacity(2 * z.len());
        for v in &z {
            cols3.extend(system_blocks(&draw.k2, v, d_e).iter().map(|e| product(&draw.phi3, e)));
        }
        let z3 = self.propagate(&cols3, dt[2]);
        let per_w = 4;
        let joint = z3
            .chunks(per_w)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|v| system_blocks(&draw.k3, v, d_e).iter().map(|b| b.norm_squared()).sum::<f64>())
                    .sum()
            })
            .collect();
        (joint, marg)
    }

    /// `e^{-iHΔt} ψ` in the computational basis.
    fn evolved_initial(&self, dt: f64) -> CVec {
        let c = CVec::from_fn(self.dim(), |n, _| {
            self.c0[n] * C64::from_polar(1.0, -self.eig.energies[n] * dt)
        });
        let split = to_split(&[c]);
        from_split(&(&self.eig.v * split)).remove(0)
    }

    /// Transfer matrix of `$ ∘ (replace φ) ∘ (K ⊗ I)` on energy populations.
    fn transfer(&self, k: &CMat, phi: &CVec) -> DMatrix<f64> {
        let coef = self.coefficients(k, phi);
        let d = self.dim();
        let mut t = DMatrix::zeros(d, d);
        for (c, (_, h)) in coef.iter().zip(&self.hadamard) {
            t.zip_apply(h, |a, b| *a += c * b);
        }
        t
    }

    /// Weights of the Hadamard products in
    /// `T_{mn} = Σ M_{tt'} φ_u φ̄_{u'} O_{ut}[m,n] O_{u't'}[m,n]`.
    fn coefficients(&self, k: &CMat, phi: &CVec) -> Vec<f64> {
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for t in 0..2 {
            for tp in 0..2 {
                m[t][tp] = k[(0, t)] * k[(0, tp)].conj() + k[(1, t)] * k[(1, tp)].conj();
            }
        }
        let c = |a: usize, b: usize| {
            let (u, t) = (a / 2, a % 2);
            let (up, tp) = (b / 2, b % 2);
            m[t][tp] * phi[u] * phi[up].conj()
        };
        self.hadamard
            .iter()
            .map(|&((a, b), _)| if a == b { c(a, a).re } else { 2.0 * c(a, b).re })
            .collect()
    }

    /// `tr[E Γ_n]` with `Γ_n = tr_E |n⟩⟨n|`.
    fn populations_effect(&self, effect: [[f64; 2]; 2]) -> DVector<f64> {
        let d = self.dim();
        DVector::from_fn(d, |n, _| {
            let mut acc = 0.0;
            for s in 0..2 {
                for t in 0..2 {
                    acc += effect[s][t] * self.overlaps[2 * s + t][(n, n)];
                }
            }
            acc
        })
    }

    /// `p(w, +)` and `p(w)` for the equilibrium process.
    pub fn omega_probabilities(&self, a_minus: &[CMat], draw: &APlusDraw) -> (Vec<f64>, Vec<f64>) {
        let e3 = self.populations_effect(re_herm(&draw.k3));
        let t2 = self.transfer(&draw.k2, &draw.phi3);
        let left = t2.tr_mul(&e3);
        let mut joint = Vec::with_capacity(a_minus.len());
        let mut marg = Vec::with_capacity(a_minus.len());
        for k in a_minus {
            let coef = self.coefficients(k, &draw.phi2);
            let mut after = DVector::zeros(self.dim());
            for (c, h) in coef.iter().zip(&self.hp0) {
                after.axpy(*c, h, 1.0);
            }
            joint.push(left.dot(&after));
            marg.push(self.populations_effect(re_herm(k)).dot(&self.p0));
        }
        (joint, marg)
    }

    pub fn n_upsilon(&self, a_minus: &[CMat], draw: &APlusDraw, dt: [f64; 3]) -> Result<f64> {
        let (j, m) = self.upsilon_probabilities(a_minus, draw, dt);
        spread(&j, &m)
    }

    pub fn n_omega(&self, a_minus: &[CMat], draw: &APlusDraw) -> Result<f64> {
        let (j, m) = self.omega_probabilities(a_minus, draw);
        spread(&j, &m)
    }
}

/// The same protocol as a `CausalBreakProtocol` for the generic engine.
pub fn generic_protocol(a_minus: &[CMat], draw: &APlusDraw) -> Result<CausalBreakProtocol> {
    let minus = a_minus
        .iter()
        .enumerate()
        .map(|(w, k)| CPMap::single(k.clone(), format!("w{w}")))
        .collect::<Result<Vec<_>>>()?;
    let step2 = replace_channel(&draw.phi3).after(&CPMap::single(draw.k2.clone(), "k2")?);
    let step3 = CPMap::single(draw.k3.clone(), "k3")?;
    CausalBreakProtocol::new(
        vec![Instrument::new(minus)?],
        State::from_ket(draw.phi2.clone(), vec![2])?,
        vec![Instrument::new(vec![step2])?, Instrument::new(vec![step3])?],
    )
}

/// Reference evaluation through `ProcessSpec`; slow, used for checks and for
/// degenerate spectra.
pub fn generic_n(model: &RandomBathModel, psi: &CVec, a_minus: &[CMat], draw: &APlusDraw, mode: TimeMode) -> Result<f64> {
    let h = spectral_decompose(&model.h_se(), None)?;
    let rho = State::from_ket(psi.clone(), vec![2, model.d_e])?;
    let schedule = match draw.times(mode) {
        Some(t) => Schedule::Times(t.to_vec()),
        None => Schedule::Dephased,
    };
    let spec = ProcessSpec::new(h, rho, 2, 3, schedule)?;
    let proto = generic_protocol(a_minus, draw)?;
    non_markovianity(&conditional_probabilities(&spec, &proto)?)
}

/// Per-model result: `N` averaged over the `A_+` draws for every requested
/// mode, plus `N_Ω` and the model's effective dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    pub d_eff: f64,
    pub n_upsilon: Vec<(TimeMode, f64)>,
    pub n_omega: f64,
}

/// Runs the protocol on one `(H, ψ)` pair.
pub fn run_fig2_model(
    model: &RandomBathModel,
    psi: &State,
    modes: &[TimeMode],
    draws: &ProtocolDraws,
) -> Result<ModelOutcome> {
    let ket = psi
        .ket()
        .cloned()
        .ok_or_else(|| Error::InvalidState("protocol needs a pure initial state".into()))?;
    let n = draws.a_plus.len() as f64;
    let fast = Fig2Evaluator::new(model, &ket);
    let d_eff = match &fast {
        Ok(f) => 1.0 / f.p0.iter().map(|p| p * p).sum::<f64>(),
        Err(_) => crate::bounds::effective_dimension(&model.spectral()?, psi)?,
    };
    let mut n_omega = 0.0;
    for draw in &draws.a_plus {
        n_omega += match &fast {
            Ok(f) => f.n_omega(&draws.a_minus, draw)?,
            Err(_) => generic_n(model, &ket, &draws.a_minus, draw, TimeMode::Dephased)?,
        };
    }
    n_omega /= n;
    let mut n_upsilon = Vec::with_capacity(modes.len());
    for &mode in modes {
        let avg = match mode.window() {
            None => n_omega,
            Some(_) => {
                let mut acc = 0.0;
                for draw in &draws.a_plus {
                    let dt = draw.times(mode).expect("timed mode");
                    acc += match &fast {
                        Ok(f) => f.n_upsilon(&draws.a_minus, draw, dt)?,
                        Err(_) => generic_n(model, &ket, &draws.a_minus, draw, mode)?,
                    };
                }
                acc / n
            }
        };
        n_upsilon.push((mode, avg));
    }
    Ok(ModelOutcome {
        d_eff,
        n_upsilon,
        n_omega,
    })
}
