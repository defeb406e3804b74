//! Effective dimension and the equilibration bounds.
//!
//! Infinite time averages of means are taken exactly through the dephasing
//! map. Second moments and tail probabilities are estimated by sampling every
//! interval uniformly from `[0, window]`.

use serde::Serialize;

use crate::channels::{kraus_rank, CPMap};
use crate::nonmarkov::ConditionalTable;
use crate::process::{
    decompose_observable, MultitimeInstrument, MultitimeMeasurement, ProcessEvaluator, ProcessSpec,
};
use crate::qmath::{check_nonresonance, left_mul_system, max_eigenvalue, SpectralDecomposition, State};
use crate::rng::{par_map, stream};
use crate::{CMat, Error, Result};
use rand::Rng;

/// Tolerance, relative to the spectral width, for the non-resonance flag.
pub const RESONANCE_TOL: f64 = 1e-10;

/// One Monte Carlo bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub context: String,
    pub k: usize,
    pub d_s: usize,
    pub d_e: usize,
    pub d_eff: f64,
    pub lhs_estimate: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub samples: usize,
    /// The right-hand side is at least 1, so the statement carries no content.
    pub vacuous: bool,
    pub nonresonant: bool,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        context: impl Into<String>,
        spec: &ProcessSpec,
        d_eff: f64,
        lhs_estimate: f64,
        lhs_stderr: f64,
        rhs: f64,
        samples: usize,
    ) -> Self {
        BoundReport {
            context: context.into(),
            k: spec.steps(),
            d_s: spec.d_s(),
            d_e: spec.d_e(),
            d_eff,
            lhs_estimate,
            lhs_stderr,
            rhs,
            satisfied: lhs_estimate - 3.0 * lhs_stderr <= rhs,
            samples,
            vacuous: rhs >= 1.0,
            nonresonant: is_nonresonant(spec.hamiltonian()),
        }
    }

    /// Context string as written to CSV, flagging resonant Hamiltonians.
    pub fn label(&self) -> String {
        if self.nonresonant {
            self.context.clone()
        } else {
            format!("{} [non-resonance violated]", self.context)
        }
    }
}

pub fn is_nonresonant(h: &SpectralDecomposition) -> bool {
    let e = h.energies();
    let width = e.last().unwrap_or(&0.0) - e.first().unwrap_or(&0.0);
    check_nonresonance(h, RESONANCE_TOL * width.max(1.0))
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Frequency of `true` and its binomial standard error.
fn frequency(hits: &[bool]) -> (f64, f64) {
    let n = hits.len() as f64;
    let p = hits.iter().filter(|&&h| h).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// Sampling window `10³ / min gap`.
pub fn default_window(h: &SpectralDecomposition) -> f64 {
    match h.min_gap() {
        Some(g) if g > 0.0 => 1e3 / g,
        _ => 1e3,
    }
}

/// Intervals for Monte Carlo draw `index`, each uniform on `[0, window)`.
pub fn sample_times(seed: u64, index: u64, steps: usize, window: f64) -> Vec<f64> {
    let mut rng = stream(seed, &[index]);
    (0..steps).map(|_| rng.gen::<f64>() * window).collect()
}

/// `tr[$(X)²]`, i.e. `Σ_n ‖P_n X P_n‖_F²`.
pub(crate) fn dephased_purity(h: &SpectralDecomposition, x: &CMat) -> f64 {
    let m = h.to_eigenbasis(x);
    let mut acc = 0.0;
    for b in h.blocks() {
        for j in b.clone() {
            for i in b.clone() {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc
}

/// `d_eff[σ] = 1 / tr[$(σ)²]`.
pub fn effective_dimension(h: &SpectralDecomposition, sigma: &State) -> Result<f64> {
    if sigma.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs Hamiltonian dim {}",
            sigma.dim(),
            h.dim()
        )));
    }
    let purity = match sigma.ket() {
        Some(psi) => {
            let c = h.eigenvectors().ad_mul(psi);
            h.blocks()
                .iter()
                .map(|b| b.clone().map(|i| c[i].norm_sqr()).sum::<f64>().powi(2))
                .sum()
        }
        None => dephased_purity(h, sigma.matrix()),
    };
    Ok(1.0 / purity)
}

/// `(2^k − 1) d_S^{2k} / d_eff`.
pub fn main_bound_rhs(k: usize, d_s: usize, d_eff: f64) -> f64 {
    ((1u64 << k) - 1) as f64 * (d_s as f64).powi(2 * k as i32) / d_eff
}

/// `Σ_β (K_β ⊗ I) X (K_β ⊗ I)†`.
fn embed_apply(map: &CPMap, x: &CMat, d_e: usize) -> CMat {
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    for k in map.kraus() {
        let left = left_mul_system(k, x, d_e);
        out += left_mul_system(k, &left.adjoint(), d_e).adjoint();
    }
    out
}

/// `Σ_β (K_β ⊗ I)† X (K_β ⊗ I)`.
fn embed_adjoint(map: &CPMap, x: &CMat, d_e: usize) -> CMat {
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    for k in map.kraus() {
        let kd = k.adjoint();
        let left = left_mul_system(&kd, x, d_e);
        out += left_mul_system(&kd, &left.adjoint(), d_e).adjoint();
    }
    out
}

/// Per-`j` terms `‖𝖠_{k:…:(j+1)}‖_p² · tr[$(A_j(ω_j))²]`, `j = 0..k`, with
/// `A_0(ω_0) = ρ`.
pub fn tighter_bound_terms(spec: &ProcessSpec, instr: &MultitimeInstrument) -> Result<Vec<f64>> {
    let k = spec.steps();
    if instr.steps() != k || instr.dim() != spec.d_s() {
        return Err(Error::DimensionMismatch(format!(
            "{}-step instrument on dim {} for {k}-step process on dim {}",
            instr.steps(),
            instr.dim(),
            spec.d_s()
        )));
    }
    let h = spec.hamiltonian();
    let d = h.dim();
    let d_e = spec.d_e();
    let maps = instr.per_step();
    let deph = |x: &CMat| crate::channels::dephase_matrix(h, x);

    // Heisenberg picture: povm[j] is the POVM element of A_k $ ⋯ $ A_{j+1}
    let mut povm = vec![CMat::zeros(0, 0); k];
    povm[k - 1] = embed_adjoint(&maps[k - 1], &CMat::identity(d, d), d_e);
    for j in (0..k - 1).rev() {
        povm[j] = embed_adjoint(&maps[j], &deph(&povm[j + 1]), d_e);
    }

    // Schrödinger picture: x_0 = ρ, x_j = A_j($(x_{j-1}))
    let mut terms = Vec::with_capacity(k);
    let mut x = spec.rho().matrix().clone();
    for j in 0..k {
        if j > 0 {
            x = embed_apply(&maps[j - 1], &deph(&x), d_e);
        }
        let tr = x.trace().re;
        if tr <= 1e-300 {
            return Err(Error::NonPositivePurity(j));
        }
        let norm = max_eigenvalue(&povm[j]).max(0.0);
        terms.push(norm * norm * dephased_purity(h, &x));
    }
    Ok(terms)
}

/// `(2^k − 1) max_j ‖𝖠_{k:…:(j+1)}‖_p² / d_eff[A_j(ω_j)]`.
pub fn tighter_bound_rhs(spec: &ProcessSpec, instr: &MultitimeInstrument) -> Result<f64> {
    let terms = tighter_bound_terms(spec, instr)?;
    let k = spec.steps();
    Ok(((1u64 << k) - 1) as f64 * terms.into_iter().fold(0.0, f64::max))
}

fn window_or_default(spec: &ProcessSpec, window: Option<f64>) -> f64 {
    window.unwrap_or_else(|| default_window(spec.hamiltonian()))
}

/// Monte Carlo estimate of `mean |⟨A⟩_Υ − ⟨A⟩_Ω|²` against the main bound.
pub fn variance_monte_carlo(
    spec: &ProcessSpec,
    instr: &MultitimeInstrument,
    window: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    let d_eff = effective_dimension(spec.hamiltonian(), spec.rho())?;
    let rhs = main_bound_rhs(spec.steps(), spec.d_s(), d_eff);
    let eval = ProcessEvaluator::new(spec);
    let omega = eval.expectation_dephased(instr)?;
    if spec.is_dephased() {
        let e = eval.expectation(instr)?;
        let lhs = (e - omega).norm_sqr();
        return Ok(BoundReport::new("variance", spec, d_eff, lhs, 0.0, rhs, n));
    }
    let window = window_or_default(spec, window);
    let k = spec.steps();
    let samples = par_map(n, |i| {
        let t = sample_times(seed, i as u64, k, window);
        eval.expectation_at(&t, instr).map(|e| (e - omega).norm_sqr())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_stderr(&samples);
    Ok(BoundReport::new("variance", spec, d_eff, mean, se, rhs, n))
}

/// How the Chebyshev deviation threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// `d_S^k √(2^k−1) Σ|α_i| / d_eff^{1/3}`.
    Paper,
    Fixed(f64),
}

/// Result-1 tail check for the correlation function of `ops`.
pub fn chebyshev_deviation_check(
    spec: &ProcessSpec,
    ops: &[CMat],
    policy: ThresholdPolicy,
    window: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    let k = spec.steps();
    let d_eff = effective_dimension(spec.hamiltonian(), spec.rho())?;
    let alpha_sum: f64 = decompose_observable(ops)?.iter().map(|(a, _)| a.norm()).sum();
    let cube = d_eff.cbrt();
    let threshold = match policy {
        ThresholdPolicy::Paper => {
            (spec.d_s() as f64).powi(k as i32) * (((1u64 << k) - 1) as f64).sqrt() * alpha_sum / cube
        }
        ThresholdPolicy::Fixed(t) => t,
    };
    let rhs = 1.0 / cube;
    let eval = ProcessEvaluator::new(spec);
    let omega = eval.correlation_dephased(ops)?;
    let hits: Vec<bool> = if spec.is_dephased() {
        vec![(eval.correlation(ops)? - omega).norm() >= threshold; n]
    } else {
        let window = window_or_default(spec, window);
        par_map(n, |i| {
            let t = sample_times(seed, i as u64, k, window);
            eval.correlation_at(&t, ops).map(|c| (c - omega).norm() >= threshold)
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    let (p, se) = frequency(&hits);
    Ok(BoundReport::new("chebyshev", spec, d_eff, p, se, rhs, n))
}

/// A set of multitime POVMs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub instruments: Vec<MultitimeMeasurement>,
}

impl MeasurementSet {
    pub fn new(instruments: Vec<MultitimeMeasurement>) -> Self {
        MeasurementSet { instruments }
    }
}

/// `S_M`: total canonical Kraus count over every outcome string of every
/// member.
pub fn measurement_set_cardinality(set: &MeasurementSet) -> usize {
    set.instruments
        .iter()
        .map(|m| {
            m.per_step()
                .iter()
                .map(|inst| inst.outcomes().iter().map(kraus_rank).sum::<usize>())
                .product::<usize>()
        })
        .sum()
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `½ max_{A ∈ M} Σ_x |⟨A_x⟩_Υ − ⟨A_x⟩_Ω|`, each spec evaluated with its own
/// schedule.
pub fn diamond_distance(spec_u: &ProcessSpec, spec_o: &ProcessSpec, set: &MeasurementSet) -> Result<f64> {
    if spec_u.steps() != spec_o.steps() || spec_u.d_s() != spec_o.d_s() {
        return Err(Error::DimensionMismatch("processes differ in shape".into()));
    }
    let eu = ProcessEvaluator::new(spec_u);
    let eo = ProcessEvaluator::new(spec_o);
    let mut best = 0.0_f64;
    for m in &set.instruments {
        let p = eu.distribution(m)?;
        let q = eo.distribution(m)?;
        best = best.max(half_l1(&p, &q));
    }
    Ok(best)
}

/// Result-2 tail report plus the mean-distance report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Result2Report {
    pub tail: BoundReport,
    pub mean: BoundReport,
    pub threshold: f64,
    pub cardinality: usize,
}

pub fn result2_check(
    spec: &ProcessSpec,
    set: &MeasurementSet,
    window: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<Result2Report> {
    let k = spec.steps();
    let d_eff = effective_dimension(spec.hamiltonian(), spec.rho())?;
    let s = measurement_set_cardinality(set) as f64;
    let dsk = (spec.d_s() as f64).powi(k as i32);
    let g = (((1u64 << k) - 1) as f64).sqrt();
    let quarter = d_eff.powf(0.25);
    let threshold = s * dsk * g / (2.0 * quarter);
    let mean_rhs = 0.5 * s * dsk * g / d_eff.sqrt();

    let eval = ProcessEvaluator::new(spec);
    let omega: Vec<Vec<f64>> = set
        .instruments
        .iter()
        .map(|m| eval.distribution_dephased(m))
        .collect::<Result<_>>()?;
    let distance = |dists: Vec<Vec<f64>>| {
        dists
            .iter()
            .zip(&omega)
            .map(|(p, q)| half_l1(p, q))
            .fold(0.0, f64::max)
    };
    let values: Vec<f64> = if spec.is_dephased() {
        let d = distance(
            set.instruments
                .iter()
                .map(|m| eval.distribution(m))
                .collect::<Result<_>>()?,
        );
        vec![d; n]
    } else {
        let window = window_or_default(spec, window);
        par_map(n, |i| {
            let t = sample_times(seed, i as u64, k, window);
            set.instruments
                .iter()
                .map(|m| eval.distribution_at(&t, m))
                .collect::<Result<Vec<_>>>()
                .map(distance)
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    let hits: Vec<bool> = values.iter().map(|&v| v >= threshold).collect();
    let (p, se) = frequency(&hits);
    let (m, mse) = mean_stderr(&values);
    Ok(Result2Report {
        tail: BoundReport::new("result2-tail", spec, d_eff, p, se, 1.0 / quarter, n),
        mean: BoundReport::new("result2-mean", spec, d_eff, m, mse, mean_rhs, n),
        threshold,
        cardinality: s as usize,
    })
}

/// `η_k`, `C_k` and the geometric ratio at the maximising `(w, Λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Result3Terms {
    pub eta: f64,
    pub c_k: f64,
    pub ratio: f64,
}

/// Closed-form `C_k = |⟨A_+ ⊗ A_w⟩_Λ̄| Σ_{i≥1} a^i / (d_eff^{(i−1)/3} ⟨A_w⟩_Λ^i)`
/// with `a = √(2^{k−}−1) d_S^{k−}`.
pub fn result3_c(joint_other: f64, marginal: f64, k_minus: usize, d_s: usize, d_eff: f64) -> Result<(f64, f64)> {
    let a = (((1u64 << k_minus) - 1) as f64).sqrt() * (d_s as f64).powi(k_minus as i32);
    let cube = d_eff.cbrt();
    let r = a / (cube * marginal);
    if !(r < 1.0) {
        return Err(Error::SeriesDiverges(r));
    }
    Ok((joint_other.abs() * cube * r / (1.0 - r), r))
}

/// `η_k = 2 max_{w, Λ} (√(2^k−1) d_S^k + C_k) / ⟨A_w⟩_Λ`, maximised over all
/// `A_−` outcomes `w` and, inside `C_k`, over the `A_+` outcomes.
pub fn result3_terms(
    upsilon: &ConditionalTable,
    omega: &ConditionalTable,
    k: usize,
    k_minus: usize,
    d_s: usize,
    d_eff: f64,
) -> Result<Result3Terms> {
    let base = (((1u64 << k) - 1) as f64).sqrt() * (d_s as f64).powi(k as i32);
    let mut best: Option<Result3Terms> = None;
    for (lam, bar) in [(upsilon, omega), (omega, upsilon)] {
        for w in 0..lam.num_minus() {
            let marg = lam.marginal(w);
            if marg <= crate::nonmarkov::EPS_RARE {
                return Err(Error::RareOutcome(w));
            }
            let joint = (0..bar.num_plus())
                .map(|x| bar.joint(x, w).abs())
                .fold(0.0, f64::max);
            let (c, r) = result3_c(joint, marg, k_minus, d_s, d_eff)?;
            let eta = 2.0 * (base + c) / marg;
            if best.is_none_or(|b| eta > b.eta) {
                best = Some(Result3Terms { eta, c_k: c, ratio: r });
            }
        }
    }
    best.ok_or(Error::InsufficientColumns(0))
}
