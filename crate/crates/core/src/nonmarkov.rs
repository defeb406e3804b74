//! Conditional statistics across a causal break and the non-Markovianity
//! measure
//! `N = Σ_{x+} max_{x−, y−} [P(x+|x−) − P(x+|y−)]`.
//!
//! The last `A_−` step is followed by a replace channel onto a fresh system
//! state, so any dependence of `x+` on `x−` must be carried by the
//! environment.

use crate::bounds::{effective_dimension, result3_terms, sample_times, BoundReport};
use crate::channels::{replace_channel, CPMap, Instrument};
use crate::process::{MultitimeMeasurement, ProcessEvaluator, ProcessSpec};
use crate::qmath::State;
use crate::rng::par_map;
use crate::{Error, Result};

/// Marginals at or below this are treated as undefined conditioning events.
pub const EPS_RARE: f64 = 1e-12;

/// Measure, re-prepare, measure.
#[derive(Debug, Clone)]
pub struct CausalBreakProtocol {
    pub a_minus: Vec<Instrument>,
    pub reprepare: State,
    pub a_plus: Vec<Instrument>,
}

impl CausalBreakProtocol {
    pub fn new(a_minus: Vec<Instrument>, reprepare: State, a_plus: Vec<Instrument>) -> Result<Self> {
        if a_minus.is_empty() || a_plus.is_empty() {
            return Err(Error::DimensionMismatch("both sides of the break need a step".into()));
        }
        let d = reprepare.dim();
        if a_minus.iter().chain(&a_plus).any(|i| i.dim() != d) {
            return Err(Error::DimensionMismatch(
                "instruments and re-prepared state differ in dimension".into(),
            ));
        }
        Ok(CausalBreakProtocol {
            a_minus,
            reprepare,
            a_plus,
        })
    }

    pub fn k_minus(&self) -> usize {
        self.a_minus.len()
    }

    pub fn steps(&self) -> usize {
        self.a_minus.len() + self.a_plus.len()
    }

    pub fn is_complete(&self) -> bool {
        self.a_minus.iter().chain(&self.a_plus).all(Instrument::is_complete)
    }

    fn replace(&self) -> CPMap {
        let ket = match self.reprepare.ket() {
            Some(k) => k.clone(),
            None => {
                // largest eigenvector; the break is meant to prepare a pure state
                let eig = nalgebra::SymmetricEigen::new(self.reprepare.matrix().clone());
                let i = eig.eigenvalues.imax();
                eig.eigenvectors.column(i).into_owned()
            }
        };
        replace_channel(&ket)
    }

    fn minus_steps(&self) -> Result<Vec<Instrument>> {
        let replace = self.replace();
        let mut steps = self.a_minus.clone();
        let last = steps.pop().expect("nonempty");
        let broken = last
            .outcomes()
            .iter()
            .map(|o| replace.after(o).with_label(o.label()))
            .collect();
        steps.push(Instrument::new(broken)?);
        Ok(steps)
    }

    fn measurements(&self) -> Result<(MultitimeMeasurement, MultitimeMeasurement)> {
        let minus = self.minus_steps()?;
        let mut all = minus.clone();
        all.extend(self.a_plus.iter().cloned());
        Ok((MultitimeMeasurement::new(all)?, MultitimeMeasurement::new(minus)?))
    }

    fn num_minus(&self) -> usize {
        self.a_minus.iter().map(Instrument::len).product()
    }
}

/// Joint probabilities `p(x+, x−)` and marginals `p(x−)` with identity on
/// the `+` side.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    joint: Vec<Vec<f64>>,
    marginal: Vec<f64>,
}

impl ConditionalTable {
    /// `joint[x−][x+]`.
    pub fn new(joint: Vec<Vec<f64>>, marginal: Vec<f64>) -> Result<Self> {
        if joint.len() != marginal.len() || joint.is_empty() {
            return Err(Error::DimensionMismatch("one marginal per x− column".into()));
        }
        let np = joint[0].len();
        if joint.iter().any(|c| c.len() != np) {
            return Err(Error::DimensionMismatch("ragged joint table".into()));
        }
        Ok(ConditionalTable { joint, marginal })
    }

    /// Builds a table from a column vector of conditionals, marginal 1 each.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = vec![1.0; columns.len()];
        Self::new(columns, m)
    }

    pub fn num_minus(&self) -> usize {
        self.joint.len()
    }

    pub fn num_plus(&self) -> usize {
        self.joint[0].len()
    }

    pub fn joint(&self, x_plus: usize, x_minus: usize) -> f64 {
        self.joint[x_minus][x_plus]
    }

    pub fn marginal(&self, x_minus: usize) -> f64 {
        self.marginal[x_minus]
    }

    pub fn is_defined(&self, x_minus: usize) -> bool {
        self.marginal[x_minus] > EPS_RARE
    }

    pub fn conditional(&self, x_plus: usize, x_minus: usize) -> Result<f64> {
        if !self.is_defined(x_minus) {
            return Err(Error::RareOutcome(x_minus));
        }
        Ok(self.joint[x_minus][x_plus] / self.marginal[x_minus])
    }

    /// `P(·|x−)`.
    pub fn column(&self, x_minus: usize) -> Result<Vec<f64>> {
        (0..self.num_plus()).map(|x| self.conditional(x, x_minus)).collect()
    }

    fn from_distributions(full: &[f64], minus: &[f64], n_minus: usize) -> Self {
        let n_plus = full.len() / n_minus;
        let joint = (0..n_minus)
            .map(|w| (0..n_plus).map(|x| full[w + n_minus * x]).collect())
            .collect();
        ConditionalTable {
            joint,
            marginal: minus[..n_minus].to_vec(),
        }
    }
}

fn table_with(
    eval: &ProcessEvaluator,
    proto: &CausalBreakProtocol,
    times: Option<&[f64]>,
) -> Result<ConditionalTable> {
    if proto.steps() != eval.spec().steps() {
        return Err(Error::DimensionMismatch(format!(
            "{}-step protocol on a {}-step process",
            proto.steps(),
            eval.spec().steps()
        )));
    }
    let (full, minus) = proto.measurements()?;
    let (p, m) = match times {
        Some(t) => (eval.distribution_at(t, &full)?, eval.distribution_at(t, &minus)?),
        None => (eval.distribution(&full)?, eval.distribution(&minus)?),
    };
    Ok(ConditionalTable::from_distributions(&p, &m, proto.num_minus()))
}

/// Table for the spec's own schedule; a dephased schedule gives `Ω`.
pub fn conditional_probabilities(spec: &ProcessSpec, proto: &CausalBreakProtocol) -> Result<ConditionalTable> {
    table_with(&ProcessEvaluator::new(spec), proto, None)
}

/// Table of the equilibrium process regardless of the spec's schedule.
pub fn conditional_probabilities_equilibrium(
    spec: &ProcessSpec,
    proto: &CausalBreakProtocol,
) -> Result<ConditionalTable> {
    let deph = spec.with_schedule(crate::process::Schedule::Dephased)?;
    conditional_probabilities(&deph, proto)
}

/// `Σ_{x+} (max_{x−} P(x+|x−) − min_{x−} P(x+|x−))` over defined columns.
pub fn non_markovianity(table: &ConditionalTable) -> Result<f64> {
    let defined: Vec<usize> = (0..table.num_minus()).filter(|&w| table.is_defined(w)).collect();
    if defined.len() < 2 {
        return Err(Error::InsufficientColumns(defined.len()));
    }
    let mut n = 0.0;
    for x in 0..table.num_plus() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &w in &defined {
            let p = table.conditional(x, w)?;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        n += hi - lo;
    }
    Ok(n)
}

/// Result-3 tail check: frequency of `|N_Υ − N_Ω| ≥ η_k / d_eff^{1/3}`
/// against `2 / d_eff^{1/3}`, with `η_k` evaluated per time sample.
pub fn result3_check(
    spec: &ProcessSpec,
    proto: &CausalBreakProtocol,
    window: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    let k = spec.steps();
    let d_eff = effective_dimension(spec.hamiltonian(), spec.rho())?;
    let cube = d_eff.cbrt();
    let eval = ProcessEvaluator::new(spec);
    let deph = spec.with_schedule(crate::process::Schedule::Dephased)?;
    let eval_o = ProcessEvaluator::new(&deph);
    let omega = table_with(&eval_o, proto, None)?;
    let n_omega = non_markovianity(&omega)?;

    let check = |table: ConditionalTable| -> Result<bool> {
        let n_u = non_markovianity(&table)?;
        let terms = result3_terms(&table, &omega, k, proto.k_minus(), spec.d_s(), d_eff)?;
        Ok((n_u - n_omega).abs() >= terms.eta / cube)
    };
    let hits: Vec<bool> = if spec.is_dephased() {
        vec![check(omega.clone())?; n]
    } else {
        let window = window.unwrap_or_else(|| crate::bounds::default_window(spec.hamiltonian()));
        par_map(n, |i| {
            let t = sample_times(seed, i as u64, k, window);
            table_with(&eval, proto, Some(&t)).and_then(check)
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    let p = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok(BoundReport::new("result3", spec, d_eff, p, se, 2.0 / cube, n))
}
