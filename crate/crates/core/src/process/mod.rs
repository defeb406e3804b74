//! Multitime processes.
//!
//! A `k`-step process alternates free evolution and system interventions:
//!
//! ```text
//! ρ ──U_1── A_1 ──U_2── A_2 ── ⋯ ──U_k── A_k ──tr
//! ```
//!
//! `U_ℓ` is either `e^{-iHΔt_ℓ}` conjugation or the dephasing map `$`, the
//! latter giving the equilibrium process.

pub(crate) mod engine;
mod observable;
mod tensor;

pub use observable::{decompose_observable, MAX_DECOMPOSITION_STEPS};
pub use tensor::{
    build_equilibrium_tensor, build_process_tensor, contract, link_product_demo, marginalize,
    ProcessTensor, MAX_REGISTER_DIM, MAX_TENSOR_DIM,
};

use crate::channels::{CPMap, Instrument};
use crate::qmath::{SpectralDecomposition, State};
use crate::{CMat, Error, Result, C64};
use engine::{Engine, Interval, Rep, StepOp};

/// Free evolution between interventions.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// Concrete intervals `Δt_1 … Δt_k`.
    Times(Vec<f64>),
    /// Every interval replaced by the dephasing map.
    Dephased,
}

/// Hamiltonian, initial state and step structure defining both `Υ` and `Ω`.
#[derive(Debug, Clone)]
pub struct ProcessSpec {
    hamiltonian: SpectralDecomposition,
    rho: State,
    d_s: usize,
    d_e: usize,
    steps: usize,
    schedule: Schedule,
}

impl ProcessSpec {
    pub fn new(
        hamiltonian: SpectralDecomposition,
        rho: State,
        d_s: usize,
        steps: usize,
        schedule: Schedule,
    ) -> Result<Self> {
        let d = hamiltonian.dim();
        if d_s == 0 || !d.is_multiple_of(d_s) {
            return Err(Error::DimensionMismatch(format!(
                "system dim {d_s} does not divide total dim {d}"
            )));
        }
        if rho.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "state dim {} vs Hamiltonian dim {d}",
                rho.dim()
            )));
        }
        if steps == 0 {
            return Err(Error::DimensionMismatch("steps must be at least 1".into()));
        }
        check_schedule(&schedule, steps)?;
        Ok(ProcessSpec {
            hamiltonian,
            rho,
            d_s,
            d_e: d / d_s,
            steps,
            schedule,
        })
    }

    pub fn hamiltonian(&self) -> &SpectralDecomposition {
        &self.hamiltonian
    }

    pub fn rho(&self) -> &State {
        &self.rho
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn is_dephased(&self) -> bool {
        self.schedule == Schedule::Dephased
    }

    pub fn with_schedule(&self, schedule: Schedule) -> Result<Self> {
        check_schedule(&schedule, self.steps)?;
        Ok(ProcessSpec {
            schedule,
            ..self.clone()
        })
    }

    pub fn with_steps(&self, steps: usize, schedule: Schedule) -> Result<Self> {
        Self::new(self.hamiltonian.clone(), self.rho.clone(), self.d_s, steps, schedule)
    }

    pub(crate) fn intervals(&self) -> Vec<Interval> {
        match &self.schedule {
            Schedule::Times(t) => t.iter().map(|&dt| Interval::Time(dt)).collect(),
            Schedule::Dephased => vec![Interval::Dephase; self.steps],
        }
    }
}

fn check_schedule(schedule: &Schedule, steps: usize) -> Result<()> {
    if let Schedule::Times(t) = schedule {
        if t.len() != steps {
            return Err(Error::ScheduleMismatch(format!(
                "{} intervals for {steps} steps",
                t.len()
            )));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::ScheduleMismatch("non-finite interval".into()));
        }
    }
    Ok(())
}

/// One CP map per step, `A_k ⊗ ⋯ ⊗ A_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitimeInstrument {
    per_step: Vec<CPMap>,
}

impl MultitimeInstrument {
    pub fn new(per_step: Vec<CPMap>) -> Result<Self> {
        let d = per_step
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty instrument sequence".into()))?
            .dim();
        if per_step.iter().any(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch("steps act on different dimensions".into()));
        }
        Ok(MultitimeInstrument { per_step })
    }

    pub fn identity(d_s: usize, steps: usize) -> Self {
        MultitimeInstrument {
            per_step: vec![CPMap::identity(d_s); steps],
        }
    }

    pub fn per_step(&self) -> &[CPMap] {
        &self.per_step
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn dim(&self) -> usize {
        self.per_step[0].dim()
    }
}

/// A multitime POVM: one instrument per step, outcomes enumerated jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitimeMeasurement {
    per_step: Vec<Instrument>,
}

impl MultitimeMeasurement {
    pub fn new(per_step: Vec<Instrument>) -> Result<Self> {
        let d = per_step
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty measurement sequence".into()))?
            .dim();
        if per_step.iter().any(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch("steps act on different dimensions".into()));
        }
        Ok(MultitimeMeasurement { per_step })
    }

    pub fn per_step(&self) -> &[Instrument] {
        &self.per_step
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_complete(&self) -> bool {
        self.per_step.iter().all(Instrument::is_complete)
    }

    pub fn num_outcomes(&self) -> usize {
        self.per_step.iter().map(Instrument::len).product()
    }

    /// Pads with trivial instruments up to `steps`.
    pub(crate) fn padded(&self, steps: usize) -> Vec<Instrument> {
        let d = self.per_step[0].dim();
        let mut v = self.per_step.clone();
        while v.len() < steps {
            v.push(Instrument::trivial(d));
        }
        v
    }
}

/// Evaluates many instruments against one spec, reusing the initial state
/// preparation.
pub struct ProcessEvaluator<'a> {
    spec: &'a ProcessSpec,
    engine: Engine<'a>,
    init: Rep,
}

impl<'a> ProcessEvaluator<'a> {
    pub fn new(spec: &'a ProcessSpec) -> Self {
        let engine = Engine::new(&spec.hamiltonian, spec.d_e);
        let init = engine.initial(&spec.rho);
        ProcessEvaluator { spec, engine, init }
    }

    pub fn spec(&self) -> &ProcessSpec {
        self.spec
    }

    fn check_maps<'m>(&self, maps: impl Iterator<Item = &'m CPMap>, n: usize) -> Result<()> {
        if n != self.spec.steps {
            return Err(Error::DimensionMismatch(format!(
                "{n} steps for a {}-step process",
                self.spec.steps
            )));
        }
        for m in maps {
            if m.dim() != self.spec.d_s {
                return Err(Error::DimensionMismatch(format!(
                    "map on dim {} for system dim {}",
                    m.dim(),
                    self.spec.d_s
                )));
            }
        }
        Ok(())
    }

    fn times_intervals(&self, times: &[f64]) -> Result<Vec<Interval>> {
        check_schedule(&Schedule::Times(times.to_vec()), self.spec.steps)?;
        Ok(times.iter().map(|&t| Interval::Time(t)).collect())
    }

    fn run_instr(&self, intervals: &[Interval], instr: &MultitimeInstrument) -> Result<C64> {
        self.check_maps(instr.per_step.iter(), instr.steps())?;
        let ops: Vec<StepOp> = instr.per_step.iter().map(StepOp::Cp).collect();
        Ok(self.engine.run(&self.init, intervals, &ops))
    }

    /// `tr[A_k U_k ⋯ A_1 U_1(ρ)]` with the given intervals.
    pub fn expectation_at(&self, times: &[f64], instr: &MultitimeInstrument) -> Result<C64> {
        self.run_instr(&self.times_intervals(times)?, instr)
    }

    /// `tr[A_k $ ⋯ A_1 $(ρ)]`.
    pub fn expectation_dephased(&self, instr: &MultitimeInstrument) -> Result<C64> {
        self.run_instr(&vec![Interval::Dephase; self.spec.steps], instr)
    }

    /// Uses the spec's own schedule.
    pub fn expectation(&self, instr: &MultitimeInstrument) -> Result<C64> {
        self.run_instr(&self.spec.intervals(), instr)
    }

    fn run_left(&self, intervals: &[Interval], ops: &[CMat]) -> Result<C64> {
        if ops.len() != self.spec.steps {
            return Err(Error::DimensionMismatch(format!(
                "{} operators for a {}-step process",
                ops.len(),
                self.spec.steps
            )));
        }
        if ops.iter().any(|x| x.nrows() != self.spec.d_s || x.ncols() != self.spec.d_s) {
            return Err(Error::DimensionMismatch("observable is not on the system".into()));
        }
        let ops: Vec<StepOp> = ops.iter().map(StepOp::Left).collect();
        Ok(self.engine.run(&self.init, intervals, &ops))
    }

    /// `⟨X_k(t_k) ⋯ X_1(t_1)⟩ = tr[X_k U_k ⋯ X_1 U_1(ρ)]`.
    pub fn correlation_at(&self, times: &[f64], ops: &[CMat]) -> Result<C64> {
        self.run_left(&self.times_intervals(times)?, ops)
    }

    pub fn correlation_dephased(&self, ops: &[CMat]) -> Result<C64> {
        self.run_left(&vec![Interval::Dephase; self.spec.steps], ops)
    }

    pub fn correlation(&self, ops: &[CMat]) -> Result<C64> {
        self.run_left(&self.spec.intervals(), ops)
    }

    fn run_distribution(&self, intervals: &[Interval], meas: &MultitimeMeasurement) -> Result<Vec<f64>> {
        if meas.steps() > self.spec.steps {
            return Err(Error::DimensionMismatch(format!(
                "{}-step measurement on a {}-step process",
                meas.steps(),
                self.spec.steps
            )));
        }
        let padded = meas.padded(self.spec.steps);
        let steps: Vec<&[CPMap]> = padded.iter().map(Instrument::outcomes).collect();
        self.check_maps(steps.iter().flat_map(|s| s.iter()), steps.len())?;
        Ok(self.engine.distribution(&self.init, intervals, &steps))
    }

    /// Joint outcome probabilities, step 1 varying fastest.
    pub fn distribution_at(&self, times: &[f64], meas: &MultitimeMeasurement) -> Result<Vec<f64>> {
        self.run_distribution(&self.times_intervals(times)?, meas)
    }

    pub fn distribution_dephased(&self, meas: &MultitimeMeasurement) -> Result<Vec<f64>> {
        self.run_distribution(&vec![Interval::Dephase; self.spec.steps], meas)
    }

    pub fn distribution(&self, meas: &MultitimeMeasurement) -> Result<Vec<f64>> {
        self.run_distribution(&self.spec.intervals(), meas)
    }
}

/// Nested-composition expectation value of the time-resolved process.
pub fn expectation_direct(spec: &ProcessSpec, instr: &MultitimeInstrument) -> Result<C64> {
    match &spec.schedule {
        Schedule::Times(t) => ProcessEvaluator::new(spec).expectation_at(t, instr),
        Schedule::Dephased => Err(Error::ScheduleMismatch(
            "direct expectation needs concrete intervals".into(),
        )),
    }
}

/// Expectation value in the equilibrium process; intervals are ignored.
pub fn expectation_equilibrium(spec: &ProcessSpec, instr: &MultitimeInstrument) -> Result<C64> {
    ProcessEvaluator::new(spec).expectation_dephased(instr)
}

/// Multitime correlation function of system operators.
pub fn correlation_direct(spec: &ProcessSpec, ops: &[CMat]) -> Result<C64> {
    match &spec.schedule {
        Schedule::Times(t) => ProcessEvaluator::new(spec).correlation_at(t, ops),
        Schedule::Dephased => Err(Error::ScheduleMismatch(
            "direct correlation needs concrete intervals".into(),
        )),
    }
}

pub fn correlation_equilibrium(spec: &ProcessSpec, ops: &[CMat]) -> Result<C64> {
    ProcessEvaluator::new(spec).correlation_dephased(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::random_kraus;
    use crate::qmath::{spectral_decompose, Operator};
    use crate::rng::{random_density_matrix, random_hermitian, random_ket, seeded};

    fn spec_2x2(seed: u64, times: Vec<f64>) -> ProcessSpec {
        let mut rng = seeded(seed);
        let h = Operator::new(random_hermitian(&mut rng, 4), vec![2, 2]).unwrap();
        let rho = Operator::new(random_density_matrix(&mut rng, 4), vec![2, 2]).unwrap();
        let steps = times.len();
        ProcessSpec::new(
            spectral_decompose(&h, None).unwrap(),
            State::new(rho).unwrap(),
            2,
            steps,
            Schedule::Times(times),
        )
        .unwrap()
    }

    #[test]
    fn identity_instrument_gives_one() {
        let spec = spec_2x2(1, vec![0.7]);
        let e = expectation_direct(&spec, &MultitimeInstrument::identity(2, 1)).unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-12);
        let e = expectation_equilibrium(&spec, &MultitimeInstrument::identity(2, 1)).unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn projective_outcome_without_dynamics() {
        let mut rng = seeded(2);
        let rho_s = random_density_matrix(&mut rng, 2);
        let rho_e = random_density_matrix(&mut rng, 3);
        let rho = State::new(Operator::new(rho_s.kronecker(&rho_e), vec![2, 3]).unwrap()).unwrap();
        let h = spectral_decompose(&Operator::new(CMat::zeros(6, 6), vec![2, 3]).unwrap(), None).unwrap();
        let spec = ProcessSpec::new(h, rho, 2, 1, Schedule::Times(vec![3.0])).unwrap();
        let mut p = CMat::zeros(2, 2);
        p[(0, 0)] = C64::new(1.0, 0.0);
        let instr = MultitimeInstrument::new(vec![CPMap::single(p.clone(), "p").unwrap()]).unwrap();
        let got = expectation_direct(&spec, &instr).unwrap();
        let want = (&p * &rho_s).trace();
        assert!((got - want).norm() < 1e-12);
    }

    fn brute_force(spec: &ProcessSpec, times: &[f64], instr: &MultitimeInstrument) -> C64 {
        // full-space matrices, computational basis
        let h = spec.hamiltonian().reconstruct();
        let d_e = spec.d_e();
        let mut rho = spec.rho().matrix().clone();
        for (dt, map) in times.iter().zip(instr.per_step()) {
            let u = (h.clone() * C64::new(0.0, -dt)).exp();
            rho = &u * rho * u.adjoint();
            let mut next = CMat::zeros(rho.nrows(), rho.ncols());
            for k in map.kraus() {
                let kk = k.kronecker(&CMat::identity(d_e, d_e));
                next += &kk * &rho * kk.adjoint();
            }
            rho = next;
        }
        rho.trace()
    }

    #[test]
    fn two_steps_match_matrix_exponential() {
        let spec = spec_2x2(3, vec![0.4, 1.3]);
        let mut rng = seeded(30);
        for _ in 0..5 {
            let instr = MultitimeInstrument::new(vec![
                CPMap::single(random_kraus(&mut rng, 2), "a").unwrap(),
                CPMap::new(
                    vec![
                        random_kraus(&mut rng, 2) * C64::new(0.5, 0.0),
                        random_kraus(&mut rng, 2) * C64::new(0.5, 0.0),
                    ],
                    "b",
                )
                .unwrap(),
            ])
            .unwrap();
            let got = expectation_direct(&spec, &instr).unwrap();
            let want = brute_force(&spec, &[0.4, 1.3], &instr);
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn eigenstate_is_time_independent() {
        let mut rng = seeded(4);
        let h = Operator::new(random_hermitian(&mut rng, 4), vec![2, 2]).unwrap();
        let sd = spectral_decompose(&h, None).unwrap();
        let ket = sd.eigenvectors().column(2).into_owned();
        let rho = State::from_ket(ket, vec![2, 2]).unwrap();
        let spec = ProcessSpec::new(sd, rho, 2, 1, Schedule::Times(vec![0.0])).unwrap();
        let instr = MultitimeInstrument::new(vec![CPMap::single(random_kraus(&mut rng, 2), "a").unwrap()]).unwrap();
        let eval = ProcessEvaluator::new(&spec);
        let eq = eval.expectation_dephased(&instr).unwrap();
        for t in [0.0, 0.3, 5.0, 100.0] {
            let e = eval.expectation_at(&[t], &instr).unwrap();
            assert!((e - eq).norm() < 1e-10);
        }
    }

    #[test]
    fn dense_and_dyad_paths_agree() {
        let mut rng = seeded(5);
        let h = Operator::new(random_hermitian(&mut rng, 6), vec![2, 3]).unwrap();
        let sd = spectral_decompose(&h, None).unwrap();
        let psi = random_ket(&mut rng, 6);
        let pure = State::from_ket(psi.clone(), vec![2, 3]).unwrap();
        let as_mixed = State::new(pure.op().clone()).unwrap();
        let instr = MultitimeInstrument::new(vec![
            CPMap::single(random_kraus(&mut rng, 2), "a").unwrap(),
            CPMap::single(random_kraus(&mut rng, 2), "b").unwrap(),
        ])
        .unwrap();
        let times = Schedule::Times(vec![0.9, 2.2]);
        let a = ProcessSpec::new(sd.clone(), pure, 2, 2, times.clone()).unwrap();
        let b = ProcessSpec::new(sd, as_mixed, 2, 2, times).unwrap();
        let ea = expectation_direct(&a, &instr).unwrap();
        let eb = expectation_direct(&b, &instr).unwrap();
        assert!((ea - eb).norm() < 1e-12);
        let qa = expectation_equilibrium(&a, &instr).unwrap();
        let qb = expectation_equilibrium(&b, &instr).unwrap();
        assert!((qa - qb).norm() < 1e-12);
    }

    #[test]
    fn distribution_sums_to_one() {
        let spec = spec_2x2(6, vec![1.0, 2.0]);
        let basis = crate::rng::random_unitary(&mut seeded(60), 2);
        let inst = Instrument::projective(&basis).unwrap();
        let meas = MultitimeMeasurement::new(vec![inst.clone(), inst]).unwrap();
        let eval = ProcessEvaluator::new(&spec);
        let p = eval.distribution(&meas).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // outcome (x1=1, x2=0) sits at index 1
        let instr = MultitimeInstrument::new(vec![
            meas.per_step()[0].outcomes()[1].clone(),
            meas.per_step()[1].outcomes()[0].clone(),
        ])
        .unwrap();
        let e = eval.expectation(&instr).unwrap();
        assert!((e.re - p[1]).abs() < 1e-12);
    }

    #[test]
    fn schedule_mismatch_rejected() {
        let spec = spec_2x2(7, vec![1.0]);
        assert!(matches!(
            spec.with_schedule(Schedule::Times(vec![1.0, 2.0])),
            Err(Error::ScheduleMismatch(_))
        ));
        let dephased = spec.with_schedule(Schedule::Dephased).unwrap();
        assert!(expectation_direct(&dephased, &MultitimeInstrument::identity(2, 1)).is_err());
    }
}
