use serde::{Deserialize, Serialize};

use super::model::{build_random_bath, random_pure_state};
use super::protocol::{run_fig2_model, ModelOutcome, ProtocolCounts, ProtocolDraws, TimeMode};
use crate::bounds::mean_stderr;
use crate::rng::{derive_seed, par_map};
use crate::{Error, Result};

/// Sweep parameters. `Default` is the desk-scale run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d_e_min: usize,
    pub d_e_max: usize,
    pub d_e_step: usize,
    pub counts: ProtocolCounts,
    pub omega: f64,
    pub delta: f64,
    pub lambda: f64,
    pub modes: Vec<TimeMode>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d_e_min: 4,
            d_e_max: 120,
            d_e_step: 4,
            counts: ProtocolCounts {
                n_aminus: 20,
                n_aplus: 25,
                n_models: 12,
            },
            omega: 0.5,
            delta: 0.2,
            lambda: 0.1,
            modes: vec![TimeMode::Long, TimeMode::Short],
            seed: 2024,
        }
    }
}

impl ExperimentConfig {
    /// Full-scale appendix settings: `d_E` up to 400 in steps of 2, 40 models.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            d_e_min: 2,
            d_e_max: 400,
            d_e_step: 2,
            counts: ProtocolCounts::default(),
            ..Self::default()
        }
    }

    pub fn d_e_values(&self) -> Vec<usize> {
        if self.d_e_step == 0 {
            return vec![self.d_e_min];
        }
        (self.d_e_min..=self.d_e_max).step_by(self.d_e_step).collect()
    }

    fn validate(&self) -> Result<()> {
        let c = &self.counts;
        if self.d_e_min < 2 || self.d_e_values().is_empty() {
            return Err(Error::InvalidState("d_E range must be nonempty with d_E ≥ 2".into()));
        }
        if c.n_aminus < 2 || c.n_aplus == 0 || c.n_models == 0 {
            return Err(Error::InvalidState("need n_aminus ≥ 2 and nonzero draw counts".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidState("no time modes requested".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_e: usize,
    pub d_eff_mean: f64,
    pub d_eff_min: f64,
    pub d_eff_max: f64,
    pub n_upsilon: f64,
    pub n_upsilon_stderr: f64,
    pub n_omega: f64,
    pub n_omega_stderr: f64,
    pub mode: TimeMode,
    pub n_trials: usize,
}

/// One row per `(d_E, mode)`, grouped by mode and sorted by `d_eff_mean`
/// within each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, mode: TimeMode) -> Vec<SweepRow> {
        self.rows.iter().filter(|r| r.mode == mode).cloned().collect()
    }
}

/// Seeds for model `m` at bath size `d_e`: Hamiltonian, state, instruments.
pub fn cell_seeds(master: u64, d_e: usize, m: usize) -> [u64; 3] {
    [0, 1, 2].map(|t| derive_seed(master, &[d_e as u64, m as u64, t]))
}

/// Runs a single `(d_E, model)` cell.
pub fn run_cell(cfg: &ExperimentConfig, d_e: usize, m: usize) -> Result<ModelOutcome> {
    let [sh, sp, sd] = cell_seeds(cfg.seed, d_e, m);
    let model = build_random_bath(cfg.omega, cfg.delta, cfg.lambda, d_e, sh);
    let psi = random_pure_state(2 * d_e, sp);
    let draws = ProtocolDraws::sample(sd, cfg.counts.n_aminus, cfg.counts.n_aplus);
    run_fig2_model(&model, &psi, &cfg.modes, &draws)
}

fn aggregate(d_e: usize, mode: TimeMode, outcomes: &[ModelOutcome]) -> SweepRow {
    let deff: Vec<f64> = outcomes.iter().map(|o| o.d_eff).collect();
    let nu: Vec<f64> = outcomes
        .iter()
        .map(|o| o.n_upsilon.iter().find(|(m, _)| *m == mode).expect("mode evaluated").1)
        .collect();
    let no: Vec<f64> = outcomes.iter().map(|o| o.n_omega).collect();
    let (u, su) = mean_stderr(&nu);
    let (o, so) = mean_stderr(&no);
    SweepRow {
        d_e,
        d_eff_mean: deff.iter().sum::<f64>() / deff.len() as f64,
        d_eff_min: deff.iter().cloned().fold(f64::INFINITY, f64::min),
        d_eff_max: deff.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        n_upsilon: u,
        n_upsilon_stderr: su,
        n_omega: o,
        n_omega_stderr: so,
        mode,
        n_trials: outcomes.len(),
    }
}

/// Runs every `(d_E, model)` cell in parallel and aggregates per `(d_E,
/// mode)`. Results are independent of the number of workers.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let d_es = cfg.d_e_values();
    let n_models = cfg.counts.n_models;
    let outcomes = par_map(d_es.len() * n_models, |i| run_cell(cfg, d_es[i / n_models], i % n_models))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(d_es.len() * cfg.modes.len());
    for &mode in &cfg.modes {
        let mut group: Vec<SweepRow> = d_es
            .iter()
            .enumerate()
            .map(|(i, &d_e)| aggregate(d_e, mode, &outcomes[i * n_models..(i + 1) * n_models]))
            .collect();
        group.sort_by(|a, b| a.d_eff_mean.total_cmp(&b.d_eff_mean));
        rows.extend(group);
    }
    Ok(SweepResult { rows })
}

/// One aggregated row: `counts.n_models` fresh `(H, ψ)` draws at bath size
/// `d_e` under a single time mode.
pub fn run_fig2_protocol(
    omega: f64,
    delta: f64,
    lambda: f64,
    d_e: usize,
    mode: TimeMode,
    counts: ProtocolCounts,
    seed: u64,
) -> Result<SweepRow> {
    let cfg = ExperimentConfig {
        d_e_min: d_e,
        d_e_max: d_e,
        d_e_step: 1,
        counts,
        omega,
        delta,
        lambda,
        modes: vec![mode],
        seed,
    };
    Ok(sweep(&cfg)?.rows.remove(0))
}

/// Centred moving mean over consecutive rows of one mode, ordered by
/// `d_eff_mean`. Output row `i` averages input rows `i .. i + bin`; its
/// `d_e` and `mode` are taken from the middle row, `d_eff_min`/`max` span
/// the window and `n_trials` is summed.
pub fn moving_average(rows: &[SweepRow], bin: usize) -> Result<Vec<SweepRow>> {
    if bin == 0 || bin > rows.len() {
        return Err(Error::BinTooLarge { bin, len: rows.len() });
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.d_eff_mean.total_cmp(&b.d_eff_mean));
    let mean = |w: &[SweepRow], f: fn(&SweepRow) -> f64| w.iter().map(f).sum::<f64>() / w.len() as f64;
    Ok(sorted
        .windows(bin)
        .map(|w| {
            let mid = &w[bin / 2];
            SweepRow {
                d_e: mid.d_e,
                d_eff_mean: mean(w, |r| r.d_eff_mean),
                d_eff_min: w.iter().map(|r| r.d_eff_min).fold(f64::INFINITY, f64::min),
                d_eff_max: w.iter().map(|r| r.d_eff_max).fold(f64::NEG_INFINITY, f64::max),
                n_upsilon: mean(w, |r| r.n_upsilon),
                n_upsilon_stderr: mean(w, |r| r.n_upsilon_stderr),
                n_omega: mean(w, |r| r.n_omega),
                n_omega_stderr: mean(w, |r| r.n_omega_stderr),
                mode: mid.mode,
                n_trials: w.iter().map(|r| r.n_trials).sum(),
            }
        })
        .collect())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientColumns(x.len()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}
