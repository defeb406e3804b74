use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use multitime::bounds::{
    chebyshev_deviation_check, diamond_distance, effective_dimension, is_nonresonant, measurement_set_cardinality,
    result2_check, sample_times, variance_monte_carlo, BoundReport, MeasurementSet, ThresholdPolicy,
};
use multitime::channels::{random_rank1_instrument, Instrument};
use multitime::experiments::{
    build_random_bath, cell_seeds, moving_average, random_pure_state, run_fig2_protocol, sweep, ExperimentConfig,
    ProtocolCounts, SweepRow, TimeMode,
};
use multitime::io::{
    plot_data, read_operator_csv, write_bound_reports_csv, write_plot_json, write_sweep_csv, write_tensor_bin,
    write_tensor_csv,
};
use multitime::nonmarkov::{result3_check, CausalBreakProtocol};
use multitime::process::{
    build_equilibrium_tensor, build_process_tensor, MultitimeInstrument, MultitimeMeasurement, ProcessSpec, Schedule,
};
use multitime::qmath::{spectral_decompose, Operator, State};
use multitime::rng::{derive_seed, random_hermitian, random_ket, random_unitary, stream};
use multitime::{CMat, Error, C64};

use crate::config::{
    positive, positive_f, BoundModel, DeffArgs, DiamondArgs, Fig2Args, NonmarkovArgs, TensorDumpArgs, TensorFormat,
    VerifyArgs,
};

/// Settings shared by every subcommand.
pub struct Global {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Global {
    fn output(&self, explicit: Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let path = explicit.unwrap_or_else(|| self.out_dir.join(name));
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
        }
        Ok(path)
    }
}

/// Any bound violation; maps to exit code 1.
#[derive(Debug)]
pub struct Violation;

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("bound violated")
    }
}

impl std::error::Error for Violation {}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_operator(path: &Path) -> Result<Operator> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_operator_csv(f).with_context(|| format!("reading {}", path.display()))
}

/// Random Hermitian `H` on `2 ⊗ d_E` and a random pure state.
fn random_spec(seed: u64, d_e: usize, k: usize, model: BoundModel, window: f64) -> Result<ProcessSpec> {
    let d = 2 * d_e;
    let mut rng = stream(seed, &[0]);
    let h = match model {
        BoundModel::Resonant => {
            let v = random_unitary(&mut rng, d);
            let mut e = CMat::zeros(d, d);
            for i in 0..d {
                e[(i, i)] = C64::new(i as f64, 0.0);
            }
            &v * e * v.adjoint()
        }
        _ => random_hermitian(&mut rng, d),
    };
    let h = spectral_decompose(&Operator::new(h, vec![2, d_e])?, None)?;
    let rho = State::from_ket(random_ket(&mut rng, d), vec![2, d_e])?;
    let schedule = match model {
        BoundModel::Dephased => Schedule::Dephased,
        _ => Schedule::Times(sample_times(seed, u64::MAX, k, window)),
    };
    Ok(ProcessSpec::new(h, rho, 2, k, schedule)?)
}

fn random_projective(seed: u64) -> Instrument {
    let mut rng = stream(seed, &[0]);
    Instrument::projective(&random_unitary(&mut rng, 2)).expect("unitary basis")
}

fn measurement_set(seed: u64, k: usize, count: usize) -> Result<MeasurementSet> {
    let members = (0..count)
        .map(|i| MultitimeMeasurement::new((0..k).map(|j| random_projective(derive_seed(seed, &[i as u64, j as u64]))).collect()))
        .collect::<multitime::Result<Vec<_>>>()?;
    Ok(MeasurementSet::new(members))
}

fn pauli_chain(k: usize) -> Vec<CMat> {
    let (z, o) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let sz = CMat::from_row_slice(2, 2, &[o, z, z, -o]);
    let sx = CMat::from_row_slice(2, 2, &[z, o, o, z]);
    (0..k).map(|j| if j % 2 == 0 { sz.clone() } else { sx.clone() }).collect()
}

pub fn deff(g: &Global, a: DeffArgs) -> Result<()> {
    let d = match (a.hamiltonian, a.state) {
        (Some(hp), Some(sp)) => {
            let h = spectral_decompose(&read_operator(&hp)?, None)?;
            let rho = State::new(read_operator(&sp)?)?;
            effective_dimension(&h, &rho)?
        }
        (None, None) => {
            let d_e = positive("d_e", a.d_e.unwrap_or(50))?;
            let [sh, sp, _] = cell_seeds(g.seed, d_e, 0);
            let model = build_random_bath(a.omega.unwrap_or(0.5), a.delta.unwrap_or(0.2), a.lambda.unwrap_or(0.1), d_e, sh);
            let psi = random_pure_state(2 * d_e, sp);
            effective_dimension(&model.spectral()?, &psi)?
        }
        _ => bail!("--hamiltonian and --state must be given together"),
    };
    println!("{d:?}");
    Ok(())
}

pub fn verify_bounds(g: &Global, a: VerifyArgs) -> Result<()> {
    let model = a.model.unwrap_or(BoundModel::Random);
    let seeds = positive("seeds", a.seeds.unwrap_or(200))?;
    let d_e = positive("d_e", a.d_e.unwrap_or(16))?;
    let k = positive("k", a.k.unwrap_or(2))?;
    let n = positive("samples", a.samples.unwrap_or(200))?;
    if k > 3 {
        bail!("k must be at most 3");
    }
    let window = a.window.map(|w| positive_f("window", w)).transpose()?;

    let mut reports: Vec<(u64, BoundReport)> = Vec::new();
    let mut warned = false;
    let mut skipped = 0;
    for i in 0..seeds as u64 {
        let s = derive_seed(g.seed, &[i]);
        let spec = random_spec(derive_seed(s, &[0]), d_e, k, model, window.unwrap_or(10.0))?;
        if !warned && !is_nonresonant(spec.hamiltonian()) {
            eprintln!("warning: Hamiltonian violates non-resonance; affected rows are marked");
            warned = true;
        }
        let instr = MultitimeInstrument::new(
            (0..k).map(|j| random_rank1_instrument(derive_seed(s, &[1, j as u64]), 2)).collect(),
        )?;
        let mc = derive_seed(s, &[2]);
        reports.push((i, variance_monte_carlo(&spec, &instr, window, n, mc)?));
        let cheb = chebyshev_deviation_check(&spec, &pauli_chain(k), ThresholdPolicy::Paper, window, n, mc)?;
        reports.push((i, cheb));
        let r2 = result2_check(&spec, &measurement_set(derive_seed(s, &[3]), k, 3)?, window, n, mc)?;
        reports.push((i, r2.tail));
        reports.push((i, r2.mean));
        if k >= 2 {
            let mut rng = stream(s, &[4]);
            let phi = State::from_ket(random_ket(&mut rng, 2), vec![2])?;
            let minus = (0..k - 1).map(|j| random_projective(derive_seed(s, &[5, j as u64]))).collect();
            let proto = CausalBreakProtocol::new(minus, phi, vec![random_projective(derive_seed(s, &[6]))])?;
            match result3_check(&spec, &proto, window, n, mc) {
                Ok(r) => reports.push((i, r)),
                Err(Error::SeriesDiverges(_)) | Err(Error::InsufficientColumns(_)) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    let path = g.output(a.output, "bounds.csv")?;
    let rows: Vec<BoundReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let mut w = create(&path)?;
    write_bound_reports_csv(&mut w, &rows)?;
    w.flush()?;

    let failed: Vec<&(u64, BoundReport)> = reports.iter().filter(|(_, r)| !r.satisfied).collect();
    println!("{} reports, {} violated -> {}", rows.len(), failed.len(), path.display());
    if skipped > 0 {
        println!("result3 skipped on {skipped} instances (series does not converge at this d_eff)");
    }
    for (i, r) in &failed {
        eprintln!(
            "violated: {} seed {} (instance {i}) lhs {:e} ± {:e} > rhs {:e}",
            r.label(),
            derive_seed(g.seed, &[*i]),
            r.lhs_estimate,
            r.lhs_stderr,
            r.rhs
        );
    }
    if !failed.is_empty() {
        return Err(Violation.into());
    }
    Ok(())
}

fn fig2_config(g: &Global, a: &Fig2Args) -> Result<ExperimentConfig> {
    let base = if a.full_scale.unwrap_or(false) {
        ExperimentConfig::full_scale()
    } else {
        ExperimentConfig::default()
    };
    let counts = ProtocolCounts {
        n_aminus: a.n_aminus.unwrap_or(base.counts.n_aminus),
        n_aplus: a.n_aplus.unwrap_or(base.counts.n_aplus),
        n_models: a.models.unwrap_or(base.counts.n_models),
    };
    let cfg = ExperimentConfig {
        d_e_min: a.d_e_min.unwrap_or(base.d_e_min),
        d_e_max: a.d_e_max.unwrap_or(base.d_e_max),
        d_e_step: positive("d_e_step", a.d_e_step.unwrap_or(base.d_e_step))?,
        counts,
        omega: a.omega.unwrap_or(base.omega),
        delta: a.delta.unwrap_or(base.delta),
        lambda: a.lambda.unwrap_or(base.lambda),
        modes: a.mode.clone().unwrap_or(base.modes),
        seed: g.seed,
    };
    positive_f("omega", cfg.omega)?;
    Ok(cfg)
}

pub fn fig2(g: &Global, a: Fig2Args) -> Result<()> {
    let cfg = fig2_config(g, &a)?;
    let bin = positive("bin", a.bin.unwrap_or(5))?;
    let result = sweep(&cfg)?;

    let mut binned: Vec<(TimeMode, Vec<SweepRow>)> = Vec::new();
    for &mode in &cfg.modes {
        binned.push((mode, moving_average(&result.rows_for(mode), bin)?));
    }
    let raw_path = g.output(None, "fig2_raw.csv")?;
    let mut w = create(&raw_path)?;
    write_sweep_csv(&mut w, &result.rows)?;
    w.flush()?;

    let all_binned: Vec<SweepRow> = binned.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let bin_path = g.output(None, "fig2_binned.csv")?;
    let mut w = create(&bin_path)?;
    write_sweep_csv(&mut w, &all_binned)?;
    w.flush()?;

    let raw: Vec<(String, Vec<SweepRow>)> = cfg.modes.iter().map(|&m| (format!("{m}/raw"), result.rows_for(m))).collect();
    let smooth: Vec<(String, Vec<SweepRow>)> = binned.into_iter().map(|(m, r)| (format!("{m}/binned"), r)).collect();
    let sets: Vec<(&str, &[SweepRow])> = raw.iter().chain(&smooth).map(|(n, r)| (n.as_str(), r.as_slice())).collect();
    let json_path = g.output(None, "fig2_plot.json")?;
    let mut w = create(&json_path)?;
    write_plot_json(&mut w, &plot_data(&sets))?;
    w.flush()?;

    println!(
        "{} rows ({} binned) -> {}, {}, {}",
        result.rows.len(),
        all_binned.len(),
        raw_path.display(),
        bin_path.display(),
        json_path.display()
    );
    Ok(())
}

pub fn diamond(g: &Global, a: DiamondArgs) -> Result<()> {
    let d_e = positive("d_e", a.d_e.unwrap_or(8))?;
    let k = positive("k", a.k.unwrap_or(1))?;
    let m = positive("measurements", a.measurements.unwrap_or(3))?;
    let n = positive("samples", a.samples.unwrap_or(500))?;
    let window = a.window.map(|w| positive_f("window", w)).transpose()?;
    let spec_u = random_spec(derive_seed(g.seed, &[0]), d_e, k, BoundModel::Random, window.unwrap_or(10.0))?;
    let spec_o = spec_u.with_schedule(Schedule::Dephased)?;
    let set = measurement_set(derive_seed(g.seed, &[1]), k, m)?;
    let d = diamond_distance(&spec_u, &spec_o, &set)?;
    let d_eff = effective_dimension(spec_u.hamiltonian(), spec_u.rho())?;
    println!("d_eff = {d_eff:?}");
    println!("S_M = {}", measurement_set_cardinality(&set));
    println!("D_M = {d:?}");

    let r2 = result2_check(&spec_u, &set, window, n, derive_seed(g.seed, &[2]))?;
    println!("threshold = {:?}", r2.threshold);
    let path = g.output(None, "diamond.csv")?;
    let mut w = create(&path)?;
    write_bound_reports_csv(&mut w, &[r2.tail.clone(), r2.mean.clone()])?;
    w.flush()?;
    for r in [&r2.tail, &r2.mean] {
        println!("{}: {:e} ± {:e} vs {:e}", r.label(), r.lhs_estimate, r.lhs_stderr, r.rhs);
    }
    if !(r2.tail.satisfied && r2.mean.satisfied) {
        eprintln!("violated at seed {}", g.seed);
        return Err(Violation.into());
    }
    Ok(())
}

pub fn nonmarkov(g: &Global, a: NonmarkovArgs) -> Result<()> {
    let base = ProtocolCounts::default();
    let counts = ProtocolCounts {
        n_aminus: a.n_aminus.unwrap_or(base.n_aminus),
        n_aplus: a.n_aplus.unwrap_or(base.n_aplus),
        n_models: a.models.unwrap_or(base.n_models),
    };
    let row = run_fig2_protocol(
        a.omega.unwrap_or(0.5),
        a.delta.unwrap_or(0.2),
        a.lambda.unwrap_or(0.1),
        a.d_e.unwrap_or(16),
        a.mode.unwrap_or(TimeMode::Long),
        counts,
        g.seed,
    )?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_sweep_csv(&mut lock, &[row])?;
    Ok(())
}

pub fn tensor_dump(g: &Global, a: TensorDumpArgs) -> Result<()> {
    let d_e = positive("d_e", a.d_e.unwrap_or(2))?;
    let k = positive("k", a.k.unwrap_or(2))?;
    let window = positive_f("window", a.window.unwrap_or(10.0))?;
    let spec = random_spec(g.seed, d_e, k, BoundModel::Random, window)?;
    let tensor = if a.dephased.unwrap_or(false) {
        build_equilibrium_tensor(&spec)?
    } else {
        build_process_tensor(&spec)?
    };
    let format = a.format.unwrap_or(TensorFormat::Csv);
    let name = match format {
        TensorFormat::Csv => "tensor.csv",
        TensorFormat::Bin => "tensor.bin",
    };
    let path = g.output(a.output, name)?;
    let mut w = create(&path)?;
    match format {
        TensorFormat::Csv => write_tensor_csv(&mut w, &tensor)?,
        TensorFormat::Bin => write_tensor_bin(&mut w, &tensor)?,
    }
    w.flush()?;
    println!("{}x{} Choi matrix -> {}", tensor.matrix().nrows(), tensor.matrix().ncols(), path.display());
    Ok(())
}
