//! Orchestration: config files, seeded multi-trial execution with best-of
//! selection, trace persistence and report tables.
//!
//! The config format is flat `key = value` text with dotted section names
//! (`model.L = 32`); bare aliases for the common fields (`L`, `J`, `h_x`,
//! `h_z`, `s`, `alpha`, `sweeps`, `trials`, `seed`) are accepted. Omitted
//! fields fall back to the defaults alpha = 5, gamma_0 = 0.1,
//! gamma_f = 0.0125 halving every two sweeps, N_s = 10^4, N_thermal = 100,
//! and 20 trials.

use crate::ansatz::{write_checkpoint, RbmState};
use crate::error::{Error, Result};
use crate::estimator::CorrelatorReport;
use crate::model::{build_lattice, LatticeSpec, TimHamiltonian};
use crate::optimizer::{
    run_optimization, BlockExtent, IterationRecord, LearningRateSchedule, OptimizationTrace,
    OptimizerMode, SrConfig,
};
use crate::sampler::{derive_seed, sample_configurations, SamplerConfig};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Environment variable selecting the trial worker count.
pub const WORKERS_ENV: &str = "SLO_VMC_WORKERS";

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dimensionality: usize,
    pub extents: Vec<usize>,
    pub j: f64,
    pub h_x: f64,
    pub h_z: f64,
    pub alpha: usize,
    pub init_scale: f64,
    pub n_samples: usize,
    pub n_thermal: usize,
    pub stride: usize,
    pub n_chains: usize,
    pub mode: OptimizerMode,
    pub lambda: f64,
    pub sweeps: usize,
    pub rates: LearningRateSchedule,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn lattice(&self) -> Result<LatticeSpec> {
        build_lattice(self.dimensionality, &self.extents)
    }

    pub fn hamiltonian(&self) -> Result<TimHamiltonian> {
        Ok(TimHamiltonian::new(
            self.lattice()?,
            self.j,
            self.h_x,
            self.h_z,
        ))
    }

    pub fn sr_config(&self) -> SrConfig {
        SrConfig {
            mode: self.mode,
            lambda: self.lambda,
            sweeps: self.sweeps,
            rates: self.rates,
            sampler: SamplerConfig {
                n_samples: self.n_samples,
                n_thermal: self.n_thermal,
                stride: self.stride,
                seed: 0,
                n_chains: self.n_chains,
            },
            alpha: self.alpha,
            init_scale: self.init_scale,
        }
    }

    /// Key identifying the model in the ED fixture table.
    pub fn fixture_key(&self) -> String {
        let extents = self
            .extents
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("x");
        format!(
            "{}d;extents={};J={};hx={};hz={}",
            self.dimensionality, extents, self.j, self.h_x, self.h_z
        )
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a positive integer, got {value:?}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {value:?}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_extents(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split('x')
        .map(|tok| parse_usize(key, tok.trim()))
        .collect()
}

/// Parse config text into a validated [`RunConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let canonical = match key.trim() {
            "L" => "model.L".to_string(),
            "J" => "model.J".to_string(),
            "h_x" => "model.h_x".to_string(),
            "h_z" => "model.h_z".to_string(),
            "s" => "optimizer.s".to_string(),
            "alpha" => "ansatz.alpha".to_string(),
            "sweeps" => "optimizer.sweeps".to_string(),
            "trials" => "run.trials".to_string(),
            "seed" => "run.seed".to_string(),
            other => other.to_string(),
        };
        map.insert(canonical, value.trim().to_string());
    }

    let mut take = |key: &str| map.remove(key);

    // model geometry: model.L (1D) or model.extents ("12" / "8x8")
    let extents = if let Some(v) = take("model.extents") {
        parse_extents("model.extents", &v)?
    } else if let Some(v) = take("model.L") {
        vec![parse_usize("model.L", &v)?]
    } else {
        return Err(Error::Config(
            "model.L or model.extents: missing required field".into(),
        ));
    };
    let dimensionality = if let Some(v) = take("model.dim") {
        parse_usize("model.dim", &v)?
    } else {
        extents.len()
    };
    if dimensionality != extents.len() {
        return Err(Error::Config(format!(
            "model.dim: {} does not match {} extents",
            dimensionality,
            extents.len()
        )));
    }
    if extents.iter().any(|&e| e == 0) {
        return Err(Error::Config("model.extents: extents must be positive".into()));
    }
    let l_total: usize = extents.iter().product();

    let j = match take("model.J") {
        Some(v) => parse_f64("model.J", &v)?,
        None => return Err(Error::Config("model.J: missing required field".into())),
    };
    let h_x = match take("model.h_x") {
        Some(v) => parse_f64("model.h_x", &v)?,
        None => return Err(Error::Config("model.h_x: missing required field".into())),
    };
    let h_z = match take("model.h_z") {
        Some(v) => parse_f64("model.h_z", &v)?,
        None => return Err(Error::Config("model.h_z: missing required field".into())),
    };

    let alpha = match take("ansatz.alpha") {
        Some(v) => parse_usize("ansatz.alpha", &v)?,
        None => 5,
    };
    if alpha == 0 {
        return Err(Error::Config("ansatz.alpha: must be positive".into()));
    }
    let init_scale = match take("ansatz.init_scale") {
        Some(v) => parse_f64("ansatz.init_scale", &v)?,
        None => 0.01,
    };
    if init_scale <= 0.0 {
        return Err(Error::Config("ansatz.init_scale: must be positive".into()));
    }

    let n_samples = match take("sampler.n_samples") {
        Some(v) => parse_usize("sampler.n_samples", &v)?,
        None => 10_000,
    };
    let n_thermal = match take("sampler.n_thermal") {
        Some(v) => parse_usize("sampler.n_thermal", &v)?,
        None => 100,
    };
    let stride = match take("sampler.stride") {
        Some(v) => parse_usize("sampler.stride", &v)?,
        None => l_total,
    };
    let n_chains = match take("sampler.chains") {
        Some(v) => parse_usize("sampler.chains", &v)?,
        None => 1,
    };
    if n_samples == 0 || n_thermal == 0 || stride == 0 || n_chains == 0 {
        return Err(Error::Config(
            "sampler: all counts must be positive".into(),
        ));
    }

    let block = match take("optimizer.s") {
        Some(v) => {
            let parts = parse_extents("optimizer.s", &v)?;
            let extent = match parts.as_slice() {
                [s] if dimensionality == 1 => BlockExtent::OneD(*s),
                [rows, cols] if dimensionality == 2 => BlockExtent::TwoD {
                    rows: *rows,
                    cols: *cols,
                },
                _ => {
                    return Err(Error::Config(format!(
                        "optimizer.s: block {v:?} does not match a {dimensionality}D lattice"
                    )))
                }
            };
            if extent.n_sites() == 0 {
                return Err(Error::Config(
                    "optimizer.s: invalid block, extent must be positive".into(),
                ));
            }
            Some(extent)
        }
        None => None,
    };
    let mode = match take("optimizer.mode").as_deref() {
        Some("global") => OptimizerMode::Global,
        Some("slo") => match block {
            Some(extent) => OptimizerMode::Slo(extent),
            None => {
                return Err(Error::Config(
                    "optimizer.s: required when optimizer.mode = slo".into(),
                ))
            }
        },
        Some(other) => {
            return Err(Error::Config(format!(
                "optimizer.mode: expected `slo` or `global`, got {other:?}"
            )))
        }
        None => match block {
            Some(extent) => OptimizerMode::Slo(extent),
            None => OptimizerMode::Global,
        },
    };

    let lambda = match take("optimizer.lambda") {
        Some(v) => parse_f64("optimizer.lambda", &v)?,
        None => 1e-3,
    };
    if lambda < 0.0 {
        return Err(Error::Config("optimizer.lambda: must be nonnegative".into()));
    }
    let sweeps = match take("optimizer.sweeps") {
        Some(v) => parse_usize("optimizer.sweeps", &v)?,
        None => 10,
    };
    if sweeps == 0 {
        return Err(Error::Config("optimizer.sweeps: must be positive".into()));
    }
    let defaults = LearningRateSchedule::paper_default();
    let rates = LearningRateSchedule {
        gamma_0: match take("optimizer.gamma_0") {
            Some(v) => parse_f64("optimizer.gamma_0", &v)?,
            None => defaults.gamma_0,
        },
        gamma_f: match take("optimizer.gamma_f") {
            Some(v) => parse_f64("optimizer.gamma_f", &v)?,
            None => defaults.gamma_f,
        },
        factor: match take("optimizer.decay_factor") {
            Some(v) => parse_f64("optimizer.decay_factor", &v)?,
            None => defaults.factor,
        },
        period: match take("optimizer.decay_period") {
            Some(v) => parse_usize("optimizer.decay_period", &v)?,
            None => defaults.period,
        },
    };
    if rates.gamma_0 <= 0.0 || rates.gamma_f <= 0.0 || rates.period == 0 {
        return Err(Error::Config(
            "optimizer.gamma_0/gamma_f/decay_period: must be positive".into(),
        ));
    }

    let trials = match take("run.trials") {
        Some(v) => parse_usize("run.trials", &v)?,
        None => 20,
    };
    if trials == 0 {
        return Err(Error::Config("run.trials: must be at least 1".into()));
    }
    let seed = match take("run.seed") {
        Some(v) => parse_u64("run.seed", &v)?,
        None => 1,
    };
    let out_dir = PathBuf::from(take("run.out").unwrap_or_else(|| "out".to_string()));

    if let Some(unknown) = map.keys().next() {
        return Err(Error::Config(format!("unknown field {unknown:?}")));
    }

    let cfg = RunConfig {
        dimensionality,
        extents,
        j,
        h_x,
        h_z,
        alpha,
        init_scale,
        n_samples,
        n_thermal,
        stride,
        n_chains,
        mode,
        lambda,
        sweeps,
        rates,
        trials,
        seed,
        out_dir,
    };
    // surface schedule/block problems at load time, naming the field
    let lattice = cfg
        .lattice()
        .map_err(|e| Error::Config(format!("model.extents: {e}")))?;
    cfg.sr_config()
        .schedule(&lattice)
        .map_err(|e| Error::Config(format!("optimizer.s: {e}")))?;
    Ok(cfg)
}

/// Load and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

/// Trace of one successful trial.
#[derive(Debug, Clone)]
pub struct TrialTrace {
    pub trial: usize,
    pub trace: OptimizationTrace,
}

/// Everything produced by a multi-trial run.
#[derive(Debug)]
pub struct RunOutcome {
    pub best_trial: usize,
    pub traces: Vec<TrialTrace>,
    pub best_state: RbmState,
    pub correlators: Option<CorrelatorReport>,
    pub failures: Vec<(usize, String)>,
}

fn run_trials_inner(cfg: &RunConfig) -> Result<RunOutcome> {
    let h = cfg.hamiltonian()?;
    let sr = cfg.sr_config();
    let results: Vec<(usize, std::result::Result<(RbmState, OptimizationTrace), String>)> = (0
        ..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let trial_seed = cfg.seed.wrapping_add(k as u64);
            let outcome = run_optimization(&h, &sr, trial_seed).map_err(|e| e.to_string());
            (k, outcome)
        })
        .collect();

    let mut traces = Vec::new();
    let mut states = Vec::new();
    let mut failures = Vec::new();
    for (trial, result) in results {
        match result {
            Ok((state, trace)) => {
                traces.push(TrialTrace { trial, trace });
                states.push((trial, state));
            }
            Err(message) => {
                log::warn!("trial {trial} failed: {message}");
                failures.push((trial, message));
            }
        }
    }
    if traces.is_empty() {
        return Err(Error::AllTrialsFailed(cfg.trials));
    }

    // lowest mean energy at the final sweep's last iteration wins
    let best_idx = traces
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.trace
                .final_energy()
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.trace.final_energy().unwrap_or(f64::INFINITY))
        })
        .map(|(i, _)| i)
        .expect("at least one trace");
    let best_trial = traces[best_idx].trial;
    let best_state = states
        .iter()
        .find(|(t, _)| *t == best_trial)
        .map(|(_, s)| s.clone())
        .expect("state of best trial");

    // correlators of the best run, 1D only
    let correlators = if cfg.dimensionality == 1 {
        let lattice = cfg.lattice()?;
        let measure_cfg = SamplerConfig {
            n_samples: cfg.n_samples,
            n_thermal: cfg.n_thermal,
            stride: cfg.stride,
            seed: derive_seed(cfg.seed.wrapping_add(best_trial as u64), 1 << 32),
            n_chains: 1,
        };
        let configs = sample_configurations(&best_state, &measure_cfg);
        Some(crate::estimator::correlators_from_configs(
            &configs, &lattice,
        )?)
    } else {
        None
    };

    Ok(RunOutcome {
        best_trial,
        traces,
        best_state,
        correlators,
        failures,
    })
}

/// Run `trials` independent optimizations with seeds base+k and keep the best.
///
/// Failed trials are logged and excluded; the run errs only if every trial
/// fails. The worker count follows the SLO_VMC_WORKERS environment variable
/// when set, otherwise rayon's default (trials are capped by available
/// parallelism either way).
pub fn run_trials(cfg: &RunConfig) -> Result<RunOutcome> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let workers: usize = v.parse().map_err(|_| {
                Error::Config(format!("{WORKERS_ENV}: expected a positive integer"))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Error::Config(format!("{WORKERS_ENV}: {e}")))?;
            pool.install(|| run_trials_inner(cfg))
        }
        Err(_) => run_trials_inner(cfg),
    }
}

/// Persist traces, best checkpoint and correlator table under `out_dir`.
pub fn persist_outcome(cfg: &RunConfig, outcome: &RunOutcome, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_traces_csv(&out_dir.join("traces.csv"), &outcome.traces)?;
    let mut checkpoint = BufWriter::new(fs::File::create(out_dir.join("checkpoint.txt"))?);
    write_checkpoint(&mut checkpoint, &outcome.best_state)?;
    checkpoint.flush()?;
    if let Some(report) = &outcome.correlators {
        write_correlators_csv(&out_dir.join("correlators.csv"), report)?;
    }
    let _ = cfg;
    Ok(())
}

const TRACE_HEADER: &str =
    "trial,sweep,iteration,block,energy_re,energy_im,variance,std_error,gamma,t_r";

/// Write the raw per-iteration trace table. All columns except t_r are
/// deterministic for a fixed config.
pub fn write_traces_csv(path: &Path, traces: &[TrialTrace]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for t in traces {
        for r in &t.trace.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                r.sweep,
                r.iteration,
                r.block_anchor,
                r.energy.re,
                r.energy.im,
                r.variance,
                r.std_error,
                r.gamma,
                r.elapsed_secs
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a trace table written by [`write_traces_csv`].
pub fn read_traces_csv(path: &Path) -> Result<Vec<TrialTrace>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut lines = file.lines();
    match lines.next() {
        Some(Ok(header)) if header == TRACE_HEADER => {}
        other => {
            return Err(Error::Trace(format!(
                "bad or missing header: {other:?}"
            )))
        }
    }
    let mut per_trial: BTreeMap<usize, Vec<IterationRecord>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Trace(format!(
                "line {}: expected 10 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let bad = |i: usize| Error::Trace(format!("line {}: bad field {i}", lineno + 2));
        let trial: usize = fields[0].parse().map_err(|_| bad(0))?;
        let record = IterationRecord {
            sweep: fields[1].parse().map_err(|_| bad(1))?,
            iteration: fields[2].parse().map_err(|_| bad(2))?,
            block_anchor: fields[3].parse().map_err(|_| bad(3))?,
            energy: Complex64::new(
                fields[4].parse().map_err(|_| bad(4))?,
                fields[5].parse().map_err(|_| bad(5))?,
            ),
            variance: fields[6].parse().map_err(|_| bad(6))?,
            std_error: fields[7].parse().map_err(|_| bad(7))?,
            gamma: fields[8].parse().map_err(|_| bad(8))?,
            elapsed_secs: fields[9].parse().map_err(|_| bad(9))?,
        };
        per_trial.entry(trial).or_default().push(record);
    }
    Ok(per_trial
        .into_iter()
        .map(|(trial, records)| {
            let n_s = records.iter().filter(|r| r.sweep == 0).count();
            TrialTrace {
                trial,
                trace: OptimizationTrace { records, n_s },
            }
        })
        .collect())
}

fn write_correlators_csv(path: &Path, report: &CorrelatorReport) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "d,pair_expectation,ferro,antiferro")?;
    for (k, &d) in report.distances.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            d, report.pair_expectations[k], report.ferro[k], report.antiferro[k]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// ED reference entry of the fixture table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdFixture {
    pub ground_energy: f64,
    pub gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlators: Option<FixtureCorrelators>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureCorrelators {
    pub distances: Vec<usize>,
    pub ferro: Vec<f64>,
    pub antiferro: Vec<f64>,
}

pub type FixtureTable = BTreeMap<String, EdFixture>;

pub fn load_fixtures(path: &Path) -> Result<FixtureTable> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("fixture file: {e}")))
}

/// Insert or replace one fixture, keeping the rest of the table.
pub fn save_fixture(path: &Path, key: &str, fixture: EdFixture) -> Result<()> {
    let mut table = if path.exists() {
        load_fixtures(path)?
    } else {
        FixtureTable::new()
    };
    table.insert(key.to_string(), fixture);
    let text = serde_json::to_string_pretty(&table)
        .map_err(|e| Error::Config(format!("fixture serialization: {e}")))?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrialSummary {
    trial: usize,
    final_energy: f64,
    best_energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_eps: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    best_trial: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_energy: Option<f64>,
    iterations_per_sweep: usize,
    trials: Vec<TrialSummary>,
    failed_trials: Vec<usize>,
}

fn eps_against(energy: f64, reference: f64) -> f64 {
    (energy - reference).abs() / reference.abs()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Write the report tables: the per-iteration table (with relative-error
/// columns when a reference energy is available), the across-trial
/// lower-envelope / median band, and the per-trial summary.
pub fn emit_report(
    traces: &[TrialTrace],
    reference: Option<f64>,
    failures: &[(usize, String)],
    out_dir: &Path,
) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::Trace("no traces to report".into()));
    }
    fs::create_dir_all(out_dir)?;

    // per-iteration table
    let mut out = BufWriter::new(fs::File::create(out_dir.join("report_iterations.csv"))?);
    if reference.is_some() {
        writeln!(out, "{TRACE_HEADER},eps")?;
    } else {
        writeln!(out, "{TRACE_HEADER}")?;
    }
    for t in traces {
        for r in &t.trace.records {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                r.sweep,
                r.iteration,
                r.block_anchor,
                r.energy.re,
                r.energy.im,
                r.variance,
                r.std_error,
                r.gamma,
                r.elapsed_secs
            )?;
            if let Some(e_gs) = reference {
                write!(out, ",{}", eps_against(r.energy.re, e_gs))?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;

    // across-trial band per iteration index: lower envelope and median
    let max_iter = traces
        .iter()
        .map(|t| t.trace.records.len())
        .max()
        .unwrap_or(0);
    let mut band = BufWriter::new(fs::File::create(out_dir.join("report_band.csv"))?);
    if reference.is_some() {
        writeln!(band, "iteration,energy_min,energy_median,eps_min,eps_median")?;
    } else {
        writeln!(band, "iteration,energy_min,energy_median")?;
    }
    for i in 0..max_iter {
        let mut values: Vec<f64> = traces
            .iter()
            .filter_map(|t| t.trace.records.get(i).map(|r| r.energy.re))
            .collect();
        values.sort_by(f64::total_cmp);
        let e_min = values[0];
        let e_med = median(&values);
        if let Some(e_gs) = reference {
            let mut eps: Vec<f64> = values.iter().map(|&e| eps_against(e, e_gs)).collect();
            eps.sort_by(f64::total_cmp);
            writeln!(
                band,
                "{},{},{},{},{}",
                i + 1,
                e_min,
                e_med,
                eps[0],
                median(&eps)
            )?;
        } else {
            writeln!(band, "{},{},{}", i + 1, e_min, e_med)?;
        }
    }
    band.flush()?;

    // per-trial summary
    let best_trial = traces
        .iter()
        .min_by(|a, b| {
            a.trace
                .final_energy()
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.trace.final_energy().unwrap_or(f64::INFINITY))
        })
        .map(|t| t.trial)
        .expect("nonempty traces");
    let summary = RunSummary {
        best_trial,
        reference_energy: reference,
        iterations_per_sweep: traces[0].trace.n_s,
        trials: traces
            .iter()
            .map(|t| {
                let final_energy = t.trace.final_energy().unwrap_or(f64::NAN);
                let best_energy = t
                    .trace
                    .records
                    .iter()
                    .map(|r| r.energy.re)
                    .fold(f64::INFINITY, f64::min);
                TrialSummary {
                    trial: t.trial,
                    final_energy,
                    best_energy,
                    final_eps: reference.map(|e_gs| eps_against(final_energy, e_gs)),
                }
            })
            .collect(),
        failed_trials: failures.iter().map(|(t, _)| *t).collect(),
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    fs::write(out_dir.join("summary.json"), text)?;
    Ok(())
}
