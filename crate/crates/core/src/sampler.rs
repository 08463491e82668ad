//! Metropolis-Hastings sampling of |psi(x)|^2 with single-spin-flip proposals.

use crate::ansatz::{
    amplitude_ratio, apply_flip, log_derivatives_for_sites, ActivationCache, RbmState,
};
use crate::estimator::local_energy;
use crate::model::{SpinConfiguration, TimHamiltonian};
use crate::optimizer::ParameterBlock;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Chain parameters. `n_thermal` counts lattice sweeps of burn-in
/// (n_thermal * L attempted flips) and `stride` counts attempted flips
/// between recorded samples.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub n_thermal: usize,
    pub stride: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl SamplerConfig {
    pub fn new(n_samples: usize, n_thermal: usize, stride: usize, seed: u64) -> Self {
        Self {
            n_samples,
            n_thermal,
            stride,
            seed,
            n_chains: 1,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.n_samples == 0 || self.n_thermal == 0 || self.stride == 0 || self.n_chains == 0 {
            return Err(crate::Error::Config(
                "sampler counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Monte Carlo samples with their local energies and the log-derivatives
/// restricted to the active parameter index set, one row per sample.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    configurations: Vec<SpinConfiguration>,
    local_energies: Vec<Complex64>,
    log_derivs: Vec<Complex64>,
    n_active: usize,
}

impl SampleBatch {
    pub fn new(
        configurations: Vec<SpinConfiguration>,
        local_energies: Vec<Complex64>,
        log_derivs: Vec<Complex64>,
        n_active: usize,
    ) -> Self {
        assert_eq!(configurations.len(), local_energies.len());
        assert_eq!(log_derivs.len(), configurations.len() * n_active);
        Self {
            configurations,
            local_energies,
            log_derivs,
            n_active,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.configurations.len()
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn configurations(&self) -> &[SpinConfiguration] {
        &self.configurations
    }

    pub fn local_energies(&self) -> &[Complex64] {
        &self.local_energies
    }

    /// Log-derivative row of sample `n` over the active parameters.
    pub fn log_derivs_row(&self, n: usize) -> &[Complex64] {
        &self.log_derivs[n * self.n_active..(n + 1) * self.n_active]
    }
}

/// Mix a base seed with a stream index (splitmix64) so per-iteration
/// generators are decorrelated but fully reproducible.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One Metropolis step: propose flipping a uniformly random site, accept with
/// probability min(1, |psi(x')/psi(x)|^2). Returns whether the flip was taken.
pub fn metropolis_step<R: Rng>(state: &RbmState, cache: &mut ActivationCache, rng: &mut R) -> bool {
    let site = rng.gen_range(0..state.n_visible());
    let ratio = amplitude_ratio(state, cache, site);
    let prob = ratio.norm_sqr();
    let accept = prob >= 1.0 || rng.gen::<f64>() < prob;
    if accept {
        apply_flip(cache, state, site);
    }
    accept
}

fn random_configuration<R: Rng>(l: usize, rng: &mut R) -> SpinConfiguration {
    let spins = (0..l)
        .map(|_| if rng.gen_bool(0.5) { 1i8 } else { -1i8 })
        .collect();
    SpinConfiguration::new(spins).expect("generated spins are +-1")
}

struct ChainPlan {
    seed: u64,
    n_samples: usize,
}

fn chain_plans(cfg: &SamplerConfig) -> Vec<ChainPlan> {
    let base = cfg.n_samples / cfg.n_chains;
    let extra = cfg.n_samples % cfg.n_chains;
    (0..cfg.n_chains)
        .map(|c| ChainPlan {
            seed: cfg.seed.wrapping_add(c as u64),
            n_samples: base + usize::from(c < extra),
        })
        .collect()
}

struct ChainOutput {
    configurations: Vec<SpinConfiguration>,
    local_energies: Vec<Complex64>,
    log_derivs: Vec<Complex64>,
}

fn run_single_chain(
    state: &RbmState,
    cfg: &SamplerConfig,
    h: &TimHamiltonian,
    sites: &[usize],
    plan: &ChainPlan,
) -> ChainOutput {
    let l = state.n_visible();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut cache = ActivationCache::new(state, random_configuration(l, &mut rng));
    for _ in 0..cfg.n_thermal * l {
        metropolis_step(state, &mut cache, &mut rng);
    }
    let mut configurations = Vec::with_capacity(plan.n_samples);
    let mut local_energies = Vec::with_capacity(plan.n_samples);
    let mut log_derivs =
        Vec::with_capacity(plan.n_samples * sites.len() * (state.n_hidden() + 1));
    for _ in 0..plan.n_samples {
        for _ in 0..cfg.stride {
            metropolis_step(state, &mut cache, &mut rng);
        }
        configurations.push(cache.config().clone());
        local_energies.push(local_energy(h, state, &cache));
        log_derivs.extend(log_derivatives_for_sites(state, &cache, sites));
    }
    ChainOutput {
        configurations,
        local_energies,
        log_derivs,
    }
}

/// Run the configured chains and collect a batch of `n_samples` samples.
///
/// Each chain starts from a uniformly random configuration, burns in for
/// n_thermal lattice sweeps, then records one sample every `stride` attempted
/// flips, storing the local energy and the log-derivatives restricted to
/// `active_params`. Chains are seeded as seed + chain index and their samples
/// are concatenated in chain order, so the batch is identical regardless of
/// how the chains are scheduled.
pub fn run_chain(
    state: &RbmState,
    cfg: &SamplerConfig,
    h: &TimHamiltonian,
    active_params: &ParameterBlock,
) -> SampleBatch {
    let sites = active_params.sites();
    let plans = chain_plans(cfg);
    let outputs: Vec<ChainOutput> = if cfg.n_chains == 1 {
        plans
            .iter()
            .map(|p| run_single_chain(state, cfg, h, sites, p))
            .collect()
    } else {
        plans
            .par_iter()
            .map(|p| run_single_chain(state, cfg, h, sites, p))
            .collect()
    };
    let n_active = active_params.len();
    let mut configurations = Vec::with_capacity(cfg.n_samples);
    let mut local_energies = Vec::with_capacity(cfg.n_samples);
    let mut log_derivs = Vec::with_capacity(cfg.n_samples * n_active);
    for out in outputs {
        configurations.extend(out.configurations);
        local_energies.extend(out.local_energies);
        log_derivs.extend(out.log_derivs);
    }
    SampleBatch::new(configurations, local_energies, log_derivs, n_active)
}

/// Sample configurations only, for observables that need no gradients
/// (correlator measurements on a converged state).
pub fn sample_configurations(state: &RbmState, cfg: &SamplerConfig) -> Vec<SpinConfiguration> {
    let l = state.n_visible();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = ActivationCache::new(state, random_configuration(l, &mut rng));
    for _ in 0..cfg.n_thermal * l {
        metropolis_step(state, &mut cache, &mut rng);
    }
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.stride {
            metropolis_step(state, &mut cache, &mut rng);
        }
        out.push(cache.config().clone());
    }
    out
}
