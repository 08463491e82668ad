//! Stochastic reconfiguration, parameter blocks and block-sweep schedules.
//!
//! A block theta^{p,s} collects every parameter coupled to a contiguous group
//! of s visible sites anchored at position p: the site biases a_i and the
//! full weight columns W_ji for those sites, s(alpha L + 1) parameters in
//! total. One sweep visits the block positions left to right and back again,
//! consecutive blocks overlapping by half a block, and applies the update
//!
//! theta(l+1) = theta(l) - gamma(l) (S + lambda I)^{-1} F(l)
//!
//! at each stop with freshly drawn samples. Global optimization is the
//! single-block special case s = L.

use crate::ansatz::{init_parameters, RbmState};
use crate::error::{Error, Result};
use crate::estimator::{covariance_s, energy_estimate, gradient_f_vector};
use crate::model::{LatticeSpec, TimHamiltonian};
use crate::sampler::{derive_seed, run_chain, SamplerConfig};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::time::Instant;

/// Block extent: number of sites along each lattice axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockExtent {
    OneD(usize),
    TwoD { rows: usize, cols: usize },
}

impl BlockExtent {
    pub fn n_sites(&self) -> usize {
        match *self {
            BlockExtent::OneD(s) => s,
            BlockExtent::TwoD { rows, cols } => rows * cols,
        }
    }
}

impl std::fmt::Display for BlockExtent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            BlockExtent::OneD(s) => write!(f, "{s}"),
            BlockExtent::TwoD { rows, cols } => write!(f, "{rows}x{cols}"),
        }
    }
}

/// The parameters coupled to one contiguous group of visible sites: the index
/// set {a_i : i in sites} U {W_ji : i in sites, all j} into the flattened
/// theta vector, sorted ascending. Size is exactly s(alpha L + 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterBlock {
    anchor: usize,
    sites: Vec<usize>,
    indices: Vec<usize>,
}

impl ParameterBlock {
    /// Anchor position p: the leftmost (1D) or lowest-(row, col) (2D) site.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Sites covered by the block, sorted ascending.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Flattened parameter indices, sorted ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of parameters in the block.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Resolve the parameter index set of the block anchored at site `anchor`.
pub fn block_index_set(
    lattice: &LatticeSpec,
    alpha: usize,
    anchor: usize,
    extent: &BlockExtent,
) -> Result<ParameterBlock> {
    let l = lattice.n_sites();
    let sites: Vec<usize> = match (*extent, lattice.dimensionality()) {
        (BlockExtent::OneD(s), 1) => {
            if s == 0 || anchor + s > l {
                return Err(Error::InvalidBlock(format!(
                    "1D block of extent {s} at position {anchor} exceeds chain of length {l}"
                )));
            }
            (anchor..anchor + s).collect()
        }
        (BlockExtent::TwoD { rows, cols }, 2) => {
            let (grid_rows, grid_cols) = (lattice.extents()[0], lattice.extents()[1]);
            let (r0, c0) = lattice.site_coords(anchor);
            if rows == 0 || cols == 0 || r0 + rows > grid_rows || c0 + cols > grid_cols {
                return Err(Error::InvalidBlock(format!(
                    "2D block {rows}x{cols} at ({r0},{c0}) exceeds {grid_rows}x{grid_cols} grid"
                )));
            }
            let mut sites = Vec::with_capacity(rows * cols);
            for r in r0..r0 + rows {
                for c in c0..c0 + cols {
                    sites.push(lattice.site_index(r, c));
                }
            }
            sites.sort_unstable();
            sites
        }
        (extent, dim) => {
            return Err(Error::InvalidBlock(format!(
                "block extent {extent:?} does not match lattice dimensionality {dim}"
            )));
        }
    };
    let m = alpha * l;
    let mut indices = Vec::with_capacity(sites.len() * (m + 1));
    indices.extend(sites.iter().copied());
    for j in 0..m {
        indices.extend(sites.iter().map(|&i| l + j * l + i));
    }
    Ok(ParameterBlock {
        anchor,
        sites,
        indices,
    })
}

/// Block anchor positions visited in one sweep: forward then backward with
/// the two sweep endpoints visited once each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSchedule {
    positions: Vec<usize>,
    extent: BlockExtent,
}

impl SweepSchedule {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn extent(&self) -> &BlockExtent {
        &self.extent
    }

    /// Number of block updates per sweep, n_s.
    pub fn n_s(&self) -> usize {
        self.positions.len()
    }
}

fn forward_positions(extent: usize, block: usize, stride: usize) -> Result<Vec<usize>> {
    if (extent - block) % stride != 0 {
        return Err(Error::Schedule(format!(
            "span {} is not divisible by stride {stride}",
            extent - block
        )));
    }
    Ok((0..=(extent - block) / stride).map(|k| k * stride).collect())
}

fn mirrored(forward: Vec<usize>) -> Vec<usize> {
    let mut schedule = forward.clone();
    if forward.len() > 2 {
        schedule.extend(forward[1..forward.len() - 1].iter().rev());
    }
    schedule
}

/// 1D sweep: forward anchors 0, t, 2t, ..., L-s with stride t = max(1, s/2),
/// then the same anchors in reverse with both endpoints dropped. For L = 32
/// this gives n_s = 60, 28, 12, 4 at s = 2, 4, 8, 16.
pub fn build_sweep_schedule_1d(l: usize, s: usize) -> Result<SweepSchedule> {
    if s < 2 || s > l {
        return Err(Error::InvalidBlock(format!(
            "block extent must satisfy 2 <= s <= L, got s={s}, L={l}"
        )));
    }
    if s % 2 != 0 && s != l {
        return Err(Error::InvalidBlock(format!(
            "1D block extent must be even or span the chain, got s={s}"
        )));
    }
    let stride = (s / 2).max(1);
    let forward = forward_positions(l, s, stride)?;
    Ok(SweepSchedule {
        positions: mirrored(forward),
        extent: BlockExtent::OneD(s),
    })
}

/// 2D sweep: the forward pass rasters block anchors row-major with per-axis
/// stride max(1, floor(s_d / 2)); the backward pass retraces the forward list
/// in reverse with both endpoints dropped.
pub fn build_sweep_schedule_2d(extents: &[usize], s: (usize, usize)) -> Result<SweepSchedule> {
    assert_eq!(extents.len(), 2, "2D schedule needs two extents");
    let (grid_rows, grid_cols) = (extents[0], extents[1]);
    let (s_rows, s_cols) = s;
    if s_rows == 0 || s_cols == 0 || s_rows > grid_rows || s_cols > grid_cols {
        return Err(Error::InvalidBlock(format!(
            "2D block {s_rows}x{s_cols} does not fit a {grid_rows}x{grid_cols} grid"
        )));
    }
    let stride_r = (s_rows / 2).max(1);
    let stride_c = (s_cols / 2).max(1);
    let row_anchors = forward_positions(grid_rows, s_rows, stride_r)?;
    let col_anchors = forward_positions(grid_cols, s_cols, stride_c)?;
    let mut forward = Vec::with_capacity(row_anchors.len() * col_anchors.len());
    for &r in &row_anchors {
        for &c in &col_anchors {
            forward.push(r * grid_cols + c);
        }
    }
    Ok(SweepSchedule {
        positions: mirrored(forward),
        extent: BlockExtent::TwoD {
            rows: s_rows,
            cols: s_cols,
        },
    })
}

/// gamma(sweep) = max(gamma_f, gamma_0 * factor^floor(sweep / period)).
#[derive(Debug, Clone, Copy)]
pub struct LearningRateSchedule {
    pub gamma_0: f64,
    pub gamma_f: f64,
    pub factor: f64,
    pub period: usize,
}

impl LearningRateSchedule {
    /// gamma_0 = 0.1 decaying by 0.5 every two sweeps down to gamma_f = 0.0125.
    pub fn paper_default() -> Self {
        Self {
            gamma_0: 0.1,
            gamma_f: 0.0125,
            factor: 0.5,
            period: 2,
        }
    }

    pub fn rate(&self, sweep: usize) -> f64 {
        let decayed = self.gamma_0 * self.factor.powi((sweep / self.period) as i32);
        decayed.max(self.gamma_f)
    }
}

/// Optimization mode: one full-lattice block or SLO blocks of a given extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerMode {
    Global,
    Slo(BlockExtent),
}

/// Everything the optimization loop needs besides the Hamiltonian.
#[derive(Debug, Clone)]
pub struct SrConfig {
    pub mode: OptimizerMode,
    pub lambda: f64,
    pub sweeps: usize,
    pub rates: LearningRateSchedule,
    pub sampler: SamplerConfig,
    pub alpha: usize,
    pub init_scale: f64,
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::Config("sweep count must be positive".into()));
        }
        if self.alpha == 0 {
            return Err(Error::Config("alpha must be positive".into()));
        }
        self.sampler.validate()
    }

    /// Resolve the per-sweep schedule for `lattice`.
    pub fn schedule(&self, lattice: &LatticeSpec) -> Result<SweepSchedule> {
        match (self.mode, lattice.dimensionality()) {
            (OptimizerMode::Global, 1) => Ok(SweepSchedule {
                positions: vec![0],
                extent: BlockExtent::OneD(lattice.n_sites()),
            }),
            (OptimizerMode::Global, 2) => Ok(SweepSchedule {
                positions: vec![0],
                extent: BlockExtent::TwoD {
                    rows: lattice.extents()[0],
                    cols: lattice.extents()[1],
                },
            }),
            (OptimizerMode::Slo(BlockExtent::OneD(s)), 1) => {
                build_sweep_schedule_1d(lattice.n_sites(), s)
            }
            (OptimizerMode::Slo(BlockExtent::TwoD { rows, cols }), 2) => {
                build_sweep_schedule_2d(lattice.extents(), (rows, cols))
            }
            (mode, dim) => Err(Error::Config(format!(
                "mode {mode:?} does not match lattice dimensionality {dim}"
            ))),
        }
    }
}

/// Diagnostics of one SR solve.
#[derive(Debug, Clone, Copy)]
pub struct SrUpdateInfo {
    /// ||(S + lambda I) delta - F||
    pub residual: f64,
    pub f_norm: f64,
    pub used_pinv: bool,
}

/// Solve (S + lambda I) delta = F. Cholesky first; if the shifted matrix is
/// still not positive definite, fall back to a Hermitian pseudo-inverse with
/// relative eigenvalue cutoff 1e-10.
pub fn solve_regularized(
    s: &DMatrix<Complex64>,
    f: &DVector<Complex64>,
    lambda: f64,
) -> Result<(DVector<Complex64>, SrUpdateInfo)> {
    let p = s.nrows();
    assert_eq!(s.ncols(), p);
    assert_eq!(f.len(), p);
    let mut shifted = s.clone();
    for k in 0..p {
        shifted[(k, k)] += Complex64::new(lambda, 0.0);
    }
    let f_norm = f.norm();
    let mut used_pinv = false;
    let delta = match shifted.clone().cholesky() {
        Some(ch) => ch.solve(f),
        None => {
            used_pinv = true;
            pinv_solve(&shifted, f)?
        }
    };
    let mut residual = (&shifted * &delta - f).norm();
    if !used_pinv && residual > 1e-8 * f_norm.max(f64::MIN_POSITIVE) {
        log::warn!("SR Cholesky residual {residual:.3e} too large, retrying with pseudo-inverse");
        used_pinv = true;
        let delta = pinv_solve(&shifted, f)?;
        residual = (&shifted * &delta - f).norm();
        return Ok((
            delta,
            SrUpdateInfo {
                residual,
                f_norm,
                used_pinv,
            },
        ));
    }
    if used_pinv {
        log::warn!("SR solve fell back to pseudo-inverse (residual {residual:.3e})");
    }
    Ok((
        delta,
        SrUpdateInfo {
            residual,
            f_norm,
            used_pinv,
        },
    ))
}

fn pinv_solve(m: &DMatrix<Complex64>, f: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let eig = m.clone().symmetric_eigen();
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(DVector::zeros(f.len()));
    }
    let cutoff = 1e-10 * max_abs;
    let vh_f = eig.eigenvectors.adjoint() * f;
    let scaled = DVector::from_iterator(
        f.len(),
        vh_f.iter().zip(eig.eigenvalues.iter()).map(|(c, &ev)| {
            if ev.abs() > cutoff {
                c.unscale(ev)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    );
    Ok(&eig.eigenvectors * scaled)
}

/// One SR step restricted to `block`: compute F and S from the batch, solve
/// the regularized system, and move only the block's parameters by
/// -gamma * delta. Everything outside the block is untouched.
pub fn sr_update(
    state: &mut RbmState,
    block: &ParameterBlock,
    batch: &crate::sampler::SampleBatch,
    gamma: f64,
    lambda: f64,
) -> Result<SrUpdateInfo> {
    assert_eq!(
        batch.n_active(),
        block.len(),
        "batch active parameters do not match the block"
    );
    let f = gradient_f_vector(batch)?;
    let s = covariance_s(batch)?;
    let (delta, info) = solve_regularized(&s, &f, lambda)?;
    for (slot, &idx) in block.indices().iter().enumerate() {
        *state.param_mut(idx) -= delta[slot].scale(gamma);
    }
    Ok(info)
}

/// One per-iteration record of the optimization trace.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub sweep: usize,
    /// Cumulative iteration count, 1-based.
    pub iteration: usize,
    pub block_anchor: usize,
    pub energy: Complex64,
    pub variance: f64,
    pub std_error: f64,
    pub gamma: f64,
    /// Wall-clock seconds since the start of the trial.
    pub elapsed_secs: f64,
}

/// Per-trial optimization trace.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    /// Block updates per sweep.
    pub n_s: usize,
}

impl OptimizationTrace {
    pub fn final_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy.re)
    }
}

/// Run the full optimization: for every sweep, visit each block of the
/// schedule, draw a fresh sample batch from the current state, and apply the
/// SR update at the sweep's learning rate. The energy recorded for an
/// iteration is the estimate over the batch that produced its update, i.e.
/// the energy of the state before the update. Deterministic given `seed`.
pub fn run_optimization(
    h: &TimHamiltonian,
    cfg: &SrConfig,
    seed: u64,
) -> Result<(RbmState, OptimizationTrace)> {
    cfg.validate()?;
    let lattice = &h.lattice;
    let schedule = cfg.schedule(lattice)?;
    let blocks: Vec<ParameterBlock> = schedule
        .positions()
        .iter()
        .map(|&p| block_index_set(lattice, cfg.alpha, p, schedule.extent()))
        .collect::<Result<_>>()?;
    let mut state = init_parameters(
        lattice.n_sites(),
        cfg.alpha,
        derive_seed(seed, 0),
        cfg.init_scale,
    );
    let mut records = Vec::with_capacity(cfg.sweeps * blocks.len());
    let started = Instant::now();
    let mut iteration = 0usize;
    for sweep in 0..cfg.sweeps {
        let gamma = cfg.rates.rate(sweep);
        for block in &blocks {
            iteration += 1;
            let mut sampler_cfg = cfg.sampler.clone();
            sampler_cfg.seed = derive_seed(seed, iteration as u64);
            let batch = run_chain(&state, &sampler_cfg, h, block);
            let est = energy_estimate(&batch)?;
            if !est.mean.re.is_finite() || !est.mean.im.is_finite() || !est.variance.is_finite() {
                return Err(Error::NonFiniteEnergy { sweep, iteration });
            }
            sr_update(&mut state, block, &batch, gamma, cfg.lambda)?;
            records.push(IterationRecord {
                sweep,
                iteration,
                block_anchor: block.anchor(),
                energy: est.mean,
                variance: est.variance,
                std_error: est.std_error,
                gamma,
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok((
        state,
        OptimizationTrace {
            records,
            n_s: blocks.len(),
        },
    ))
}
