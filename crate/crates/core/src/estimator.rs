//! Monte Carlo estimators: local energies, the energy estimate, the SR
//! gradient F_k = <E_loc O_k*> - <E_loc><O_k*>, the covariance matrix
//! S_km = <O_k* O_m> - <O_k*><O_m>, and z-z correlators.

use crate::ansatz::{amplitude_ratio, ActivationCache, RbmState};
use crate::error::{Error, Result};
use crate::model::{
    connected_configurations, diagonal_energy, LatticeSpec, SpinConfiguration, TimHamiltonian,
};
use crate::sampler::SampleBatch;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Monte Carlo energy estimate. The externally reported energy is the real
/// part of `mean`; the imaginary part is a sampling/ansatz diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct EnergyEstimate {
    pub mean: Complex64,
    pub variance: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Ferro and antiferro z-z correlators against the first site,
/// C^F_d = (1/d) sum_{l=2}^{d+1} <s^z_1 s^z_l> and
/// C^A_d = (1/d) sum_{l=2}^{d+1} (-1)^(l-1) <s^z_1 s^z_l>,
/// with the raw pair expectations kept alongside.
#[derive(Debug, Clone)]
pub struct CorrelatorReport {
    pub distances: Vec<usize>,
    pub ferro: Vec<f64>,
    pub antiferro: Vec<f64>,
    /// <s^z_1 s^z_l> for l = 2..=L (1-based l, index l-2).
    pub pair_expectations: Vec<f64>,
}

/// E_loc(x) = <x|H|x> + sum_i H_{x,x^i} psi(x^i)/psi(x) with x^i the single
/// flips. The off-diagonal sum is skipped entirely at h_x = 0 so the
/// classical limit is exact.
pub fn local_energy(h: &TimHamiltonian, state: &RbmState, cache: &ActivationCache) -> Complex64 {
    let diag = diagonal_energy(h, cache.config());
    if h.h_x == 0.0 {
        return Complex64::new(diag, 0.0);
    }
    let mut acc = Complex64::new(diag, 0.0);
    for (site, elem) in connected_configurations(h, cache.config()) {
        acc += amplitude_ratio(state, cache, site).scale(elem);
    }
    acc
}

/// Mean, population variance and standard error of the batch local energies.
pub fn energy_estimate(batch: &SampleBatch) -> Result<EnergyEstimate> {
    let n = batch.n_samples();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let energies = batch.local_energies();
    let mean = energies.iter().sum::<Complex64>().unscale(n as f64);
    let variance = energies
        .iter()
        .map(|e| (e - mean).norm_sqr())
        .sum::<f64>()
        / n as f64;
    Ok(EnergyEstimate {
        mean,
        variance,
        std_error: (variance / n as f64).sqrt(),
        n_samples: n,
    })
}

/// F_k = <E_loc O_k*> - <E_loc><O_k*> over the batch's active parameters.
pub fn gradient_f(batch: &SampleBatch) -> Result<Vec<Complex64>> {
    let n = batch.n_samples();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let p = batch.n_active();
    let mut e_o_conj = vec![Complex64::new(0.0, 0.0); p];
    let mut o_mean = vec![Complex64::new(0.0, 0.0); p];
    let mut e_mean = Complex64::new(0.0, 0.0);
    for s in 0..n {
        let e = batch.local_energies()[s];
        e_mean += e;
        for (k, o) in batch.log_derivs_row(s).iter().enumerate() {
            e_o_conj[k] += e * o.conj();
            o_mean[k] += o;
        }
    }
    e_mean = e_mean.unscale(n as f64);
    Ok((0..p)
        .map(|k| e_o_conj[k].unscale(n as f64) - e_mean * o_mean[k].unscale(n as f64).conj())
        .collect())
}

/// Hermitian Gram matrix sum_n conj(rows_n) rows_n^T computed through real
/// GEMMs on the split real/imaginary parts. `rows` is row-major n x p and is
/// expected to be pre-scaled by the square roots of the sample weights.
pub(crate) fn hermitian_gram(rows: &[Complex64], n: usize, p: usize) -> DMatrix<Complex64> {
    debug_assert_eq!(rows.len(), n * p);
    let re = DMatrix::<f64>::from_row_iterator(n, p, rows.iter().map(|z| z.re));
    let im = DMatrix::<f64>::from_row_iterator(n, p, rows.iter().map(|z| z.im));
    // (A - iB)^T (A + iB) = A^T A + B^T B + i (A^T B - (A^T B)^T)
    let ata = re.transpose() * &re;
    let btb = im.transpose() * &im;
    let atb = re.transpose() * &im;
    DMatrix::from_fn(p, p, |r, c| {
        Complex64::new(ata[(r, c)] + btb[(r, c)], atb[(r, c)] - atb[(c, r)])
    })
}

/// S_km = <O_k* O_m> - <O_k*><O_m> over the batch's active parameters.
/// Hermitian and positive semidefinite by construction.
pub fn covariance_s(batch: &SampleBatch) -> Result<DMatrix<Complex64>> {
    let n = batch.n_samples();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let p = batch.n_active();
    let inv_sqrt_n = (1.0 / n as f64).sqrt();
    let mut scaled = Vec::with_capacity(n * p);
    let mut o_mean = vec![Complex64::new(0.0, 0.0); p];
    for s in 0..n {
        for (k, o) in batch.log_derivs_row(s).iter().enumerate() {
            o_mean[k] += o;
            scaled.push(o.scale(inv_sqrt_n));
        }
    }
    for m in o_mean.iter_mut() {
        *m = m.unscale(n as f64);
    }
    let mut s_mat = hermitian_gram(&scaled, n, p);
    for r in 0..p {
        for c in 0..p {
            s_mat[(r, c)] -= o_mean[r].conj() * o_mean[c];
        }
    }
    Ok(s_mat)
}

/// Pair expectations <s^z_1 s^z_l> as sample means over configurations.
pub fn correlators_from_configs(
    configs: &[SpinConfiguration],
    lattice: &LatticeSpec,
) -> Result<CorrelatorReport> {
    check_correlator_support(lattice)?;
    if configs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let l = lattice.n_sites();
    let n = configs.len() as f64;
    let pair: Vec<f64> = (1..l)
        .map(|site| {
            configs
                .iter()
                .map(|x| x.spin_f64(0) * x.spin_f64(site))
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(assemble_report(&pair))
}

/// Correlators over a sampled batch.
pub fn correlators_from_batch(
    batch: &SampleBatch,
    lattice: &LatticeSpec,
) -> Result<CorrelatorReport> {
    correlators_from_configs(batch.configurations(), lattice)
}

/// Correlators from an exact basis distribution p(x) (normalized |psi|^2,
/// indexed as SpinConfiguration::from_index).
pub fn correlators_from_distribution(
    probabilities: &[f64],
    lattice: &LatticeSpec,
) -> Result<CorrelatorReport> {
    check_correlator_support(lattice)?;
    let l = lattice.n_sites();
    assert_eq!(probabilities.len(), 1 << l, "distribution length mismatch");
    let spin = |idx: usize, site: usize| if idx >> site & 1 == 0 { 1.0 } else { -1.0 };
    let pair: Vec<f64> = (1..l)
        .map(|site| {
            probabilities
                .iter()
                .enumerate()
                .map(|(idx, &p)| p * spin(idx, 0) * spin(idx, site))
                .sum()
        })
        .collect();
    Ok(assemble_report(&pair))
}

fn check_correlator_support(lattice: &LatticeSpec) -> Result<()> {
    if lattice.dimensionality() != 1 {
        return Err(Error::UnsupportedObservable(
            "correlators are defined for 1D lattices only".into(),
        ));
    }
    if lattice.n_sites() < 2 {
        return Err(Error::UnsupportedObservable(
            "correlators need at least two sites".into(),
        ));
    }
    Ok(())
}

/// Assemble C^F and C^A for d = 1..L-1 from pair expectations
/// (pair[l-2] = <s^z_1 s^z_l>, 1-based l). Exact arithmetic, no estimation.
fn assemble_report(pair: &[f64]) -> CorrelatorReport {
    let mut ferro = Vec::with_capacity(pair.len());
    let mut antiferro = Vec::with_capacity(pair.len());
    let mut sum_f = 0.0;
    let mut sum_a = 0.0;
    for (d, &value) in pair.iter().enumerate().map(|(k, v)| (k + 1, v)) {
        let l_site = d + 1; // summation index l runs over sites 2..=d+1
        sum_f += value;
        sum_a += if l_site % 2 == 0 { -value } else { value };
        ferro.push(sum_f / d as f64);
        antiferro.push(sum_a / d as f64);
    }
    CorrelatorReport {
        distances: (1..=pair.len()).collect(),
        ferro,
        antiferro,
        pair_expectations: pair.to_vec(),
    }
}

/// Convenience: gradient as an nalgebra vector.
pub fn gradient_f_vector(batch: &SampleBatch) -> Result<DVector<Complex64>> {
    Ok(DVector::from_vec(gradient_f(batch)?))
}
