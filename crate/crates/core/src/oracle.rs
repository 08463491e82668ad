//! Exact references for small systems: ground states by exact
//! diagonalization and estimator cross-checks by full enumeration of the
//! configuration space with exact |psi|^2 weights.

use crate::ansatz::{log_derivatives, ActivationCache, RbmState};
use crate::error::{Error, Result};
use crate::estimator::{correlators_from_distribution, hermitian_gram, local_energy, CorrelatorReport};
use crate::model::{LatticeSpec, SpinConfiguration, TimHamiltonian};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest system diagonalized with a dense eigensolver; larger systems up to
/// [`MAX_ED_SITES`] use Lanczos on the matrix-free operator.
const MAX_DENSE_SITES: usize = 10;
/// Hard capability limit for exact diagonalization.
pub const MAX_ED_SITES: usize = 16;
/// Hard capability limit for full-enumeration expectations.
pub const MAX_ENUMERATION_SITES: usize = 12;

const RESIDUAL_TARGET: f64 = 1e-10;

/// Ground state of a tilted Ising Hamiltonian.
///
/// The Hamiltonian is real symmetric in the z basis, so the ground vector is
/// stored with real amplitudes, indexed as `SpinConfiguration::from_index`.
/// `gap` is the distance to the second eigenvalue, as a diagnostic; for an
/// exactly degenerate ground space the iterative solver reports the distance
/// to the next distinct level.
#[derive(Debug, Clone)]
pub struct EdResult {
    pub ground_energy: f64,
    pub ground_vector: Vec<f64>,
    pub gap: f64,
}

/// Diagonal of H in the z basis, indexed as `SpinConfiguration::from_index`.
fn hamiltonian_diagonal(h: &TimHamiltonian) -> Vec<f64> {
    let l = h.n_sites();
    let dim = 1usize << l;
    let spin = |idx: usize, site: usize| {
        if idx >> site & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    (0..dim)
        .map(|idx| {
            let bond: f64 = h
                .lattice
                .bonds()
                .iter()
                .map(|&(i, j)| spin(idx, i) * spin(idx, j))
                .sum();
            let field: f64 = (0..l).map(|i| spin(idx, i)).sum();
            h.j * bond - h.h_z * field
        })
        .collect()
}

/// y = H v through the diagonal plus single-flip structure, O(2^L L).
fn apply_hamiltonian(h: &TimHamiltonian, diag: &[f64], v: &DVector<f64>, out: &mut DVector<f64>) {
    let l = h.n_sites();
    let dim = diag.len();
    for idx in 0..dim {
        out[idx] = diag[idx] * v[idx];
    }
    if h.h_x != 0.0 {
        for idx in 0..dim {
            let vi = v[idx];
            if vi != 0.0 {
                for site in 0..l {
                    out[idx ^ (1 << site)] -= h.h_x * vi;
                }
            }
        }
    }
}

fn dense_ground_state(h: &TimHamiltonian, diag: &[f64]) -> EdResult {
    let l = h.n_sites();
    let dim = 1usize << l;
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    for (idx, &d) in diag.iter().enumerate() {
        mat[(idx, idx)] = d;
        for site in 0..l {
            mat[(idx ^ (1 << site), idx)] -= h.h_x;
        }
    }
    let eig = mat.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let ground = order[0];
    let second = order[1];
    let vector: Vec<f64> = eig.eigenvectors.column(ground).iter().copied().collect();
    EdResult {
        ground_energy: eig.eigenvalues[ground],
        ground_vector: vector,
        gap: eig.eigenvalues[second] - eig.eigenvalues[ground],
    }
}

/// Lanczos with full two-pass reorthogonalization. Converges the lowest two
/// Ritz pairs; the basis is kept dense in memory (dim * iterations doubles).
fn lanczos_ground_state(h: &TimHamiltonian, diag: &[f64]) -> Result<EdResult> {
    let dim = diag.len();
    let max_iter = dim.min(450);
    let mut rng = ChaCha8Rng::seed_from_u64(0xED15EED);
    let mut v = DVector::<f64>::from_fn(dim, |_, _| rng.gen::<f64>() - 0.5);
    v /= v.norm();
    let mut basis: Vec<DVector<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = DVector::<f64>::zeros(dim);
    let scale_guess = diag.iter().fold(0.0f64, |m, &d| m.max(d.abs())) + h.h_x.abs();

    for k in 0..max_iter {
        apply_hamiltonian(h, diag, &basis[k], &mut w);
        let alpha = basis[k].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[k], 1.0);
        if k > 0 {
            w.axpy(-betas[k - 1], &basis[k - 1], 1.0);
        }
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dot(&w);
                w.axpy(-overlap, b, 1.0);
            }
        }
        let beta = w.norm();
        let exhausted = beta < 1e-13 * scale_guess.max(1.0);
        let should_check = exhausted || k + 1 == max_iter || (k >= 20 && k % 10 == 0);
        if should_check {
            let (values, vectors) = tridiagonal_eigen(&alphas, &betas);
            let ground_residual = beta * vectors[(k, 0)].abs();
            let second_ok = k + 1 < 2 || beta * vectors[(k, 1)].abs() < 1e-7;
            if exhausted
                || (ground_residual < RESIDUAL_TARGET * values[0].abs().max(1.0) && second_ok)
            {
                let mut ground = DVector::<f64>::zeros(dim);
                for (i, b) in basis.iter().enumerate() {
                    ground.axpy(vectors[(i, 0)], b, 1.0);
                }
                ground /= ground.norm();
                let gap = if values.len() > 1 {
                    values[1] - values[0]
                } else {
                    0.0
                };
                return Ok(EdResult {
                    ground_energy: values[0],
                    ground_vector: ground.iter().copied().collect(),
                    gap,
                });
            }
        }
        if k + 1 < max_iter {
            betas.push(beta);
            basis.push(w.unscale(beta));
        }
    }
    Err(Error::EigenConvergence(format!(
        "Lanczos did not reach residual {RESIDUAL_TARGET:.0e} in {max_iter} iterations"
    )))
}

/// Eigen-decomposition of the Lanczos tridiagonal matrix, eigenvalues
/// ascending with matching eigenvector columns.
fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(k, k);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Ground-state energy, vector and gap of `h`, for L <= 16. Dense
/// diagonalization below L = 11, Lanczos above. The returned pair satisfies
/// ||H v - E v|| < 1e-8 and ||v|| = 1.
pub fn ed_ground_state(h: &TimHamiltonian) -> Result<EdResult> {
    let l = h.n_sites();
    if l > MAX_ED_SITES {
        return Err(Error::Capability(format!(
            "exact diagonalization supports up to {MAX_ED_SITES} sites, got {l}"
        )));
    }
    let diag = hamiltonian_diagonal(h);
    let result = if l <= MAX_DENSE_SITES {
        dense_ground_state(h, &diag)
    } else {
        lanczos_ground_state(h, &diag)?
    };
    let v = DVector::from_column_slice(&result.ground_vector);
    let mut hv = DVector::zeros(v.len());
    apply_hamiltonian(h, &diag, &v, &mut hv);
    hv.axpy(-result.ground_energy, &v, 1.0);
    let residual = hv.norm();
    if residual > 1e-8 {
        return Err(Error::EigenConvergence(format!(
            "ground-state residual {residual:.3e} exceeds 1e-8"
        )));
    }
    Ok(result)
}

/// Correlators of the exact ground state, per the estimator's report.
pub fn ed_correlators(r: &EdResult, lattice: &LatticeSpec) -> Result<CorrelatorReport> {
    let probs: Vec<f64> = r.ground_vector.iter().map(|a| a * a).collect();
    correlators_from_distribution(&probs, lattice)
}

/// Energy, gradient F and covariance S summed over every configuration with
/// exact |psi|^2 weights: the oracle counterpart of the Monte Carlo
/// estimators, over the full flattened parameter set.
#[derive(Debug, Clone)]
pub struct ExactExpectations {
    pub energy: Complex64,
    pub gradient: Vec<Complex64>,
    pub covariance: DMatrix<Complex64>,
}

pub fn exact_expectations(h: &TimHamiltonian, state: &RbmState) -> Result<ExactExpectations> {
    let l = h.n_sites();
    if l > MAX_ENUMERATION_SITES {
        return Err(Error::Capability(format!(
            "full enumeration supports up to {MAX_ENUMERATION_SITES} sites, got {l}"
        )));
    }
    assert_eq!(state.n_visible(), l, "ansatz size does not match lattice");
    let dim = 1usize << l;
    let p = state.n_params();

    let mut log_weights = Vec::with_capacity(dim);
    let mut caches = Vec::with_capacity(dim);
    for idx in 0..dim {
        let cache = ActivationCache::new(state, SpinConfiguration::from_index(idx, l));
        log_weights.push(2.0 * cache.log_amplitude().re);
        caches.push(cache);
    }
    let max_log = log_weights.iter().fold(f64::NEG_INFINITY, |m, &w| m.max(w));
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max_log).exp()).collect();
    let z: f64 = weights.iter().sum();

    let mut energy = Complex64::new(0.0, 0.0);
    let mut o_mean = vec![Complex64::new(0.0, 0.0); p];
    let mut e_o_conj = vec![Complex64::new(0.0, 0.0); p];
    let mut scaled_rows = Vec::with_capacity(dim * p);
    for (idx, cache) in caches.iter().enumerate() {
        let wt = weights[idx] / z;
        let e_loc = local_energy(h, state, cache);
        let o = log_derivatives(state, cache);
        energy += e_loc.scale(wt);
        let sqrt_wt = wt.sqrt();
        for (k, ok) in o.iter().enumerate() {
            o_mean[k] += ok.scale(wt);
            e_o_conj[k] += e_loc * ok.conj().scale(wt);
            scaled_rows.push(ok.scale(sqrt_wt));
        }
    }
    let gradient: Vec<Complex64> = (0..p)
        .map(|k| e_o_conj[k] - energy * o_mean[k].conj())
        .collect();
    let mut covariance = hermitian_gram(&scaled_rows, dim, p);
    for r in 0..p {
        for c in 0..p {
            covariance[(r, c)] -= o_mean[r].conj() * o_mean[c];
        }
    }
    Ok(ExactExpectations {
        energy,
        gradient,
        covariance,
    })
}

/// Normalized |psi(x)|^2 over all 2^L configurations, indexed as
/// `SpinConfiguration::from_index`.
pub fn exact_distribution(state: &RbmState) -> Vec<f64> {
    let l = state.n_visible();
    let dim = 1usize << l;
    let log_weights: Vec<f64> = (0..dim)
        .map(|idx| {
            2.0 * crate::ansatz::log_amplitude(state, &SpinConfiguration::from_index(idx, l)).re
        })
        .collect();
    let max_log = log_weights.iter().fold(f64::NEG_INFINITY, |m, &w| m.max(w));
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max_log).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::init_parameters;
    use crate::model::build_lattice;
    use approx::assert_relative_eq;

    fn tim_1d(l: usize, j: f64, h_x: f64, h_z: f64) -> TimHamiltonian {
        TimHamiltonian::new(build_lattice(1, &[l]).unwrap(), j, h_x, h_z)
    }

    #[test]
    fn two_site_transverse_chain_has_sqrt5_ground_energy() {
        let h = tim_1d(2, 1.0, 1.0, 0.0);
        let r = ed_ground_state(&h).unwrap();
        assert_relative_eq!(r.ground_energy, -(5.0f64.sqrt()), max_relative = 1e-12);
    }

    #[test]
    fn classical_ferromagnet_ground_energy() {
        let h = tim_1d(3, -1.0, 0.0, 0.0);
        let r = ed_ground_state(&h).unwrap();
        assert_relative_eq!(r.ground_energy, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn classical_antiferromagnet_ground_energy() {
        let h = tim_1d(4, 1.0, 0.0, 0.5);
        let r = ed_ground_state(&h).unwrap();
        assert_relative_eq!(r.ground_energy, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_vector_is_normalized_with_small_residual() {
        let h = tim_1d(6, 1.0, 0.9, 0.4);
        let r = ed_ground_state(&h).unwrap();
        let norm: f64 = r.ground_vector.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(r.gap > 0.0);
    }

    #[test]
    fn lanczos_agrees_with_dense_diagonalization() {
        let h = tim_1d(8, 1.0, 0.7, 0.5);
        let diag = hamiltonian_diagonal(&h);
        let dense = dense_ground_state(&h, &diag);
        let lanczos = lanczos_ground_state(&h, &diag).unwrap();
        assert_relative_eq!(
            dense.ground_energy,
            lanczos.ground_energy,
            max_relative = 1e-10
        );
        assert_relative_eq!(dense.gap, lanczos.gap, max_relative = 1e-6);
        let overlap: f64 = dense
            .ground_vector
            .iter()
            .zip(&lanczos.ground_vector)
            .map(|(a, b)| a * b)
            .sum();
        assert!((overlap.abs() - 1.0).abs() < 1e-9, "overlap {overlap}");
    }

    #[test]
    fn lanczos_handles_the_2d_grid() {
        let lat = build_lattice(2, &[3, 4]).unwrap();
        let h = TimHamiltonian::new(lat.clone(), 1.0, 0.5, 0.5);
        let r = ed_ground_state(&h).unwrap();
        // cross-check with dense on the same 12-site system
        let diag = hamiltonian_diagonal(&h);
        let dense = dense_ground_state(&h, &diag);
        assert_relative_eq!(r.ground_energy, dense.ground_energy, max_relative = 1e-10);
    }

    #[test]
    fn oversized_system_is_rejected() {
        let h = tim_1d(17, 1.0, 0.5, 0.5);
        assert!(matches!(ed_ground_state(&h), Err(Error::Capability(_))));
        let state = init_parameters(13, 1, 1, 0.01);
        let h13 = tim_1d(13, 1.0, 0.5, 0.5);
        assert!(matches!(
            exact_expectations(&h13, &state),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn neel_ground_state_has_unit_antiferro_correlators() {
        // odd length: h_z breaks the Neel degeneracy, unique classical ground state
        let h = tim_1d(5, 1.0, 0.0, 0.5);
        let r = ed_ground_state(&h).unwrap();
        let rep = ed_correlators(&r, &h.lattice).unwrap();
        for (k, &d) in rep.distances.iter().enumerate() {
            assert_relative_eq!(rep.antiferro[k], 1.0, epsilon = 1e-10);
            if d % 2 == 0 {
                assert_relative_eq!(rep.ferro[k], 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn strong_transverse_field_kills_zz_correlations() {
        let h = tim_1d(4, 1.0, 100.0, 0.0);
        let r = ed_ground_state(&h).unwrap();
        let rep = ed_correlators(&r, &h.lattice).unwrap();
        for &p in &rep.pair_expectations {
            assert!(p.abs() < 1e-3, "pair expectation {p} should vanish");
        }
    }

    #[test]
    fn uniform_state_energy_by_enumeration() {
        let h = tim_1d(2, 1.0, 0.5, 0.5);
        let state = init_parameters(2, 1, 1, 0.0);
        let exact = exact_expectations(&h, &state).unwrap();
        assert_relative_eq!(exact.energy.re, -1.0, max_relative = 1e-12);
        assert_relative_eq!(exact.energy.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pinned_state_has_vanishing_f_and_s() {
        let h = tim_1d(3, 1.0, 0.4, 0.2);
        let a = vec![Complex64::new(6.0, 0.0); 3];
        let w = vec![Complex64::new(0.0, 0.0); 9];
        let state = RbmState::new(3, 1, a, w).unwrap();
        let exact = exact_expectations(&h, &state).unwrap();
        for g in &exact.gradient {
            assert!(g.norm() < 1e-6, "gradient entry {g} should be tiny");
        }
        for v in exact.covariance.iter() {
            assert!(v.norm() < 1e-6, "covariance entry {v} should be tiny");
        }
    }

    #[test]
    fn exact_distribution_normalizes() {
        let state = init_parameters(4, 2, 9, 0.3);
        let dist = exact_distribution(&state);
        assert_eq!(dist.len(), 16);
        assert_relative_eq!(dist.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(dist.iter().all(|&p| p >= 0.0));
    }

    /// Independent dense-matrix route for E, F, S on a small instance:
    /// everything from explicit vectors and the dense Hamiltonian.
    #[test]
    fn enumeration_matches_dense_matrix_route() {
        let l = 4;
        let h = tim_1d(l, 1.0, 0.8, 0.3);
        let state = init_parameters(l, 2, 41, 0.35);
        let exact = exact_expectations(&h, &state).unwrap();

        let dim = 1usize << l;
        let p = state.n_params();
        let amps: Vec<Complex64> = (0..dim)
            .map(|idx| {
                crate::ansatz::log_amplitude(state_ref(&state), &SpinConfiguration::from_index(idx, l))
                    .exp()
            })
            .collect();
        // dense H
        let diag = hamiltonian_diagonal(&h);
        let mut h_psi = vec![Complex64::new(0.0, 0.0); dim];
        for idx in 0..dim {
            h_psi[idx] += amps[idx].scale(diag[idx]);
            for site in 0..l {
                h_psi[idx ^ (1 << site)] -= amps[idx].scale(h.h_x);
            }
        }
        let z: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let energy: Complex64 = amps
            .iter()
            .zip(&h_psi)
            .map(|(a, hp)| a.conj() * hp)
            .sum::<Complex64>()
            .unscale(z);
        assert!((energy - exact.energy).norm() < 1e-10 * energy.norm().max(1.0));

        // O_k(x) per configuration from log-derivatives
        let mut o_cols = vec![vec![Complex64::new(0.0, 0.0); dim]; p];
        for idx in 0..dim {
            let cache = ActivationCache::new(&state, SpinConfiguration::from_index(idx, l));
            for (k, v) in log_derivatives(&state, &cache).into_iter().enumerate() {
                o_cols[k][idx] = v;
            }
        }
        for k in 0..p {
            // F_k = <O_k psi|H|psi>/Z - E <O_k>*
            let o_psi_h: Complex64 = (0..dim)
                .map(|idx| (o_cols[k][idx] * amps[idx]).conj() * h_psi[idx])
                .sum::<Complex64>()
                .unscale(z);
            let o_mean: Complex64 = (0..dim)
                .map(|idx| o_cols[k][idx].scale(amps[idx].norm_sqr()))
                .sum::<Complex64>()
                .unscale(z);
            let f_k = o_psi_h - energy * o_mean.conj();
            assert!(
                (f_k - exact.gradient[k]).norm() < 1e-10 * f_k.norm().max(1.0),
                "F[{k}]: {f_k} vs {}",
                exact.gradient[k]
            );
        }
        // spot-check S entries
        for (k, m) in [(0usize, 0usize), (1, 3), (p - 1, p - 2), (2, p - 1)] {
            let mut okm = Complex64::new(0.0, 0.0);
            let mut ok = Complex64::new(0.0, 0.0);
            let mut om = Complex64::new(0.0, 0.0);
            for idx in 0..dim {
                let wt = amps[idx].norm_sqr() / z;
                okm += (o_cols[k][idx].conj() * o_cols[m][idx]).scale(wt);
                ok += o_cols[k][idx].scale(wt);
                om += o_cols[m][idx].scale(wt);
            }
            let s_km = okm - ok.conj() * om;
            assert!(
                (s_km - exact.covariance[(k, m)]).norm() < 1e-10 * s_km.norm().max(1.0),
                "S[{k},{m}]: {s_km} vs {}",
                exact.covariance[(k, m)]
            );
        }
    }

    fn state_ref(s: &RbmState) -> &RbmState {
        s
    }
}
