//! Complex RBM wavefunction over visible spins.
//!
//! The hidden layer is traced out analytically, leaving
//!
//! psi(x) = exp(a.x) prod_j 2cosh(theta_j),   theta_j = sum_i W_ji x_i
//!
//! with complex visible biases a (length L) and weights W (M x L, M = alpha L).
//! There are no hidden biases. Per-configuration activations are cached so
//! that a single spin flip costs O(M) with no transcendental-function calls
//! in the steady state.

use crate::error::{Error, Result};
use crate::model::SpinConfiguration;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};

/// RBM parameters: visible biases `a` and weights `w` (row-major, w[j*L + i]).
///
/// The flattened parameter vector theta is ordered [a_0..a_{L-1}, then W
/// row-major], so parameters coupled to a group of visible sites occupy a
/// strided index set. Total parameter count is L + alpha L^2.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmState {
    l: usize,
    m: usize,
    alpha: usize,
    a: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl RbmState {
    pub fn new(l: usize, alpha: usize, a: Vec<Complex64>, w: Vec<Complex64>) -> Result<Self> {
        let m = alpha * l;
        if l == 0 || alpha == 0 {
            return Err(Error::Config("L and alpha must be positive".into()));
        }
        if a.len() != l || w.len() != m * l {
            return Err(Error::Config(format!(
                "parameter shape mismatch: expected a[{l}], w[{}], got a[{}], w[{}]",
                m * l,
                a.len(),
                w.len()
            )));
        }
        Ok(Self { l, m, alpha, a, w })
    }

    pub fn n_visible(&self) -> usize {
        self.l
    }

    pub fn n_hidden(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Length of the flattened parameter vector, L + alpha L^2.
    pub fn n_params(&self) -> usize {
        self.l + self.m * self.l
    }

    pub fn visible_bias(&self) -> &[Complex64] {
        &self.a
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.w
    }

    pub fn weight(&self, j: usize, i: usize) -> Complex64 {
        self.w[j * self.l + i]
    }

    /// Parameter at flattened index: a_i for idx < L, else W_ji row-major.
    pub fn param(&self, idx: usize) -> Complex64 {
        if idx < self.l {
            self.a[idx]
        } else {
            self.w[idx - self.l]
        }
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut Complex64 {
        if idx < self.l {
            &mut self.a[idx]
        } else {
            &mut self.w[idx - self.l]
        }
    }
}

/// Draw initial parameters: a = 0, Re and Im of each W_ji independently
/// Gaussian with standard deviation `scale`. Deterministic given the seed.
pub fn init_parameters(l: usize, alpha: usize, seed: u64, scale: f64) -> RbmState {
    assert!(l >= 1 && alpha >= 1, "L and alpha must be positive");
    assert!(scale >= 0.0, "scale must be nonnegative");
    let m = alpha * l;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = vec![Complex64::new(0.0, 0.0); l];
    let w = (0..m * l)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    RbmState { l, m, alpha, a, w }
}

/// ln(2 cosh z) evaluated as +-z + ln(1 + exp(-|2 Re z|...)) so the exponential
/// argument never has positive real part.
pub fn ln_2cosh(z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    if z.re >= 0.0 {
        z + (one + (-(z + z)).exp()).ln()
    } else {
        -z + (one + (z + z).exp()).ln()
    }
}

/// tanh z, clamped to +-1 where num-complex's formula would overflow.
pub fn stable_tanh(z: Complex64) -> Complex64 {
    if z.re > 20.0 {
        Complex64::new(1.0, 0.0)
    } else if z.re < -20.0 {
        Complex64::new(-1.0, 0.0)
    } else {
        z.tanh()
    }
}

fn tanh_from_parts(cosh: Complex64, sinh: Complex64, theta: Complex64) -> Complex64 {
    if theta.re.abs() > 20.0 {
        Complex64::new(theta.re.signum(), 0.0)
    } else {
        sinh / cosh
    }
}

/// ln psi(x) = a.x + sum_j ln(2 cosh theta_j), principal branch per factor.
pub fn log_amplitude(state: &RbmState, x: &SpinConfiguration) -> Complex64 {
    assert_eq!(x.len(), state.l, "configuration length mismatch");
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, ai) in state.a.iter().enumerate() {
        acc += ai.scale(x.spin_f64(i));
    }
    for j in 0..state.m {
        let mut theta = Complex64::new(0.0, 0.0);
        let row = &state.w[j * state.l..(j + 1) * state.l];
        for (i, wji) in row.iter().enumerate() {
            theta += wji.scale(x.spin_f64(i));
        }
        acc += ln_2cosh(theta);
    }
    acc
}

/// Per-configuration activations plus lookup tables for O(M) spin flips.
///
/// `theta[j]` caches the cosh argument sum_i W_ji x_i and `bias_dot` caches
/// a.x for the owner configuration. cosh/sinh of theta and of the fixed flip
/// increments 2 W_ji are kept alongside so that proposing or applying a flip
/// needs no transcendental calls. The cache is tied to the parameter values
/// it was built from; rebuild it after any parameter update.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    config: SpinConfiguration,
    theta: Vec<Complex64>,
    bias_dot: Complex64,
    cosh_theta: Vec<Complex64>,
    sinh_theta: Vec<Complex64>,
    cosh_2w: Vec<Complex64>,
    sinh_2w: Vec<Complex64>,
    exp_neg2a: Vec<Complex64>,
    exp_pos2a: Vec<Complex64>,
}

impl ActivationCache {
    pub fn new(state: &RbmState, config: SpinConfiguration) -> Self {
        assert_eq!(config.len(), state.l, "configuration length mismatch");
        let (l, m) = (state.l, state.m);
        let mut theta = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..m {
            let row = &state.w[j * l..(j + 1) * l];
            theta[j] = row
                .iter()
                .enumerate()
                .map(|(i, wji)| wji.scale(config.spin_f64(i)))
                .sum();
        }
        let bias_dot = state
            .a
            .iter()
            .enumerate()
            .map(|(i, ai)| ai.scale(config.spin_f64(i)))
            .sum();
        let cosh_theta = theta.iter().map(|t| t.cosh()).collect();
        let sinh_theta = theta.iter().map(|t| t.sinh()).collect();
        let two = Complex64::new(2.0, 0.0);
        let cosh_2w = state.w.iter().map(|w| (two * w).cosh()).collect();
        let sinh_2w = state.w.iter().map(|w| (two * w).sinh()).collect();
        let exp_neg2a = state.a.iter().map(|a| (-two * a).exp()).collect();
        let exp_pos2a = state.a.iter().map(|a| (two * a).exp()).collect();
        Self {
            config,
            theta,
            bias_dot,
            cosh_theta,
            sinh_theta,
            cosh_2w,
            sinh_2w,
            exp_neg2a,
            exp_pos2a,
        }
    }

    pub fn config(&self) -> &SpinConfiguration {
        &self.config
    }

    pub fn theta(&self) -> &[Complex64] {
        &self.theta
    }

    pub fn bias_dot(&self) -> Complex64 {
        self.bias_dot
    }

    /// ln psi of the owner configuration, from cached activations.
    pub fn log_amplitude(&self) -> Complex64 {
        self.bias_dot + self.theta.iter().map(|&t| ln_2cosh(t)).sum::<Complex64>()
    }

    /// tanh(theta_j) from the cached cosh/sinh pair.
    pub fn tanh_theta(&self, j: usize) -> Complex64 {
        tanh_from_parts(self.cosh_theta[j], self.sinh_theta[j], self.theta[j])
    }

    /// Worst absolute (theta, bias) / relative (cosh, sinh) deviation from a
    /// from-scratch rebuild. Test hook for the incremental-update invariant.
    pub fn freshness_error(&self, state: &RbmState) -> f64 {
        let fresh = ActivationCache::new(state, self.config.clone());
        let mut err: f64 = (self.bias_dot - fresh.bias_dot).norm();
        for j in 0..self.theta.len() {
            err = err.max((self.theta[j] - fresh.theta[j]).norm());
            let denom_c = fresh.cosh_theta[j].norm().max(1.0);
            err = err.max((self.cosh_theta[j] - fresh.cosh_theta[j]).norm() / denom_c);
            let denom_s = fresh.sinh_theta[j].norm().max(1.0);
            err = err.max((self.sinh_theta[j] - fresh.sinh_theta[j]).norm() / denom_s);
        }
        err
    }
}

/// psi(x') / psi(x) for x' = x with `flip_site` flipped:
/// exp(-2 a_i x_i) prod_j cosh(theta_j - 2 W_ji x_i) / cosh(theta_j),
/// evaluated from the cache in O(M). Falls back to a log-sum form if the
/// direct product over- or underflows.
pub fn amplitude_ratio(state: &RbmState, cache: &ActivationCache, flip_site: usize) -> Complex64 {
    let l = state.l;
    debug_assert!(flip_site < l, "flip site out of range");
    let x = cache.config.spin_f64(flip_site);
    let bias_factor = if x > 0.0 {
        cache.exp_neg2a[flip_site]
    } else {
        cache.exp_pos2a[flip_site]
    };
    let mut prod = Complex64::new(1.0, 0.0);
    for j in 0..state.m {
        let idx = j * l + flip_site;
        // cosh(theta - 2Wx) = cosh(theta)cosh(2W) - x sinh(theta)sinh(2W)
        let num = cache.cosh_theta[j] * cache.cosh_2w[idx]
            - (cache.sinh_theta[j] * cache.sinh_2w[idx]).scale(x);
        prod *= num / cache.cosh_theta[j];
    }
    let ratio = bias_factor * prod;
    if ratio.is_finite() {
        ratio
    } else {
        amplitude_ratio_logsum(state, cache, flip_site)
    }
}

fn amplitude_ratio_logsum(
    state: &RbmState,
    cache: &ActivationCache,
    flip_site: usize,
) -> Complex64 {
    let x = cache.config.spin_f64(flip_site);
    let mut dlog = -state.a[flip_site].scale(2.0 * x);
    for j in 0..state.m {
        let shifted = cache.theta[j] - state.weight(j, flip_site).scale(2.0 * x);
        dlog += ln_2cosh(shifted) - ln_2cosh(cache.theta[j]);
    }
    dlog.exp()
}

/// Flip one spin in place: theta_j -= 2 W_ji x_i, bias_dot -= 2 a_i x_i, and
/// the cached cosh/sinh roll forward through the hyperbolic addition formulas.
pub fn apply_flip(cache: &mut ActivationCache, state: &RbmState, flip_site: usize) {
    let l = state.l;
    debug_assert!(flip_site < l, "flip site out of range");
    let x = cache.config.spin_f64(flip_site);
    for j in 0..state.m {
        let idx = j * l + flip_site;
        let (c, s) = (cache.cosh_theta[j], cache.sinh_theta[j]);
        let (cw, sw) = (cache.cosh_2w[idx], cache.sinh_2w[idx]);
        cache.theta[j] -= state.w[idx].scale(2.0 * x);
        cache.cosh_theta[j] = c * cw - (s * sw).scale(x);
        cache.sinh_theta[j] = s * cw - (c * sw).scale(x);
    }
    cache.bias_dot -= state.a[flip_site].scale(2.0 * x);
    cache.config.flip(flip_site);
}

/// Log-derivatives O_k = d ln psi / d theta_k over the full flattened
/// parameter vector: O_{a_i} = x_i and O_{W_ji} = x_i tanh(theta_j).
pub fn log_derivatives(state: &RbmState, cache: &ActivationCache) -> Vec<Complex64> {
    let sites: Vec<usize> = (0..state.l).collect();
    log_derivatives_for_sites(state, cache, &sites)
}

/// Log-derivatives restricted to the parameters coupled to `sites` (which
/// must be sorted ascending): first a_i for each site, then for each hidden
/// row j the entries W_ji for each site. This matches the ascending flattened
/// index order of a parameter block.
pub fn log_derivatives_for_sites(
    state: &RbmState,
    cache: &ActivationCache,
    sites: &[usize],
) -> Vec<Complex64> {
    debug_assert!(sites.windows(2).all(|w| w[0] < w[1]), "sites must be sorted");
    let mut out = Vec::with_capacity(sites.len() * (state.m + 1));
    for &i in sites {
        out.push(Complex64::new(cache.config.spin_f64(i), 0.0));
    }
    for j in 0..state.m {
        let t = cache.tanh_theta(j);
        for &i in sites {
            out.push(t.scale(cache.config.spin_f64(i)));
        }
    }
    out
}

/// Write the checkpoint format: a header with L and alpha, then one
/// "re im" line per parameter in flattened theta order.
pub fn write_checkpoint<W: Write>(out: &mut W, state: &RbmState) -> Result<()> {
    writeln!(out, "rbm-checkpoint v1")?;
    writeln!(out, "L {}", state.l)?;
    writeln!(out, "alpha {}", state.alpha)?;
    for idx in 0..state.n_params() {
        let p = state.param(idx);
        writeln!(out, "{} {}", p.re, p.im)?;
    }
    Ok(())
}

/// Read a checkpoint produced by [`write_checkpoint`]. Round-trips exactly.
pub fn read_checkpoint<R: BufRead>(input: &mut R) -> Result<RbmState> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?
            .map_err(Error::Io)
    };
    let header = next()?;
    if header.trim() != "rbm-checkpoint v1" {
        return Err(Error::Checkpoint(format!("bad header: {header:?}")));
    }
    let parse_field = |line: &str, name: &str| -> Result<usize> {
        let rest = line
            .strip_prefix(name)
            .ok_or_else(|| Error::Checkpoint(format!("expected `{name}`, got {line:?}")))?;
        rest.trim()
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad {name} value: {e}")))
    };
    let l = parse_field(&next()?, "L")?;
    let alpha = parse_field(&next()?, "alpha")?;
    let n = l + alpha * l * l;
    let mut params = Vec::with_capacity(n);
    for k in 0..n {
        let line = next()?;
        let mut it = line.split_whitespace();
        let re: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("bad parameter line {k}")))?;
        let im: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("bad parameter line {k}")))?;
        params.push(Complex64::new(re, im));
    }
    let a = params[..l].to_vec();
    let w = params[l..].to_vec();
    RbmState::new(l, alpha, a, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_state(l: usize, alpha: usize, seed: u64, scale: f64) -> RbmState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = alpha * l;
        let a = (0..l)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5).scale(scale))
            .collect();
        let w = (0..m * l)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5).scale(scale))
            .collect();
        RbmState::new(l, alpha, a, w).unwrap()
    }

    /// Brute-force psi(x) = sum over all 2^M hidden configurations of
    /// exp(a.x + h.Wx); the traced form must reproduce it.
    fn brute_force_psi(state: &RbmState, x: &SpinConfiguration) -> Complex64 {
        let (l, m) = (state.n_visible(), state.n_hidden());
        let ax: Complex64 = (0..l)
            .map(|i| state.visible_bias()[i].scale(x.spin_f64(i)))
            .sum();
        let mut total = Complex64::new(0.0, 0.0);
        for hidx in 0..1usize << m {
            let mut exponent = ax;
            for j in 0..m {
                let hj = if hidx >> j & 1 == 0 { 1.0 } else { -1.0 };
                for i in 0..l {
                    exponent += state.weight(j, i).scale(hj * x.spin_f64(i));
                }
            }
            total += exponent.exp();
        }
        total
    }

    #[test]
    fn init_parameters_shape_and_determinism() {
        let s1 = init_parameters(4, 5, 7, 0.01);
        let s2 = init_parameters(4, 5, 7, 0.01);
        assert_eq!(s1, s2);
        assert_eq!(s1.n_hidden(), 20);
        assert_eq!(s1.weights().len(), 80);
        assert_eq!(s1.n_params(), 4 + 5 * 16);
        assert!(s1.visible_bias().iter().all(|a| a.norm() == 0.0));
        assert!(s1.weights().iter().all(|w| w.norm() < 0.1));
        let s3 = init_parameters(4, 5, 8, 0.01);
        assert_ne!(s1, s3);
    }

    #[test]
    fn zero_scale_gives_uniform_state() {
        let s = init_parameters(3, 2, 1, 0.0);
        assert!(s.weights().iter().all(|w| w.norm() == 0.0));
        for idx in 0..8 {
            let x = SpinConfiguration::from_index(idx, 3);
            let lp = log_amplitude(&s, &x);
            assert_relative_eq!(lp.re, 6.0 * std::f64::consts::LN_2, max_relative = 1e-14);
            assert_relative_eq!(lp.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn parameter_count_small_case() {
        let s = init_parameters(2, 1, 1, 0.01);
        assert_eq!(s.n_params(), 6);
    }

    #[test]
    fn single_factor_log_amplitude() {
        let w = Complex64::new(0.3, -0.2);
        let s = RbmState::new(1, 1, vec![Complex64::new(0.0, 0.0)], vec![w]).unwrap();
        let x = SpinConfiguration::all_up(1);
        let expected = (2.0 * w.cosh()).ln();
        let got = log_amplitude(&s, &x);
        assert_relative_eq!(got.re, expected.re, max_relative = 1e-12);
        assert_relative_eq!(got.im, expected.im, max_relative = 1e-12);
    }

    #[test]
    fn log_amplitude_matches_brute_force_hidden_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let l = rng.gen_range(1..=4);
            let alpha = rng.gen_range(1..=2);
            let state = random_state(l, alpha, 1000 + trial, 0.4);
            for idx in 0..1usize << l {
                let x = SpinConfiguration::from_index(idx, l);
                let psi = log_amplitude(&state, &x).exp();
                let brute = brute_force_psi(&state, &x);
                assert!(
                    (psi - brute).norm() < 1e-10 * brute.norm(),
                    "psi mismatch at L={l} alpha={alpha} x={idx}: {psi} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn ln_2cosh_is_stable_for_large_arguments() {
        let z = Complex64::new(500.0, 1.3);
        let v = ln_2cosh(z);
        assert!(v.is_finite());
        // ln 2cosh(z) -> z for large positive Re z
        assert_relative_eq!(v.re, 500.0, max_relative = 1e-12);
        let zn = Complex64::new(-500.0, 1.3);
        let vn = ln_2cosh(zn);
        assert!(vn.is_finite());
        assert_relative_eq!(vn.re, 500.0, max_relative = 1e-12);
    }

    #[test]
    fn log_derivatives_zero_weights() {
        let s = init_parameters(3, 2, 5, 0.0);
        let x = SpinConfiguration::from_index(5, 3);
        let cache = ActivationCache::new(&s, x.clone());
        let o = log_derivatives(&s, &cache);
        assert_eq!(o.len(), s.n_params());
        for i in 0..3 {
            assert_eq!(o[i], Complex64::new(x.spin_f64(i), 0.0));
        }
        for v in &o[3..] {
            assert_eq!(*v, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let step = 1e-5;
        for (l, alpha, seed) in [(2, 1, 11), (3, 2, 12), (4, 2, 13)] {
            let state = random_state(l, alpha, seed, 0.3);
            let x = SpinConfiguration::from_index(seed as usize % (1 << l), l);
            let cache = ActivationCache::new(&state, x.clone());
            let o = log_derivatives(&state, &cache);
            for k in 0..state.n_params() {
                // real direction
                let mut plus = state.clone();
                *plus.param_mut(k) += Complex64::new(step, 0.0);
                let mut minus = state.clone();
                *minus.param_mut(k) -= Complex64::new(step, 0.0);
                let fd_re =
                    (log_amplitude(&plus, &x) - log_amplitude(&minus, &x)).unscale(2.0 * step);
                assert!(
                    (fd_re - o[k]).norm() < 1e-6 * o[k].norm().max(1.0),
                    "Re-direction gradient mismatch at k={k}: {fd_re} vs {}",
                    o[k]
                );
                // imaginary direction: d/d(Im) ln psi = i O_k for holomorphic psi
                let mut plus_i = state.clone();
                *plus_i.param_mut(k) += Complex64::new(0.0, step);
                let mut minus_i = state.clone();
                *minus_i.param_mut(k) -= Complex64::new(0.0, step);
                let fd_im =
                    (log_amplitude(&plus_i, &x) - log_amplitude(&minus_i, &x)).unscale(2.0 * step);
                let expected = Complex64::new(0.0, 1.0) * o[k];
                assert!(
                    (fd_im - expected).norm() < 1e-6 * expected.norm().max(1.0),
                    "Im-direction gradient mismatch at k={k}: {fd_im} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn a_derivatives_flip_with_global_spin_flip() {
        let state = random_state(4, 1, 3, 0.2);
        let x = SpinConfiguration::from_index(6, 4);
        let neg =
            SpinConfiguration::new(x.spins().iter().map(|s| -s).collect::<Vec<_>>()).unwrap();
        let o1 = log_derivatives(&state, &ActivationCache::new(&state, x));
        let o2 = log_derivatives(&state, &ActivationCache::new(&state, neg));
        for i in 0..4 {
            assert_eq!(o1[i], -o2[i]);
        }
    }

    #[test]
    fn amplitude_ratio_uniform_state_is_one() {
        let s = init_parameters(4, 2, 1, 0.0);
        let cache = ActivationCache::new(&s, SpinConfiguration::all_up(4));
        for i in 0..4 {
            let r = amplitude_ratio(&s, &cache, i);
            assert_relative_eq!(r.re, 1.0, max_relative = 1e-12);
            assert_relative_eq!(r.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplitude_ratio_matches_log_amplitude_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let l = rng.gen_range(2..=6);
            let alpha = rng.gen_range(1..=3);
            let state = random_state(l, alpha, 40 + trial, 0.5);
            let x = SpinConfiguration::from_index(rng.gen_range(0..1 << l), l);
            let cache = ActivationCache::new(&state, x.clone());
            let site = rng.gen_range(0..l);
            let mut flipped = x.clone();
            flipped.flip(site);
            let expected = (log_amplitude(&state, &flipped) - log_amplitude(&state, &x)).exp();
            let got = amplitude_ratio(&state, &cache, site);
            assert!(
                (got - expected).norm() < 1e-10 * expected.norm(),
                "ratio mismatch: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn double_flip_ratio_product_is_one() {
        let state = random_state(5, 2, 21, 0.4);
        let mut cache = ActivationCache::new(&state, SpinConfiguration::from_index(19, 5));
        for site in 0..5 {
            let r1 = amplitude_ratio(&state, &cache, site);
            apply_flip(&mut cache, &state, site);
            let r2 = amplitude_ratio(&state, &cache, site);
            apply_flip(&mut cache, &state, site);
            assert!(((r1 * r2) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn apply_flip_keeps_cache_consistent() {
        let state = random_state(6, 2, 33, 0.5);
        let mut cache = ActivationCache::new(&state, SpinConfiguration::from_index(44, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            apply_flip(&mut cache, &state, rng.gen_range(0..6));
            assert!(cache.freshness_error(&state) < 1e-10);
        }
    }

    #[test]
    fn double_flip_restores_cache() {
        let state = random_state(4, 2, 17, 0.5);
        let start = SpinConfiguration::from_index(9, 4);
        let mut cache = ActivationCache::new(&state, start.clone());
        let before = cache.clone();
        apply_flip(&mut cache, &state, 2);
        apply_flip(&mut cache, &state, 2);
        assert_eq!(cache.config(), &start);
        for j in 0..state.n_hidden() {
            assert!((cache.theta()[j] - before.theta()[j]).norm() < 1e-10);
        }
        assert!((cache.bias_dot() - before.bias_dot()).norm() < 1e-10);
    }

    #[test]
    fn flip_with_zero_weights_touches_only_bias_and_config() {
        let mut state = init_parameters(3, 1, 2, 0.0);
        *state.param_mut(0) = Complex64::new(0.3, 0.1);
        let mut cache = ActivationCache::new(&state, SpinConfiguration::all_up(3));
        let theta_before = cache.theta().to_vec();
        apply_flip(&mut cache, &state, 0);
        assert_eq!(cache.theta(), theta_before.as_slice());
        assert_eq!(cache.config().spins(), &[-1, 1, 1]);
        assert!((cache.bias_dot() - Complex64::new(-0.3, -0.1)).norm() < 1e-14);
    }

    #[test]
    fn cache_drift_stays_bounded_over_many_flips() {
        let state = random_state(8, 2, 55, 0.5);
        let mut cache = ActivationCache::new(&state, SpinConfiguration::all_up(8));
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..100_000 {
            apply_flip(&mut cache, &state, rng.gen_range(0..8));
        }
        assert!(
            cache.freshness_error(&state) < 1e-8,
            "cache drift {} exceeds bound",
            cache.freshness_error(&state)
        );
    }

    #[test]
    fn restricted_derivatives_match_full_slice() {
        let state = random_state(5, 2, 61, 0.3);
        let cache = ActivationCache::new(&state, SpinConfiguration::from_index(13, 5));
        let full = log_derivatives(&state, &cache);
        let sites = vec![1, 2];
        let restricted = log_derivatives_for_sites(&state, &cache, &sites);
        let l = 5;
        let mut expected = vec![full[1], full[2]];
        for j in 0..state.n_hidden() {
            expected.push(full[l + j * l + 1]);
            expected.push(full[l + j * l + 2]);
        }
        assert_eq!(restricted, expected);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let state = random_state(4, 3, 77, 0.7);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &state).unwrap();
        let restored = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(state, restored);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let mut bad = b"not a checkpoint".as_slice();
        assert!(read_checkpoint(&mut bad).is_err());
        let mut truncated = b"rbm-checkpoint v1\nL 2\nalpha 1\n0.0 0.0\n".as_slice();
        assert!(read_checkpoint(&mut truncated).is_err());
    }
}
