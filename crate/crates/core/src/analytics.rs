//! Closed-form quantities of the trap-code scheme: trap selection functions,
//! the simulator's acceptance indicator, decoding error, the permutation
//! placement probability and the security bound, plus the displacement twirl
//! factor with a Monte Carlo phase-average oracle.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cvgauss::{ComplexAmplitude, Permutation};
use crate::error::{Error, Result};

/// Default ratio demanded by the "much greater than" tuning conditions.
pub const DEFAULT_MARGIN: f64 = 5.0;

/// Scheme parameters `(n, z, t, r, eps, delta, Delta)`.
///
/// Hard invariants (`2z > n`, `2t + 1 <= n`, positivity) are enforced on
/// construction. The asymptotic tuning conditions `eps >> e^{-r/2}` and
/// `Delta >> 1` are reported by [`SchemeParams::tuning_violations`] so that
/// low-squeezing regimes can still be simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    n: usize,
    z: usize,
    t: usize,
    r: f64,
    eps: f64,
    delta: Option<f64>,
    qotp_std: f64,
    margin: f64,
}

impl SchemeParams {
    pub fn new(n: usize, z: usize, t: usize, r: f64, eps: f64) -> Result<Self> {
        let p = Self {
            n,
            z,
            t,
            r,
            eps,
            delta: None,
            qotp_std: default_qotp_std(eps),
            margin: DEFAULT_MARGIN,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn z(&self) -> usize {
        self.z
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    /// Message-noise threshold; `eps / sqrt(2)` unless overridden.
    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.eps / SQRT_2)
    }
    pub fn delta_is_default(&self) -> bool {
        self.delta.is_none()
    }
    /// Per-axis standard deviation `Delta` of the one-time-pad displacement.
    pub fn qotp_std(&self) -> f64 {
        self.qotp_std
    }
    pub fn margin(&self) -> f64 {
        self.margin
    }
    /// Total number of cipher modes, `n + 2z`.
    pub fn modes(&self) -> usize {
        self.n + 2 * self.z
    }
    /// Standard deviation `e^{-r/2}` of a trap's squeezed quadrature.
    pub fn trap_sigma(&self) -> f64 {
        (-self.r / 2.0).exp()
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        self.rebuild(|p| p.n = n)
    }
    pub fn with_z(&self, z: usize) -> Result<Self> {
        self.rebuild(|p| p.z = z)
    }
    pub fn with_t(&self, t: usize) -> Result<Self> {
        self.rebuild(|p| p.t = t)
    }
    pub fn with_r(&self, r: f64) -> Result<Self> {
        self.rebuild(|p| p.r = r)
    }
    /// Changes `eps`; a defaulted `delta` follows it.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        self.rebuild(|p| p.eps = eps)
    }
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        self.rebuild(|p| p.delta = Some(delta))
    }
    pub fn with_qotp_std(&self, qotp_std: f64) -> Result<Self> {
        self.rebuild(|p| p.qotp_std = qotp_std)
    }
    pub fn with_margin(&self, margin: f64) -> Result<Self> {
        self.rebuild(|p| p.margin = margin)
    }

    fn rebuild(&self, f: impl FnOnce(&mut Self)) -> Result<Self> {
        let mut p = self.clone();
        f(&mut p);
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n == 0 || self.z == 0 {
            return bad(format!("n = {} and z = {} must be positive", self.n, self.z));
        }
        if 2 * self.z <= self.n {
            return bad(format!("need 2z > n, got n = {}, z = {}", self.n, self.z));
        }
        if 2 * self.t + 1 > self.n {
            return bad(format!("need t <= (n-1)/2, got n = {}, t = {}", self.n, self.t));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return bad(format!("r = {} must be finite and >= 0", self.r));
        }
        for (name, v) in [
            ("eps", self.eps),
            ("delta", self.delta()),
            ("Delta", self.qotp_std),
            ("margin", self.margin),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Tuning conditions that do not hold for these parameters.
    pub fn tuning_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ratio = self.eps / self.trap_sigma();
        if ratio < self.margin {
            out.push(format!(
                "eps / e^(-r/2) = {ratio:.4} is below the margin {}",
                self.margin
            ));
        }
        if self.qotp_std < 10.0 * self.eps {
            out.push(format!(
                "Delta = {} is below 10 * eps = {}",
                self.qotp_std,
                10.0 * self.eps
            ));
        }
        out
    }

    pub fn is_well_tuned(&self) -> bool {
        self.tuning_violations().is_empty()
    }
}

fn default_qotp_std(eps: f64) -> f64 {
    10.0 * eps.max(1.0)
}

/// Displacement vector over the `n + 2z` modes. In the unpermuted layout the
/// entries are `[msg_0..msg_{n-1}, X_0..X_{z-1}, P_0..P_{z-1}]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisplacementVector(Vec<ComplexAmplitude>);

impl DisplacementVector {
    pub fn new(entries: Vec<ComplexAmplitude>) -> Result<Self> {
        if entries.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::NonFinite("displacement vector"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[ComplexAmplitude] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<ComplexAmplitude> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|a| a.re == 0.0 && a.im == 0.0)
    }

    /// Splits into (message, X-trap, P-trap) parts.
    pub fn layout(&self, n: usize, z: usize) -> Result<Layout<'_>> {
        if self.0.len() != n + 2 * z {
            return Err(Error::LengthMismatch {
                expected: n + 2 * z,
                got: self.0.len(),
            });
        }
        let (msg, traps) = self.0.split_at(n);
        let (x_traps, p_traps) = traps.split_at(z);
        Ok(Layout {
            msg,
            x_traps,
            p_traps,
        })
    }

    /// `pi^{-1} alpha`: the vector seen by the unpermuted layout when
    /// `self` is applied to the permuted wires.
    pub fn unpermuted(&self, perm: &Permutation) -> Result<Self> {
        Ok(Self(perm.apply_inverse(&self.0)?))
    }

    /// Inverse of [`DisplacementVector::unpermuted`].
    pub fn permuted(&self, perm: &Permutation) -> Result<Self> {
        Ok(Self(perm.apply(&self.0)?))
    }
}

impl From<DisplacementVector> for Vec<ComplexAmplitude> {
    fn from(v: DisplacementVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Layout<'a> {
    pub msg: &'a [ComplexAmplitude],
    pub x_traps: &'a [ComplexAmplitude],
    pub p_traps: &'a [ComplexAmplitude],
}

/// Probability that `x ~ N(sqrt(2) * shift, e^{-r})` falls in `[-eps, eps]`.
fn window_probability(shift: f64, r: f64, eps: f64) -> f64 {
    let scale = (r / 2.0).exp() / SQRT_2;
    0.5 * libm::erf(scale * (eps + SQRT_2 * shift)) + 0.5 * libm::erf(scale * (eps - SQRT_2 * shift))
}

/// Pass probability of an x-trap displaced by `beta`.
pub fn g1(beta: ComplexAmplitude, r: f64, eps: f64) -> f64 {
    window_probability(beta.re, r, eps)
}

/// Pass probability of a p-trap displaced by `beta`.
pub fn g2(beta: ComplexAmplitude, r: f64, eps: f64) -> f64 {
    window_probability(beta.im, r, eps)
}

/// Overall trap selection function `G(pi, alpha)` for a wire-order attack
/// vector `alpha`.
pub fn big_g(perm: &Permutation, alpha: &DisplacementVector, params: &SchemeParams) -> Result<f64> {
    let v = alpha.unpermuted(perm)?;
    let lay = v.layout(params.n(), params.z())?;
    let (r, eps) = (params.r(), params.eps());
    let gx: f64 = lay.x_traps.iter().map(|&b| g1(b, r, eps)).product();
    let gp: f64 = lay.p_traps.iter().map(|&b| g2(b, r, eps)).product();
    Ok(gx * gp)
}

/// `w_delta(u) = #{ j : |u_j| > delta }`.
pub fn hamming_weight_delta(u: &[ComplexAmplitude], delta: f64) -> usize {
    u.iter().filter(|a| a.norm() > delta).count()
}

/// Whether an unpermuted-layout displacement lies in the simulator's
/// acceptance set: correctable message noise and every trap's measured
/// component within `eps / sqrt(2)`.
pub fn in_acceptance_set(layout_vec: &DisplacementVector, params: &SchemeParams) -> Result<bool> {
    let lay = layout_vec.layout(params.n(), params.z())?;
    let bound = params.eps() / SQRT_2;
    Ok(hamming_weight_delta(lay.msg, params.delta()) <= params.t()
        && lay.x_traps.iter().all(|g| g.re.abs() <= bound)
        && lay.p_traps.iter().all(|p| p.im.abs() <= bound))
}

/// Indicator `I(pi^{-1} alpha in D_F)` for a wire-order attack vector.
pub fn indicator_i(
    perm: &Permutation,
    alpha: &DisplacementVector,
    params: &SchemeParams,
) -> Result<bool> {
    in_acceptance_set(&alpha.unpermuted(perm)?, params)
}

/// Probability that a single undisturbed trap passes verification.
pub fn clean_trap_pass(params: &SchemeParams) -> f64 {
    libm::erf(params.eps() / (params.trap_sigma() * SQRT_2))
}

/// Rejection probability `1 - pass^{2z}` given a single-trap pass probability.
pub fn rejection_from_pass(pass: f64, z: usize) -> f64 {
    1.0 - pass.powi(2 * z as i32)
}

/// Decoding error: probability that an untouched ciphertext is rejected.
pub fn eps_dec(params: &SchemeParams) -> f64 {
    rejection_from_pass(clean_trap_pass(params), params.z())
}

/// Probability that a uniformly random permutation of `n + 2z` modes places
/// `u` marked modes all inside the `n` message slots. Zero for `u > n`.
pub fn p_exact(u: usize, n: usize, z: usize) -> f64 {
    if u > n {
        return 0.0;
    }
    (0..u)
        .map(|j| (n - j) as f64 / (n + 2 * z - j) as f64)
        .product()
}

/// Exact rational form of [`p_exact`].
pub fn p_exact_ratio(u: usize, n: usize, z: usize) -> Ratio<u128> {
    if u > n {
        return Ratio::from_integer(0);
    }
    (0..u).fold(Ratio::from_integer(1), |acc, j| {
        acc * Ratio::new((n - j) as u128, (n + 2 * z - j) as u128)
    })
}

/// Security parameter `eta = (n / (n + 2z))^{t+1}`.
pub fn eta_bound(n: usize, z: usize, t: usize) -> Result<f64> {
    if n == 0 || 2 * z <= n {
        return Err(Error::InvalidParams(format!(
            "eta bound needs n >= 1 and 2z > n, got n = {n}, z = {z}"
        )));
    }
    Ok((n as f64 / (n + 2 * z) as f64).powi(t as i32 + 1))
}

/// Exact rational form of [`eta_bound`].
pub fn eta_bound_ratio(n: usize, z: usize, t: usize) -> Result<Ratio<u128>> {
    eta_bound(n, z, t)?;
    Ok(Ratio::new(n as u128, (n + 2 * z) as u128).pow(t as i32 + 1))
}

/// Gaussian factor `exp(-2 Delta^2 |beta - beta'|^2)` of the displacement twirl.
pub fn twirl_factor(beta: ComplexAmplitude, beta_p: ComplexAmplitude, qotp_std: f64) -> f64 {
    (-2.0 * qotp_std * qotp_std * (beta - beta_p).norm_sqr()).exp()
}

/// Running sums of twirl phase samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwirlEstimate {
    pub samples: u64,
    pub sum: Complex64,
    pub sum_sq_re: f64,
    pub sum_sq_im: f64,
}

impl TwirlEstimate {
    pub fn mean(&self) -> Complex64 {
        self.sum / self.samples as f64
    }

    fn stderr_of(&self, sum: f64, sum_sq: f64) -> f64 {
        let n = self.samples as f64;
        let m = sum / n;
        ((sum_sq / n - m * m).max(0.0) / n).sqrt()
    }

    pub fn stderr_re(&self) -> f64 {
        self.stderr_of(self.sum.re, self.sum_sq_re)
    }

    pub fn stderr_im(&self) -> f64 {
        self.stderr_of(self.sum.im, self.sum_sq_im)
    }

    pub fn merge(self, other: TwirlEstimate) -> TwirlEstimate {
        TwirlEstimate {
            samples: self.samples + other.samples,
            sum: self.sum + other.sum,
            sum_sq_re: self.sum_sq_re + other.sum_sq_re,
            sum_sq_im: self.sum_sq_im + other.sum_sq_im,
        }
    }
}

/// Averages the conjugation phase `exp(g (conj b' - conj b) - conj g (b' - b))`
/// over pad displacements `g` with independent `N(0, Delta^2)` real and
/// imaginary parts.
pub fn twirl_mc_oracle<R: Rng + ?Sized>(
    beta: ComplexAmplitude,
    beta_p: ComplexAmplitude,
    qotp_std: f64,
    samples: u64,
    rng: &mut R,
) -> TwirlEstimate {
    assert!(samples >= 1, "twirl oracle needs at least one sample");
    let normal = Normal::new(0.0, qotp_std).expect("Delta must be finite and positive");
    let d = beta_p - beta;
    let mut est = TwirlEstimate::default();
    for _ in 0..samples {
        let gamma = Complex64::new(normal.sample(rng), normal.sample(rng));
        let phase = (gamma * d.conj() - gamma.conj() * d).exp();
        est.samples += 1;
        est.sum += phase;
        est.sum_sq_re += phase.re * phase.re;
        est.sum_sq_im += phase.im * phase.im;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvgauss::{squeezed_p, squeezed_x, Quadrature};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> ComplexAmplitude {
        Complex64::new(re, im)
    }

    // Composite Simpson rule on the displaced trap density; independent of erf.
    fn window_by_quadrature(shift: f64, r: f64, eps: f64) -> f64 {
        let var = (-r).exp();
        let mu = SQRT_2 * shift;
        let f = |x: f64| (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let k = 4000;
        let h = 2.0 * eps / k as f64;
        let mut s = f(-eps) + f(eps);
        for i in 1..k {
            let x = -eps + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn g1_depends_on_real_part_only() {
        let want = libm::erf((1.0f64).exp() * 0.2 / SQRT_2);
        for y in [-3.0, 0.0, 0.4, 17.0] {
            assert!((g1(c(0.0, y), 2.0, 0.2) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn g1_reference_value() {
        // Erf(e * 0.2 / sqrt 2) evaluated to 30 digits.
        assert!((g1(c(0.0, 0.0), 2.0, 0.2) - 0.413322035684082).abs() < 1e-14);
        assert!(g1(c(5.0, 0.0), 8.0, 0.5) < 1e-12);
    }

    #[test]
    fn selection_functions_match_quadrature() {
        for &(r, eps) in &[(2.0, 0.2), (4.0, 0.5), (8.0, 0.5)] {
            for &s in &[0.0, 0.05, -0.1, 0.2, 0.354, 0.5, -0.8] {
                let q = window_by_quadrature(s, r, eps);
                assert!((g1(c(s, 9.0), r, eps) - q).abs() < 1e-9, "r={r} eps={eps} s={s}");
                assert!((g2(c(-4.0, s), r, eps) - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn g2_is_g1_rotated() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let b = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (r, eps) = (rng.random_range(0.0..8.0), rng.random_range(0.05..1.0));
            assert_eq!(g2(b, r, eps), g1(c(0.0, -1.0) * b, r, eps));
        }
        assert!((g2(c(0.0, 0.0), 2.0, 0.2) - 0.413322035684082).abs() < 1e-14);
    }

    #[test]
    fn simulated_trap_pass_matches_selection_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (r, eps) = (4.0, 0.5);
        for &s in &[0.0, 0.3, 0.354, 0.4] {
            let beta = c(s, s);
            let sx = squeezed_x(r).displace(0, beta).unwrap();
            let sp = squeezed_p(r).displace(0, beta).unwrap();
            let n = 100_000;
            let mut hits = [0usize; 2];
            for _ in 0..n {
                let (x, _) = sx.homodyne(0, Quadrature::X, &mut rng).unwrap();
                let (p, _) = sp.homodyne(0, Quadrature::P, &mut rng).unwrap();
                hits[0] += (x.outcome.abs() <= eps) as usize;
                hits[1] += (p.outcome.abs() <= eps) as usize;
            }
            assert!((hits[0] as f64 / n as f64 - g1(beta, r, eps)).abs() < 0.01);
            assert!((hits[1] as f64 / n as f64 - g2(beta, r, eps)).abs() < 0.01);
        }
    }

    #[test]
    fn g1_even_and_monotone_on_grid() {
        for &(r, eps) in &[(2.0, 0.2), (4.0, 0.5), (8.0, 0.5), (0.0, 1.0)] {
            let mut prev = f64::INFINITY;
            for i in 0..1000 {
                let s = i as f64 * 2.0 / 1000.0;
                let v = g1(c(s, 0.0), r, eps);
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, g1(c(-s, 0.0), r, eps));
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    fn params_332() -> SchemeParams {
        SchemeParams::new(3, 2, 1, 8.0, 0.5).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(3, 1, 1, 8.0, 0.5).is_err());
        assert!(SchemeParams::new(3, 2, 2, 8.0, 0.5).is_err());
        assert!(SchemeParams::new(0, 2, 0, 8.0, 0.5).is_err());
        assert!(SchemeParams::new(3, 2, 1, -1.0, 0.5).is_err());
        assert!(SchemeParams::new(3, 2, 1, 8.0, 0.0).is_err());
        let p = params_332();
        assert!((p.delta() - 0.5 / SQRT_2).abs() < 1e-16);
        assert!(p.is_well_tuned());
        let low = SchemeParams::new(3, 2, 1, 2.0, 0.2).unwrap();
        assert_eq!(low.tuning_violations().len(), 1);
        assert!(low.with_margin(0.5).unwrap().is_well_tuned());
        let p2 = p.with_eps(0.25).unwrap();
        assert!((p2.delta() - 0.25 / SQRT_2).abs() < 1e-16);
        let p3 = p.with_delta(0.1).unwrap().with_eps(0.25).unwrap();
        assert_eq!(p3.delta(), 0.1);
        assert!(!p.with_qotp_std(1.0).unwrap().is_well_tuned());
    }

    #[test]
    fn big_g_cases() {
        let p = params_332();
        let id = Permutation::identity(7);
        let clean = clean_trap_pass(&p).powi(4);
        assert_eq!(big_g(&id, &DisplacementVector::zeros(7), &p).unwrap(), clean);

        let low = SchemeParams::new(3, 2, 1, 2.0, 0.2).unwrap();
        let g0 = big_g(&id, &DisplacementVector::zeros(7), &low).unwrap();
        assert!((g0 - 0.413322035684082f64.powi(4)).abs() < 1e-14);

        let perm = Permutation::new(vec![4, 2, 6, 0, 1, 3, 5]).unwrap();
        // layout slot 3 (first X trap) sits on wire perm(3) = 0
        let mut hot = vec![c(0.0, 0.0); 7];
        hot[0] = c(5.0, 0.0);
        let hot = DisplacementVector::new(hot).unwrap();
        assert!(big_g(&perm, &hot, &p).unwrap() < 1e-12);

        // message slots 0..2 sit on wires 4, 2, 6
        let mut msg = vec![c(0.0, 0.0); 7];
        for w in [4, 2, 6] {
            msg[w] = c(3.0, -2.0);
        }
        let msg = DisplacementVector::new(msg).unwrap();
        assert_eq!(big_g(&perm, &msg, &p).unwrap(), clean);
        assert!(big_g(&perm, &DisplacementVector::zeros(6), &p).is_err());
    }

    #[test]
    fn hamming_weight_counts_strictly() {
        let eps = 0.5;
        let delta = eps / SQRT_2;
        assert_eq!(hamming_weight_delta(&[c(0.0, 0.0); 4], delta), 0);
        assert_eq!(
            hamming_weight_delta(&[c(10.0 * eps, 0.0), c(0.0, 0.0), c(0.0, 10.0 * eps)], delta),
            2
        );
        assert_eq!(hamming_weight_delta(&[c(0.25, 0.0)], 0.25), 0);
        assert_eq!(hamming_weight_delta(&[c(0.25000001, 0.0)], 0.25), 1);
    }

    #[test]
    fn indicator_table_rows() {
        let p = params_332();
        let id = Permutation::identity(7);
        let zero = DisplacementVector::zeros(7);
        assert!(indicator_i(&id, &zero, &p).unwrap());

        let mut v = vec![c(0.0, 0.0); 7];
        v[0] = c(5.0, 0.0);
        v[1] = c(5.0, 0.0);
        let v = DisplacementVector::new(v).unwrap();
        assert!(!indicator_i(&id, &v, &p).unwrap());
        assert!(big_g(&id, &v, &p).unwrap() > 1.0 - 1e-12);

        let mut w = vec![c(0.0, 0.0); 7];
        w[3] = c(5.0, 0.0);
        let w = DisplacementVector::new(w).unwrap();
        assert!(!indicator_i(&id, &w, &p).unwrap());
        assert!(big_g(&id, &w, &p).unwrap() < 1e-12);

        // P traps only look at the imaginary part
        let mut y = vec![c(0.0, 0.0); 7];
        y[5] = c(5.0, 0.0);
        assert!(indicator_i(&id, &DisplacementVector::new(y).unwrap(), &p).unwrap());
    }

    #[test]
    fn eps_dec_values() {
        assert!((rejection_from_pass(0.9, 2) - 0.3439).abs() < 1e-15);
        let p = SchemeParams::new(3, 2, 1, 2.0, 0.2).unwrap();
        assert!((eps_dec(&p) - 0.970815366837443).abs() < 1e-13);
        let sharp = SchemeParams::new(3, 2, 1, 60.0, 0.2).unwrap();
        assert_eq!(eps_dec(&sharp), 0.0);
    }

    fn for_each_permutation(items: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            f(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            for_each_permutation(items, k + 1, f);
            items.swap(k, i);
        }
    }

    /// Fraction of permutations of `n + 2z` wires sending wires `0..u` into
    /// message slots `0..n`, as (hits, total).
    fn brute_force_placement(u: usize, n: usize, z: usize) -> (u128, u128) {
        let m = n + 2 * z;
        let mut items: Vec<usize> = (0..m).collect();
        let (mut hits, mut total) = (0u128, 0u128);
        for_each_permutation(&mut items, 0, &mut |perm: &[usize]| {
            total += 1;
            if perm[..u].iter().all(|&slot| slot < n) {
                hits += 1;
            }
        });
        (hits, total)
    }

    #[test]
    fn p_exact_examples() {
        assert_eq!(p_exact(0, 3, 2), 1.0);
        assert!((p_exact(1, 3, 2) - 3.0 / 7.0).abs() < 1e-15);
        assert!((p_exact(3, 3, 2) - 1.0 / 35.0).abs() < 1e-15);
        assert_eq!(p_exact_ratio(3, 3, 2), Ratio::new(1, 35));
        assert_eq!(brute_force_placement(3, 3, 2), (144, 5040));
        assert_eq!(p_exact(4, 3, 2), 0.0);
        assert_eq!(p_exact_ratio(4, 3, 2), Ratio::from_integer(0));
    }

    #[test]
    fn p_exact_matches_enumeration_small() {
        for n in 1..=6 {
            for z in 1..=3 {
                if n + 2 * z > 8 {
                    continue;
                }
                for u in 0..=n + 2 * z {
                    let (h, tot) = brute_force_placement(u, n, z);
                    assert_eq!(p_exact_ratio(u, n, z), Ratio::new(h, tot), "n={n} z={z} u={u}");
                }
            }
        }
    }

    #[test]
    fn p_exact_decreases() {
        for n in 1..=12 {
            for z in 1..=10 {
                for u in 0..n {
                    assert!(p_exact(u + 1, n, z) < p_exact(u, n, z));
                }
            }
        }
    }

    #[test]
    fn eta_bound_examples() {
        assert!((eta_bound(3, 2, 1).unwrap() - 9.0 / 49.0).abs() < 1e-15);
        assert_eq!(eta_bound_ratio(3, 2, 1).unwrap(), Ratio::new(9, 49));
        assert!((eta_bound(5, 3, 0).unwrap() - 5.0 / 11.0).abs() < 1e-15);
        assert!(eta_bound(4, 2, 1).is_err());
        // the j = 0 factor is tight, so t = 0 gives equality; every further factor is strict
        for n in 1..=12 {
            for z in (n / 2 + 1)..=(n + 6) {
                assert_eq!(p_exact_ratio(1, n, z), eta_bound_ratio(n, z, 0).unwrap());
                for t in 1..=(n - 1) / 2 {
                    assert!(p_exact_ratio(t + 1, n, z) < eta_bound_ratio(n, z, t).unwrap());
                }
            }
        }
    }

    #[test]
    fn twirl_factor_values() {
        let b = c(0.7, -0.2);
        assert_eq!(twirl_factor(b, b, 3.0), 1.0);
        assert!((twirl_factor(c(0.3, 0.0), c(0.0, 0.0), 1.0) - 0.835270211411272).abs() < 1e-14);
        let tiny = twirl_factor(c(0.0, 0.3), c(0.0, 0.0), 10.0);
        assert!((tiny - 1.52299797447126e-8).abs() < 1e-20);
    }

    #[test]
    fn twirl_oracle_diagonal_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = c(1.5, -0.5);
        let est = twirl_mc_oracle(b, b, 4.0, 1000, &mut rng);
        assert_eq!(est.mean(), c(1.0, 0.0));
        assert_eq!(est.stderr_re(), 0.0);
    }

    #[test]
    fn twirl_oracle_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let est = twirl_mc_oracle(c(0.3, 0.0), c(0.0, 0.0), 1.0, n, &mut rng);
        let tol = 4.0 / (n as f64).sqrt();
        assert!((est.mean().re - 0.835270211411272).abs() < tol);
        assert!(est.mean().im.abs() < tol);
    }

    #[test]
    fn twirl_oracle_swap_conjugates() {
        let (b, bp) = (c(0.2, 0.1), c(-0.1, 0.3));
        let e1 = twirl_mc_oracle(b, bp, 1.0, 5000, &mut ChaCha8Rng::seed_from_u64(3));
        let e2 = twirl_mc_oracle(bp, b, 1.0, 5000, &mut ChaCha8Rng::seed_from_u64(3));
        assert!((e1.mean() - e2.mean().conj()).norm() < 1e-12);
    }

    #[test]
    fn twirl_estimates_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = twirl_mc_oracle(c(0.1, 0.0), c(0.0, 0.0), 1.0, 10, &mut rng);
        let b = twirl_mc_oracle(c(0.1, 0.0), c(0.0, 0.0), 1.0, 30, &mut rng);
        let m = a.merge(b);
        assert_eq!(m.samples, 40);
        assert!((m.mean() - (a.sum + b.sum) / 40.0).norm() < 1e-15);
    }

    // Each component is either light (inside every threshold by 5 trap sigmas)
    // or heavy (outside every threshold by 5 trap sigmas).
    fn margin_entry(heavy: bool, a: f64, b: f64, sa: bool, sb: bool) -> ComplexAmplitude {
        let p = params_332();
        let (lo, hi) = if heavy {
            ((p.eps() + 5.0 * p.trap_sigma()) / SQRT_2, 3.0)
        } else {
            (0.0, 0.999 * (p.eps() - 5.0 * p.trap_sigma()) / SQRT_2 / SQRT_2)
        };
        let x = lo + a * (hi - lo);
        let y = lo + b * (hi - lo);
        c(if sa { x } else { -x }, if sb { y } else { -y })
    }

    proptest! {
        #[test]
        fn g_dominates_indicator_in_margin_regime(
            raw in prop::collection::vec(
                (prop::bool::ANY, 0.0f64..1.0, 0.0f64..1.0, prop::bool::ANY, prop::bool::ANY),
                7,
            ),
            seed in 0u64..1000,
        ) {
            let p = params_332();
            let entries: Vec<ComplexAmplitude> = raw
                .iter()
                .map(|&(heavy, a, b, sa, sb)| margin_entry(heavy, a, b, sa, sb))
                .collect();
            let alpha = DisplacementVector::new(entries).unwrap();
            let mut forward: Vec<usize> = (0..7).collect();
            forward.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let perm = Permutation::new(forward).unwrap();
            let g = big_g(&perm, &alpha, &p).unwrap();
            let i = indicator_i(&perm, &alpha, &p).unwrap() as u8 as f64;
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!(g - i >= -1e-9);
        }
    }
}
