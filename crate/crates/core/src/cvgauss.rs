//! Multimode Gaussian states in the moment (mean, covariance) representation.
//!
//! Quadratures are ordered `(x_1, p_1, ..., x_m, p_m)`. The convention puts the
//! vacuum quadrature variance at 1, so a coherent state `|z>` has mean
//! `sqrt(2) * (Re z, Im z)` and an x-homodyne on a displaced squeezed trap
//! `D(b)|X>` is distributed as `N(sqrt(2) Re b, e^{-r})`.
//!
//! Global phases of displacement products are not tracked here; they never
//! reach measurement statistics. The phase algebra lives in [`crate::analytics`].

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ComplexAmplitude = Complex64;

/// Smallest eigenvalue accepted by [`GaussianState::new`].
pub const PSD_TOLERANCE: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneRecord {
    /// Mode index in the state that was measured (before removal).
    pub mode_index: usize,
    pub quadrature: Quadrature,
    pub outcome: f64,
}

/// A permutation of `0..m`, stored as its forward map `i -> perm[i]`.
///
/// Applied to modes, input mode `i` lands on output position `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; forward.len()];
        for &j in &forward {
            if j >= forward.len() {
                return Err(Error::InvalidPermutation(format!(
                    "image {j} out of range 0..{}",
                    forward.len()
                )));
            }
            if seen[j] {
                return Err(Error::InvalidPermutation(format!("image {j} repeated")));
            }
            seen[j] = true;
        }
        Ok(Self { forward })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            forward: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.forward[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.forward.len()];
        for (i, &j) in self.forward.iter().enumerate() {
            inv[j] = i;
        }
        Self { forward: inv }
    }

    /// `self ∘ other`, i.e. `i -> self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        self.check_len(other.len())?;
        Ok(Self {
            forward: other.forward.iter().map(|&j| self.forward[j]).collect(),
        })
    }

    /// Moves entries along with their modes: `out[perm[i]] = v[i]`.
    pub fn apply<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        let inv = self.inverse();
        Ok(inv.forward.iter().map(|&i| v[i].clone()).collect())
    }

    /// Pulls entries back through the permutation: `out[i] = v[perm[i]]`.
    pub fn apply_inverse<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        Ok(self.forward.iter().map(|&j| v[j].clone()).collect())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.forward.len() {
            return Err(Error::LengthMismatch {
                expected: self.forward.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Gaussian state over `modes()` bosonic modes.
///
/// Values are immutable; every operation returns a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Validated constructor: symmetrizes `cov` and rejects non-finite or
    /// non-PSD input.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !mean.len().is_multiple_of(2) {
            return Err(Error::LengthMismatch {
                expected: mean.len() + 1,
                got: mean.len(),
            });
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::LengthMismatch {
                expected: mean.len(),
                got: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean vector"));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let state = Self { mean, cov };
        let min_eig = state.min_eigenvalue();
        if min_eig < PSD_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite(min_eig));
        }
        Ok(state)
    }

    fn from_parts(mean: Vec<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(mean.len(), cov.nrows());
        Self { mean, cov }
    }

    pub fn vacuum(modes: usize) -> Self {
        Self::from_parts(vec![0.0; 2 * modes], DMatrix::identity(2 * modes, 2 * modes))
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Complex label `(x + i p) / sqrt(2)` of a mode's mean.
    pub fn amplitude(&self, mode: usize) -> Result<ComplexAmplitude> {
        self.check_mode(mode)?;
        Ok(Complex64::new(self.mean[2 * mode], self.mean[2 * mode + 1]) / SQRT_2)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.cov.nrows() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.cov.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn displace(&self, mode: usize, beta: ComplexAmplitude) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = self.clone();
        out.mean[2 * mode] += SQRT_2 * beta.re;
        out.mean[2 * mode + 1] += SQRT_2 * beta.im;
        Ok(out)
    }

    pub fn displace_all(&self, alpha: &[ComplexAmplitude]) -> Result<Self> {
        if alpha.len() != self.modes() {
            return Err(Error::LengthMismatch {
                expected: self.modes(),
                got: alpha.len(),
            });
        }
        let mut out = self.clone();
        for (k, a) in alpha.iter().enumerate() {
            out.mean[2 * k] += SQRT_2 * a.re;
            out.mean[2 * k + 1] += SQRT_2 * a.im;
        }
        Ok(out)
    }

    /// Output mode `perm[i]` carries input mode `i`.
    pub fn permute_modes(&self, perm: &Permutation) -> Result<Self> {
        if perm.len() != self.modes() {
            return Err(Error::InvalidPermutation(format!(
                "length {} for a {}-mode state",
                perm.len(),
                self.modes()
            )));
        }
        let dim = self.mean.len();
        let target = |q: usize| 2 * perm.image(q / 2) + q % 2;
        let mut mean = vec![0.0; dim];
        let mut cov = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let ta = target(a);
            mean[ta] = self.mean[a];
            for b in 0..dim {
                cov[(ta, target(b))] = self.cov[(a, b)];
            }
        }
        Ok(Self::from_parts(mean, cov))
    }

    /// Mean and variance of one quadrature.
    pub fn marginal(&self, mode: usize, quadrature: Quadrature) -> Result<(f64, f64)> {
        self.check_mode(mode)?;
        let q = 2 * mode + quadrature.offset();
        Ok((self.mean[q], self.cov[(q, q)]))
    }

    /// Posterior after observing `outcome` on one quadrature; the measured
    /// mode is removed.
    pub fn condition(&self, mode: usize, quadrature: Quadrature, outcome: f64) -> Result<Self> {
        let (mu_q, var) = self.marginal(mode, quadrature)?;
        if var.is_nan() || var <= 0.0 {
            return Err(Error::DegenerateVariance(var));
        }
        let q = 2 * mode + quadrature.offset();
        let keep: Vec<usize> = (0..self.mean.len())
            .filter(|&i| i / 2 != mode)
            .collect();
        let shift = (outcome - mu_q) / var;
        let mean = keep
            .iter()
            .map(|&i| self.mean[i] + self.cov[(i, q)] * shift)
            .collect();
        let dim = keep.len();
        let cov = DMatrix::from_fn(dim, dim, |a, b| {
            let (i, j) = (keep[a], keep[b]);
            self.cov[(i, j)] - self.cov[(i, q)] * self.cov[(q, j)] / var
        });
        Ok(Self::from_parts(mean, cov))
    }

    /// Samples a homodyne outcome from the quadrature marginal and returns it
    /// with the conditioned state of the remaining modes.
    pub fn homodyne<R: Rng + ?Sized>(
        &self,
        mode: usize,
        quadrature: Quadrature,
        rng: &mut R,
    ) -> Result<(HomodyneRecord, Self)> {
        let (mu, var) = self.marginal(mode, quadrature)?;
        if var.is_nan() || var <= 0.0 {
            return Err(Error::DegenerateVariance(var));
        }
        let z: f64 = rng.sample(StandardNormal);
        let outcome = mu + var.sqrt() * z;
        let posterior = self.condition(mode, quadrature, outcome)?;
        Ok((
            HomodyneRecord {
                mode_index: mode,
                quadrature,
                outcome,
            },
            posterior,
        ))
    }

    /// Keeps only the leading `count` modes (partial trace over the rest).
    pub fn leading_modes(&self, count: usize) -> Result<Self> {
        if count > self.modes() {
            return Err(Error::ModeOutOfRange {
                mode: count,
                modes: self.modes(),
            });
        }
        let dim = 2 * count;
        Ok(Self::from_parts(
            self.mean[..dim].to_vec(),
            self.cov.view((0, 0), (dim, dim)).into_owned(),
        ))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes() {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.modes(),
            });
        }
        Ok(())
    }
}

fn diagonal(entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(entries))
}

/// `|X>`: x-variance `e^{-r}`, p-variance `e^{r}`.
pub fn squeezed_x(r: f64) -> GaussianState {
    assert!(r.is_finite(), "squeezing parameter must be finite");
    GaussianState::from_parts(
        vec![0.0, 0.0],
        diagonal(&[(-r).exp(), r.exp()]),
    )
}

/// `|P>`: p-variance `e^{-r}`, x-variance `e^{r}`.
pub fn squeezed_p(r: f64) -> GaussianState {
    assert!(r.is_finite(), "squeezing parameter must be finite");
    GaussianState::from_parts(
        vec![0.0, 0.0],
        diagonal(&[r.exp(), (-r).exp()]),
    )
}

pub fn coherent(z: ComplexAmplitude) -> GaussianState {
    GaussianState::from_parts(vec![SQRT_2 * z.re, SQRT_2 * z.im], DMatrix::identity(2, 2))
}

/// `a ⊗ b` with `a`'s modes first.
pub fn tensor(a: &GaussianState, b: &GaussianState) -> GaussianState {
    tensor_all([a, b])
}

pub fn tensor_all<'a, I>(states: I) -> GaussianState
where
    I: IntoIterator<Item = &'a GaussianState>,
{
    let states: Vec<&GaussianState> = states.into_iter().collect();
    let dim: usize = states.iter().map(|s| s.mean.len()).sum();
    let mut mean = Vec::with_capacity(dim);
    let mut cov = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for s in states {
        let d = s.mean.len();
        mean.extend_from_slice(&s.mean);
        cov.view_mut((offset, offset), (d, d)).copy_from(&s.cov);
        offset += d;
    }
    GaussianState::from_parts(mean, cov)
}
