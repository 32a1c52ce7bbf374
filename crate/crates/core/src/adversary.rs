//! Displacement-mixture attacks on the cipher wires.
//!
//! An [`AttackSpec`] is a finite mixture: branch `j` is drawn with
//! probability `weight_j` and displaces the wires by `alpha_j`.
//!
//! # Text format
//!
//! One branch per line: a weight followed by `m` complex entries written as
//! `re im` pairs, all whitespace-separated decimals. `#` starts a comment
//! that runs to the end of the line; blank lines are ignored. Every branch
//! must have the same `m`.
//!
//! ```text
//! # 50/50 mixture on 3 wires
//! 0.5  0 0   0 0   0 0
//! 0.5  5 5   0 0   0 0
//! ```

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

use crate::analytics::DisplacementVector;
use crate::cvgauss::ComplexAmplitude;
use crate::error::{Error, Result};

/// Tolerance on the total branch weight.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackBranch {
    pub weight: f64,
    pub alpha: DisplacementVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    modes: usize,
    branches: Vec<AttackBranch>,
}

impl AttackSpec {
    pub fn new(modes: usize, branches: Vec<AttackBranch>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::MalformedAttack("attack must act on at least one mode".into()));
        }
        if branches.is_empty() {
            return Err(Error::MalformedAttack("attack has no branches".into()));
        }
        let mut total = 0.0;
        for (j, b) in branches.iter().enumerate() {
            if !(b.weight.is_finite() && b.weight >= 0.0) {
                return Err(Error::MalformedAttack(format!("branch {j} has weight {}", b.weight)));
            }
            if b.alpha.len() != modes {
                return Err(Error::MalformedAttack(format!(
                    "branch {j} has {} entries, expected {modes}",
                    b.alpha.len()
                )));
            }
            total += b.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::MalformedAttack(format!("weights sum to {total}")));
        }
        Ok(Self { modes, branches })
    }

    /// Deterministic attack with a single branch.
    pub fn single(alpha: DisplacementVector) -> Result<Self> {
        Self::new(alpha.len(), vec![AttackBranch { weight: 1.0, alpha }])
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn branches(&self) -> &[AttackBranch] {
        &self.branches
    }

    pub fn is_identity(&self) -> bool {
        self.branches.iter().all(|b| b.weight == 0.0 || b.alpha.is_zero())
    }

    /// Draws a branch. Always consumes exactly one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DisplacementVector {
        self.branches[self.sample_index(rng)].alpha.clone()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, b) in self.branches.iter().enumerate() {
            acc += b.weight;
            if u < acc {
                return j;
            }
        }
        // rounding left u above the cumulative sum: take the last live branch
        self.branches
            .iter()
            .rposition(|b| b.weight > 0.0)
            .unwrap_or(self.branches.len() - 1)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut branches = Vec::new();
        let mut modes = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let nums = tokens
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a decimal: {t:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() < 3 || nums.len() % 2 == 0 {
                return Err(err(format!(
                    "expected a weight and re/im pairs, got {} numbers",
                    nums.len()
                )));
            }
            let m = (nums.len() - 1) / 2;
            match modes {
                None => modes = Some(m),
                Some(prev) if prev != m => {
                    return Err(err(format!("branch has {m} modes, previous branches {prev}")))
                }
                _ => {}
            }
            let alpha = nums[1..]
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            let alpha = DisplacementVector::new(alpha).map_err(|e| err(e.to_string()))?;
            branches.push(AttackBranch {
                weight: nums[0],
                alpha,
            });
        }
        let modes = modes.ok_or_else(|| Error::MalformedAttack("attack file has no branches".into()))?;
        Self::new(modes, branches)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.branches {
            out.push_str(&b.weight.to_string());
            for a in b.alpha.as_slice() {
                out.push_str(&format!("  {} {}", a.re, a.im));
            }
            out.push('\n');
        }
        out
    }
}

/// The null attack on `m` wires.
pub fn attack_identity(m: usize) -> AttackSpec {
    assert!(m >= 1, "identity attack needs at least one mode");
    AttackSpec::single(DisplacementVector::zeros(m)).expect("valid by construction")
}

/// Displaces each listed wire by `amp` and leaves the rest untouched.
pub fn attack_fixed_modes(m: usize, modes: &[usize], amp: ComplexAmplitude) -> Result<AttackSpec> {
    let mut alpha = vec![Complex64::new(0.0, 0.0); m];
    let mut seen = vec![false; m];
    for &k in modes {
        if k >= m {
            return Err(Error::MalformedAttack(format!("mode {k} out of range for {m} modes")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::MalformedAttack(format!("mode {k} listed twice")));
        }
        alpha[k] = amp;
    }
    AttackSpec::single(DisplacementVector::new(alpha)?)
}

/// `u` distinct wires chosen uniformly, each displaced by
/// `amp_magnitude * e^{i phi}` with an independent uniform phase.
pub fn attack_random_modes<R: Rng + ?Sized>(
    m: usize,
    u: usize,
    amp_magnitude: f64,
    rng: &mut R,
) -> Result<AttackSpec> {
    if u > m {
        return Err(Error::MalformedAttack(format!("cannot pick {u} of {m} modes")));
    }
    if m == 0 {
        return Err(Error::MalformedAttack("attack must act on at least one mode".into()));
    }
    let mut alpha = vec![Complex64::new(0.0, 0.0); m];
    for k in sample(rng, m, u) {
        let phi = rng.random::<f64>() * TAU;
        alpha[k] = Complex64::from_polar(amp_magnitude, phi);
    }
    AttackSpec::single(DisplacementVector::new(alpha)?)
}

/// Flattens a weighted mixture of attacks into a single spec.
pub fn attack_mixture(specs: &[(f64, AttackSpec)]) -> Result<AttackSpec> {
    let first = specs
        .first()
        .ok_or_else(|| Error::MalformedAttack("empty mixture".into()))?;
    let modes = first.1.modes();
    let mut total = 0.0;
    let mut branches = Vec::new();
    for (w, spec) in specs {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::MalformedAttack(format!("mixture weight {w}")));
        }
        if spec.modes() != modes {
            return Err(Error::MalformedAttack(format!(
                "mixture components act on {} and {} modes",
                modes,
                spec.modes()
            )));
        }
        total += w;
        branches.extend(spec.branches().iter().map(|b| AttackBranch {
            weight: w * b.weight,
            alpha: b.alpha.clone(),
        }));
    }
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::MalformedAttack(format!("mixture weights sum to {total}")));
    }
    AttackSpec::new(modes, branches)
}
