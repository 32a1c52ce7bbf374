//! The trap-code authentication scheme: key generation, encoding, attack
//! application and decoding with homodyne trap verification.
//!
//! The `[[n, 1, d]]` code is an oracle. Encoding places the logical coherent
//! state in message slot 0 and vacuum in slots `1..n`; decoding declares the
//! message correctable iff at most `t` message slots carry a residual
//! displacement larger than `delta`. The residual is read from the cipher's
//! ground-truth ledger, which never influences the accept/reject decision.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::adversary::AttackSpec;
use crate::analytics::{hamming_weight_delta, DisplacementVector, SchemeParams};
use crate::cvgauss::{
    coherent, squeezed_p, squeezed_x, tensor_all, ComplexAmplitude, GaussianState,
    HomodyneRecord, Permutation, Quadrature,
};
use crate::error::{Error, Result};

/// Version tag written into serialized cipher states.
pub const CIPHER_FORMAT_VERSION: u64 = 1;

/// Secret key: mode permutation `k1` and one-time-pad displacements `k2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthKey {
    perm: Permutation,
    otp: DisplacementVector,
}

impl AuthKey {
    pub fn new(perm: Permutation, otp: DisplacementVector) -> Result<Self> {
        if perm.len() != otp.len() {
            return Err(Error::LengthMismatch {
                expected: perm.len(),
                got: otp.len(),
            });
        }
        Ok(Self { perm, otp })
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    pub fn otp(&self) -> &DisplacementVector {
        &self.otp
    }

    /// Maps a displacement written in the unpermuted layout onto the cipher
    /// wires, so that decoding sees exactly `layout_vec` on its slots.
    pub fn to_wire(&self, layout_vec: &DisplacementVector) -> Result<DisplacementVector> {
        layout_vec.permuted(&self.perm)
    }
}

/// Uniform permutation of `0..m` (Fisher-Yates over `rng`).
pub fn random_permutation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Permutation {
    let mut forward: Vec<usize> = (0..m).collect();
    forward.shuffle(rng);
    Permutation::new(forward).expect("shuffle yields a permutation")
}

pub fn keygen<R: Rng + ?Sized>(params: &SchemeParams, rng: &mut R) -> AuthKey {
    let m = params.modes();
    let perm = random_permutation(m, rng);
    let normal = Normal::new(0.0, params.qotp_std()).expect("Delta validated positive");
    let otp = (0..m)
        .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    AuthKey {
        perm,
        otp: DisplacementVector::new(otp).expect("finite samples"),
    }
}

/// Coherent-state label of the single-mode message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicalMessage(ComplexAmplitude);

impl LogicalMessage {
    pub fn new(amplitude: ComplexAmplitude) -> Result<Self> {
        if !(amplitude.re.is_finite() && amplitude.im.is_finite()) {
            return Err(Error::NonFinite("message amplitude"));
        }
        Ok(Self(amplitude))
    }

    pub fn amplitude(&self) -> ComplexAmplitude {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoveredMessage {
    Logical(LogicalMessage),
    /// The fixed dummy output on rejection: the vacuum label.
    Dummy,
}

impl RecoveredMessage {
    pub fn amplitude(&self) -> ComplexAmplitude {
        match self {
            RecoveredMessage::Logical(m) => m.amplitude(),
            RecoveredMessage::Dummy => Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_dummy(&self) -> bool {
        matches!(self, RecoveredMessage::Dummy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    Accept,
    Reject,
}

/// The cipher register `C` plus simulation-only bookkeeping.
///
/// `ledger` accumulates every non-key displacement applied after encoding,
/// in cipher-wire order.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherState {
    n: usize,
    z: usize,
    state: GaussianState,
    ledger: DisplacementVector,
}

impl CipherState {
    pub fn new(n: usize, z: usize, state: GaussianState, ledger: DisplacementVector) -> Result<Self> {
        let m = n + 2 * z;
        if state.modes() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: state.modes(),
            });
        }
        if ledger.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: ledger.len(),
            });
        }
        Ok(Self { n, z, state, ledger })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn ledger(&self) -> &DisplacementVector {
        &self.ledger
    }

    /// Little-endian layout: `u64 n, u64 z, u64 version`, then the `2m`
    /// means, the `2m x 2m` covariance in row-major order and the ledger as
    /// `m` `(re, im)` pairs, all as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = 2 * self.state.modes();
        let mut out = Vec::with_capacity(24 + 8 * (dim * dim + 2 * dim));
        for h in [self.n as u64, self.z as u64, CIPHER_FORMAT_VERSION] {
            out.extend_from_slice(&h.to_le_bytes());
        }
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        self.state.mean().iter().for_each(|&v| put(v));
        let cov = self.state.cov();
        for i in 0..dim {
            for j in 0..dim {
                put(cov[(i, j)]);
            }
        }
        for a in self.ledger.as_slice() {
            put(a.re);
            put(a.im);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut words = bytes.chunks_exact(8);
        if !bytes.len().is_multiple_of(8) || bytes.len() < 24 {
            return Err(Error::Decode(format!("length {} is not a valid record", bytes.len())));
        }
        let mut next = || u64::from_le_bytes(words.next().unwrap().try_into().unwrap());
        let (n, z, version) = (next() as usize, next() as usize, next());
        if version != CIPHER_FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported version {version}")));
        }
        let dim = 2 * (n + 2 * z);
        let expected = 24 + 8 * (dim * dim + 2 * dim);
        if bytes.len() != expected {
            return Err(Error::Decode(format!(
                "expected {expected} bytes for n = {n}, z = {z}, got {}",
                bytes.len()
            )));
        }
        let floats: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|w| f64::from_le_bytes(w.try_into().unwrap()))
            .collect();
        let (mean, rest) = floats.split_at(dim);
        let (cov, ledger) = rest.split_at(dim * dim);
        let cov = nalgebra::DMatrix::from_row_slice(dim, dim, cov);
        let state = GaussianState::new(mean.to_vec(), cov)?;
        let ledger = ledger
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Self::new(n, z, state, DisplacementVector::new(ledger)?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Correctability verdict of the code oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QeccVerdict {
    pub correctable: bool,
    /// Residual left on the logical slot after decoding; zero when correctable.
    pub logical_error: ComplexAmplitude,
}

pub fn qecc_oracle_decode(residual: &[ComplexAmplitude], params: &SchemeParams) -> Result<QeccVerdict> {
    if residual.len() != params.n() {
        return Err(Error::LengthMismatch {
            expected: params.n(),
            got: residual.len(),
        });
    }
    let correctable = hamming_weight_delta(residual, params.delta()) <= params.t();
    Ok(QeccVerdict {
        correctable,
        logical_error: if correctable {
            Complex64::new(0.0, 0.0)
        } else {
            residual[0]
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub flag: Flag,
    /// X-trap records first, then P-trap records, each in slot order.
    pub traps: Vec<HomodyneRecord>,
    pub message: RecoveredMessage,
    pub correctable: bool,
    /// Traps passed while the message carried uncorrectable noise.
    pub gminusi_event: bool,
    /// Post-measurement state of the `n` message slots; `None` on reject.
    pub message_block: Option<GaussianState>,
}

impl DecodeResult {
    pub fn accepted(&self) -> bool {
        self.flag == Flag::Accept
    }
}

/// Outcome of measuring the traps of an unpermuted, decrypted register.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapVerification {
    pub accepted: bool,
    pub records: Vec<HomodyneRecord>,
    pub message_block: GaussianState,
}

/// `Enc(msg) ⊗ |X>^z ⊗ |P>^z` in the unpermuted layout.
pub fn plaintext_register(params: &SchemeParams, msg: LogicalMessage) -> GaussianState {
    let (n, z, r) = (params.n(), params.z(), params.r());
    let logical = coherent(msg.amplitude());
    let vac = GaussianState::vacuum(1);
    let (sx, sp) = (squeezed_x(r), squeezed_p(r));
    let parts = std::iter::once(&logical)
        .chain(std::iter::repeat_n(&vac, n - 1))
        .chain(std::iter::repeat_n(&sx, z))
        .chain(std::iter::repeat_n(&sp, z));
    tensor_all(parts)
}

pub fn encode(params: &SchemeParams, key: &AuthKey, msg: LogicalMessage) -> Result<CipherState> {
    let state = plaintext_register(params, msg)
        .permute_modes(&key.perm)?
        .displace_all(key.otp.as_slice())?;
    CipherState::new(params.n(), params.z(), state, DisplacementVector::zeros(params.modes()))
}

pub fn apply_attack<R: Rng + ?Sized>(
    cipher: &CipherState,
    attack: &AttackSpec,
    rng: &mut R,
) -> Result<CipherState> {
    let m = cipher.state.modes();
    if attack.modes() != m {
        return Err(Error::MalformedAttack(format!(
            "attack acts on {} modes, cipher has {m}",
            attack.modes()
        )));
    }
    let alpha = attack.sample(rng);
    let state = cipher.state.displace_all(alpha.as_slice())?;
    let ledger = cipher
        .ledger
        .as_slice()
        .iter()
        .zip(alpha.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    CipherState::new(cipher.n, cipher.z, state, DisplacementVector::new(ledger)?)
}

/// Homodynes every trap of an unpermuted register: x on the X traps, p on
/// the P traps. Accepts iff every outcome lies in `[-eps, eps]`.
pub fn verify_traps<R: Rng + ?Sized>(
    params: &SchemeParams,
    register: &GaussianState,
    rng: &mut R,
) -> Result<TrapVerification> {
    let (n, z) = (params.n(), params.z());
    if register.modes() != n + 2 * z {
        return Err(Error::LengthMismatch {
            expected: n + 2 * z,
            got: register.modes(),
        });
    }
    // Measure from the last mode down so earlier indices stay valid.
    let mut state = register.clone();
    let mut records = Vec::with_capacity(2 * z);
    for mode in (n..n + 2 * z).rev() {
        let q = if mode < n + z { Quadrature::X } else { Quadrature::P };
        let (rec, post) = state.homodyne(mode, q, rng)?;
        records.push(rec);
        state = post;
    }
    records.reverse();
    let eps = params.eps();
    let accepted = records.iter().all(|r| r.outcome.abs() <= eps);
    Ok(TrapVerification {
        accepted,
        records,
        message_block: state,
    })
}

pub fn decode<R: Rng + ?Sized>(
    params: &SchemeParams,
    key: &AuthKey,
    cipher: &CipherState,
    rng: &mut R,
) -> Result<DecodeResult> {
    let m = params.modes();
    if cipher.state.modes() != m || cipher.n != params.n() || cipher.z != params.z() {
        return Err(Error::LengthMismatch {
            expected: m,
            got: cipher.state.modes(),
        });
    }
    let undo: Vec<ComplexAmplitude> = key.otp.as_slice().iter().map(|a| -a).collect();
    let register = cipher
        .state
        .displace_all(&undo)?
        .permute_modes(&key.perm.inverse())?;
    let check = verify_traps(params, &register, rng)?;

    let residual = cipher.ledger.unpermuted(&key.perm)?;
    let msg_residual = &residual.as_slice()[..params.n()];
    let verdict = qecc_oracle_decode(msg_residual, params)?;

    if !check.accepted {
        return Ok(DecodeResult {
            flag: Flag::Reject,
            traps: check.records,
            message: RecoveredMessage::Dummy,
            correctable: verdict.correctable,
            gminusi_event: false,
            message_block: None,
        });
    }
    // The oracle undoes the slot-0 residual unless the noise is uncorrectable.
    let physical = check.message_block.amplitude(0)?;
    let recovered = physical - msg_residual[0] + verdict.logical_error;
    Ok(DecodeResult {
        flag: Flag::Accept,
        traps: check.records,
        message: RecoveredMessage::Logical(LogicalMessage::new(recovered)?),
        correctable: verdict.correctable,
        gminusi_event: !verdict.correctable,
        message_block: Some(check.message_block),
    })
}

/// Twirl-reduced pipeline: no pad, the unpermuted register is displaced
/// directly by `pi^{-1} alpha` and its traps verified.
pub fn verify_reduced<R: Rng + ?Sized>(
    params: &SchemeParams,
    perm: &Permutation,
    alpha: &DisplacementVector,
    msg: LogicalMessage,
    rng: &mut R,
) -> Result<TrapVerification> {
    let layout = alpha.unpermuted(perm)?;
    let register = plaintext_register(params, msg).displace_all(layout.as_slice())?;
    verify_traps(params, &register, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{attack_fixed_modes, attack_identity};
    use crate::analytics::eps_dec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    fn c(re: f64, im: f64) -> ComplexAmplitude {
        Complex64::new(re, im)
    }

    fn msg(re: f64, im: f64) -> LogicalMessage {
        LogicalMessage::new(c(re, im)).unwrap()
    }

    fn sharp() -> SchemeParams {
        SchemeParams::new(3, 2, 1, 8.0, 0.5).unwrap()
    }

    #[test]
    fn keygen_is_deterministic() {
        let p = sharp();
        let a = keygen(&p, &mut ChaCha8Rng::seed_from_u64(42));
        let b = keygen(&p, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.perm().len(), 7);
        assert_eq!(a.otp().len(), 7);
    }

    #[test]
    fn keygen_pad_variance() {
        let p = SchemeParams::new(1, 1, 0, 8.0, 0.5).unwrap().with_qotp_std(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let keys = 100_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..keys {
            let k = keygen(&p, &mut rng);
            let a = k.otp().as_slice()[0];
            for (i, v) in [a.re, a.im].into_iter().enumerate() {
                sums[i] += v;
                sq[i] += v * v;
            }
        }
        for i in 0..2 {
            let mean = sums[i] / keys as f64;
            let var = sq[i] / keys as f64 - mean * mean;
            assert!((var / 9.0 - 1.0).abs() < 0.02, "axis {i}: {var}");
        }
    }

    #[test]
    fn permutations_uniform_over_s4() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts.entry(random_permutation(4, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = draws as f64 / 24.0;
        let chi2: f64 = counts
            .values()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 23 degrees of freedom
        assert!(chi2 < 49.728, "chi2 = {chi2}");
    }

    #[test]
    fn encode_without_key_keeps_layout() {
        let p = SchemeParams::new(3, 2, 1, 2.0, 0.5).unwrap();
        let key = AuthKey::new(Permutation::identity(7), DisplacementVector::zeros(7)).unwrap();
        let ct = encode(&p, &key, msg(0.5, -1.0)).unwrap();
        let s = ct.state();
        assert!((s.amplitude(0).unwrap() - c(0.5, -1.0)).norm() < 1e-15);
        for k in 1..3 {
            assert_eq!(s.amplitude(k).unwrap(), c(0.0, 0.0));
            assert_eq!(s.cov()[(2 * k, 2 * k)], 1.0);
        }
        let (lo, hi) = ((-2.0f64).exp(), 2.0f64.exp());
        for k in 3..5 {
            assert_eq!((s.cov()[(2 * k, 2 * k)], s.cov()[(2 * k + 1, 2 * k + 1)]), (lo, hi));
        }
        for k in 5..7 {
            assert_eq!((s.cov()[(2 * k, 2 * k)], s.cov()[(2 * k + 1, 2 * k + 1)]), (hi, lo));
        }
        assert!(ct.ledger().is_zero());
    }

    #[test]
    fn encode_mean_is_permuted_plus_pad() {
        let p = sharp();
        let key = keygen(&p, &mut ChaCha8Rng::seed_from_u64(9));
        let m = msg(1.0, 2.0);
        let ct = encode(&p, &key, m).unwrap();
        let plain = plaintext_register(&p, m).permute_modes(key.perm()).unwrap();
        for j in 0..7 {
            let k2 = key.otp().as_slice()[j];
            assert!((ct.state().mean()[2 * j] - plain.mean()[2 * j] - SQRT_2 * k2.re).abs() < 1e-12);
            assert!((ct.state().mean()[2 * j + 1] - plain.mean()[2 * j + 1] - SQRT_2 * k2.im).abs() < 1e-12);
        }
        // message slot 0 lands on wire perm(0)
        let w = key.perm().image(0);
        assert!((ct.state().amplitude(w).unwrap() - key.otp().as_slice()[w] - c(1.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn pad_hides_every_wire() {
        let p = SchemeParams::new(1, 1, 0, 2.0, 0.5).unwrap().with_qotp_std(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 50_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let key = keygen(&p, &mut rng);
                let ct = encode(&p, &key, msg(0.7, 0.0)).unwrap();
                ct.state().homodyne(0, Quadrature::X, &mut rng).unwrap().0.outcome
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(var >= 2.0 * 4.0, "variance {var}");
    }

    #[test]
    fn identity_attack_is_a_no_op() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let key = keygen(&p, &mut rng);
        let ct = encode(&p, &key, msg(0.1, 0.2)).unwrap();
        let hit = apply_attack(&ct, &attack_identity(7), &mut rng).unwrap();
        assert_eq!(hit, ct);
        assert!(apply_attack(&ct, &attack_identity(6), &mut rng).is_err());
    }

    #[test]
    fn single_branch_attack_shifts_wire() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let key = keygen(&p, &mut rng);
        let ct = encode(&p, &key, msg(0.1, 0.2)).unwrap();
        let a = c(0.3, -0.4);
        let spec = attack_fixed_modes(7, &[0], a).unwrap();
        let hit = apply_attack(&ct, &spec, &mut rng).unwrap();
        assert!((hit.state().mean()[0] - ct.state().mean()[0] - SQRT_2 * 0.3).abs() < 1e-12);
        assert!((hit.state().mean()[1] - ct.state().mean()[1] + SQRT_2 * 0.4).abs() < 1e-12);
        assert_eq!(hit.ledger().as_slice()[0], a);
        assert_eq!(hit.state().cov(), ct.state().cov());
    }

    #[test]
    fn roundtrip_restores_message_block() {
        let p = sharp().with_qotp_std(50.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let key = keygen(&p, &mut rng);
            let m = msg(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let ct = encode(&p, &key, m).unwrap();
            let out = decode(&p, &key, &ct, &mut rng).unwrap();
            assert!(out.accepted());
            assert!(out.correctable && !out.gminusi_event);
            assert_eq!(out.traps.len(), 4);
            let block = out.message_block.unwrap();
            let want = plaintext_register(&p, m).leading_modes(3).unwrap();
            for (a, b) in block.mean().iter().zip(want.mean()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(block.cov(), want.cov());
            assert!((out.message.amplitude() - m.amplitude()).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_accept_rate_near_formula() {
        let p = SchemeParams::new(3, 2, 1, 4.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 20_000;
        let mut acc = 0;
        for _ in 0..trials {
            let key = keygen(&p, &mut rng);
            let ct = encode(&p, &key, msg(0.0, 0.0)).unwrap();
            acc += decode(&p, &key, &ct, &mut rng).unwrap().accepted() as usize;
        }
        let rate = acc as f64 / trials as f64;
        assert!((rate - (1.0 - eps_dec(&p))).abs() < 0.01);
    }

    #[test]
    fn hot_trap_rejects_to_dummy() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let key = keygen(&p, &mut rng);
            let mut v = vec![c(0.0, 0.0); 7];
            v[3] = c(10.0 * p.eps(), 0.0);
            let wire = key.to_wire(&DisplacementVector::new(v).unwrap()).unwrap();
            let spec = AttackSpec::single(wire).unwrap();
            let ct = apply_attack(&encode(&p, &key, msg(1.0, 0.0)).unwrap(), &spec, &mut rng).unwrap();
            let out = decode(&p, &key, &ct, &mut rng).unwrap();
            assert_eq!(out.flag, Flag::Reject);
            assert!(out.message.is_dummy());
            assert!(out.message_block.is_none());
            assert!(!out.gminusi_event);
        }
    }

    #[test]
    fn uncorrectable_message_noise_slips_through() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let key = keygen(&p, &mut rng);
            let mut v = vec![c(0.0, 0.0); 7];
            for slot in v.iter_mut().take(p.t() + 1) {
                *slot = c(10.0 * p.eps(), 0.0);
            }
            let wire = key.to_wire(&DisplacementVector::new(v).unwrap()).unwrap();
            let spec = AttackSpec::single(wire).unwrap();
            let ct = apply_attack(&encode(&p, &key, msg(0.0, 1.0)).unwrap(), &spec, &mut rng).unwrap();
            let out = decode(&p, &key, &ct, &mut rng).unwrap();
            assert!(out.accepted());
            assert!(!out.correctable);
            assert!(out.gminusi_event);
            assert!((out.message.amplitude() - c(5.0, 1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn correctable_noise_is_removed() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let key = keygen(&p, &mut rng);
        let mut v = vec![c(0.0, 0.0); 7];
        v[0] = c(-4.0, 2.0);
        let wire = key.to_wire(&DisplacementVector::new(v).unwrap()).unwrap();
        let ct = apply_attack(&encode(&p, &key, msg(0.3, 0.3)).unwrap(), &AttackSpec::single(wire).unwrap(), &mut rng).unwrap();
        let out = decode(&p, &key, &ct, &mut rng).unwrap();
        assert!(out.accepted() && out.correctable);
        assert!((out.message.amplitude() - c(0.3, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let p = SchemeParams::new(5, 3, 2, 8.0, 0.5).unwrap();
        let hot = c(10.0 * p.eps(), 0.0);
        let zero = c(0.0, 0.0);
        let v = qecc_oracle_decode(&[zero; 5], &p).unwrap();
        assert!(v.correctable && v.logical_error == zero);
        let v = qecc_oracle_decode(&[hot, hot, zero, zero, zero], &p).unwrap();
        assert!(v.correctable && v.logical_error == zero);
        let v = qecc_oracle_decode(&[hot, hot, hot, zero, zero], &p).unwrap();
        assert!(!v.correctable && v.logical_error != zero);
        assert!(qecc_oracle_decode(&[zero; 4], &p).is_err());
    }

    #[test]
    fn decode_rejects_wrong_shape() {
        let p = sharp();
        let other = SchemeParams::new(5, 3, 2, 8.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let key = keygen(&other, &mut rng);
        let ct = encode(&other, &key, msg(0.0, 0.0)).unwrap();
        assert!(decode(&p, &keygen(&p, &mut rng), &ct, &mut rng).is_err());
    }

    #[test]
    fn cipher_bytes_roundtrip() {
        let p = sharp();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let key = keygen(&p, &mut rng);
        let ct = encode(&p, &key, msg(0.2, -0.9)).unwrap();
        let ct = apply_attack(&ct, &attack_fixed_modes(7, &[2, 5], c(0.1, 0.2)).unwrap(), &mut rng).unwrap();
        let bytes = ct.to_bytes();
        assert_eq!(bytes.len(), 24 + 8 * (14 * 14 + 28));
        assert_eq!(&bytes[..8], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &CIPHER_FORMAT_VERSION.to_le_bytes());
        let back = CipherState::from_bytes(&bytes).unwrap();
        assert_eq!(back, ct);

        let mut buf = Vec::new();
        ct.write_to(&mut buf).unwrap();
        assert_eq!(CipherState::read_from(buf.as_slice()).unwrap(), ct);

        let mut bad = bytes.clone();
        bad[16] = 9;
        assert!(matches!(CipherState::from_bytes(&bad), Err(Error::Decode(_))));
        assert!(CipherState::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn reduced_pipeline_matches_on_identity_key() {
        let p = sharp();
        let key = AuthKey::new(Permutation::identity(7), DisplacementVector::zeros(7)).unwrap();
        let alpha = attack_fixed_modes(7, &[3], c(5.0, 0.0)).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(0));
        let red = verify_reduced(&p, key.perm(), &alpha, msg(0.0, 0.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!red.accepted);
        let clean = verify_reduced(&p, key.perm(), &DisplacementVector::zeros(7), msg(0.0, 0.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(clean.accepted);
        assert_eq!(clean.message_block.modes(), 3);
    }
}
