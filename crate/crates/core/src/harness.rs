//! Seeded Monte Carlo experiments over random keys and homodyne noise.
//!
//! Every trial draws from its own ChaCha8 streams, keyed by
//! [`trial_rng`]`(master_seed, trial, stream)`. Bernoulli events are tallied
//! in integer counters, so summaries are bit-identical for any thread count.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, SQRT_2};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::{attack_fixed_modes, attack_identity, attack_random_modes, AttackSpec};
use crate::analytics::{
    eps_dec, eta_bound, g1, g2, hamming_weight_delta, in_acceptance_set, p_exact,
    twirl_factor, twirl_mc_oracle, DisplacementVector, SchemeParams, TwirlEstimate,
};
use crate::cvgauss::ComplexAmplitude;
use crate::error::{Error, Result};
use crate::trapauth::{apply_attack, decode, encode, keygen, verify_reduced, LogicalMessage};

pub const STREAM_KEY: u64 = 0;
pub const STREAM_ATTACK: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_NOISE_REDUCED: u64 = 3;
pub const STREAM_TWIRL: u64 = 4;

/// Last eight seed bytes of every per-trial generator.
pub const SEED_DOMAIN: [u8; 8] = *b"cvauth01";

/// Samples per independently seeded chunk of the twirl estimator.
pub const TWIRL_CHUNK: u64 = 1 << 16;

/// Standard deviations of trap noise an amplitude must clear for the
/// closed-form attack targets to be reported.
pub const THRESHOLD_CLEARANCE: f64 = 5.0;

/// Generator for trial `trial` on stream `stream`. The 32-byte ChaCha seed
/// is `master_seed || trial || stream || SEED_DOMAIN`, little-endian.
pub fn trial_rng(master_seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&trial.to_le_bytes());
    seed[16..24].copy_from_slice(&stream.to_le_bytes());
    seed[24..].copy_from_slice(&SEED_DOMAIN);
    ChaCha8Rng::from_seed(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimand {
    AcceptRate,
    GminusiRate,
    TrapHistograms,
    TwirlCheck,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::AcceptRate => "accept_rate",
            Estimand::GminusiRate => "gminusi_rate",
            Estimand::TrapHistograms => "trap_histograms",
            Estimand::TwirlCheck => "twirl_check",
        }
    }
}

impl FromStr for Estimand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "accept_rate" => Estimand::AcceptRate,
            "gminusi_rate" => Estimand::GminusiRate,
            "trap_histograms" => Estimand::TrapHistograms,
            "twirl_check" => Estimand::TwirlCheck,
            other => return Err(Error::InvalidConfig(format!("unknown estimand {other:?}"))),
        })
    }
}

/// Where a trial's attack comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSource {
    Identity,
    /// `amp` on wires `0..u`; `None` means `10 eps e^{i pi/4}`.
    FixedModes { u: usize, amp: Option<ComplexAmplitude> },
    /// A fresh `attack_random_modes` draw per trial; `None` means `10 eps`.
    RandomModes { u: usize, amp: Option<f64> },
    /// A mixture given in wire coordinates.
    Spec { id: String, spec: AttackSpec },
    /// A fixed displacement given in the unpermuted layout, moved onto the
    /// wires with each trial's key.
    Layout { id: String, layout: DisplacementVector },
}

impl AttackSource {
    pub fn id(&self, params: &SchemeParams) -> String {
        match self {
            AttackSource::Identity => "identity".into(),
            AttackSource::FixedModes { u, amp } => {
                let a = amp.unwrap_or_else(|| default_fixed_amp(params));
                format!("fixed(u={u};amp={})", format_complex(a))
            }
            AttackSource::RandomModes { u, amp } => {
                let a = amp.unwrap_or(10.0 * params.eps());
                format!("random(u={u};amp={})", format_decimal(a))
            }
            AttackSource::Spec { id, .. } | AttackSource::Layout { id, .. } => id.clone(),
        }
    }

    fn validate(&self, params: &SchemeParams) -> Result<()> {
        let m = params.modes();
        match self {
            AttackSource::Identity => Ok(()),
            AttackSource::FixedModes { u, .. } | AttackSource::RandomModes { u, .. } if *u > m => {
                Err(Error::InvalidConfig(format!("u = {u} exceeds the {m} cipher modes")))
            }
            AttackSource::FixedModes { .. } | AttackSource::RandomModes { .. } => Ok(()),
            AttackSource::Spec { spec, .. } if spec.modes() != m => Err(Error::InvalidConfig(format!(
                "attack acts on {} modes, cipher has {m}",
                spec.modes()
            ))),
            AttackSource::Layout { layout, .. } if layout.len() != m => Err(Error::InvalidConfig(
                format!("layout attack has {} entries, cipher has {m}", layout.len()),
            )),
            _ => Ok(()),
        }
    }

    /// The wire-coordinate spec, when it does not depend on the trial.
    fn static_spec(&self, params: &SchemeParams) -> Result<Option<AttackSpec>> {
        let m = params.modes();
        Ok(match self {
            AttackSource::Identity => Some(attack_identity(m)),
            AttackSource::FixedModes { u, amp } => {
                let wires: Vec<usize> = (0..*u).collect();
                Some(attack_fixed_modes(m, &wires, amp.unwrap_or_else(|| default_fixed_amp(params)))?)
            }
            AttackSource::Spec { spec, .. } => Some(spec.clone()),
            AttackSource::RandomModes { .. } | AttackSource::Layout { .. } => None,
        })
    }
}

/// Amplitude of the fixed-mode generator: `10 eps` at 45 degrees, so both
/// quadratures sit far outside the trap window.
pub fn default_fixed_amp(params: &SchemeParams) -> ComplexAmplitude {
    Complex64::from_polar(10.0 * params.eps(), FRAC_PI_4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: SchemeParams,
    pub attack: AttackSource,
    pub trials: u64,
    pub master_seed: u64,
    pub outputs: Vec<Estimand>,
    pub message: ComplexAmplitude,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(params: SchemeParams, attack: AttackSource, trials: u64, master_seed: u64) -> Self {
        Self {
            params,
            attack,
            trials,
            master_seed,
            outputs: vec![Estimand::AcceptRate, Estimand::GminusiRate],
            message: Complex64::new(0.0, 0.0),
            threads: None,
        }
    }

    pub fn with_outputs(mut self, outputs: Vec<Estimand>) -> Self {
        self.outputs = outputs;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_message(mut self, message: ComplexAmplitude) -> Self {
        self.message = message;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::InvalidConfig("no estimands requested".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        self.attack.validate(&self.params)?;
        LogicalMessage::new(self.message)?;
        Ok(())
    }

    fn wants(&self, e: Estimand) -> bool {
        self.outputs.contains(&e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub estimand: String,
    pub estimate: f64,
    pub stderr: f64,
    pub analytic: Option<f64>,
    pub abs_err: Option<f64>,
}

impl EstimateRow {
    pub fn new(estimand: impl Into<String>, estimate: f64, stderr: f64, analytic: Option<f64>) -> Self {
        Self {
            estimand: estimand.into(),
            estimate,
            stderr,
            analytic,
            abs_err: analytic.map(|a| (estimate - a).abs()),
        }
    }

    fn bernoulli(estimand: impl Into<String>, hits: u64, trials: u64, analytic: Option<f64>) -> Self {
        let p = hits as f64 / trials as f64;
        Self::new(estimand, p, bernoulli_stderr(p, trials), analytic)
    }

    /// Whether the analytic target lies within `k` of the larger of the
    /// reported stderr and the stderr the target itself implies.
    pub fn within_sigma(&self, k: f64, trials: u64) -> Option<bool> {
        let a = self.analytic?;
        let floor = bernoulli_stderr(a.clamp(0.0, 1.0), trials);
        Some((self.estimate - a).abs() <= k * self.stderr.max(floor))
    }
}

pub fn bernoulli_stderr(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub n: Option<usize>,
    pub z: Option<usize>,
    pub t: Option<usize>,
    pub r: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub qotp_std: Option<f64>,
    pub attack_id: String,
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<EstimateRow>,
    pub wallclock_s: f64,
}

impl ExperimentSummary {
    fn for_params(experiment: &str, params: &SchemeParams, attack_id: String, trials: u64, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            n: Some(params.n()),
            z: Some(params.z()),
            t: Some(params.t()),
            r: Some(params.r()),
            eps: Some(params.eps()),
            delta: Some(params.delta()),
            qotp_std: Some(params.qotp_std()),
            attack_id,
            trials,
            seed,
            rows: Vec::new(),
            wallclock_s: 0.0,
        }
    }

    pub fn row(&self, estimand: &str) -> Option<&EstimateRow> {
        self.rows.iter().find(|r| r.estimand == estimand)
    }
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} [{}] trials={} seed={} ({:.3} s)",
            self.experiment, self.attack_id, self.trials, self.seed, self.wallclock_s
        )?;
        for r in &self.rows {
            write!(f, "  {:<24} {:>14} +/- {:<14}", r.estimand, format_decimal(r.estimate), format_decimal(r.stderr))?;
            if let (Some(a), Some(e)) = (r.analytic, r.abs_err) {
                write!(f, " analytic {:>14}  |err| {}", format_decimal(a), format_decimal(e))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tally {
    trials: u64,
    accept: u64,
    gminusi: u64,
    indicator: u64,
    accept_reduced: u64,
    trap_pass: Vec<u64>,
}

impl Tally {
    fn zero(traps: usize) -> Self {
        Self {
            trials: 0,
            accept: 0,
            gminusi: 0,
            indicator: 0,
            accept_reduced: 0,
            trap_pass: vec![0; traps],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.trials += other.trials;
        self.accept += other.accept;
        self.gminusi += other.gminusi;
        self.indicator += other.indicator;
        self.accept_reduced += other.accept_reduced;
        for (a, b) in self.trap_pass.iter_mut().zip(other.trap_pass) {
            *a += b;
        }
        self
    }
}

/// Which pipelines a trial runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pipelines {
    Full,
    FullAndReduced,
}

fn run_trial(
    cfg: &ExperimentConfig,
    static_spec: Option<&AttackSpec>,
    trial: u64,
    pipelines: Pipelines,
) -> Result<Tally> {
    let params = &cfg.params;
    let m = params.modes();
    let msg = LogicalMessage::new(cfg.message)?;
    let key = keygen(params, &mut trial_rng(cfg.master_seed, trial, STREAM_KEY));
    let mut attack_rng = trial_rng(cfg.master_seed, trial, STREAM_ATTACK);
    let spec = match (&cfg.attack, static_spec) {
        (_, Some(s)) => s.clone(),
        (AttackSource::RandomModes { u, amp }, None) => {
            attack_random_modes(m, *u, amp.unwrap_or(10.0 * params.eps()), &mut attack_rng)?
        }
        (AttackSource::Layout { layout, .. }, None) => AttackSpec::single(key.to_wire(layout)?)?,
        _ => unreachable!("static sources resolve before the trial loop"),
    };
    // Draw the branch once so both pipelines see the same displacement.
    let alpha = spec.sample(&mut attack_rng);
    let drawn = AttackSpec::single(alpha.clone())?;

    let cipher = encode(params, &key, msg)?;
    let attacked = apply_attack(&cipher, &drawn, &mut attack_rng)?;
    let res = decode(params, &key, &attacked, &mut trial_rng(cfg.master_seed, trial, STREAM_NOISE))?;

    let mut tally = Tally::zero(2 * params.z());
    tally.trials = 1;
    tally.accept = res.accepted() as u64;
    tally.gminusi = res.gminusi_event as u64;
    tally.indicator = in_acceptance_set(&alpha.unpermuted(key.perm())?, params)? as u64;
    for (slot, rec) in tally.trap_pass.iter_mut().zip(&res.traps) {
        *slot = (rec.outcome.abs() <= params.eps()) as u64;
    }
    if pipelines == Pipelines::FullAndReduced {
        let mut noise = trial_rng(cfg.master_seed, trial, STREAM_NOISE_REDUCED);
        tally.accept_reduced = verify_reduced(params, key.perm(), &alpha, msg, &mut noise)?.accepted as u64;
    }
    Ok(tally)
}

fn run_trials(cfg: &ExperimentConfig, pipelines: Pipelines) -> Result<Tally> {
    cfg.validate()?;
    let spec = cfg.attack.static_spec(&cfg.params)?;
    let traps = 2 * cfg.params.z();
    in_pool(cfg.threads, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, spec.as_ref(), i, pipelines))
            .try_reduce(|| Tally::zero(traps), |a, b| Ok(a.merge(b)))
    })?
}

/// Heavy-entry placement targets for a wire-order mixture: returns
/// `(accept, gminusi)` or `None` if any nonzero entry sits near a threshold.
pub fn placement_targets(spec: &AttackSpec, params: &SchemeParams) -> Option<(f64, f64)> {
    let (n, z, t) = (params.n(), params.z(), params.t());
    let clean = 1.0 - eps_dec(params);
    let floor = params.eps() + THRESHOLD_CLEARANCE * params.trap_sigma();
    let mut accept = 0.0;
    let mut gminusi = 0.0;
    for b in spec.branches() {
        let mut heavy = 0;
        for a in b.alpha.as_slice() {
            if a.norm() == 0.0 {
                continue;
            }
            let far = SQRT_2 * a.re.abs() >= floor && SQRT_2 * a.im.abs() >= floor && a.norm() > params.delta();
            if !far {
                return None;
            }
            heavy += 1;
        }
        let placed = p_exact(heavy, n, z) * clean;
        accept += b.weight * placed;
        if heavy > t {
            gminusi += b.weight * placed;
        }
    }
    Some((accept, gminusi))
}

/// Exact per-slot trap pass probabilities under a uniformly random key:
/// X-trap slots first, then P-trap slots.
fn trap_pass_targets(spec: &AttackSpec, params: &SchemeParams) -> Vec<f64> {
    let (r, eps, z) = (params.r(), params.eps(), params.z());
    let m = params.modes() as f64;
    let (mut gx, mut gp) = (0.0, 0.0);
    for b in spec.branches() {
        let a = b.alpha.as_slice();
        gx += b.weight * a.iter().map(|&w| g1(w, r, eps)).sum::<f64>() / m;
        gp += b.weight * a.iter().map(|&w| g2(w, r, eps)).sum::<f64>() / m;
    }
    std::iter::repeat_n(gx, z).chain(std::iter::repeat_n(gp, z)).collect()
}

struct Targets {
    accept: Option<f64>,
    gminusi: Option<f64>,
    indicator: Option<f64>,
    traps: Option<Vec<f64>>,
}

fn targets(cfg: &ExperimentConfig) -> Result<Targets> {
    let params = &cfg.params;
    match &cfg.attack {
        AttackSource::Identity => Ok(Targets {
            accept: Some(1.0 - eps_dec(params)),
            gminusi: Some(0.0),
            indicator: Some(1.0),
            traps: Some(vec![g1(Complex64::new(0.0, 0.0), params.r(), params.eps()); 2 * params.z()]),
        }),
        AttackSource::Layout { layout, .. } => {
            let lay = layout.layout(params.n(), params.z())?;
            let (r, eps) = (params.r(), params.eps());
            let mut traps: Vec<f64> = lay.x_traps.iter().map(|&b| g1(b, r, eps)).collect();
            traps.extend(lay.p_traps.iter().map(|&b| g2(b, r, eps)));
            let g: f64 = traps.iter().product();
            let correctable = hamming_weight_delta(lay.msg, params.delta()) <= params.t();
            Ok(Targets {
                accept: Some(g),
                gminusi: Some(if correctable { 0.0 } else { g }),
                indicator: Some(in_acceptance_set(layout, params)? as u8 as f64),
                traps: Some(traps),
            })
        }
        AttackSource::RandomModes { u, .. } => Ok(Targets {
            accept: None,
            gminusi: if *u <= params.t() || *u > params.n() { Some(0.0) } else { None },
            indicator: None,
            traps: None,
        }),
        AttackSource::FixedModes { .. } | AttackSource::Spec { .. } => {
            let spec = cfg.attack.static_spec(params)?.expect("static source");
            let placed = placement_targets(&spec, params);
            Ok(Targets {
                accept: placed.map(|p| p.0),
                gminusi: placed.map(|p| p.1),
                indicator: None,
                traps: Some(trap_pass_targets(&spec, params)),
            })
        }
    }
}

fn trap_rows(tally: &Tally, z: usize, targets: Option<&[f64]>) -> Vec<EstimateRow> {
    tally
        .trap_pass
        .iter()
        .enumerate()
        .map(|(k, &hits)| {
            let name = if k < z {
                format!("trap_pass_x{k}")
            } else {
                format!("trap_pass_p{}", k - z)
            };
            EstimateRow::bernoulli(name, hits, tally.trials, targets.map(|t| t[k]))
        })
        .collect()
}

fn attack_summary(experiment: &str, cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let start = Instant::now();
    let tally = run_trials(cfg, Pipelines::Full)?;
    let tg = targets(cfg)?;
    let mut s = ExperimentSummary::for_params(
        experiment,
        &cfg.params,
        cfg.attack.id(&cfg.params),
        cfg.trials,
        cfg.master_seed,
    );
    for e in &cfg.outputs {
        match e {
            Estimand::AcceptRate => s.rows.push(EstimateRow::bernoulli("accept_rate", tally.accept, tally.trials, tg.accept)),
            Estimand::GminusiRate => s.rows.push(EstimateRow::bernoulli("gminusi_rate", tally.gminusi, tally.trials, tg.gminusi)),
            Estimand::TrapHistograms => s.rows.extend(trap_rows(&tally, cfg.params.z(), tg.traps.as_deref())),
            Estimand::TwirlCheck => {
                return Err(Error::InvalidConfig("twirl_check is produced by run_twirl_check".into()))
            }
        }
    }
    if cfg.wants(Estimand::GminusiRate) {
        s.rows.push(EstimateRow::bernoulli("indicator_rate", tally.indicator, tally.trials, tg.indicator));
    }
    s.wallclock_s = start.elapsed().as_secs_f64();
    Ok(s)
}

/// Accept rate of untampered ciphertexts against `1 - eps_dec`. The
/// configured attack is ignored.
pub fn run_no_attack(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let mut cfg = config.clone();
    cfg.attack = AttackSource::Identity;
    cfg.outputs.retain(|&e| e != Estimand::GminusiRate);
    if cfg.outputs.is_empty() {
        cfg.outputs.push(Estimand::AcceptRate);
    }
    attack_summary("noattack", &cfg)
}

pub fn run_attack(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    attack_summary("attack", config)
}

/// Compares the Monte Carlo phase average against the closed-form twirl
/// factor. `samples` are split into [`TWIRL_CHUNK`]-sized chunks, each on its
/// own stream, and merged in chunk order.
pub fn run_twirl_check(
    beta: ComplexAmplitude,
    beta_p: ComplexAmplitude,
    qotp_std: f64,
    samples: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<ExperimentSummary> {
    if samples == 0 {
        return Err(Error::InvalidConfig("twirl check needs at least one sample".into()));
    }
    if !(qotp_std.is_finite() && qotp_std > 0.0) {
        return Err(Error::InvalidConfig(format!("Delta must be positive, got {qotp_std}")));
    }
    let start = Instant::now();
    let chunks = samples.div_ceil(TWIRL_CHUNK);
    let parts: Vec<TwirlEstimate> = in_pool(threads, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = TWIRL_CHUNK.min(samples - c * TWIRL_CHUNK);
                twirl_mc_oracle(beta, beta_p, qotp_std, len, &mut trial_rng(seed, c, STREAM_TWIRL))
            })
            .collect()
    })?;
    let est = parts.into_iter().fold(TwirlEstimate::default(), TwirlEstimate::merge);
    let mean = est.mean();
    let target = twirl_factor(beta, beta_p, qotp_std);
    let diff = beta_p - beta;
    let mut s = ExperimentSummary {
        experiment: "twirl".into(),
        n: None,
        z: None,
        t: None,
        r: None,
        eps: None,
        delta: None,
        qotp_std: Some(qotp_std),
        attack_id: format!("beta_diff={}", format_complex(diff)),
        trials: samples,
        seed,
        rows: vec![
            EstimateRow::new("twirl_re", mean.re, est.stderr_re(), Some(target)),
            EstimateRow::new("twirl_im", mean.im, est.stderr_im(), Some(0.0)),
        ],
        wallclock_s: 0.0,
    };
    s.wallclock_s = start.elapsed().as_secs_f64();
    Ok(s)
}

/// Experiments a sweep can repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    NoAttack,
    Attack,
    Equivalence,
}

impl ExperimentKind {
    pub fn run(self, cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
        match self {
            ExperimentKind::NoAttack => run_no_attack(cfg),
            ExperimentKind::Attack => run_attack(cfg),
            ExperimentKind::Equivalence => run_pipeline_equivalence(cfg),
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noattack" => Ok(Self::NoAttack),
            "attack" => Ok(Self::Attack),
            "equiv" => Ok(Self::Equivalence),
            other => Err(Error::InvalidConfig(format!("cannot sweep experiment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    R,
    Eps,
    Z,
    U,
    Delta,
    Trials,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::R => "r",
            SweepAxis::Eps => "eps",
            SweepAxis::Z => "z",
            SweepAxis::U => "u",
            SweepAxis::Delta => "Delta",
            SweepAxis::Trials => "trials",
        }
    }

    fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let whole = || -> Result<u64> {
            if value >= 0.0 && value.fract() == 0.0 && value < u64::MAX as f64 {
                Ok(value as u64)
            } else {
                Err(Error::InvalidConfig(format!("axis {} needs a whole number, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::R => cfg.params = cfg.params.with_r(value)?,
            SweepAxis::Eps => cfg.params = cfg.params.with_eps(value)?,
            SweepAxis::Z => cfg.params = cfg.params.with_z(whole()? as usize)?,
            SweepAxis::Delta => cfg.params = cfg.params.with_qotp_std(value)?,
            SweepAxis::Trials => cfg.trials = whole()?,
            SweepAxis::U => {
                let u = whole()? as usize;
                cfg.attack = match cfg.attack {
                    AttackSource::FixedModes { amp, .. } => AttackSource::FixedModes { u, amp },
                    AttackSource::RandomModes { amp, .. } => AttackSource::RandomModes { u, amp },
                    AttackSource::Identity => AttackSource::FixedModes { u, amp: None },
                    _ => {
                        return Err(Error::InvalidConfig(
                            "axis u needs a generated attack, not an explicit spec".into(),
                        ))
                    }
                };
            }
        }
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "r" => SweepAxis::R,
            "eps" => SweepAxis::Eps,
            "z" => SweepAxis::Z,
            "u" => SweepAxis::U,
            "Delta" => SweepAxis::Delta,
            "trials" => SweepAxis::Trials,
            other => return Err(Error::InvalidConfig(format!("unknown sweep axis {other:?}"))),
        })
    }
}

/// Repeats `kind` once per value of `axis`, every run sharing the base seed.
pub fn run_sweep(
    base: &ExperimentConfig,
    kind: ExperimentKind,
    axis: &str,
    values: &[f64],
) -> Result<Vec<ExperimentSummary>> {
    let axis: SweepAxis = axis.parse()?;
    values
        .iter()
        .map(|&v| kind.run(&axis.apply(base, v)?))
        .collect()
}

/// Runs the padded pipeline and the pad-free reduced pipeline on the same
/// keys and attack draws with independent homodyne noise.
pub fn run_pipeline_equivalence(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let start = Instant::now();
    let tally = run_trials(config, Pipelines::FullAndReduced)?;
    let tg = targets(config)?;
    let mut s = ExperimentSummary::for_params(
        "equiv",
        &config.params,
        config.attack.id(&config.params),
        config.trials,
        config.master_seed,
    );
    let full = EstimateRow::bernoulli("accept_rate_full", tally.accept, tally.trials, tg.accept);
    let reduced = EstimateRow::bernoulli("accept_rate_reduced", tally.accept_reduced, tally.trials, tg.accept);
    let diff = EstimateRow::new(
        "accept_rate_diff",
        full.estimate - reduced.estimate,
        full.stderr.hypot(reduced.stderr),
        Some(0.0),
    );
    s.rows = vec![full, reduced, diff];
    s.wallclock_s = start.elapsed().as_secs_f64();
    Ok(s)
}

/// Layout-coordinate scenarios of the real-versus-ideal event table.
pub fn event_table_scenarios(params: &SchemeParams) -> Vec<(&'static str, DisplacementVector)> {
    let (n, t, m) = (params.n(), params.t(), params.modes());
    let hot = default_fixed_amp(params);
    let clean = DisplacementVector::zeros(m);
    let mut trap = vec![Complex64::new(0.0, 0.0); m];
    trap[n] = hot;
    let mut message = vec![Complex64::new(0.0, 0.0); m];
    for slot in message.iter_mut().take(t + 1) {
        *slot = hot;
    }
    vec![
        ("clean", clean),
        ("hot_trap", DisplacementVector::new(trap).expect("finite")),
        ("hot_message", DisplacementVector::new(message).expect("finite")),
    ]
}

/// One summary per scenario with rows `G` (accept rate), `I` (indicator
/// rate) and `G-I` (traps pass on uncorrectable noise).
pub fn run_event_table(params: &SchemeParams, trials: u64, seed: u64, threads: Option<usize>) -> Result<Vec<ExperimentSummary>> {
    event_table_scenarios(params)
        .into_iter()
        .map(|(name, layout)| {
            let cfg = ExperimentConfig::new(
                params.clone(),
                AttackSource::Layout { id: name.into(), layout },
                trials,
                seed,
            )
            .with_threads(threads);
            let mut s = attack_summary("events", &cfg)?;
            for row in &mut s.rows {
                row.estimand = match row.estimand.as_str() {
                    "accept_rate" => "G".into(),
                    "gminusi_rate" => "G-I".into(),
                    "indicator_rate" => "I".into(),
                    other => other.into(),
                };
            }
            Ok(s)
        })
        .collect()
}

/// Exact placement probabilities `p_exact(u)` for `u = 0..=n` and the bound
/// `eta`, as rows with zero stderr.
pub fn bounds_table(n: usize, z: usize, t: usize) -> Result<ExperimentSummary> {
    if n == 0 || 2 * t + 1 > n {
        return Err(Error::InvalidParams(format!("need n >= 2t + 1, got n = {n}, t = {t}")));
    }
    let eta = eta_bound(n, z, t)?;
    let mut rows: Vec<EstimateRow> = (0..=n)
        .map(|u| {
            let p = p_exact(u, n, z);
            EstimateRow::new(format!("p_exact_u{u}"), p, 0.0, Some(p))
        })
        .collect();
    rows.push(EstimateRow::new("eta_bound", eta, 0.0, Some(eta)));
    Ok(ExperimentSummary {
        experiment: "bounds".into(),
        n: Some(n),
        z: Some(z),
        t: Some(t),
        r: None,
        eps: None,
        delta: None,
        qotp_std: None,
        attack_id: String::new(),
        trials: 0,
        seed: 0,
        rows,
        wallclock_s: 0.0,
    })
}

pub const CSV_HEADER: [&str; 17] = [
    "experiment", "n", "z", "t", "r", "eps", "delta", "Delta", "attack_id", "trials", "seed",
    "estimand", "estimate", "stderr", "analytic", "abs_err", "wallclock_s",
];

/// Writes the header and one row per estimand. The `wallclock_s` column is
/// left empty unless `timing` is set, so default output is reproducible.
pub fn write_csv<W: Write>(out: W, summaries: &[ExperimentSummary], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_f = |v: Option<f64>| v.map(format_decimal).unwrap_or_default();
    for s in summaries {
        for r in &s.rows {
            w.write_record([
                s.experiment.clone(),
                opt_u(s.n),
                opt_u(s.z),
                opt_u(s.t),
                opt_f(s.r),
                opt_f(s.eps),
                opt_f(s.delta),
                opt_f(s.qotp_std),
                s.attack_id.clone(),
                s.trials.to_string(),
                s.seed.to_string(),
                r.estimand.clone(),
                format_decimal(r.estimate),
                format_decimal(r.stderr),
                opt_f(r.analytic),
                opt_f(r.abs_err),
                if timing { format_decimal(s.wallclock_s) } else { String::new() },
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(summaries: &[ExperimentSummary], timing: bool) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, summaries, timing)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// `printf("%.12g")`-style rendering: 12 significant digits, trailing zeros
/// dropped, scientific notation outside `1e-4 <= |x| < 1e12`.
pub fn format_decimal(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (11 - exp) as usize, x)).to_string()
    }
}

/// `re+imi` with both parts in [`format_decimal`] form.
pub fn format_complex(c: ComplexAmplitude) -> String {
    let im = format_decimal(c.im);
    if im.starts_with('-') {
        format!("{}{im}i", format_decimal(c.re))
    } else {
        format!("{}+{im}i", format_decimal(c.re))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Keys accepted in experiment config files.
pub const CONFIG_KEYS: &[&str] = &[
    "n", "z", "t", "r", "eps", "delta", "Delta", "trials", "seed", "attack-file", "attack-gen",
    "u", "amp", "axis", "values", "out", "threads", "beta", "beta-prime", "beta-diff",
    "experiment", "estimands", "timing",
];

/// Parses flat `key = value` text. `#` starts a comment; blank lines are
/// skipped; keys must come from [`CONFIG_KEYS`] and appear at most once.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno + 1, msg };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(err(format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(err(format!("key {key:?} has no value")));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(err(format!("key {key:?} given twice")));
        }
    }
    Ok(out)
}
