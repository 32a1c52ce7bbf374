use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use cvauth::adversary::AttackSpec;
use cvauth::analytics::SchemeParams;
use cvauth::harness::{
    bounds_table, parse_config, run_attack, run_no_attack, run_pipeline_equivalence, run_sweep,
    run_twirl_check, write_csv, AttackSource, Estimand, ExperimentConfig, ExperimentKind,
    ExperimentSummary,
};
use num_complex::Complex64;

/// Monte Carlo laboratory for a continuous-variable trap-code authentication scheme.
#[derive(Parser, Debug)]
#[command(name = "cvauth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Accept rate of untampered ciphertexts.
    Noattack(Opts),
    /// Accept and G-I event rates under an attack.
    Attack(Opts),
    /// Displacement twirl: Monte Carlo phase average against the closed form.
    Twirl(Opts),
    /// Repeat an experiment along one parameter axis.
    Sweep(Opts),
    /// Padded versus pad-free pipeline accept rates.
    Equiv(Opts),
    /// Placement probabilities and the security bound (no sampling).
    Bounds(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// Message modes.
    #[arg(long)]
    n: Option<String>,
    /// Trap pairs (z X-traps and z P-traps).
    #[arg(long)]
    z: Option<String>,
    /// Correctable displacements of the code.
    #[arg(long)]
    t: Option<String>,
    /// Squeezing parameter of the traps.
    #[arg(long)]
    r: Option<String>,
    /// Trap acceptance half-width.
    #[arg(long)]
    eps: Option<String>,
    /// Hamming-weight threshold; defaults to eps/sqrt(2).
    #[arg(long)]
    delta: Option<String>,
    /// Standard deviation of the one-time-pad displacements.
    #[arg(long = "Delta", value_name = "DELTA")]
    qotp_std: Option<String>,
    /// Monte Carlo trials (samples for `twirl`).
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Attack mixture file.
    #[arg(long = "attack-file")]
    attack_file: Option<String>,
    /// Attack generator: identity, fixed or random.
    #[arg(long = "attack-gen")]
    attack_gen: Option<String>,
    /// Displaced wires for the fixed and random generators.
    #[arg(long)]
    u: Option<String>,
    /// Generator amplitude: a magnitude, or a complex value such as 3+3i.
    #[arg(long)]
    amp: Option<String>,
    /// Sweep axis: r, eps, z, u, Delta or trials.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    values: Option<String>,
    /// Experiment repeated by `sweep`: noattack, attack or equiv.
    #[arg(long)]
    experiment: Option<String>,
    /// Comma-separated estimands.
    #[arg(long)]
    estimands: Option<String>,
    /// Output CSV path; `-` or absent writes to stdout.
    #[arg(long)]
    out: Option<String>,
    /// Config file of `key = value` lines; explicit flags take precedence.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Fill the wallclock_s column.
    #[arg(long)]
    timing: bool,
    /// Twirl: first displacement (complex, default 0).
    #[arg(long)]
    beta: Option<String>,
    /// Twirl: second displacement (complex).
    #[arg(long = "beta-prime")]
    beta_prime: Option<String>,
    /// Twirl: beta' - beta (complex); alternative to --beta-prime.
    #[arg(long = "beta-diff")]
    beta_diff: Option<String>,
}

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

struct Settings(BTreeMap<String, String>);

impl Settings {
    fn gather(opts: &Opts) -> anyhow::Result<Self> {
        let mut map = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| usage(format!("config {path}: {e}")))?;
                parse_config(&text).map_err(|e| usage(format!("config {path}: {e}")))?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("n", &opts.n),
            ("z", &opts.z),
            ("t", &opts.t),
            ("r", &opts.r),
            ("eps", &opts.eps),
            ("delta", &opts.delta),
            ("Delta", &opts.qotp_std),
            ("trials", &opts.trials),
            ("seed", &opts.seed),
            ("attack-file", &opts.attack_file),
            ("attack-gen", &opts.attack_gen),
            ("u", &opts.u),
            ("amp", &opts.amp),
            ("axis", &opts.axis),
            ("values", &opts.values),
            ("experiment", &opts.experiment),
            ("estimands", &opts.estimands),
            ("out", &opts.out),
            ("threads", &opts.threads),
            ("beta", &opts.beta),
            ("beta-prime", &opts.beta_prime),
            ("beta-diff", &opts.beta_diff),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        if opts.timing {
            map.insert("timing".into(), "true".into());
        }
        Ok(Self(map))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| usage(format!("--{key}: cannot parse {v:?}"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> anyhow::Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> anyhow::Result<T> {
        self.get(key)?.ok_or_else(|| usage(format!("missing required --{key}")))
    }

    fn complex(&self, key: &str) -> anyhow::Result<Option<Complex64>> {
        self.get::<Complex64>(key)
    }

    fn timing(&self) -> anyhow::Result<bool> {
        self.or("timing", false)
    }

    fn threads(&self) -> anyhow::Result<Option<usize>> {
        match self.get::<usize>("threads")? {
            Some(0) => Err(usage("--threads must be at least 1")),
            t => Ok(t),
        }
    }

    /// `(n, z, t)` with `z` and `t` defaulting to the smallest trap count
    /// and the largest correctable weight allowed for `n`.
    fn code(&self) -> anyhow::Result<(usize, usize, usize)> {
        let n: usize = self.require("n")?;
        let z = self.or("z", n / 2 + 1)?;
        let t = self.or("t", n.saturating_sub(1) / 2)?;
        Ok((n, z, t))
    }

    fn params(&self) -> anyhow::Result<SchemeParams> {
        let (n, z, t) = self.code()?;
        let mut p = SchemeParams::new(n, z, t, self.or("r", 8.0)?, self.or("eps", 0.5)?)
            .map_err(|e| usage(e.to_string()))?;
        if let Some(d) = self.get::<f64>("delta")? {
            p = p.with_delta(d).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(d) = self.get::<f64>("Delta")? {
            p = p.with_qotp_std(d).map_err(|e| usage(e.to_string()))?;
        }
        Ok(p)
    }

    fn attack(&self, params: &SchemeParams) -> anyhow::Result<AttackSource> {
        match (self.raw("attack-file"), self.raw("attack-gen")) {
            (Some(_), Some(_)) => Err(usage("give --attack-file or --attack-gen, not both")),
            (Some(path), None) => {
                let spec = AttackSpec::load(path).with_context(|| format!("loading attack file {path}"))?;
                let id = Path::new(path)
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.to_string());
                Ok(AttackSource::Spec { id, spec })
            }
            (None, gen) => {
                let u = self.get::<usize>("u")?;
                let amp = self.raw("amp");
                match gen.unwrap_or(if u.is_some() { "fixed" } else { "identity" }) {
                    "identity" => Ok(AttackSource::Identity),
                    "fixed" => {
                        let amp = match amp {
                            None => None,
                            Some(a) if a.contains('i') => Some(self.require::<Complex64>("amp")?),
                            Some(_) => Some(Complex64::from_polar(self.require::<f64>("amp")?, FRAC_PI_4)),
                        };
                        Ok(AttackSource::FixedModes { u: u.unwrap_or(params.t() + 1), amp })
                    }
                    "random" => Ok(AttackSource::RandomModes {
                        u: u.unwrap_or(params.t() + 1),
                        amp: self.get::<f64>("amp")?,
                    }),
                    other => Err(usage(format!("unknown attack generator {other:?}"))),
                }
            }
        }
    }

    fn experiment(&self, params: &SchemeParams, default_outputs: &[Estimand]) -> anyhow::Result<ExperimentConfig> {
        let attack = self.attack(params)?;
        let outputs = match self.raw("estimands") {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<Estimand>().map_err(|e| usage(e.to_string())))
                .collect::<anyhow::Result<Vec<_>>>()?,
            None => default_outputs.to_vec(),
        };
        let cfg = ExperimentConfig::new(params.clone(), attack, self.or("trials", 10_000)?, self.or("seed", 0)?)
            .with_outputs(outputs)
            .with_threads(self.threads()?);
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn warn_tuning(params: &SchemeParams) {
    for v in params.tuning_violations() {
        eprintln!("warning: {v}");
    }
}

fn execute(command: &Command) -> anyhow::Result<(Vec<ExperimentSummary>, Settings)> {
    let (opts, name) = match command {
        Command::Noattack(o) => (o, "noattack"),
        Command::Attack(o) => (o, "attack"),
        Command::Twirl(o) => (o, "twirl"),
        Command::Sweep(o) => (o, "sweep"),
        Command::Equiv(o) => (o, "equiv"),
        Command::Bounds(o) => (o, "bounds"),
    };
    let s = Settings::gather(opts)?;
    let rates = [Estimand::AcceptRate, Estimand::GminusiRate];
    let summaries = match name {
        "bounds" => {
            let (n, z, t) = s.code()?;
            vec![bounds_table(n, z, t).map_err(|e| usage(e.to_string()))?]
        }
        "twirl" => {
            let beta = s.complex("beta")?.unwrap_or_default();
            let beta_p = match (s.complex("beta-prime")?, s.complex("beta-diff")?) {
                (Some(_), Some(_)) => return Err(usage("give --beta-prime or --beta-diff, not both")),
                (Some(bp), None) => bp,
                (None, d) => beta + d.unwrap_or_default(),
            };
            let samples: u64 = s.or("trials", 1_000_000)?;
            let qotp_std: f64 = s.or("Delta", 1.0)?;
            if samples == 0 || !(qotp_std > 0.0 && qotp_std.is_finite()) {
                return Err(usage("twirl needs --trials >= 1 and a positive --Delta"));
            }
            vec![run_twirl_check(beta, beta_p, qotp_std, samples, s.or("seed", 0)?, s.threads()?)?]
        }
        "noattack" => {
            let p = s.params()?;
            warn_tuning(&p);
            vec![run_no_attack(&s.experiment(&p, &[Estimand::AcceptRate])?)?]
        }
        "attack" => {
            let p = s.params()?;
            warn_tuning(&p);
            vec![run_attack(&s.experiment(&p, &rates)?)?]
        }
        "equiv" => {
            let p = s.params()?;
            warn_tuning(&p);
            vec![run_pipeline_equivalence(&s.experiment(&p, &rates)?)?]
        }
        "sweep" => {
            let p = s.params()?;
            warn_tuning(&p);
            let cfg = s.experiment(&p, &rates)?;
            let axis: String = s.require("axis")?;
            let values = match s.raw("values") {
                None | Some("") => Vec::new(),
                Some(list) => list
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| usage(format!("--values: cannot parse {v:?}")))
                    })
                    .collect::<anyhow::Result<Vec<f64>>>()?,
            };
            let kind = match s.raw("experiment") {
                Some(k) => k.parse::<ExperimentKind>().map_err(|e| usage(e.to_string()))?,
                None if matches!(cfg.attack, AttackSource::Identity) && axis != "u" => ExperimentKind::NoAttack,
                None => ExperimentKind::Attack,
            };
            run_sweep(&cfg, kind, &axis, &values).map_err(|e| usage(e.to_string()))?
        }
        _ => unreachable!(),
    };
    Ok((summaries, s))
}

fn emit(summaries: &[ExperimentSummary], s: &Settings) -> anyhow::Result<()> {
    let timing = s.timing()?;
    for summary in summaries {
        eprint!("{summary}");
    }
    match s.raw("out") {
        None | Some("-") => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_csv(&mut lock, summaries, timing)?;
            lock.flush()?;
        }
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {path}"))?;
            write_csv(io::BufWriter::new(file), summaries, timing)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli.command).and_then(|(summaries, s)| emit(&summaries, &s)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        Settings(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    #[test]
    fn code_defaults() {
        assert_eq!(settings(&[("n", "3")]).code().unwrap(), (3, 2, 1));
        assert_eq!(settings(&[("n", "5")]).code().unwrap(), (5, 3, 2));
        let err = settings(&[]).code().unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
    }

    #[test]
    fn amp_forms() {
        let p = SchemeParams::new(3, 2, 1, 8.0, 0.5).unwrap();
        let real = settings(&[("attack-gen", "fixed"), ("u", "2"), ("amp", "2")]).attack(&p).unwrap();
        match real {
            AttackSource::FixedModes { u: 2, amp: Some(a) } => assert!((a.norm() - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let cplx = settings(&[("u", "1"), ("amp", "3-1i")]).attack(&p).unwrap();
        assert_eq!(cplx, AttackSource::FixedModes { u: 1, amp: Some(Complex64::new(3.0, -1.0)) });
        assert_eq!(settings(&[]).attack(&p).unwrap(), AttackSource::Identity);
        assert!(settings(&[("attack-gen", "bogus")]).attack(&p).is_err());
    }

    #[test]
    fn invalid_params_are_usage_errors() {
        let err = settings(&[("n", "3"), ("z", "1")]).params().unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
        let err = settings(&[("n", "x")]).params().unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some());
    }
}
