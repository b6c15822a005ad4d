use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pointloc::harness::{
    emit_report, gen_instance, random_unit, run_experiment, ExperimentConfig, ExperimentReport, Family, FamilyParams,
    Instance, Mode,
};
use pointloc::learners::{active_learn_halfspace, boost};
use pointloc::seed::SEED_ENV;
use pointloc::verification::zero_error_locate;
use pointloc::{LearnerConfig, QueryOracle, Sign, SignOracle, Streams};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pointloc", version, about = "Point location against a hidden hyperplane with sign queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Root seed for every random choice.
    #[arg(long, env = SEED_ENV, default_value_t = pointloc::seed::DEFAULT_SEED)]
    seed: u64,
    /// Use the asymptotic parameter formulas instead of the practical defaults.
    #[arg(long)]
    theory_constants: bool,
}

impl Common {
    fn learner(&self) -> LearnerConfig {
        if self.theory_constants {
            LearnerConfig::theory()
        } else {
            LearnerConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as JSON.
    Gen {
        #[arg(long, default_value = "uniform-sphere")]
        family: Family,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Label every point of one instance and check against the planted hyperplane.
    Locate {
        /// Instance JSON; generated from --family/--d/--n when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "uniform-sphere")]
        family: Family,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value = "zero")]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Labels as a JSON array of -1/0/1.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep trials over dimensions and sizes and write CSV/JSON reports.
    Bench {
        #[arg(long, default_value = "uniform-sphere")]
        family: Family,
        #[arg(long, value_delimiter = ',', default_value = "4,8")]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "500")]
        n: Vec<usize>,
        #[arg(long, default_value = "bounded")]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value = "pointloc-report")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Active halfspace learning on the uniform sphere with held-out error.
    Active {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Per-trial results as JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Quick end-to-end smoke test of every learner.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Invariant(String),
    Config(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<pointloc::Error>(),
                Some(
                    pointloc::Error::InvalidInput(_)
                        | pointloc::Error::DimensionMismatch { .. }
                        | pointloc::Error::SizeLimitExceeded { .. }
                        | pointloc::Error::Io(_)
                )
            ) || c.downcast_ref::<std::io::Error>().is_some()
        });
        if config {
            Failure::Config(format!("{e:#}"))
        } else {
            Failure::Invariant(format!("{e:#}"))
        }
    }
}

fn write_or_print(out: Option<&PathBuf>, body: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn sign_value(s: Sign) -> i8 {
    match s {
        Sign::Neg => -1,
        Sign::Zero => 0,
        Sign::Pos => 1,
    }
}

fn locate(
    inst: &Instance,
    mode: Mode,
    delta: f64,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> anyhow::Result<(Vec<Sign>, usize, u64)> {
    let mut pb = inst.problem()?;
    let labels = match mode {
        Mode::Zero => zero_error_locate(&mut pb.oracle, &pb.points, cfg, streams)?.labels,
        Mode::Bounded => boost(&mut pb.oracle, &pb.points, delta, cfg, streams)?.labels,
    };
    let errors = pb.errors(&labels);
    Ok((labels, errors, pb.oracle.queries()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { family, d, n, out, common } => {
            let mut s = Streams::new(common.seed);
            let inst = gen_instance(family, d, n, &FamilyParams::default(), &mut s).map_err(anyhow::Error::from)?;
            write_or_print(out.as_ref(), &inst.to_json())?;
        }
        Command::Locate { input, family, d, n, mode, delta, out, common } => {
            let mut s = Streams::new(common.seed);
            let inst = match input {
                Some(p) => {
                    let body = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Instance::from_json(&body).map_err(anyhow::Error::from)?
                }
                None => gen_instance(family, d, n, &FamilyParams::default(), &mut s).map_err(anyhow::Error::from)?,
            };
            let (labels, errors, queries) = locate(&inst, mode, delta, &common.learner(), &mut s)?;
            if let Some(p) = &out {
                let values: Vec<i8> = labels.iter().map(|&l| sign_value(l)).collect();
                write_or_print(Some(p), &serde_json::to_string(&values).map_err(anyhow::Error::from)?)?;
            }
            println!(
                "{}",
                json!({ "mode": mode.to_string(), "d": inst.d, "n": inst.n, "queries_total": queries, "errors_vs_truth": errors })
            );
            if mode == Mode::Zero && errors > 0 {
                return Err(Failure::Invariant(format!("zero-error mode emitted {errors} wrong labels")));
            }
        }
        Command::Bench { family, d, n, mode, delta, trials, out, common } => {
            let cfg = ExperimentConfig {
                family,
                dims: d,
                sizes: n,
                delta,
                mode,
                trials,
                seed: common.seed,
                learner: common.learner(),
                params: FamilyParams::default(),
            };
            let records = run_experiment(&cfg).map_err(anyhow::Error::from)?;
            let report = ExperimentReport::new(&records, Some(&cfg));
            emit_report(&report, &out).map_err(anyhow::Error::from)?;
            for row in &report.summary {
                println!(
                    "{} {} d={} n={} trials={} median_queries={:.0} error_runs={:.3} (delta {})",
                    row.family,
                    row.mode,
                    row.d,
                    row.n,
                    row.trials,
                    row.median_queries,
                    row.error_run_fraction,
                    row.delta
                );
            }
            let bad = report.zero_error_violations();
            if bad > 0 {
                return Err(Failure::Invariant(format!("{bad} zero-error runs emitted wrong labels")));
            }
        }
        Command::Active { d, epsilon, delta, trials, out, common } => {
            if d == 0 || !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
                return Err(Failure::Config("need d >= 1, epsilon and delta in (0, 1)".into()));
            }
            let cfg = common.learner();
            let root = Streams::new(common.seed);
            let mut rows = Vec::new();
            for t in 0..trials {
                let mut s = root.child(t as u64);
                let mut rng = s.rng("cli_active");
                let h = random_unit(&mut rng, d);
                let mut oracle = QueryOracle::new(h.clone());
                let out = active_learn_halfspace(&mut oracle, |r| random_unit(r, d), epsilon, delta, &cfg, &mut s)
                    .map_err(anyhow::Error::from)?;
                let test = 10_000;
                let wrong = (0..test)
                    .filter(|_| {
                        let x = random_unit(&mut rng, d);
                        Sign::of(x.dot(&out.hypothesis)) != Sign::of(x.dot(&h))
                    })
                    .count();
                rows.push(json!({
                    "trial": t,
                    "samples": out.samples,
                    "distinct": out.distinct,
                    "queries_total": out.queries,
                    "heldout_error": wrong as f64 / test as f64,
                }));
            }
            write_or_print(out.as_ref(), &serde_json::to_string_pretty(&rows).map_err(anyhow::Error::from)?)?;
        }
        Command::Selftest { common } => {
            let cfg = common.learner();
            let root = Streams::new(common.seed);
            let mut failed = 0;
            for (k, fam) in Family::ALL.into_iter().enumerate() {
                let mut s = root.child(k as u64);
                let inst = gen_instance(fam, 4, 200, &FamilyParams::default(), &mut s).map_err(anyhow::Error::from)?;
                for mode in [Mode::Zero, Mode::Bounded] {
                    let res = locate(&inst, mode, 0.1, &cfg, &mut s);
                    let ok = match &res {
                        Ok((_, e, _)) => *e == 0 || mode == Mode::Bounded,
                        Err(_) => false,
                    };
                    failed += usize::from(!ok);
                    match res {
                        Ok((_, e, q)) => {
                            println!("{fam} {mode}: {} errors={e} queries={q}", if ok { "ok" } else { "FAIL" })
                        }
                        Err(e) => println!("{fam} {mode}: FAIL {e:#}"),
                    }
                }
            }
            if failed > 0 {
                return Err(Failure::Invariant(format!("{failed} selftest checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
