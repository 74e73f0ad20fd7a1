use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use xos_nsw::exact::{brute_force_capped_sw, brute_force_nsw, DEFAULT_BUDGET};
use xos_nsw::gadgets::{
    build_equicovering, construct_equicovering, gap_report, verify_equicovering, Equicovering,
    VerifyMode, DEFAULT_SAMPLES,
};
use xos_nsw::generate::{generate, GenParams, GeneratorKind};
use xos_nsw::io::{emit_instance, parse_instance, write_csv, BenchRow, InstanceFile, Metadata, SolveReport};
use xos_nsw::solver::{solve_with, SolveOptions};
use xos_nsw::suites::{run_suite, Suite, SuiteParams};

/// Approximate Nash social welfare for XOS valuations.
#[derive(Parser)]
#[command(name = "xos-nsw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the approximation algorithm and write a report.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also hand out goods the algorithm leaves unallocated.
        #[arg(long)]
        topup: bool,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance exactly by enumeration.
    Exact {
        #[arg(long)]
        instance: PathBuf,
        /// Maximize capped social welfare instead of NSW.
        #[arg(long, requires = "betas")]
        capped: bool,
        /// Comma-separated scaling factors, one per agent.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
    },
    /// Run a randomized self-check.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build and check an equicovering, optionally tabulating the NSW gap.
    Gadget(GadgetArgs),
    /// Solve every instance in a directory under several seeds.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random instance.
    Generate {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        distractors: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long)]
        disjoint: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Matchhigh,
    Movingknife,
    Cappedwelfare,
    Rematch,
    Concentration,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Matchhigh => Suite::Matchhigh,
            SuiteArg::Movingknife => Suite::Movingknife,
            SuiteArg::Cappedwelfare => Suite::Cappedwelfare,
            SuiteArg::Rematch => Suite::Rematch,
            SuiteArg::Concentration => Suite::Concentration,
        }
    }
}

#[derive(Args)]
struct GadgetArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `exhaustive` or `sampled=K`. Rebuilds with fresh seeds until the
    /// check passes or the attempts run out.
    #[arg(long)]
    verify: Option<String>,
    #[arg(long, default_value_t = 20)]
    attempts: u64,
    /// Sample multi-disjointness inputs and report the NSW gap.
    #[arg(long)]
    gap: bool,
    #[arg(long, default_value_t = 8)]
    trials: usize,
    /// Write the gap rows as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Why a command did not succeed.
enum Failure {
    /// A check ran and did not hold.
    Check(String),
    /// Bad input or arguments.
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<xos_nsw::Error> for Failure {
    fn from(e: xos_nsw::Error) -> Self {
        Failure::Usage(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_instance(path: &Path) -> Result<InstanceFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Solve {
            instance,
            seed,
            topup,
            out,
        } => {
            let file = read_instance(&instance)?;
            let options = SolveOptions { topup };
            let (q, trace) = solve_with(&file.instance, seed, options)?;
            let report = SolveReport::new(&file, &q, trace, options);
            write_output(out.as_deref(), &report.emit())?;
            eprintln!("nsw {}", report.nsw);
            Ok(())
        }
        Command::Exact {
            instance,
            capped,
            betas,
        } => {
            let file = read_instance(&instance)?;
            let (alloc, value) = if capped {
                brute_force_capped_sw(&file.instance, &betas)?
            } else {
                brute_force_nsw(&file.instance)?
            };
            for (i, b) in alloc.bundles.iter().enumerate() {
                let goods: Vec<String> = b.iter().map(usize::to_string).collect();
                println!("agent {i}: {}", goods.join(" "));
            }
            println!("{} {value}", if capped { "capped_sw" } else { "nsw" });
            Ok(())
        }
        Command::Verify {
            suite,
            n,
            trials,
            seed,
        } => {
            let report = run_suite(suite.into(), SuiteParams { n, trials, seed })?;
            for note in &report.notes {
                println!("{note}");
            }
            for f in &report.failures {
                println!("FAIL {f}");
            }
            println!(
                "suite {}: {} checks, {} skipped, {} failures",
                report.suite,
                report.checks,
                report.skipped,
                report.failures.len()
            );
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Check(format!("suite {}", report.suite)))
            }
        }
        Command::Gadget(args) => gadget(args),
        Command::Bench { dir, seeds, out } => bench(&dir, seeds, out.as_deref()),
        Command::Generate {
            kind,
            n,
            m,
            k,
            distractors,
            r,
            disjoint,
            seed,
            out,
        } => {
            let kind: GeneratorKind = kind.parse()?;
            let params = GenParams {
                n,
                m,
                k,
                distractors,
                r,
                disjoint,
                ..GenParams::default()
            };
            let g = generate(kind, &params, seed)?;
            let file = InstanceFile {
                instance: g.instance,
                metadata: Some(Metadata {
                    name: None,
                    generator: Some(kind.name().into()),
                    seed: Some(seed),
                }),
            };
            write_output(out.as_deref(), &emit_instance(&file))?;
            Ok(())
        }
    }
}

fn parse_mode(text: &str, seed: u64) -> Result<VerifyMode> {
    if text == "exhaustive" {
        return Ok(VerifyMode::exhaustive());
    }
    if text == "sampled" {
        return Ok(VerifyMode::Sampled {
            samples: DEFAULT_SAMPLES,
            seed,
        });
    }
    let k = text
        .strip_prefix("sampled=")
        .ok_or_else(|| anyhow!("--verify expects `exhaustive` or `sampled=K`, got `{text}`"))?;
    Ok(VerifyMode::Sampled {
        samples: k.parse().with_context(|| format!("bad sample count `{k}`"))?,
        seed,
    })
}

fn gadget(args: GadgetArgs) -> std::result::Result<(), Failure> {
    if args.n == 0 || args.m % args.n != 0 {
        return Err(Failure::Usage(anyhow!("--n must divide --m")));
    }
    let e: Equicovering = match &args.verify {
        None => build_equicovering(args.m, args.n, args.r, args.seed)?,
        Some(mode) => {
            let mode = parse_mode(mode, args.seed)?;
            match construct_equicovering(args.m, args.n, args.r, args.eps, mode, args.seed, args.attempts)? {
                Some((e, v, attempt)) => {
                    println!(
                        "verified after {} attempt(s): worst union {} <= bound {} over {} tuples",
                        attempt + 1,
                        v.worst_size,
                        v.bound,
                        v.tuples_checked
                    );
                    e
                }
                None => {
                    let e = build_equicovering(args.m, args.n, args.r, args.seed)?;
                    let v = verify_equicovering(&e, args.eps, mode)?;
                    return Err(Failure::Check(format!(
                        "no equicovering verified in {} attempts; first attempt worst union {} > bound {} at {:?}",
                        args.attempts, v.worst_size, v.bound, v.worst
                    )));
                }
            }
        }
    };
    for (s, parts) in e.partitions.iter().enumerate() {
        let parts: Vec<String> = parts
            .iter()
            .map(|p| format!("{{{}}}", p.iter().map(usize::to_string).collect::<Vec<_>>().join(",")))
            .collect();
        println!("partition {s}: {}", parts.join(" "));
    }
    if args.gap {
        let report = gap_report(&e, args.eps, args.trials, args.seed)?;
        if let Some(path) = &args.csv {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(file, &report.rows)?;
        }
        println!("intersecting {}", report.intersecting_ratio);
        println!("threshold {}", report.threshold);
        println!("gap {}", report.gap);
    }
    Ok(())
}

fn bench(dir: &Path, seeds: u64, out: Option<&Path>) -> std::result::Result<(), Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(anyhow!("no .json instances in {}", dir.display())));
    }
    let files = paths
        .iter()
        .map(|p| read_instance(p))
        .collect::<Result<Vec<_>>>()?;
    let opts: Vec<Option<f64>> = files
        .par_iter()
        .map(|f| {
            let inst = &f.instance;
            if (inst.n() as f64).powi(inst.m() as i32) <= DEFAULT_BUDGET as f64 {
                brute_force_nsw(inst).ok().map(|(_, opt)| opt)
            } else {
                None
            }
        })
        .collect();
    let jobs: Vec<(usize, u64)> = (0..files.len())
        .flat_map(|i| (0..seeds).map(move |s| (i, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (q, _) = solve_with(&files[i].instance, seed, SolveOptions::default())?;
            let nsw = xos_nsw::solver::nsw(&files[i].instance, &q);
            let opt = opts[i];
            Ok(BenchRow {
                instance: paths[i]
                    .file_name()
                    .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
                seed,
                nsw,
                opt,
                ratio: opt.filter(|&o| o > 0.0).map(|o| nsw / o),
            })
        })
        .collect::<xos_nsw::Result<Vec<_>>>()?;
    match out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(file, &rows)?;
        }
        None => write_csv(io::stdout(), &rows)?,
    }
    Ok(())
}
