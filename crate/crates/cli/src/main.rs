//! `qubolin` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage, 3 validation or
//! verification failure, 4 resource limit.

mod manifest;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use qubolin::experiments::{self, GapConfig, InstanceClass, WallClock};
use qubolin::mkp::{self, MkpInstance, QuboEncoding};
use qubolin::ordering::{extract_order_dense, extract_order_sparse, find_violation, OrderDag};
use qubolin::solver::{self, AnnealSchedule, SampleSet};
use qubolin::synth::{self, SynthParams};
use qubolin::{linearize, Error, QuboMatrix};

use manifest::{sidecar, ExperimentManifest};

#[derive(Parser)]
#[command(
    name = "qubolin",
    version,
    about = "Variable ordering and linearization for QUBO problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Extract a certified variable order from a QUBO.
    Order {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only score pairs that share a coupling.
        #[arg(long)]
        sparse: bool,
    },
    /// Linearize a QUBO along an order; also writes `<out>.report.json`.
    Linearize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        order: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip certification, e.g. for knapsack dominance orders.
        #[arg(long)]
        no_verify: bool,
    },
    /// Encode a knapsack instance as a QUBO; also writes `<out>.layout.json`
    /// and the dominance order as `<out>.order.json`.
    Encode {
        #[arg(long)]
        mkp: PathBuf,
        /// Instance index within the file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        linearize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample low-energy assignments of a QUBO.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Sa)]
        method: Method,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults scale with the largest coefficient.
        #[arg(long, requires = "beta_end")]
        beta_start: Option<f64>,
        #[arg(long, requires = "beta_start")]
        beta_end: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode knapsack samples back to item selections.
    Decode {
        #[arg(long)]
        mkp: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid and write CSV plus a manifest.
    #[command(subcommand)]
    Exp(ExpCommand),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Dense ordered family.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        s: u32,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entries uniform on {-1, 0, 1}.
    Hard {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Knapsack instances in OR-Library format.
    Mkp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances in the file; instance `k` uses seed `seed + k`.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExpCommand {
    /// Off-diagonal reduction on the synthetic family.
    OdReduction {
        #[arg(long, default_value_t = 180)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        s: u32,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1.0,1.5,2.0")]
        p: Vec<f64>,
        /// Comma-separated seeds or ranges such as `1-10`.
        #[arg(long, default_value = "1-10", value_parser = parse_seeds)]
        seeds: Seeds,
        /// Rows CSV; per-p means go to `<out>.means.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runtime scaling of dense order extraction.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        sizes: Vec<usize>,
        /// `hard` or `p=<value>`.
        #[arg(long, value_delimiter = ',', default_value = "p=2,hard")]
        classes: Vec<InstanceClass>,
        #[arg(long, default_value = "1-5", value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long, default_value_t = 10)]
        s: u32,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Rows CSV; fitted exponents go to `<out>.fits.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimality gaps of annealed plain and linearized knapsack encodings.
    MkpGap(MkpGapArgs),
}

#[derive(Args)]
struct MkpGapArgs {
    /// OR-Library files; every instance in each file is used.
    #[arg(long, num_args = 1.., conflicts_with_all = ["n", "m", "alpha", "count"])]
    mkp: Vec<PathBuf>,
    /// Generate instances instead of reading them.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Seed of the first generated instance.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = GapConfig::default().sweeps)]
    sweeps: usize,
    #[arg(long, default_value_t = GapConfig::default().samples)]
    samples: usize,
    #[arg(long, default_value_t = GapConfig::default().beta_start)]
    beta_start: f64,
    #[arg(long, default_value_t = GapConfig::default().beta_end)]
    beta_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Sa,
    Brute,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(text: &str) -> std::result::Result<Seeds, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        let bad = || format!("invalid seed list entry {part:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(Seeds(seeds))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = configure_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {err:#}");
        return ExitCode::from(exit_code(&err));
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("QUBOLIN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "QUBOLIN_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidParameter(_) => 2,
                Error::TooLarge { .. } => 4,
                Error::Io(_) => 1,
                _ => 3,
            };
        }
    }
    1
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(g) => cmd_gen(g),
        Command::Order { input, out, sparse } => {
            let q = read_qubo(&input)?;
            let g = if sparse {
                extract_order_sparse(&q)
            } else {
                extract_order_dense(&q)
            };
            g.write_json(&out)?;
            println!("{} edges over {} variables", g.len(), g.n());
            Ok(())
        }
        Command::Linearize {
            input,
            order,
            out,
            no_verify,
        } => {
            let q = read_qubo(&input)?;
            let g = OrderDag::read_json(&order)
                .with_context(|| format!("reading {}", order.display()))?;
            if !no_verify {
                if let Some(violation) = find_violation(&q, &g)? {
                    return Err(Error::Verification(violation.to_string()).into());
                }
            }
            let (lin, report) = linearize(&q, &g)?;
            lin.write_json(&out)?;
            report.write_json(sidecar(&out, "report.json"))?;
            println!(
                "removed {} of {} off-diagonal terms",
                report.removed_count(),
                q.od_count()
            );
            Ok(())
        }
        Command::Encode {
            mkp,
            index,
            lambda,
            linearize,
            out,
        } => {
            let inst = read_instance(&mkp, index)?;
            let enc = if linearize {
                mkp::encode_linearized(&inst, lambda)?
            } else {
                mkp::encode_qubo(&inst, lambda)?
            };
            enc.qubo.write_json(&out)?;
            std::fs::write(sidecar(&out, "layout.json"), enc.layout_json()?)?;
            // dominance order over all variables, for `linearize --no-verify`
            let order = enc
                .order_used
                .clone()
                .unwrap_or_else(|| mkp::extract_mkp_order(&inst));
            order
                .lift(enc.qubo.n())?
                .write_json(sidecar(&out, "order.json"))?;
            println!(
                "{} variables ({} decision), {} off-diagonal terms",
                enc.qubo.n(),
                enc.layout.n_decision,
                enc.qubo.od_count()
            );
            Ok(())
        }
        Command::Solve {
            input,
            method,
            sweeps,
            restarts,
            seed,
            beta_start,
            beta_end,
            out,
        } => {
            let q = read_qubo(&input)?;
            let set = match method {
                Method::Brute => {
                    let r = solver::brute_force(&q)?;
                    SampleSet::from_assignments(&q, vec![r.argmin])?
                }
                Method::Sa => {
                    let mut schedule = AnnealSchedule::scaled_to(&q, sweeps, restarts, seed);
                    if let (Some(b0), Some(b1)) = (beta_start, beta_end) {
                        schedule.beta_start = b0;
                        schedule.beta_end = b1;
                    }
                    solver::simulated_anneal(&q, &schedule)?
                }
            };
            set.write_json(&out)?;
            let best = set.best_sample();
            println!("best energy {} ({})", best.energy, best.assignment);
            Ok(())
        }
        Command::Decode {
            mkp,
            index,
            layout,
            samples,
            out,
        } => cmd_decode(&mkp, index, &layout, &samples, &out),
        Command::Exp(e) => cmd_exp(e),
    }
}

fn read_qubo(path: &Path) -> Result<QuboMatrix> {
    QuboMatrix::read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path, index: usize) -> Result<MkpInstance> {
    let mut all = mkp::read_orlib(path).with_context(|| format!("reading {}", path.display()))?;
    if index >= all.len() {
        return Err(Error::InvalidParameter(format!(
            "{} holds {} instances, index {index} requested",
            path.display(),
            all.len()
        ))
        .into());
    }
    Ok(all.swap_remove(index))
}

fn cmd_gen(command: GenCommand) -> Result<()> {
    let (out, manifest) = match command {
        GenCommand::Synth { n, s, p, seed, out } => {
            let q = synth::generate_synthetic(&SynthParams { n, s, p, seed })?;
            q.write_json(&out)?;
            println!("{} variables, {} off-diagonal terms", q.n(), q.od_count());
            (
                out,
                ExperimentManifest::new(
                    json!({"kind": "synth", "n": n, "s": s, "p": p}),
                    vec![seed],
                ),
            )
        }
        GenCommand::Hard { n, seed, out } => {
            let q = synth::generate_hard(n, seed)?;
            q.write_json(&out)?;
            println!("{} variables, {} off-diagonal terms", q.n(), q.od_count());
            (
                out,
                ExperimentManifest::new(json!({"kind": "hard", "n": n}), vec![seed]),
            )
        }
        GenCommand::Mkp {
            n,
            m,
            alpha,
            seed,
            count,
            out,
        } => {
            let seeds: Vec<u64> = (0..count as u64).map(|k| seed + k).collect();
            let instances = seeds
                .iter()
                .map(|&s| mkp::generate_mkp(n, m, alpha, s))
                .collect::<qubolin::Result<Vec<_>>>()?;
            std::fs::write(&out, mkp::write_orlib(&instances))?;
            println!("{count} instances with n = {n}, m = {m}");
            (
                out,
                ExperimentManifest::new(
                    json!({"kind": "mkp", "n": n, "m": m, "alpha": alpha}),
                    seeds,
                ),
            )
        }
    };
    manifest.artifact(&out).write_beside(&out)?;
    Ok(())
}

#[derive(Serialize)]
struct DecodedSample {
    bits: String,
    energy: f64,
    selection: String,
    objective: u64,
    feasible: bool,
    excess: Vec<i64>,
}

#[derive(Serialize)]
struct DecodeReport {
    samples: Vec<DecodedSample>,
    feasible: usize,
    best_feasible_objective: Option<u64>,
    reference: Option<u64>,
    best_gap: Option<f64>,
}

fn cmd_decode(
    mkp_path: &Path,
    index: usize,
    layout: &Path,
    samples: &Path,
    out: &Path,
) -> Result<()> {
    let inst = read_instance(mkp_path, index)?;
    let (layout, lambda) = QuboEncoding::parse_layout(&std::fs::read_to_string(layout)?)?;
    let expected = mkp::SlackLayout::for_instance(&inst)?;
    if layout != expected {
        return Err(Error::InvalidInput("layout does not match the instance".into()).into());
    }
    // decoding reads only the layout; the plain encoding carries it
    let enc = mkp::encode_qubo(&inst, lambda)?;
    let set =
        SampleSet::read_json(samples).with_context(|| format!("reading {}", samples.display()))?;
    let mut decoded = Vec::with_capacity(set.samples.len());
    for s in &set.samples {
        let d = mkp::decode(&enc, &s.assignment, &inst)?;
        decoded.push(DecodedSample {
            bits: s.assignment.to_string(),
            energy: s.energy,
            selection: d.selection.to_string(),
            objective: d.objective,
            feasible: d.feasible,
            excess: d.excess,
        });
    }
    let best = decoded
        .iter()
        .filter(|d| d.feasible)
        .map(|d| d.objective)
        .max();
    let reference = match inst.best_known() {
        Some(b) => Some(b),
        None if inst.m() == 1 => Some(mkp::dp_knapsack_oracle(&inst)?.score),
        None => None,
    };
    let best_gap = match (reference, best) {
        (Some(r), Some(b)) => Some(mkp::optimality_gap(r as i64, b as i64)?),
        _ => None,
    };
    let report = DecodeReport {
        feasible: decoded.iter().filter(|d| d.feasible).count(),
        samples: decoded,
        best_feasible_objective: best,
        reference,
        best_gap,
    };
    std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} of {} samples feasible, best objective {:?}",
        report.feasible,
        report.samples.len(),
        best
    );
    Ok(())
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_exp(command: ExpCommand) -> Result<()> {
    match command {
        ExpCommand::OdReduction {
            n,
            s,
            p,
            seeds,
            out,
        } => {
            let res = experiments::od_reduction(n, s, &p, &seeds.0)?;
            let means_path = sidecar(&out, "means.csv");
            experiments::write_csv(csv_writer(&out)?, &res.rows)?;
            experiments::write_csv(csv_writer(&means_path)?, &res.means)?;
            for m in &res.means {
                println!(
                    "p = {:<4} |E| = {:8.1}  reduction {:5.1}%",
                    m.p, m.mean_edges, m.mean_reduction_pct
                );
            }
            ExperimentManifest::new(json!({"n": n, "s": s, "p": p}), seeds.0)
                .artifact(&out)
                .artifact(&means_path)
                .cells(res.cell_seconds)
                .write_beside(&out)?;
        }
        ExpCommand::Timing {
            sizes,
            classes,
            seeds,
            s,
            repeats,
            out,
        } => {
            let mut clock = WallClock { repeats };
            let res = experiments::time_extraction(&sizes, &classes, &seeds.0, s, &mut clock)?;
            let fits_path = sidecar(&out, "fits.csv");
            experiments::write_csv(csv_writer(&out)?, &res.rows)?;
            experiments::write_csv(csv_writer(&fits_path)?, &res.fits)?;
            for f in &res.fits {
                println!("{:<8} exponent {:.3}", f.class, f.exponent);
            }
            let labels: Vec<String> = classes.iter().map(ToString::to_string).collect();
            ExperimentManifest::new(
                json!({"sizes": sizes, "classes": labels, "s": s, "repeats": repeats}),
                seeds.0,
            )
            .artifact(&out)
            .artifact(&fits_path)
            .cells(res.rows.iter().map(|r| r.seconds).collect())
            .write_beside(&out)?;
        }
        ExpCommand::MkpGap(args) => cmd_mkp_gap(args)?,
    }
    Ok(())
}

fn cmd_mkp_gap(args: MkpGapArgs) -> Result<()> {
    let mut instances = Vec::new();
    let mut instance_seeds = Vec::new();
    if args.mkp.is_empty() {
        for k in 0..args.count as u64 {
            let seed = args.instance_seed + k;
            instances.push((
                format!("gen-n{}-m{}-s{seed}", args.n, args.m),
                mkp::generate_mkp(args.n, args.m, args.alpha, seed)?,
            ));
            instance_seeds.push(seed);
        }
    } else {
        for path in &args.mkp {
            let stem = path
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let all =
                mkp::read_orlib(path).with_context(|| format!("reading {}", path.display()))?;
            for (k, inst) in all.into_iter().enumerate() {
                instances.push((format!("{stem}-{k}"), inst));
            }
        }
    }
    if instances.is_empty() {
        return Err(anyhow!(Error::InvalidParameter(
            "no instances to run".into()
        )));
    }
    let config = GapConfig {
        lambda: args.lambda,
        sweeps: args.sweeps,
        samples: args.samples,
        beta_start: args.beta_start,
        beta_end: args.beta_end,
        seed: args.seed,
    };
    let res = experiments::mkp_gap(&instances, &config)?;
    experiments::write_csv(csv_writer(&args.out)?, &res.rows)?;
    for pair in res.rows.chunks(2) {
        println!(
            "{:<20} |E| = {:5}  baseline best gap {:>8}  linearized best gap {:>8}",
            pair[0].instance,
            pair[0].edges,
            fmt_gap(pair[0].best_gap),
            fmt_gap(pair[1].best_gap)
        );
    }
    let sources: Vec<String> = args.mkp.iter().map(|p| p.display().to_string()).collect();
    ExperimentManifest::new(
        json!({
            "config": config,
            "instances": instances.iter().map(|(name, _)| name).collect::<Vec<_>>(),
            "sources": sources,
            "generator": args.mkp.is_empty().then(|| json!({"n": args.n, "m": args.m, "alpha": args.alpha})),
            "instance_seeds": instance_seeds,
        }),
        vec![args.seed],
    )
    .artifact(&args.out)
    .cells(res.cell_seconds)
    .write_beside(&args.out)?;
    Ok(())
}

fn fmt_gap(gap: Option<f64>) -> String {
    gap.map_or_else(|| "none".into(), |g| format!("{g:.3}%"))
}
