use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use markov_commutator::commutator::{check_hypergroup_with, hset_with};
use markov_commutator::kernel::stationary_distribution;
use markov_commutator::metropolis::{classify_potential, kernel_variant, Potential, Variant};
use markov_commutator::pipeline::{analyze, reproduce, search, Case, Family, SearchConfig};
use markov_commutator::spectral::decompose;
use markov_commutator::symmetry::{is_closed_group, quotient, symmetry_group, Permutation};
use markov_commutator::wave::{
    boundary_identity_max, check_edges_condition, check_trtr_condition, edge_sums, min_on_triangle,
    solve_wave, solve_wave_march, solve_wave_march_unnormalized, solve_wave_spectral_row,
    WaveSource,
};
use markov_commutator::{MarkovKernel, Tolerances};

#[derive(Parser)]
#[command(
    name = "mcomm",
    version,
    about = "Hypergroup analysis of finite Markov kernels"
)]
struct Cli {
    /// Entries above -TOL count as non-negative.
    #[arg(long, global = true)]
    tol_nonneg: Option<f64>,
    /// Residual threshold for algebraic identities.
    #[arg(long, global = true)]
    tol_residual: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the command's artifact here (the grid CSV for `wave`).
    #[arg(long, global = true)]
    emit: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full report on a kernel.
    Analyze {
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Build a Metropolis kernel from a potential.
    Metropolis {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value = "mu")]
        variant: Variant,
    },
    /// Solve the wave equation from a source row.
    Wave {
        #[arg(long)]
        kernel: PathBuf,
        /// `delta:<i>`, `mu` or `row:<a,b,...>`.
        #[arg(long)]
        source: WaveSource,
        /// Use the source row literally instead of dividing by `mu`.
        #[arg(long)]
        unnormalized: bool,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Hypergroup certificates at one or all base points.
    Hypergroup {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        base: Option<usize>,
    },
    /// Symmetry group of a kernel.
    Symmetry {
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Lump a kernel by a group of its symmetries.
    Quotient {
        #[arg(long)]
        kernel: PathBuf,
        /// JSON array of permutations; the full symmetry group when absent.
        #[arg(long)]
        group: Option<PathBuf>,
    },
    /// Random potentials, one JSON line per trial and a summary line.
    Search {
        #[arg(long = "n")]
        n_max: usize,
        #[arg(long, default_value = "paren")]
        variant: Variant,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "convex")]
        family: Family,
        /// Convex family only: `U(0) = U(1)` and not symmetric.
        #[arg(long)]
        asym: bool,
    },
    /// Run a pinned scenario (`all` runs every case).
    Reproduce { case: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    March,
    Spectral,
}

enum Failure {
    Input(anyhow::Error),
    Assertion(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<markov_commutator::Error> for Failure {
    fn from(e: markov_commutator::Error) -> Self {
        Failure::Input(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("mcomm: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("mcomm: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn tolerances(cli: &Cli) -> anyhow::Result<Tolerances> {
    let mut tol = Tolerances::default();
    if let Some(t) = cli.tol_nonneg {
        tol.tol_nonneg = t;
    }
    if let Some(t) = cli.tol_residual {
        tol.tol_residual = t;
    }
    tol.validate()?;
    Ok(tol)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    Ok(text)
}

fn emit(path: Option<&PathBuf>, contents: &str) -> anyhow::Result<()> {
    if let Some(p) = path {
        fs::write(p, contents).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let tol = tolerances(&cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let emit_path = cli.emit.as_ref();
    match &cli.command {
        Command::Analyze { kernel } => {
            let p: MarkovKernel = read_json(kernel, "kernel")?;
            let report = analyze(&p, &tol)?;
            let text = print_json(&report)?;
            emit(emit_path, &text)?;
        }
        Command::Metropolis { potential, variant } => {
            let u: Potential = read_json(potential, "potential")?;
            let p = kernel_variant(&u, *variant)?;
            let class = classify_potential(&u);
            eprintln!(
                "potential classes: {}",
                serde_json::to_string(&class).map_err(anyhow::Error::from)?
            );
            let text = p.to_json();
            println!("{text}");
            emit(emit_path, &text)?;
        }
        Command::Wave {
            kernel,
            source,
            unnormalized,
            method,
        } => {
            let p: MarkovKernel = read_json(kernel, "kernel")?;
            let mu = stationary_distribution(&p)?;
            let normalized = !*unnormalized;
            let row0 = source.row(&mu, normalized)?;
            let field = match method {
                Method::Auto => solve_wave(&p, &row0, normalized, &tol)?,
                Method::March if normalized => solve_wave_march(&p, &row0, &tol)?,
                Method::March => solve_wave_march_unnormalized(&p, &row0, &tol)?,
                Method::Spectral => {
                    let d = decompose(&p, &mu, &tol)?;
                    solve_wave_spectral_row(&p, &d, &row0)?
                }
            };
            let (min, argmin) = min_on_triangle(&field);
            let edges = edge_sums(&field);
            print_json(&json!({
                "n": p.n(),
                "source_row": row0,
                "residual": field.residual(),
                "max_abs": field.max_abs(),
                "triangle_min": min,
                "triangle_argmin": argmin,
                "nonnegative_on_triangle": min >= -tol.tol_nonneg,
                "trtr_condition": check_trtr_condition(&p)?,
                "edges_condition": check_edges_condition(&p)?,
                "edge_sums": edges,
                "identity_residual": boundary_identity_max(&field),
            }))?;
            emit(emit_path, &field.to_csv())?;
        }
        Command::Hypergroup { kernel, base } => {
            let p: MarkovKernel = read_json(kernel, "kernel")?;
            let mu = stationary_distribution(&p)?;
            let d = decompose(&p, &mu, &tol)?;
            let certificates = match base {
                Some(x0) => vec![check_hypergroup_with(&d, *x0)?],
                None => {
                    let mut out = Vec::new();
                    for x0 in 0..p.n() {
                        if d.vanishing_index(x0).is_none() {
                            out.push(check_hypergroup_with(&d, x0)?);
                        }
                    }
                    out
                }
            };
            let h = hset_with(&p, &d)?;
            let text = print_json(&json!({ "hset": h.members, "certificates": certificates }))?;
            emit(emit_path, &text)?;
        }
        Command::Symmetry { kernel } => {
            let p: MarkovKernel = read_json(kernel, "kernel")?;
            let group = symmetry_group(&p, &tol)?;
            let text = print_json(&json!({
                "size": group.len(),
                "closed": is_closed_group(&group),
                "group": group,
            }))?;
            emit(emit_path, &text)?;
        }
        Command::Quotient { kernel, group } => {
            let p: MarkovKernel = read_json(kernel, "kernel")?;
            let g: Vec<Permutation> = match group {
                Some(path) => read_json(path, "group")?,
                None => symmetry_group(&p, &tol)?,
            };
            let q = quotient(&p, &g, &tol)?;
            let text = print_json(&q)?;
            emit(emit_path, &text)?;
        }
        Command::Search {
            n_max,
            variant,
            trials,
            family,
            asym,
        } => {
            if *n_max < 2 {
                return Err(Failure::Input(anyhow!("--n must be at least 2")));
            }
            if *asym && *family != Family::Convex {
                return Err(Failure::Input(anyhow!(
                    "--asym only applies to the convex family"
                )));
            }
            let mut config = SearchConfig::new(*n_max, *variant, *trials, cli.seed);
            config.family = *family;
            config.asym = *asym;
            config.tol = tol;
            let (results, summary) = search(&config);
            let mut lines = String::new();
            for r in &results {
                lines.push_str(&serde_json::to_string(r).map_err(anyhow::Error::from)?);
                lines.push('\n');
            }
            lines.push_str(
                &serde_json::to_string(&json!({ "summary": summary }))
                    .map_err(anyhow::Error::from)?,
            );
            lines.push('\n');
            let mut out = BufWriter::new(io::stdout().lock());
            out.write_all(lines.as_bytes()).context("writing results")?;
            out.flush().context("writing results")?;
            emit(emit_path, &lines)?;
        }
        Command::Reproduce { case } => {
            let cases: Vec<Case> = if case == "all" {
                Case::ALL.to_vec()
            } else {
                match case.parse::<Case>() {
                    Ok(c) => vec![c],
                    Err(e) => {
                        let known: Vec<&str> = Case::ALL.iter().map(|c| c.id()).collect();
                        return Err(Failure::Input(anyhow!(
                            "{e}; known cases: {}",
                            known.join(", ")
                        )));
                    }
                }
            };
            let mut failed = Vec::new();
            let mut lines = String::new();
            for c in cases {
                let report = reproduce(c, &tol)?;
                if !report.passed {
                    failed.push(report.case.clone());
                }
                let line = serde_json::to_string(&report).map_err(anyhow::Error::from)?;
                println!("{line}");
                lines.push_str(&line);
                lines.push('\n');
            }
            emit(emit_path, &lines)?;
            if !failed.is_empty() {
                return Err(Failure::Assertion(format!("failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}
