//! Command-line driver: instance generation, completion, and benchmark
//! grids.
//!
//! Exit codes: 0 success, 2 partial recovery, 3 no cliques found,
//! 4 solver non-convergence, 1 anything else.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use frmc::bench::{run_bench, to_csv, to_text, Grid};
use frmc::partial::{
    generate_instance, read_partial_file, write_partial_file, CompletionConfig,
};
use frmc::pipeline::{complete_noiseless, complete_noisy, PipelineError};

#[derive(Parser)]
#[command(name = "frmc", about = "Low-rank matrix completion via facial reduction")]
struct Cli {
    /// Key-value config file mirroring the flags (`key = value` lines).
    /// Explicit flags win over config entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic low-rank instance and write the sampled part.
    Gen(GenArgs),
    /// Complete a partial matrix read from a file.
    Complete(CompleteArgs),
    /// Run a benchmark grid and tabulate per-cell averages.
    Bench(BenchArgs),
}

#[derive(Args, Default)]
struct GenArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the sampled partial matrix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional path for the fully observed ground truth.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct CompleteArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    /// Use the noisy pipeline (sketch + flipped refinement).
    #[arg(long)]
    noisy: bool,
    /// Noise factor, informational when the data is pre-perturbed.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "clique-min")]
    clique_min: Option<usize>,
    #[arg(long = "clique-max")]
    clique_max: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON run report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Completed matrix output (text format, fully observed).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground truth file to evaluate the residual against.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Default)]
struct BenchArgs {
    /// TOML grid file with `[[cell]]` tables (m, n, rank, density, sigma).
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; the aligned text table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let conf = match cli.config.as_ref().map(load_config).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let code = match cli.command {
        Command::Gen(args) => run_gen(args, &conf),
        Command::Complete(args) => run_complete(args, &conf),
        Command::Bench(args) => run_bench_cmd(args, &conf),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

/// `key = value` lines; `#` starts a comment. Keys use the flag spelling.
fn load_config(path: &PathBuf) -> Result<HashMap<String, String>, AnyError> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", idx + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn conf_get<T: std::str::FromStr>(
    conf: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, AnyError>
where
    T::Err: std::fmt::Display,
{
    match conf.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| format!("config key {key}: {e}").into()),
    }
}

fn required<T>(cli: Option<T>, conf: Option<T>, key: &str) -> Result<T, AnyError> {
    cli.or(conf).ok_or_else(|| format!("missing required --{key}").into())
}

fn run_gen(args: GenArgs, conf: &HashMap<String, String>) -> Result<u8, AnyError> {
    let m = required(args.m, conf_get(conf, "m")?, "m")?;
    let n = required(args.n, conf_get(conf, "n")?, "n")?;
    let rank = required(args.rank, conf_get(conf, "rank")?, "rank")?;
    let density = required(args.density, conf_get(conf, "density")?, "density")?;
    let seed = args.seed.or(conf_get(conf, "seed")?).unwrap_or(0);
    let out = required(args.out, conf_get(conf, "out")?, "out")?;

    let (truth, sample) = generate_instance(m, n, rank, density, seed)?;
    write_partial_file(&sample, &out)?;
    eprintln!(
        "wrote {} ({} entries, realized density {:.4})",
        out.display(),
        sample.len(),
        sample.density()
    );
    if let Some(tp) = args.truth_out.or(conf_get(conf, "truth-out")?) {
        let full = dense_to_partial(&truth);
        write_partial_file(&full, &tp)?;
        eprintln!("wrote ground truth {}", tp.display());
    }
    Ok(0)
}

fn dense_to_partial(z: &nalgebra::DMatrix<f64>) -> frmc::PartialMatrix {
    let mut entries = Vec::with_capacity(z.nrows() * z.ncols());
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            entries.push((i, j, z[(i, j)]));
        }
    }
    frmc::PartialMatrix::new(z.nrows(), z.ncols(), entries).expect("dense conversion")
}

fn partial_to_dense(p: &frmc::PartialMatrix) -> nalgebra::DMatrix<f64> {
    let mut z = nalgebra::DMatrix::zeros(p.nrows(), p.ncols());
    for &(i, j, v) in p.entries() {
        z[(i, j)] = v;
    }
    z
}

fn run_complete(args: CompleteArgs, conf: &HashMap<String, String>) -> Result<u8, AnyError> {
    let input = required(args.input, conf_get(conf, "in")?, "in")?;
    let rank = required(args.rank, conf_get(conf, "rank")?, "rank")?;
    let noisy = args.noisy || conf_get::<bool>(conf, "noisy")?.unwrap_or(false);

    let mut cfg = CompletionConfig::for_rank(rank);
    if let Some(v) = args.clique_min.or(conf_get(conf, "clique-min")?) {
        cfg.clique_min_size = v;
    }
    if let Some(v) = args.clique_max.or(conf_get(conf, "clique-max")?) {
        cfg.clique_max_size = v;
    }
    if let Some(v) = args.gamma.or(conf_get(conf, "gamma")?) {
        cfg.gamma = Some(v);
    }
    if let Some(v) = args.seed.or(conf_get(conf, "seed")?) {
        cfg.seed = v;
    }
    let _sigma: Option<f64> = args.sigma.or(conf_get(conf, "sigma")?);

    let sample = read_partial_file(&input)?;
    let run = if noisy {
        complete_noisy(&sample, &cfg)
    } else {
        complete_noiseless(&sample, &cfg)
    };
    let result = match run {
        Ok(r) => r,
        Err(PipelineError::NoCliques) => {
            eprintln!("error: {}", PipelineError::NoCliques);
            return Ok(3);
        }
        Err(e) => return Err(e.into()),
    };

    let eval = match args.truth.or(conf_get(conf, "truth")?) {
        Some(tp) => {
            let truth = partial_to_dense(&read_partial_file(&tp)?);
            result.eval_against(&truth)
        }
        None => result.eval.clone(),
    };

    let mut result = result;
    result.eval = eval;
    if let Some(report) = args.report.or(conf_get(conf, "report")?) {
        std::fs::write(&report, result.to_json())?;
        eprintln!("wrote report {}", report.display());
    }
    if let Some(out) = args.out.or(conf_get(conf, "out")?) {
        let comp = dense_to_partial(&result.completion.zhat);
        write_partial_file(&comp, &out)?;
        eprintln!("wrote completion {}", out.display());
    }
    println!(
        "rank {}  residual {:.4e}  recover {:.4}  r_v {}  cliques {}",
        result.eval.rank,
        result.eval.residual,
        result.eval.recover_fraction,
        result.r_v,
        result.cliques_found
    );

    if !result.final_report().converged {
        return Ok(4);
    }
    if result.eval.recover_fraction < 1.0 {
        return Ok(2);
    }
    Ok(0)
}

fn run_bench_cmd(args: BenchArgs, conf: &HashMap<String, String>) -> Result<u8, AnyError> {
    let grid_path = required(args.grid, conf_get(conf, "grid")?, "grid")?;
    let seeds = args.seeds.or(conf_get(conf, "seeds")?).unwrap_or(5);
    let grid = Grid::from_toml(&std::fs::read_to_string(&grid_path)?)?;
    let mut cfg = CompletionConfig::for_rank(1);
    if let Some(v) = args.seed.or(conf_get(conf, "seed")?) {
        cfg.seed = v;
    }
    let rows = run_bench(&grid.cells, seeds, &cfg);
    print!("{}", to_text(&rows));
    if let Some(out) = args.out.or(conf_get(conf, "out")?) {
        std::fs::write(&out, to_csv(&rows))?;
        eprintln!("wrote {}", out.display());
    }
    Ok(0)
}
