//! `fedgnn`: generate data, run federated backdoor scenarios and sweeps, and
//! summarize their CSV output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedgnn_core::experiment::{
    run_experiment, run_paired, run_sweep, summarize_csv, write_atomic, DataSource, ExperimentConfig, SweepSpec,
};
use fedgnn_core::fed::fmt_sig6;
use fedgnn_core::graph::write_tu_dataset;
use fedgnn_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fedgnn",
    version,
    about = "Backdoor attacks on federated graph classification"
)]
struct Cli {
    /// Worker threads for client updates and sweep cells (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic triangle-count dataset as TU files.
    GenData {
        /// Optional file with `graphs`, `min_nodes`, `max_nodes`, `data_seed`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `data_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// File prefix of the TU files.
        #[arg(long, default_value = "TRIANGLES_SYN")]
        name: String,
    },
    /// Run one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also run the attack-free twin and report the clean accuracy drop.
        #[arg(long)]
        paired: bool,
    },
    /// Run a one-parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the base seed; replication i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize rounds, sweep or aggregate CSV files.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Also write the summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))
}

fn gen_data(config: Option<&Path>, seed: Option<u64>, out: &Path, name: &str) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_table(read_table(p)?)?.data,
        None => DataSource::default(),
    };
    if let (Some(s), DataSource::Synthetic { data_seed, .. }) = (seed, &mut cfg) {
        *data_seed = s;
    }
    if let DataSource::Tu { .. } = cfg {
        return Err(Error::Config("gen-data needs a synthetic data source".into()));
    }
    let ds = cfg.load()?;
    let files = write_tu_dataset(&ds, out, name)?;
    println!("wrote {} graphs ({}) to {}", ds.len(), cfg.describe(), out.display());
    for f in files {
        println!("  {}", f.display());
    }
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: &Path, paired: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    let data = cfg.data.load()?;
    let result = if paired {
        let (attacked, clean) = run_paired(&cfg.scenario, &data)?;
        clean.write(out.join("clean"), &cfg.data)?;
        attacked
    } else {
        run_experiment(&cfg.scenario, &data)?
    };
    result.write(out, &cfg.data)?;
    let opt = |x: Option<f64>| x.map(fmt_sig6).unwrap_or_else(|| "-".into());
    println!(
        "{} rounds, attack {}: clean_acc {} asr_global {} asr_local_mean {} cad {} ({:.1}s)",
        result.logs.len(),
        result.config.attack,
        fmt_sig6(result.final_clean_acc),
        opt(result.final_asr_global),
        opt(result.final_asr_local_mean()),
        opt(result.cad),
        result.wall_time.as_secs_f64()
    );
    println!("outputs in {}", out.display());
    Ok(())
}

fn sweep(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let (mut spec, source) = SweepSpec::from_table(read_table(config)?)?;
    let source = source.relative_to(config_dir(config));
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    let data = source.load()?;
    let table = run_sweep(&spec, &data)?;
    table.write(out, &source)?;
    print!("{}", table.aggregates_csv());
    let failed = table.rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        eprintln!(
            "warning: {failed} sweep cell(s) failed, see {}",
            out.join("sweep.csv").display()
        );
    }
    Ok(())
}

fn report(csv: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let parts = csv.iter().map(summarize_csv).collect::<Result<Vec<_>>>()?;
    let text = parts.join("\n");
    print!("{text}");
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error[config]: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match &cli.command {
        Command::GenData {
            config,
            seed,
            out,
            name,
        } => gen_data(config.as_deref(), *seed, out, name),
        Command::Run {
            config,
            seed,
            out,
            paired,
        } => run(config, *seed, out, *paired),
        Command::Sweep { config, seed, out } => sweep(config, *seed, out),
        Command::Report { csv, out } => report(csv, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
