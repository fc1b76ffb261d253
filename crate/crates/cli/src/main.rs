use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynembed::ae::AeConfig;
use dynembed::sbm::SbmParams;
use dynembed_cli::{
    embed_to, evaluate_saved, generate_to, init_thread_pool, project_saved, run_experiment, CliError,
    ExperimentConfig, Method, SvdConfig,
};

#[derive(Parser)]
#[command(name = "dynembed", version, about = "Dynamic graph embedding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a diminishing-community SBM series.
    Generate {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        communities: usize,
        #[arg(long)]
        length: usize,
        /// Nodes leaving the diminishing community per step.
        #[arg(long)]
        migrate: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        diminish: usize,
        #[arg(long, default_value_t = 0.1)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a snapshot file.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        /// JSON file with autoencoder settings.
        #[arg(long)]
        ae_config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score saved embeddings against a snapshot file.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a 2-D projection of saved embeddings.
    Project {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        migrations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { nodes, communities, length, migrate, seed, diminish, p_in, p_out, out } => {
            let params = SbmParams {
                node_num: nodes,
                community_num: communities,
                length,
                diminish_community: diminish,
                node_change_num: migrate,
                p_in,
                p_out,
                seed,
            };
            generate_to(&params, &out)?;
        }
        Command::Embed { graph, method, d, theta, ae_config, seed, out } => {
            let method = Method::from_tag(&method).ok_or_else(|| CliError::Config(format!("method: unknown tag {method:?}")))?;
            let mut svd = SvdConfig::default();
            let mut ae = match ae_config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<AeConfig>(&text).map_err(|e| CliError::Config(format!("ae_config: {e}")))?
                }
                None => AeConfig::default(),
            };
            if let Some(d) = d {
                svd.d = d;
                ae.d = d;
            }
            if theta.is_some() {
                svd.theta = theta;
            }
            if let Some(s) = seed {
                ae.seed = s;
            }
            embed_to(&graph, method, &svd, &ae, &out)?;
        }
        Command::Evaluate { graph, embeddings, labels, k, seed, out } => {
            let reports = evaluate_saved(&graph, &embeddings, labels.as_deref(), &k, seed)?;
            std::fs::write(out, serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n")?;
        }
        Command::Project { embeddings, t, labels, migrations, out } => {
            project_saved(&embeddings, t, labels.as_deref(), migrations.as_deref(), &out)?;
        }
        Command::Run { config, output_dir, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if seed.is_some() {
                cfg.seed = seed;
            }
            let outcome = run_experiment(cfg)?;
            println!("{}", outcome.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    init_thread_pool();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
