use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use coevonet::engine::Policy;
use coevonet_cli::{
    add_node_table, load_config, network_metrics, parse_grid, read_edge_list, run_sweep, simulate,
    theory, theory_range, write_metrics_csv, write_pmf,
};

#[derive(Parser)]
#[command(
    name = "coevonet",
    version,
    about = "Q-learning agents on a co-evolving contact network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Also write every agent's final Q-table.
        #[arg(long)]
        dump_q: bool,
    },
    /// Replicated runs over a (delta, r) grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// lo:hi:n
        #[arg(long, default_value = "0:1:11")]
        delta_grid: String,
        /// lo:hi:n
        #[arg(long, default_value = "0:1:11")]
        r_grid: String,
        #[arg(long, default_value_t = 10)]
        replicas: usize,
        /// Sweep the heuristic movers instead of Q-learning.
        #[arg(long)]
        heuristic: bool,
    },
    /// Run the non-learning heuristic baseline.
    Heuristic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Steady-state population moments and pmf for the config's birth-death process.
    Theory {
        #[arg(long)]
        config: Option<PathBuf>,
        /// pmf support as lo:hi; defaults to mean +- 5 sd.
        #[arg(long)]
        range: Option<String>,
        /// Directory for theory.json and pmf.csv; prints to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structure metrics of an edge-list snapshot.
    Metrics {
        /// `src_id,dst_id,weight` file.
        edges: PathBuf,
        /// Matching `id,row,col,strategy` table; adds nodes without edges.
        #[arg(long)]
        nodes: Option<PathBuf>,
        /// Directory for the degree and joint-degree CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(spec: &str) -> Result<(u64, u64)> {
    let (lo, hi) = spec
        .split_once(':')
        .with_context(|| format!("range {spec:?}: expected lo:hi"))?;
    let lo = lo
        .trim()
        .parse()
        .with_context(|| format!("range {spec:?}: bad lower bound"))?;
    let hi = hi
        .trim()
        .parse()
        .with_context(|| format!("range {spec:?}: bad upper bound"))?;
    anyhow::ensure!(lo <= hi, "range {spec:?}: lower bound above upper bound");
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::Simulate {
            common,
            out,
            dump_q,
        } => {
            let config = load_config(common.config.as_deref(), common.seed)?;
            let summary = simulate(&config, Policy::QLearning, &out, dump_q)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Heuristic { common, out } => {
            let config = load_config(common.config.as_deref(), common.seed)?;
            let summary = simulate(&config, Policy::Heuristic, &out, false)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Sweep {
            common,
            out,
            delta_grid,
            r_grid,
            replicas,
            heuristic,
        } => {
            let config = load_config(common.config.as_deref(), common.seed)?;
            let deltas = parse_grid(&delta_grid)?;
            let rs = parse_grid(&r_grid)?;
            let policy = if heuristic {
                Policy::Heuristic
            } else {
                Policy::QLearning
            };
            let result = run_sweep(&config, &deltas, &rs, replicas, policy, &out)?;
            result.write_csv(stdout.lock())?;
        }
        Command::Theory { config, range, out } => {
            // theory is deterministic, so no seed is drawn
            let config = load_config(config.as_deref(), Some(0))?;
            let moments =
                coevonet::birth_death::steady_state_moments(config.lambda, &config.lifetime);
            let (lo, hi) = match range {
                Some(r) => parse_range(&r)?,
                None => theory_range(&moments),
            };
            let json = serde_json::to_string(&theory(&config))?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)
                        .with_context(|| format!("creating {}", dir.display()))?;
                    fs::write(dir.join("theory.json"), format!("{json}\n"))?;
                    let mut f = io::BufWriter::new(fs::File::create(dir.join("pmf.csv"))?);
                    write_pmf(&config, lo, hi, &mut f)?;
                    f.flush()?;
                    println!("{json}");
                }
                None => {
                    let mut lock = stdout.lock();
                    writeln!(lock, "{json}")?;
                    write_pmf(&config, lo, hi, &mut lock)?;
                }
            }
        }
        Command::Metrics { edges, nodes, out } => {
            let mut graph = read_edge_list(&edges)?;
            if let Some(path) = nodes {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                add_node_table(&mut graph, &text)?;
            }
            let metrics = network_metrics(&graph)?;
            if let Some(dir) = out {
                write_metrics_csv(&dir, &metrics)?;
            }
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
