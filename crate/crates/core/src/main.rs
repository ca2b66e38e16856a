use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uavtrust::error::{Error, Result};
use uavtrust::harness::{
    emit_metrics, evaluate, phase_means, run_baseline, summarize, train_to_dir, EvalPolicy, MetricsRecord, Phase,
    PhaseMeans, PolicyKind, RunConfig, RunPreset,
};
use uavtrust::pd3qn::Checkpoint;
use uavtrust::topology::{build_throughput_table, DeviceGraph};

#[derive(Parser)]
#[command(name = "uavtrust", version, about = "UAV attestation scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `desk` (500 slots, 40+10 episodes) or `full` (2000 slots, 80+20).
    #[arg(long)]
    preset: Option<RunPreset>,
}

impl RunArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg = cfg.with_preset(p);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        let out = cfg.out_dir.clone();
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent, then run the assessment episodes.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Assessment episodes act greedily instead of at the exploration floor.
        #[arg(long)]
        greedy_eval: bool,
    },
    /// Greedy assessment rollouts of a checkpoint or a baseline.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "pd3qn")]
        policy: PolicyKind,
    },
    /// Run a heuristic policy over every episode.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PolicyKind,
    },
    /// Print the throughput table of a graph file.
    Flowcheck {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Smooth a run's metrics and print per-phase means.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn print_means(records: &[MetricsRecord]) {
    for phase in [Phase::Train, Phase::Eval] {
        if let Some(m) = phase_means(records, phase) {
            print_phase(&m);
        }
    }
}

fn print_phase(m: &PhaseMeans) {
    println!(
        "{:<5} episodes={:<4} reward={:.3} aot={:.3} throughput={:.3}",
        match m.phase {
            Phase::Train => "train",
            Phase::Eval => "eval",
        },
        m.episodes,
        m.reward,
        m.aot,
        m.throughput
    );
}

fn write_run(records: &[MetricsRecord], cfg: &RunConfig, out: &Path) -> Result<()> {
    emit_metrics(records, cfg, out)?;
    print_means(records);
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run, greedy_eval } => {
            let (mut cfg, out) = run.resolve()?;
            cfg.greedy_eval |= greedy_eval;
            let records = train_to_dir(&cfg, &out)?;
            print_means(&records);
            println!("wrote {}", out.display());
        }
        Command::Eval {
            run,
            checkpoint,
            policy,
        } => {
            let (cfg, out) = run.resolve()?;
            let records = match policy {
                PolicyKind::Pd3qn => {
                    let path = checkpoint.ok_or_else(|| Error::Config("--checkpoint is required for pd3qn".into()))?;
                    let ck = Checkpoint::load(&path)?;
                    evaluate(&cfg, EvalPolicy::Agent(&ck))?
                }
                kind => evaluate(&cfg, EvalPolicy::Baseline(kind))?,
            };
            write_run(&records, &cfg, &out)?;
        }
        Command::Baseline { run, policy } => {
            if policy == PolicyKind::Pd3qn {
                return Err(Error::Config("baseline expects rand, maf or nf".into()));
            }
            let (cfg, out) = run.resolve()?;
            let records = run_baseline(&cfg, policy)?;
            write_run(&records, &cfg, &out)?;
        }
        Command::Flowcheck { graph } => {
            let g = DeviceGraph::load(&graph)?;
            let table = build_throughput_table(&g)?;
            println!("full {:.3}", table.full);
            for (node, kbps) in &table.degraded {
                println!("node {node:<4} offline {kbps:.3}");
            }
        }
        Command::Summarize { input } => {
            for m in summarize(&input)? {
                print_phase(&m);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
