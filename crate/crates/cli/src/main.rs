//! `qdtree` command-line driver.
//!
//! Every subcommand reads an optional flat config file, applies `--set` and
//! flag overrides on top, and writes its outputs under the output directory
//! (`--out`, else `$QDTREE_OUT`, else the current directory).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdtree::io::Config;
use qdtree::{QdError, QdResult};

#[derive(Parser, Debug)]
#[command(name = "qdtree", version, about = "Recursion-map simulator for Quantum Darwinism on expanding trees")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "QDTREE_OUT")]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base name of the output files.
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evolve one ensemble and write per-step observables.
    Evolve(ModelArgs),
    /// Observables over a grid of J and k.
    Sweep(SweepArgs),
    /// λ_d crossing, 8ε law, or scaling-collapse data.
    Criticality(CritArgs),
    /// Total-spin array evolution.
    Coarse(CoarseArgs),
    /// Clifford-model flow.
    Clifford(CliffordArgs),
    /// Certify the recursion engines against the dense statevector oracle.
    OracleCheck(OracleArgs),
    /// Empirical and analytic redundancy.
    Redundancy(RedundancyArgs),
}

/// Options shared by the ensemble commands.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Number of generations.
    #[arg(long)]
    t: Option<String>,
    /// exact | compressed | biased
    #[arg(long)]
    engine: Option<String>,
    /// Peaks per round for the compressed engine.
    #[arg(long = "N")]
    n: Option<String>,
    /// Peaks per generation for the biased engine.
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Write a snapshot every this many generations (0 = final only when set).
    #[arg(long)]
    snapshot_every: Option<String>,
    /// Also write a 200x200 histogram of the final ensemble.
    #[arg(long)]
    histogram: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Generations to record, as a list or start:stop:step.
    #[arg(long)]
    times: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<String>,
}

#[derive(Args, Debug)]
pub struct CritArgs {
    /// jd | epsilon | collapse
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of replicas.
    #[arg(long)]
    seeds: Option<String>,
    /// First generation of the λ_d window.
    #[arg(long)]
    t_converge: Option<String>,
    /// `lo,hi` bisection bracket.
    #[arg(long)]
    bracket: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// ε values for the encoding-side check.
    #[arg(long)]
    eps: Option<String>,
    /// Generations of the collapse curves.
    #[arg(long)]
    times: Option<String>,
    /// J_d used for the collapse abscissa.
    #[arg(long)]
    jd: Option<String>,
}

#[derive(Args, Debug)]
pub struct CoarseArgs {
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// Refinement depth of the τ-resolved purity (0 to 2).
    #[arg(long)]
    tau: Option<String>,
}

#[derive(Args, Debug)]
pub struct CliffordArgs {
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    pi_z: Option<String>,
    #[arg(long)]
    pi_x: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Sign realizations for the sampled random cases.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args, Debug)]
pub struct RedundancyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    delta: Option<String>,
    /// Environment depths to scan.
    #[arg(long = "n-list")]
    n_list: Option<String>,
}

fn put(cfg: &mut Config, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        cfg.set(key, v);
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut Config) {
        put(cfg, "variant", &self.variant);
        put(cfg, "J", &self.j);
        put(cfg, "k", &self.k);
        put(cfg, "t", &self.t);
        put(cfg, "engine", &self.engine);
        put(cfg, "N", &self.n);
        put(cfg, "M", &self.m);
        put(cfg, "seed", &self.seed);
        put(cfg, "snapshot_every", &self.snapshot_every);
        if self.histogram {
            cfg.set("histogram", "true");
        }
    }
}

fn build_config(cli: &Cli) -> QdResult<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| QdError::Parse(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k, v.trim());
    }
    match &cli.cmd {
        Cmd::Evolve(a) => a.apply(&mut cfg),
        Cmd::Sweep(a) => {
            a.model.apply(&mut cfg);
            put(&mut cfg, "times", &a.times);
            put(&mut cfg, "jobs", &a.jobs);
        }
        Cmd::Criticality(a) => {
            a.model.apply(&mut cfg);
            put(&mut cfg, "mode", &a.mode);
            put(&mut cfg, "seeds", &a.seeds);
            put(&mut cfg, "t_converge", &a.t_converge);
            put(&mut cfg, "bracket", &a.bracket);
            put(&mut cfg, "tol", &a.tol);
            put(&mut cfg, "eps", &a.eps);
            put(&mut cfg, "times", &a.times);
            put(&mut cfg, "jd", &a.jd);
        }
        Cmd::Coarse(a) => {
            put(&mut cfg, "J", &a.j);
            put(&mut cfg, "k", &a.k);
            put(&mut cfg, "t", &a.t);
            put(&mut cfg, "tau", &a.tau);
        }
        Cmd::Clifford(a) => {
            put(&mut cfg, "J", &a.j);
            put(&mut cfg, "pi_z", &a.pi_z);
            put(&mut cfg, "pi_x", &a.pi_x);
            put(&mut cfg, "t_max", &a.t_max);
        }
        Cmd::OracleCheck(a) => {
            put(&mut cfg, "samples", &a.samples);
            put(&mut cfg, "seed", &a.seed);
        }
        Cmd::Redundancy(a) => {
            a.model.apply(&mut cfg);
            put(&mut cfg, "delta", &a.delta);
            put(&mut cfg, "n_list", &a.n_list);
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> QdResult<()> {
    let cfg = build_config(&cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let ctx = commands::Ctx {
        cfg,
        out,
        name: cli.name.clone(),
    };
    match cli.cmd {
        Cmd::Evolve(_) => commands::evolve(&ctx),
        Cmd::Sweep(_) => commands::sweep(&ctx),
        Cmd::Criticality(_) => commands::criticality(&ctx),
        Cmd::Coarse(_) => commands::coarse(&ctx),
        Cmd::Clifford(_) => commands::clifford(&ctx),
        Cmd::OracleCheck(_) => commands::oracle_check(&ctx),
        Cmd::Redundancy(_) => commands::redundancy(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
