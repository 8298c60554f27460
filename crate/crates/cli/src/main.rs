//! `mbrl` command-line front end.
//!
//! Failures print a single line to stderr,
//! `error kind=<config|runtime> path=<key path> message="<text>"`, and exit
//! with 2 for usage/config problems or 1 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbrl::algorithms::pets_run;
use mbrl::config::RunConfig;
use mbrl::data::ReplayBuffer;
use mbrl::diagnostics::{dataset_evaluate, true_env_cem_control, visualize_rollout, write_episode_csv};
use mbrl::envs::{reward_fn, termination_fn};
use mbrl::models::{ModelEnv, TransitionRewardModel};
use mbrl::planning::{ModelEnvEvaluator, TrajectoryOptimizerAgent};
use mbrl::{seeded_rng, Error};

#[derive(Parser)]
#[command(name = "mbrl", version, about = "Model-based RL: ensemble dynamics models and CEM control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run PETS and write results.csv, model.ckpt and buffer.dat.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Compare a saved model's predictions with a saved dataset.
    EvalDataset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Plan on the true env and replay the actions through the model.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 30)]
        horizon: usize,
        /// Number of model particles to trace.
        #[arg(long, default_value_t = 3)]
        samples: usize,
    },
    /// CEM control that scores candidates on copies of the real env.
    TrueEnvControl {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured planning horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
}

fn load_config(common: &Common) -> mbrl::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn out_dir(common: &Common, default: &str) -> mbrl::Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_config_snapshot(cfg: &RunConfig, dir: &Path) -> mbrl::Result<()> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn train(common: &Common) -> mbrl::Result<()> {
    let cfg = load_config(common)?;
    let pets = cfg.pets_config()?;
    let dir = out_dir(common, "train")?;
    write_config_snapshot(&cfg, &dir)?;
    let mut env = cfg.make_env()?;
    let outcome = pets_run(&pets, env.as_mut(), Some(&dir))?;
    let last = outcome.curve.mean_last(3).map_or_else(|| "none".to_string(), |v| v.to_string());
    println!(
        "trials={} mean_last_3={} results={}",
        outcome.curve.rows.len(),
        last,
        dir.join("results.csv").display()
    );
    Ok(())
}

fn eval_dataset(common: &Common, model: &Path, dataset: &Path) -> mbrl::Result<()> {
    let model = TransitionRewardModel::load(model)?;
    let dataset = ReplayBuffer::load(dataset)?;
    let table = dataset_evaluate(&model, &dataset)?;
    let dir = out_dir(common, "eval-dataset")?;
    table.write_dir(&dir)?;
    for s in table.summary() {
        println!("dimension={} count={} mse={} r2={}", s.dimension, s.count, s.mse, s.r2);
    }
    Ok(())
}

fn visualize(common: &Common, model_path: &Path, horizon: usize, samples: usize) -> mbrl::Result<()> {
    let cfg = load_config(common)?;
    let pets = cfg.pets_config()?;
    let model = TransitionRewardModel::load(model_path)?;
    let mut env = cfg.make_env()?;
    let spec = env.spec().clone();
    if model.obs_dim() != spec.obs_dim || model.action_dim() != spec.action_dim {
        return Err(Error::Shape(format!(
            "model has (obs {}, action {}) but env `{}` has (obs {}, action {})",
            model.obs_dim(),
            model.action_dim(),
            spec.name,
            spec.obs_dim,
            spec.action_dim
        )));
    }
    let reward = if model.learned_rewards() { None } else { Some(reward_fn(&pets.reward)?) };
    let model_env = ModelEnv::new(model, termination_fn(&pets.termination)?, reward);
    let mut agent = TrajectoryOptimizerAgent::new(cfg.mpc_config()?, ModelEnvEvaluator::new(model_env.clone(), pets.num_particles))?;
    let mut rng = seeded_rng(pets.seed);
    env.reset(&mut rng);
    let comparison = visualize_rollout(&model_env, env.as_mut(), &mut agent, horizon, samples, &mut rng)?;
    let dir = out_dir(common, "visualize")?;
    comparison.write_dir(&dir)?;
    println!("steps={} dims={} out={}", comparison.horizon(), spec.obs_dim, dir.display());
    Ok(())
}

fn true_env_control(common: &Common, horizon: Option<usize>, episodes: usize) -> mbrl::Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(h) = horizon {
        cfg.agent.planning_horizon = h;
    }
    let pets = cfg.pets_config()?;
    let mut env = cfg.make_env()?;
    let mut rng = seeded_rng(pets.seed);
    let logs = true_env_cem_control(env.as_mut(), cfg.mpc_config()?, episodes, None, &mut rng)?;
    let dir = out_dir(common, "true-env-control")?;
    std::fs::write(dir.join("episodes.csv"), write_episode_csv(&logs))?;
    for (i, l) in logs.iter().enumerate() {
        println!("episode={} return={} steps={}", i + 1, l.episode_return, l.rewards.len());
    }
    Ok(())
}

fn report(err: &Error) -> ExitCode {
    let (kind, path, message, code) = match err {
        Error::Config { path, message } => ("config", path.as_str(), message.clone(), 2),
        other => ("runtime", "", other.to_string(), 1),
    };
    eprintln!("error kind={kind} path={} message={message:?}", if path.is_empty() { "-" } else { path });
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train { common } => train(common),
        Command::EvalDataset { common, model, dataset } => eval_dataset(common, model, dataset),
        Command::Visualize {
            common,
            model,
            horizon,
            samples,
        } => visualize(common, model, *horizon, *samples),
        Command::TrueEnvControl {
            common,
            horizon,
            episodes,
        } => true_env_control(common, *horizon, *episodes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
