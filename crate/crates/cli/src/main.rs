//! `flocklab` command-line front end: weight search, curriculum training,
//! evaluation sweeps, and trajectory export, all driven by one TOML config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flocklab::config::RunConfig;
use flocklab::env::{run_episode, Env, EnvConfig};
use flocklab::metrics::{metric_point, sweep, SweepReport};
use flocklab::nn::checkpoint::Checkpoint;
use flocklab::nn::PolicyNet;
use flocklab::par::Exec;
use flocklab::reward::WeightVector;
use flocklab::seeding;
use flocklab::train::eval::NetPolicy;
use flocklab::train::stage2::UpdateEvent;
use flocklab::train::{
    evaluate, make_checkpoint, restore_checkpoint, run_stage1, run_stage2, Adam, Stage2State,
    TrainSink,
};
use flocklab::world::World;

#[derive(Parser)]
#[command(name = "flocklab", version, about = "Multi-quadrotor formation flight lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files, created on demand.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Force single-threaded execution (results are identical either way).
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)
                .with_context(|| format!("loading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::auto()
        }
    }

    fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stage 1: sample reward weight vectors, train briefly, rank by SR.
    SearchWeights(Common),
    /// Stage 2: curriculum training with a fixed weight vector.
    Train {
        #[command(flatten)]
        common: Common,
        /// Weight file (4 space-separated values); defaults to config weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Resume from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also snapshot every N updates inside a period (0 = boundaries only).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Evaluate a policy: fixed-scenario CFR/FM report plus optional sweeps.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint; omitting it evaluates a freshly seeded network.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Column counts to sweep (balls held at the config value).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep_columns: Vec<usize>,
        /// Ball counts to sweep (columns held at the config value).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep_balls: Vec<usize>,
    },
    /// Roll one deterministic episode and export trajectory + world layout.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint; omitting it replays a freshly seeded network.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// World/episode seed; defaults to the run seed.
        #[arg(long)]
        episode_seed: Option<u64>,
    },
    /// Validate the config and describe the environment it builds.
    InspectEnv(Common),
    /// Configuration utilities.
    Config {
        /// Print the full default configuration as TOML.
        #[arg(long)]
        print_defaults: bool,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SearchWeights(common) => cmd_search_weights(&common),
        Command::Train { common, weights, resume, checkpoint_every } => {
            cmd_train(&common, weights.as_deref(), resume.as_deref(), checkpoint_every)
        }
        Command::Eval { common, checkpoint, sweep_columns, sweep_balls } => {
            cmd_eval(&common, checkpoint.as_deref(), &sweep_columns, &sweep_balls)
        }
        Command::Replay { common, checkpoint, episode_seed } => {
            cmd_replay(&common, checkpoint.as_deref(), episode_seed)
        }
        Command::InspectEnv(common) => cmd_inspect_env(&common),
        Command::Config { print_defaults } => {
            if print_defaults {
                print!("{}", RunConfig::default().to_toml());
                Ok(())
            } else {
                bail!("nothing to do; try --print-defaults");
            }
        }
    }
}

fn cmd_search_weights(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let report = run_stage1(
        &cfg.stage1,
        &cfg.env,
        cfg.net,
        cfg.ppo,
        cfg.seed,
        common.exec(),
        |line| eprintln!("{line}"),
    )?;
    common.prepare_out_dir()?;
    let table = common.write("stage1_table.csv", &report.to_csv())?;
    let w = report.best().weights.to_array();
    let best = common.write(
        "best_weights.txt",
        &format!("{} {} {} {}\n", w[0], w[1], w[2], w[3]),
    )?;
    eprintln!("wrote {} and {}", table.display(), best.display());
    Ok(())
}

fn parse_weights_file(path: &Path) -> Result<WeightVector> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading weights file {}", path.display()))?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| anyhow!("bad weight {t:?}: {e}")))
        .collect::<Result<_>>()?;
    if vals.len() != 4 {
        bail!("weights file must hold exactly 4 values, found {}", vals.len());
    }
    Ok(WeightVector::new([vals[0], vals[1], vals[2], vals[3]])?)
}

/// Streams training progress to a log buffer and checkpoints to disk.
struct DiskSink<'a> {
    common: &'a Common,
    log: String,
    snapshot_every: usize,
}

impl TrainSink for DiskSink<'_> {
    fn on_update(&mut self, e: &UpdateEvent) {
        let s = &e.stats;
        self.log.push_str(&format!(
            "update period={} step={} reward={:.6} policy_loss={:.6} value_loss={:.6} \
             entropy={:.6} grad_norm={:.6} samples={} episodes={}\n",
            e.period,
            e.update_in_period,
            s.mean_reward,
            s.policy_loss,
            s.value_loss,
            s.entropy,
            s.grad_norm,
            s.n_samples,
            s.episodes_finished,
        ));
    }

    fn on_period_end(&mut self, period: usize, ckpt: &Checkpoint) -> flocklab::Result<()> {
        let name = format!("checkpoint_period{period}.txt");
        ckpt.save(&self.common.out_dir.join(&name))?;
        self.log.push_str(&format!("period-boundary period={period} checkpoint={name}\n"));
        Ok(())
    }

    fn snapshot_interval(&self) -> usize {
        self.snapshot_every
    }

    fn on_snapshot(&mut self, period: usize, u: usize, ckpt: &Checkpoint) -> flocklab::Result<()> {
        let name = format!("snapshot_p{period}_u{u}.txt");
        ckpt.save(&self.common.out_dir.join(&name))?;
        self.log.push_str(&format!("snapshot period={period} step={u} checkpoint={name}\n"));
        Ok(())
    }
}

fn cmd_train(
    common: &Common,
    weights: Option<&Path>,
    resume: Option<&Path>,
    checkpoint_every: usize,
) -> Result<()> {
    let cfg = common.load()?;
    let state = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            // Weights and seed come from the checkpoint so the continued run
            // matches an uninterrupted one.
            restore_checkpoint(&ckpt, cfg.net, cfg.ppo.adam)?
        }
        None => {
            let w = match weights {
                Some(path) => parse_weights_file(path)?,
                None => WeightVector::new(cfg.weights)?,
            };
            let net = PolicyNet::new(cfg.net, cfg.seed)?;
            let opt = Adam::new(cfg.ppo.adam, &net);
            Stage2State { net, opt, next_period: 0, weights: w, seed: cfg.seed }
        }
    };
    common.prepare_out_dir()?;
    let run_weights = state.weights;
    let run_seed = state.seed;
    let mut sink = DiskSink { common, log: String::new(), snapshot_every: checkpoint_every };
    let outcome = run_stage2(state, &cfg.periods, &cfg.env, cfg.ppo, common.exec(), &mut sink)?;
    let final_state = Stage2State {
        net: outcome.net,
        opt: outcome.opt,
        next_period: cfg.periods.len(),
        weights: run_weights,
        seed: run_seed,
    };
    make_checkpoint(&final_state).save(&common.out_dir.join("checkpoint_final.txt"))?;
    sink.log.push_str("done checkpoint=checkpoint_final.txt\n");
    common.write("train_log.txt", &sink.log)?;
    eprintln!("training finished after {} updates", outcome.history.len());
    Ok(())
}

fn load_net(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<PolicyNet> {
    let mut net = PolicyNet::new(cfg.net, cfg.seed)?;
    if let Some(path) = checkpoint {
        let ckpt = Checkpoint::load(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        ckpt.restore_net("net.", &mut net)
            .with_context(|| format!("checkpoint {} does not fit this network", path.display()))?;
    }
    Ok(net)
}

fn cmd_eval(
    common: &Common,
    checkpoint: Option<&Path>,
    sweep_columns: &[usize],
    sweep_balls: &[usize],
) -> Result<()> {
    let cfg = common.load()?;
    let net = load_net(&cfg, checkpoint)?;
    let exec = common.exec();

    let fixed = metric_point(
        &net,
        &cfg.env,
        cfg.env.n_columns,
        cfg.env.n_balls,
        cfg.eval.episodes,
        seeding::derive_seed(cfg.seed, "eval-fixed", 0),
        exec,
    )?;
    let (rates, _) = evaluate(
        &net,
        &cfg.env,
        cfg.eval.episodes,
        seeding::derive_seed(cfg.seed, "eval-sr", 0),
        &cfg.eval.thresholds,
        exec,
    )?;

    common.prepare_out_dir()?;
    common.write("eval_report.csv", &SweepReport { points: vec![fixed] }.to_csv())?;
    common.write(
        "satisfaction.csv",
        &format!(
            "sr_flight,sr_formation,sr_obstacle,sr_action,sr\n{},{},{},{},{}\n",
            rates.flight, rates.formation, rates.obstacle, rates.action, rates.sr
        ),
    )?;
    if !sweep_columns.is_empty() {
        let report = sweep(
            &net,
            &cfg.env,
            sweep_columns,
            &[cfg.env.n_balls],
            cfg.metrics.episodes,
            seeding::derive_seed(cfg.seed, "sweep-columns", 0),
            exec,
        )?;
        common.write("sweep_columns.csv", &report.to_csv())?;
    }
    if !sweep_balls.is_empty() {
        let report = sweep(
            &net,
            &cfg.env,
            &[cfg.env.n_columns],
            sweep_balls,
            cfg.metrics.episodes,
            seeding::derive_seed(cfg.seed, "sweep-balls", 0),
            exec,
        )?;
        common.write("sweep_balls.csv", &report.to_csv())?;
    }
    println!(
        "cfr={} fm={} sr={}",
        fixed.collision_free_rate,
        fixed.formation_maintenance.map_or("n/a".into(), |v| v.to_string()),
        rates.sr
    );
    Ok(())
}

fn layout_csv(world: &World) -> String {
    let mut out = String::from("kind,x,y,z,vx,vy,vz,spawn_time,radius,height\n");
    for c in &world.columns {
        out.push_str(&format!(
            "column,{},{},,,,,,{},{}\n",
            c.center_xy[0], c.center_xy[1], c.radius, c.height
        ));
    }
    for b in &world.balls {
        out.push_str(&format!(
            "ball,{},{},{},{},{},{},{},{},\n",
            b.spawn_pos.x,
            b.spawn_pos.y,
            b.spawn_pos.z,
            b.spawn_vel.x,
            b.spawn_vel.y,
            b.spawn_vel.z,
            b.spawn_time,
            b.radius
        ));
    }
    out.push_str(&format!("goal,{},,,,,,,,\n", world.goal_x));
    out
}

fn cmd_replay(
    common: &Common,
    checkpoint: Option<&Path>,
    episode_seed: Option<u64>,
) -> Result<()> {
    let cfg = common.load()?;
    let net = load_net(&cfg, checkpoint)?;
    let mut env_cfg: EnvConfig = cfg.env.clone();
    env_cfg.seed = episode_seed.unwrap_or(cfg.seed);

    let mut policy = NetPolicy { net: &net, env_cfg: &env_cfg };
    let record = run_episode(&mut policy, &env_cfg)?;
    // A fresh env with the same seed regenerates the identical initial world.
    let layout_env = Env::new(env_cfg.clone())?;

    common.prepare_out_dir()?;
    common.write("trajectory.csv", &record.to_csv())?;
    common.write("layout.csv", &layout_csv(layout_env.world()))?;
    println!(
        "steps={} goal_reached={} collided={}",
        record.steps.len(),
        record.goal_reached,
        record.collided
    );
    Ok(())
}

fn cmd_inspect_env(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let env = Env::new(cfg.env.clone())?;
    let obs = env.build_observation(0);
    let world = env.world();
    println!("drones: {}", cfg.env.n_drones);
    println!("episode_len: {} steps at 50 Hz", cfg.env.episode_len);
    println!(
        "observation widths: self={} others={}x{} static={} dynamic={}x{}",
        obs.self_obs.len(),
        obs.n_other,
        if obs.n_other > 0 { obs.drones_obs.len() / obs.n_other } else { 0 },
        obs.static_obs.len(),
        obs.dynamic_mask.len(),
        if obs.dynamic_mask.is_empty() { 0 } else { obs.dynamic_obs.len() / obs.dynamic_mask.len() },
    );
    println!("clip_actions: {}", cfg.env.clip_actions);
    println!(
        "world: {} columns, {} balls, goal_x={}",
        world.columns.len(),
        world.balls.len(),
        world.goal_x
    );
    println!("config_hash: {}", cfg.hash());
    common.prepare_out_dir()?;
    let path = common.write("layout.csv", &layout_csv(world))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
