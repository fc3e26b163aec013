//! Stage 2: curriculum training over obstacle periods. Policy and optimizer
//! state carry across periods; RNG streams are derived per period, so a run
//! can stop at any period boundary and resume bit-exactly from a checkpoint.

use super::adam::{Adam, AdamConfig};
use super::ppo::{PpoConfig, PpoTrainer, UpdateStats};
use crate::env::EnvConfig;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{NetConfig, PolicyNet};
use crate::par::Exec;
use crate::reward::WeightVector;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodSpec {
    pub n_columns: usize,
    pub n_balls: usize,
    pub updates: usize,
}

impl Default for PeriodSpec {
    fn default() -> Self {
        PeriodSpec { n_columns: 0, n_balls: 0, updates: 20 }
    }
}

/// The default three-period curriculum: empty space, static columns, then
/// columns plus thrown balls.
pub fn default_periods() -> Vec<PeriodSpec> {
    vec![
        PeriodSpec { n_columns: 0, n_balls: 0, updates: 20 },
        PeriodSpec { n_columns: 10, n_balls: 0, updates: 20 },
        PeriodSpec { n_columns: 10, n_balls: 2, updates: 20 },
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateEvent {
    pub period: usize,
    pub update_in_period: usize,
    pub stats: UpdateStats,
}

/// Observer for training progress and period checkpoints.
pub trait TrainSink {
    fn on_update(&mut self, _event: &UpdateEvent) {}
    fn on_period_end(&mut self, _period: usize, _ckpt: &Checkpoint) -> Result<()> {
        Ok(())
    }
    /// Request a mid-period snapshot every this many updates (0 disables).
    /// Snapshots carry `next_period` pointing at the running period, so a
    /// resume restarts that period from its beginning.
    fn snapshot_interval(&self) -> usize {
        0
    }
    fn on_snapshot(
        &mut self,
        _period: usize,
        _update_in_period: usize,
        _ckpt: &Checkpoint,
    ) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;
impl TrainSink for NullSink {}

pub struct Stage2Outcome {
    pub net: PolicyNet,
    pub opt: Adam,
    pub history: Vec<UpdateEvent>,
}

/// Everything needed to restart training at a period boundary.
pub struct Stage2State {
    pub net: PolicyNet,
    pub opt: Adam,
    pub next_period: usize,
    pub weights: WeightVector,
    pub seed: u64,
}

pub fn make_checkpoint(state: &Stage2State) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    ckpt.set_meta("next_period", state.next_period);
    ckpt.set_meta("seed", state.seed);
    let w = state.weights.to_array();
    ckpt.set_meta("weights", format!("{} {} {} {}", w[0], w[1], w[2], w[3]));
    ckpt.capture_net("net.", &state.net);
    state.opt.capture(&mut ckpt, "opt.");
    ckpt
}

pub fn restore_checkpoint(
    ckpt: &Checkpoint,
    net_cfg: NetConfig,
    adam_cfg: AdamConfig,
) -> Result<Stage2State> {
    let mut net = PolicyNet::new(net_cfg, 0)?;
    ckpt.restore_net("net.", &mut net)?;
    let mut opt = Adam::new(adam_cfg, &net);
    opt.restore(ckpt, "opt.")?;
    let w: Vec<f64> = ckpt
        .meta_str("weights")?
        .split(' ')
        .map(|t| t.parse().map_err(|_| Error::Checkpoint("bad weights meta".into())))
        .collect::<Result<_>>()?;
    if w.len() != 4 {
        return Err(Error::Checkpoint("weights meta must hold 4 values".into()));
    }
    Ok(Stage2State {
        net,
        opt,
        next_period: ckpt.meta_parse("next_period")?,
        weights: WeightVector::new([w[0], w[1], w[2], w[3]])?,
        seed: ckpt.meta_parse("seed")?,
    })
}

/// Run the curriculum from `state.next_period` to the end.
pub fn run_stage2(
    state: Stage2State,
    periods: &[PeriodSpec],
    base_env_cfg: &EnvConfig,
    ppo_cfg: PpoConfig,
    exec: Exec,
    sink: &mut dyn TrainSink,
) -> Result<Stage2Outcome> {
    if state.next_period > periods.len() {
        return Err(Error::invalid(format!(
            "next_period {} exceeds the {}-period curriculum",
            state.next_period,
            periods.len()
        )));
    }
    let Stage2State { mut net, mut opt, next_period, weights, seed } = state;
    let mut history = Vec::new();
    for (p, spec) in periods.iter().enumerate().skip(next_period) {
        let mut env_cfg = base_env_cfg.clone();
        env_cfg.n_columns = spec.n_columns;
        env_cfg.n_balls = spec.n_balls;
        let mut trainer = PpoTrainer::new(
            net,
            opt,
            ppo_cfg,
            env_cfg,
            weights,
            seed,
            &format!("stage2-p{p}"),
            exec,
        )?;
        let snap_every = sink.snapshot_interval();
        for u in 0..spec.updates {
            let stats = trainer.train_update()?;
            let event = UpdateEvent { period: p, update_in_period: u, stats };
            sink.on_update(&event);
            history.push(event);
            if snap_every > 0 && (u + 1) % snap_every == 0 && u + 1 < spec.updates {
                let snap = Stage2State {
                    net: trainer.net.clone(),
                    opt: trainer.opt.clone(),
                    next_period: p,
                    weights,
                    seed,
                };
                sink.on_snapshot(p, u, &make_checkpoint(&snap))?;
            }
        }
        net = trainer.net;
        opt = trainer.opt;
        let boundary = Stage2State {
            net: net.clone(),
            opt: opt.clone(),
            next_period: p + 1,
            weights,
            seed,
        };
        sink.on_period_end(p, &make_checkpoint(&boundary))?;
    }
    Ok(Stage2Outcome { net, opt, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_fixture() -> (Vec<PeriodSpec>, EnvConfig, NetConfig, PpoConfig) {
        let periods = vec![
            PeriodSpec { n_columns: 0, n_balls: 0, updates: 2 },
            PeriodSpec { n_columns: 3, n_balls: 1, updates: 2 },
        ];
        let env_cfg = EnvConfig { episode_len: 30, ..EnvConfig::default() };
        let net_cfg = NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 };
        let ppo_cfg = PpoConfig {
            n_envs: 2,
            rollout_len: 5,
            epochs: 1,
            minibatches: 1,
            ..PpoConfig::default()
        };
        (periods, env_cfg, net_cfg, ppo_cfg)
    }

    fn fresh_state(net_cfg: NetConfig, ppo_cfg: &PpoConfig, seed: u64) -> Stage2State {
        let net = PolicyNet::new(net_cfg, seed).unwrap();
        let opt = Adam::new(ppo_cfg.adam, &net);
        Stage2State {
            net,
            opt,
            next_period: 0,
            weights: WeightVector::new([0.25; 4]).unwrap(),
            seed,
        }
    }

    #[test]
    fn curriculum_uses_the_configured_worlds_per_period() {
        let (periods, env_cfg, net_cfg, ppo_cfg) = tiny_fixture();
        struct Probe {
            periods_seen: Vec<usize>,
        }
        impl TrainSink for Probe {
            fn on_period_end(&mut self, period: usize, ckpt: &Checkpoint) -> Result<()> {
                assert!(ckpt.tensors.contains_key("net.actor.w1"));
                self.periods_seen.push(period);
                Ok(())
            }
        }
        let mut probe = Probe { periods_seen: Vec::new() };
        let state = fresh_state(net_cfg, &ppo_cfg, 4);
        let out =
            run_stage2(state, &periods, &env_cfg, ppo_cfg, Exec::Sequential, &mut probe).unwrap();
        assert_eq!(probe.periods_seen, vec![0, 1]);
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.history[2].period, 1);
    }

    #[test]
    fn resume_from_boundary_checkpoint_is_bit_exact() {
        let (periods, env_cfg, net_cfg, ppo_cfg) = tiny_fixture();

        // Straight run over both periods.
        let straight = run_stage2(
            fresh_state(net_cfg, &ppo_cfg, 9),
            &periods,
            &env_cfg,
            ppo_cfg,
            Exec::Sequential,
            &mut NullSink,
        )
        .unwrap();

        // Run period 0 only, checkpoint, then resume through period 1.
        struct Capture(Option<Checkpoint>);
        impl TrainSink for Capture {
            fn on_period_end(&mut self, period: usize, ckpt: &Checkpoint) -> Result<()> {
                if period == 0 {
                    self.0 = Some(Checkpoint::parse(&ckpt.serialize()).unwrap());
                }
                Ok(())
            }
        }
        let mut cap = Capture(None);
        run_stage2(
            fresh_state(net_cfg, &ppo_cfg, 9),
            &periods[..1],
            &env_cfg,
            ppo_cfg,
            Exec::Sequential,
            &mut cap,
        )
        .unwrap();
        let state = restore_checkpoint(&cap.0.unwrap(), net_cfg, ppo_cfg.adam).unwrap();
        assert_eq!(state.next_period, 1);
        let resumed =
            run_stage2(state, &periods, &env_cfg, ppo_cfg, Exec::Sequential, &mut NullSink)
                .unwrap();

        for name in straight.net.param_names() {
            let a = &straight.net.param(name).unwrap().data;
            let b = &resumed.net.param(name).unwrap().data;
            let bits = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b), "parameter {name} diverged after resume");
        }
        assert_eq!(straight.opt.step_count(), resumed.opt.step_count());
    }

    #[test]
    fn snapshots_fire_between_updates_but_not_at_boundaries() {
        let (_, env_cfg, net_cfg, ppo_cfg) = tiny_fixture();
        let periods = vec![PeriodSpec { n_columns: 0, n_balls: 0, updates: 4 }];
        struct Snaps(Vec<(usize, usize)>);
        impl TrainSink for Snaps {
            fn snapshot_interval(&self) -> usize {
                2
            }
            fn on_snapshot(&mut self, period: usize, u: usize, ckpt: &Checkpoint) -> Result<()> {
                // A snapshot resume restarts the running period.
                assert_eq!(ckpt.meta_parse::<usize>("next_period").unwrap(), period);
                self.0.push((period, u));
                Ok(())
            }
        }
        let mut snaps = Snaps(Vec::new());
        let state = fresh_state(net_cfg, &ppo_cfg, 2);
        run_stage2(state, &periods, &env_cfg, ppo_cfg, Exec::Sequential, &mut snaps).unwrap();
        // Update 3 ends the period, so only the mid-period snapshot fires.
        assert_eq!(snaps.0, vec![(0, 1)]);
    }

    #[test]
    fn resume_past_the_curriculum_is_rejected() {
        let (periods, env_cfg, net_cfg, ppo_cfg) = tiny_fixture();
        let mut state = fresh_state(net_cfg, &ppo_cfg, 1);
        state.next_period = 5;
        assert!(run_stage2(
            state,
            &periods,
            &env_cfg,
            ppo_cfg,
            Exec::Sequential,
            &mut NullSink
        )
        .is_err());
    }
}
