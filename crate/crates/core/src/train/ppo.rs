//! Proximal policy optimization with shared parameters across agents.
//! Rollouts are collected from a bank of environments; each (environment,
//! agent) pair contributes one trajectory per update. Both rollout
//! collection and minibatch gradient accumulation run under [`Exec`] and
//! produce bit-identical results in either mode.

use super::adam::{Adam, AdamConfig};
use super::buffer::{RolloutBuffer, Sample, Trajectory};
use crate::env::{cmd_from_normalized, Env, EnvConfig, Observation};
use crate::nn::tape::Tape;
use crate::nn::tensor::Tensor;
use crate::nn::PolicyNet;
use crate::par::{self, Exec};
use crate::reward::{scalarize, WeightVector};
use crate::seeding;
use crate::{Error, Result};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub n_envs: usize,
    pub rollout_len: usize,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            ent_coef: 0.01,
            vf_coef: 0.5,
            n_envs: 8,
            rollout_len: 64,
            adam: AdamConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) && self.gamma != 1.0 {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        if self.clip <= 0.0 || self.clip >= 1.0 {
            return Err(Error::Config("clip must lie in (0, 1)".into()));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.n_envs == 0 || self.rollout_len == 0
        {
            return Err(Error::Config("epochs, minibatches, n_envs, rollout_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub n_samples: usize,
    pub episodes_finished: usize,
}

struct EnvSlot {
    env: Env,
    rng: ChaCha8Rng,
    obs: Vec<Observation>,
    pending: Vec<Trajectory>,
    episodes_finished: usize,
    failed: Option<String>,
}

pub struct PpoTrainer {
    pub net: PolicyNet,
    pub opt: Adam,
    pub cfg: PpoConfig,
    env_cfg: EnvConfig,
    weights: WeightVector,
    slots: Vec<EnvSlot>,
    update_index: u64,
    seed: u64,
    stream: String,
    exec: Exec,
    last_episodes: usize,
}

impl PpoTrainer {
    /// `stream` namespaces every RNG draw, so separate training phases on
    /// the same master seed stay independent and resumable.
    pub fn new(
        net: PolicyNet,
        opt: Adam,
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        weights: WeightVector,
        seed: u64,
        stream: &str,
        exec: Exec,
    ) -> Result<PpoTrainer> {
        cfg.validate()?;
        weights.validate()?;
        let mut slots = Vec::with_capacity(cfg.n_envs);
        for i in 0..cfg.n_envs {
            let mut ec = env_cfg.clone();
            ec.seed = seeding::derive_seed(seed, &format!("{stream}-env"), i as u64);
            let env = Env::new(ec)?;
            let obs = env.observations();
            slots.push(EnvSlot {
                env,
                rng: seeding::rng_for(seed, &format!("{stream}-sample"), i as u64),
                obs,
                pending: Vec::new(),
                episodes_finished: 0,
                failed: None,
            });
        }
        Ok(PpoTrainer {
            net,
            opt,
            cfg,
            env_cfg,
            weights,
            slots,
            update_index: 0,
            seed,
            stream: stream.to_string(),
            exec,
            last_episodes: 0,
        })
    }

    pub fn update_index(&self) -> u64 {
        self.update_index
    }

    pub fn weights(&self) -> WeightVector {
        self.weights
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_cfg
    }

    fn roll_slot(
        slot: &mut EnvSlot,
        net: &PolicyNet,
        weights: &WeightVector,
        cfg: &PpoConfig,
        env_cfg: &EnvConfig,
    ) -> Result<()> {
        let n_agents = env_cfg.n_drones;
        let mut trajs: Vec<Trajectory> = (0..n_agents).map(|_| Trajectory::default()).collect();
        for _ in 0..cfg.rollout_len {
            let mut staged = Vec::with_capacity(n_agents);
            let mut cmds = Vec::with_capacity(n_agents);
            for agent in 0..n_agents {
                let (action, log_prob, value) = net.sample(&slot.obs[agent], &mut slot.rng)?;
                cmds.push(cmd_from_normalized(action, &env_cfg.quad, env_cfg.clip_actions));
                staged.push((action, log_prob, value));
            }
            let result = slot.env.step(&cmds)?;
            for (agent, (action, log_prob, value)) in staged.into_iter().enumerate() {
                let reward = scalarize(&result.reward_vectors[agent], weights)?;
                trajs[agent].samples.push(Sample {
                    obs: slot.obs[agent].clone(),
                    action,
                    log_prob,
                    value,
                    reward,
                    done: result.done,
                    advantage: 0.0,
                    ret: 0.0,
                });
            }
            if result.done {
                slot.episodes_finished += 1;
                slot.obs = slot.env.reset()?;
            } else {
                slot.obs = result.observations;
            }
        }
        for (agent, traj) in trajs.iter_mut().enumerate() {
            let tail_done = traj.samples.last().map(|s| s.done).unwrap_or(true);
            traj.bootstrap = if tail_done { 0.0 } else { net.forward(&slot.obs[agent])?.2 };
        }
        slot.pending = trajs;
        Ok(())
    }

    /// Collect one rollout from every environment.
    pub fn collect(&mut self) -> Result<Vec<Sample>> {
        let net = self.net.clone();
        let weights = self.weights;
        let cfg = self.cfg;
        let env_cfg = self.env_cfg.clone();
        par::for_each_mut(self.exec, &mut self.slots, |_, slot| {
            if let Err(e) = Self::roll_slot(slot, &net, &weights, &cfg, &env_cfg) {
                slot.failed = Some(e.to_string());
            }
        });
        let mut buffer = RolloutBuffer::default();
        let mut episodes = 0;
        for slot in &mut self.slots {
            if let Some(msg) = slot.failed.take() {
                return Err(Error::Numerical(format!("rollout failed: {msg}")));
            }
            episodes += std::mem::take(&mut slot.episodes_finished);
            buffer.trajectories.append(&mut slot.pending);
        }
        self.last_episodes = episodes;
        Ok(buffer.finish(self.cfg.gamma, self.cfg.lambda))
    }

    /// Run the clipped-surrogate optimization over one batch of samples.
    pub fn optimize(&mut self, samples: &[Sample]) -> Result<UpdateStats> {
        if samples.is_empty() {
            return Err(Error::invalid("optimize needs a non-empty batch"));
        }
        let mut stats = UpdateStats {
            mean_reward: samples.iter().map(|s| s.reward).sum::<f64>() / samples.len() as f64,
            n_samples: samples.len(),
            episodes_finished: self.last_episodes,
            ..UpdateStats::default()
        };
        let mut shuffle_rng =
            seeding::rng_for(self.seed, &format!("{}-shuffle", self.stream), self.update_index);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut term_count = 0usize;
        for _epoch in 0..self.cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let mb_size = samples.len().div_ceil(self.cfg.minibatches);
            for mb in order.chunks(mb_size) {
                let batch: Vec<&Sample> = mb.iter().map(|&i| &samples[i]).collect();
                let net = &self.net;
                let cfg = self.cfg;
                let (mut grads, terms) = par::chunked_fold(
                    self.exec,
                    &batch,
                    || (IndexMap::<String, Tensor>::new(), LossTerms::default()),
                    |acc, s| {
                        match sample_loss_grads(net, s, &cfg) {
                            Ok((g, t)) => {
                                merge_grads(&mut acc.0, g);
                                acc.1.add(&t);
                            }
                            Err(e) => acc.1.record_failure(&e),
                        }
                    },
                    |acc, part| {
                        merge_grads(&mut acc.0, part.0);
                        acc.1.add(&part.1);
                    },
                );
                if let Some(msg) = terms.failure {
                    return Err(Error::Numerical(format!("loss graph failed: {msg}")));
                }
                let scale = 1.0 / batch.len() as f64;
                for g in grads.values_mut() {
                    g.scale_assign(scale);
                }
                stats.grad_norm = self.opt.step(&mut self.net, &grads)?;
                stats.policy_loss += terms.policy * scale;
                stats.value_loss += terms.value * scale;
                stats.entropy += terms.entropy * scale;
                term_count += 1;
            }
        }
        let inv = 1.0 / term_count as f64;
        stats.policy_loss *= inv;
        stats.value_loss *= inv;
        stats.entropy *= inv;
        self.update_index += 1;
        Ok(stats)
    }

    /// One full PPO iteration: collect, then optimize.
    pub fn train_update(&mut self) -> Result<UpdateStats> {
        let samples = self.collect()?;
        self.optimize(&samples)
    }
}

#[derive(Debug, Clone, Default)]
struct LossTerms {
    policy: f64,
    value: f64,
    entropy: f64,
    failure: Option<String>,
}

impl LossTerms {
    fn add(&mut self, other: &LossTerms) {
        self.policy += other.policy;
        self.value += other.value;
        self.entropy += other.entropy;
        if self.failure.is_none() {
            self.failure = other.failure.clone();
        }
    }

    fn record_failure(&mut self, e: &Error) {
        if self.failure.is_none() {
            self.failure = Some(e.to_string());
        }
    }
}

fn merge_grads(acc: &mut IndexMap<String, Tensor>, part: IndexMap<String, Tensor>) {
    for (name, g) in part {
        match acc.get_mut(&name) {
            Some(t) => t.add_assign(&g),
            None => {
                acc.insert(name, g);
            }
        }
    }
}

/// Per-sample clipped PPO loss and its parameter gradients.
fn sample_loss_grads(
    net: &PolicyNet,
    sample: &Sample,
    cfg: &PpoConfig,
) -> Result<(IndexMap<String, Tensor>, LossTerms)> {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let f = net.encode(&mut tape, &bound, &sample.obs)?;
    let (mean, logstd) = net.actor_head(&mut tape, &bound, f);
    let value = net.critic_head(&mut tape, &bound, f);

    let lp = net.log_prob_var(&mut tape, mean, logstd, &sample.action);
    let lp_old = tape.constant(Tensor::scalar(sample.log_prob));
    let log_ratio = tape.sub(lp, lp_old);
    let ratio = tape.exp(log_ratio);
    let adv = tape.constant(Tensor::scalar(sample.advantage));
    let surr1 = tape.mul(ratio, adv);
    let ratio_clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let surr2 = tape.mul(ratio_clipped, adv);
    let objective = tape.min2(surr1, surr2);
    let policy_loss = tape.scale(objective, -1.0);

    let ret = tape.constant(Tensor::scalar(sample.ret));
    let v_err = tape.sub(value, ret);
    let value_loss = tape.mul(v_err, v_err);
    let entropy = net.entropy_var(&mut tape, logstd);

    let v_term = tape.scale(value_loss, cfg.vf_coef);
    let e_term = tape.scale(entropy, -cfg.ent_coef);
    let partial = tape.add(policy_loss, v_term);
    let total = tape.add(partial, e_term);

    let terms = LossTerms {
        policy: tape.value(policy_loss).item(),
        value: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        failure: None,
    };

    let grads = tape.backward(total)?;
    let mut out = IndexMap::new();
    for (name, var) in bound.iter() {
        if let Some(g) = &grads[var.0] {
            if !g.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient for {name}")));
            }
            out.insert(name.to_string(), g.clone());
        }
    }
    Ok((out, terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::policy::NetConfig;

    fn tiny_setup(exec: Exec, seed: u64) -> PpoTrainer {
        let net_cfg = NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 };
        let net = PolicyNet::new(net_cfg, seed).unwrap();
        let ppo = PpoConfig {
            n_envs: 2,
            rollout_len: 6,
            epochs: 2,
            minibatches: 2,
            ..PpoConfig::default()
        };
        let opt = Adam::new(ppo.adam, &net);
        let env_cfg = EnvConfig {
            n_columns: 3,
            n_balls: 1,
            episode_len: 40,
            ..EnvConfig::default()
        };
        let weights = WeightVector::new([0.25, 0.25, 0.25, 0.25]).unwrap();
        PpoTrainer::new(net, opt, ppo, env_cfg, weights, seed, "test", exec).unwrap()
    }

    #[test]
    fn collect_yields_expected_sample_count() {
        let mut t = tiny_setup(Exec::Sequential, 5);
        let samples = t.collect().unwrap();
        // n_envs * rollout_len * n_drones
        assert_eq!(samples.len(), 2 * 6 * 3);
        for s in &samples {
            assert!(s.log_prob.is_finite());
            assert!(s.advantage.is_finite());
            assert!(s.ret.is_finite());
        }
    }

    #[test]
    fn update_changes_parameters_and_reports_finite_stats() {
        let mut t = tiny_setup(Exec::Sequential, 6);
        let before = t.net.param("actor.w2").unwrap().data.clone();
        let stats = t.train_update().unwrap();
        assert!(stats.mean_reward.is_finite());
        assert!(stats.policy_loss.is_finite());
        assert!(stats.value_loss >= 0.0);
        assert!(stats.grad_norm > 0.0);
        assert_ne!(t.net.param("actor.w2").unwrap().data, before);
        assert_eq!(t.update_index(), 1);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let run = || {
            let mut t = tiny_setup(Exec::Sequential, 7);
            for _ in 0..2 {
                t.train_update().unwrap();
            }
            t.net.param("actor.w1").unwrap().data.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parallel_and_sequential_updates_are_bit_identical() {
        let run = |exec| {
            let mut t = tiny_setup(exec, 8);
            for _ in 0..2 {
                t.train_update().unwrap();
            }
            let mut out = Vec::new();
            for name in ["actor.w1", "critic.w1", "attn.wq", "self.w1", "actor.logstd"] {
                out.extend(t.net.param(name).unwrap().data.iter().map(|v| v.to_bits()));
            }
            out
        };
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }

    #[test]
    fn surrogate_gradient_sign_matches_advantage() {
        // For a fresh policy (ratio = 1), the policy gradient must push the
        // log-prob of positively advantaged actions up: d(pol)/d(lp) = -adv.
        let net_cfg = NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 };
        let net = PolicyNet::new(net_cfg, 3).unwrap();
        let env_cfg = EnvConfig { n_columns: 0, n_balls: 0, ..EnvConfig::default() };
        let env = Env::new(env_cfg).unwrap();
        let obs = env.build_observation(0);
        let mut rng = seeding::rng_for(1, "sg", 0);
        let (action, lp, value) = net.sample(&obs, &mut rng).unwrap();
        let cfg = PpoConfig { vf_coef: 0.0, ent_coef: 0.0, ..PpoConfig::default() };

        let grads_for = |advantage: f64| {
            let s = Sample {
                obs: obs.clone(),
                action,
                log_prob: lp,
                value,
                reward: 0.0,
                done: false,
                advantage,
                ret: value,
            };
            sample_loss_grads(&net, &s, &cfg).unwrap().0
        };
        let g_pos = grads_for(1.0);
        let g_neg = grads_for(-1.0);
        // Pure policy loss with mirrored advantages gives mirrored gradients.
        let gp = &g_pos["actor.b2"];
        let gn = &g_neg["actor.b2"];
        for (a, b) in gp.data.iter().zip(&gn.data) {
            assert!((a + b).abs() < 1e-12, "gradients not antisymmetric: {a} vs {b}");
        }
        assert!(gp.data.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn clipping_zeroes_policy_gradient_outside_trust_region() {
        let net_cfg = NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 };
        let net = PolicyNet::new(net_cfg, 3).unwrap();
        let env_cfg = EnvConfig { n_columns: 0, n_balls: 0, ..EnvConfig::default() };
        let env = Env::new(env_cfg).unwrap();
        let obs = env.build_observation(0);
        let mut rng = seeding::rng_for(2, "clip", 0);
        let (action, lp, value) = net.sample(&obs, &mut rng).unwrap();
        let cfg = PpoConfig { vf_coef: 0.0, ent_coef: 0.0, ..PpoConfig::default() };
        // Fake an old log-prob far below the current one: ratio >> 1 + clip.
        // With positive advantage the clipped branch is active and constant,
        // so no gradient reaches the actor mean parameters.
        let s = Sample {
            obs,
            action,
            log_prob: lp - 3.0,
            value,
            reward: 0.0,
            done: false,
            advantage: 1.0,
            ret: value,
        };
        let (grads, _) = sample_loss_grads(&net, &s, &cfg).unwrap();
        let gb2 = grads.get("actor.b2");
        assert!(
            gb2.map(|g| g.data.iter().all(|&x| x == 0.0)).unwrap_or(true),
            "clipped sample leaked gradient into the actor head"
        );
    }
}
