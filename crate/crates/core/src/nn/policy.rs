//! Attention-based actor-critic over grouped observations. Each observation
//! group (self, other drones, static grid, ball slots) is embedded by its own
//! two-layer MLP with layer normalization, the resulting tokens run through
//! masked multi-head self-attention, and a cross-attention read with the self
//! token as query produces the feature vector shared by both heads.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::env::{
    Observation, DRONE_OBS_DIM, DYNAMIC_OBS_DIM, SELF_OBS_DIM, STATIC_OBS_DIM,
};
use crate::seeding;
use crate::{Error, Result};
use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const ACTION_DIM: usize = 4;
pub const LOGSTD_MIN: f64 = -5.0;
pub const LOGSTD_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub d_embed: usize,
    pub hidden: usize,
    pub heads: usize,
    pub logstd_init: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { d_embed: 64, hidden: 128, heads: 4, logstd_init: -0.7 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_embed == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.d_embed % self.heads != 0 {
            return Err(Error::Config("d_embed must be divisible by heads".into()));
        }
        Ok(())
    }
}

/// Shared actor-critic parameters, keyed by stable names so optimizers and
/// checkpoints can address tensors individually.
#[derive(Clone)]
pub struct PolicyNet {
    pub cfg: NetConfig,
    params: IndexMap<String, Arc<Tensor>>,
}

/// Tape handles for one bound copy of the parameters.
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

fn linear_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

impl PolicyNet {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<PolicyNet> {
        cfg.validate()?;
        let mut rng = seeding::rng_for(seed, "policy-init", 0);
        let d = cfg.d_embed;
        let h = cfg.hidden;
        let mut params: IndexMap<String, Arc<Tensor>> = IndexMap::new();
        let put = |params: &mut IndexMap<String, Arc<Tensor>>, name: &str, t: Tensor| {
            params.insert(name.to_string(), Arc::new(t));
        };

        for (group, in_dim) in [
            ("self", SELF_OBS_DIM),
            ("drone", DRONE_OBS_DIM),
            ("static", STATIC_OBS_DIM),
            ("dynamic", DYNAMIC_OBS_DIM),
        ] {
            put(&mut params, &format!("{group}.w1"), linear_init(&mut rng, in_dim, h, 2f64.sqrt()));
            put(&mut params, &format!("{group}.b1"), Tensor::zeros(1, h));
            put(&mut params, &format!("{group}.w2"), linear_init(&mut rng, h, d, 2f64.sqrt()));
            put(&mut params, &format!("{group}.b2"), Tensor::zeros(1, d));
            put(&mut params, &format!("{group}.ln_g"), Tensor::from_vec(1, d, vec![1.0; d]));
            put(&mut params, &format!("{group}.ln_b"), Tensor::zeros(1, d));
        }
        for block in ["attn", "cross"] {
            for mat in ["wq", "wk", "wv", "wo"] {
                put(&mut params, &format!("{block}.{mat}"), linear_init(&mut rng, d, d, 1.0));
            }
        }
        put(&mut params, "actor.w1", linear_init(&mut rng, 2 * d, h, 2f64.sqrt()));
        put(&mut params, "actor.b1", Tensor::zeros(1, h));
        put(&mut params, "actor.w2", linear_init(&mut rng, h, ACTION_DIM, 0.01));
        put(&mut params, "actor.b2", Tensor::zeros(1, ACTION_DIM));
        put(
            &mut params,
            "actor.logstd",
            Tensor::from_vec(1, ACTION_DIM, vec![cfg.logstd_init; ACTION_DIM]),
        );
        put(&mut params, "critic.w1", linear_init(&mut rng, 2 * d, h, 2f64.sqrt()));
        put(&mut params, "critic.b1", Tensor::zeros(1, h));
        put(&mut params, "critic.w2", linear_init(&mut rng, h, 1, 1.0));
        put(&mut params, "critic.b2", Tensor::zeros(1, 1));

        Ok(PolicyNet { cfg, params })
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn param(&self, name: &str) -> Option<&Arc<Tensor>> {
        self.params.get(name)
    }

    pub fn params(&self) -> &IndexMap<String, Arc<Tensor>> {
        &self.params
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: slot.shape(),
                got: value.shape(),
            });
        }
        *slot = Arc::new(value);
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Register every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, value)| (name.clone(), tape.leaf(Arc::clone(value))))
            .collect();
        Bound { vars }
    }

    fn mlp_embed(&self, tape: &mut Tape, bound: &Bound, group: &str, input: Var) -> Var {
        let h = tape.matmul(input, bound.var(&format!("{group}.w1")));
        let h = tape.add(h, bound.var(&format!("{group}.b1")));
        let h = tape.relu(h);
        let h = tape.matmul(h, bound.var(&format!("{group}.w2")));
        let h = tape.add(h, bound.var(&format!("{group}.b2")));
        tape.layernorm(h, bound.var(&format!("{group}.ln_g")), bound.var(&format!("{group}.ln_b")))
    }

    fn attention(
        &self,
        tape: &mut Tape,
        q_in: Var,
        kv_in: Var,
        key_mask: &[bool],
        bound: &Bound,
        block: &str,
    ) -> Result<Var> {
        let d = self.cfg.d_embed;
        let dh = d / self.cfg.heads;
        let q = tape.matmul(q_in, bound.var(&format!("{block}.wq")));
        let k = tape.matmul(kv_in, bound.var(&format!("{block}.wk")));
        let v = tape.matmul(kv_in, bound.var(&format!("{block}.wv")));
        let mut head_outs = Vec::with_capacity(self.cfg.heads);
        for head in 0..self.cfg.heads {
            let qh = tape.slice_cols(q, head * dh, dh);
            let kh = tape.slice_cols(k, head * dh, dh);
            let vh = tape.slice_cols(v, head * dh, dh);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let weights = tape.masked_softmax(scores, key_mask)?;
            head_outs.push(tape.matmul(weights, vh));
        }
        let concat = tape.concat_cols(&head_outs);
        Ok(tape.matmul(concat, bound.var(&format!("{block}.wo"))))
    }

    /// Encode one observation into the feature row `f` of width 2*d_embed.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, obs: &Observation) -> Result<Var> {
        if !obs.dims_ok() {
            return Err(Error::invalid("observation dimensions are inconsistent"));
        }
        let self_in = tape.constant(Tensor::row(&obs.self_obs));
        let mut tokens = vec![self.mlp_embed(tape, bound, "self", self_in)];
        let mut mask = vec![true];
        for j in 0..obs.n_other {
            let row = &obs.drones_obs[j * DRONE_OBS_DIM..(j + 1) * DRONE_OBS_DIM];
            let input = tape.constant(Tensor::row(row));
            tokens.push(self.mlp_embed(tape, bound, "drone", input));
            mask.push(true);
        }
        let static_in = tape.constant(Tensor::row(&obs.static_obs));
        tokens.push(self.mlp_embed(tape, bound, "static", static_in));
        mask.push(true);
        for (slot, &visible) in obs.dynamic_mask.iter().enumerate() {
            let row = &obs.dynamic_obs[slot * DYNAMIC_OBS_DIM..(slot + 1) * DYNAMIC_OBS_DIM];
            let input = tape.constant(Tensor::row(row));
            tokens.push(self.mlp_embed(tape, bound, "dynamic", input));
            mask.push(visible);
        }

        let x = tape.concat_rows(&tokens);
        let attended = self.attention(tape, x, x, &mask, bound, "attn")?;
        let h = tape.add(x, attended);

        let self_row = tape.slice_rows(h, 0, 1);
        let others = tape.slice_rows(h, 1, tokens.len() - 1);
        let cross = self.attention(tape, self_row, others, &mask[1..], bound, "cross")?;
        Ok(tape.concat_cols(&[self_row, cross]))
    }

    /// Actor head: (mean 1x4, clamped logstd 1x4).
    pub fn actor_head(&self, tape: &mut Tape, bound: &Bound, f: Var) -> (Var, Var) {
        let h = tape.matmul(f, bound.var("actor.w1"));
        let h = tape.add(h, bound.var("actor.b1"));
        let h = tape.relu(h);
        let h = tape.matmul(h, bound.var("actor.w2"));
        let mean = tape.add(h, bound.var("actor.b2"));
        let logstd = tape.clamp(bound.var("actor.logstd"), LOGSTD_MIN, LOGSTD_MAX);
        (mean, logstd)
    }

    /// Critic head: scalar state value.
    pub fn critic_head(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Var {
        let h = tape.matmul(f, bound.var("critic.w1"));
        let h = tape.add(h, bound.var("critic.b1"));
        let h = tape.relu(h);
        let h = tape.matmul(h, bound.var("critic.w2"));
        tape.add(h, bound.var("critic.b2"))
    }

    /// Log-density of `action` under the diagonal Gaussian (mean, exp(logstd)),
    /// built on the tape so it stays differentiable.
    pub fn log_prob_var(&self, tape: &mut Tape, mean: Var, logstd: Var, action: &[f64; 4]) -> Var {
        let a = tape.constant(Tensor::row(action));
        let diff = tape.sub(a, mean);
        let neg_logstd = tape.scale(logstd, -1.0);
        let inv_std = tape.exp(neg_logstd);
        let z = tape.mul(diff, inv_std);
        let z2 = tape.mul(z, z);
        let sum_z2 = tape.sum(z2);
        let quad = tape.scale(sum_z2, -0.5);
        let sum_logstd = tape.sum(logstd);
        let lp = tape.sub(quad, sum_logstd);
        let c = -0.5 * ACTION_DIM as f64 * (2.0 * std::f64::consts::PI).ln();
        tape.add_scalar(lp, c)
    }

    /// Gaussian entropy; depends only on logstd.
    pub fn entropy_var(&self, tape: &mut Tape, logstd: Var) -> Var {
        let s = tape.sum(logstd);
        let c = 0.5 * ACTION_DIM as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        tape.add_scalar(s, c)
    }

    /// Forward pass without gradients: mean, logstd values and state value.
    pub fn forward(&self, obs: &Observation) -> Result<([f64; 4], [f64; 4], f64)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let f = self.encode(&mut tape, &bound, obs)?;
        let (mean, logstd) = self.actor_head(&mut tape, &bound, f);
        let value = self.critic_head(&mut tape, &bound, f);
        let m = tape.value(mean);
        let s = tape.value(logstd);
        Ok((
            std::array::from_fn(|i| m.data[i]),
            std::array::from_fn(|i| s.data[i]),
            tape.value(value).item(),
        ))
    }

    /// Sample a raw (pre-clip) action; returns (action, log_prob, value).
    pub fn sample(
        &self,
        obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> Result<([f64; 4], f64, f64)> {
        let (mean, logstd, value) = self.forward(obs)?;
        let mut action = [0.0; 4];
        let mut log_prob = 0.0;
        for i in 0..ACTION_DIM {
            let std = logstd[i].exp();
            let eps = standard_normal(rng);
            action[i] = mean[i] + std * eps;
            log_prob += -0.5 * eps * eps - logstd[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        Ok((action, log_prob, value))
    }

    /// Deterministic action (distribution mean), for evaluation.
    pub fn mean_action(&self, obs: &Observation) -> Result<[f64; 4]> {
        Ok(self.forward(obs)?.0)
    }

    pub fn log_prob_value(&self, obs: &Observation, action: &[f64; 4]) -> Result<f64> {
        let (mean, logstd, _) = self.forward(obs)?;
        let mut lp = 0.0;
        for i in 0..ACTION_DIM {
            let std = logstd[i].exp();
            let z = (action[i] - mean[i]) / std;
            lp += -0.5 * z * z - logstd[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        Ok(lp)
    }
}

/// Box-Muller standard normal draw (two uniforms per sample, one discarded).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, EnvConfig};
    use approx::assert_relative_eq;

    fn test_obs() -> Observation {
        let cfg = EnvConfig { n_columns: 5, n_balls: 2, ..EnvConfig::default() };
        let env = Env::new(cfg).unwrap();
        env.build_observation(0)
    }

    fn small_net() -> PolicyNet {
        PolicyNet::new(NetConfig { d_embed: 16, hidden: 24, heads: 2, logstd_init: -0.7 }, 7)
            .unwrap()
    }

    #[test]
    fn feature_width_is_twice_embed() {
        let net = small_net();
        let obs = test_obs();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let f = net.encode(&mut tape, &bound, &obs).unwrap();
        assert_eq!(tape.value(f).shape(), (1, 2 * net.cfg.d_embed));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = PolicyNet::new(NetConfig::default(), 3).unwrap();
        let b = PolicyNet::new(NetConfig::default(), 3).unwrap();
        let c = PolicyNet::new(NetConfig::default(), 4).unwrap();
        for name in a.param_names() {
            assert_eq!(a.param(name).unwrap().data, b.param(name).unwrap().data);
        }
        assert_ne!(
            a.param("actor.w1").unwrap().data,
            c.param("actor.w1").unwrap().data
        );
    }

    #[test]
    fn heads_must_divide_embed() {
        assert!(PolicyNet::new(
            NetConfig { d_embed: 10, hidden: 8, heads: 4, logstd_init: -0.7 },
            0
        )
        .is_err());
    }

    #[test]
    fn forward_outputs_are_finite_and_logstd_clamped() {
        let net = small_net();
        let (mean, logstd, value) = net.forward(&test_obs()).unwrap();
        assert!(mean.iter().all(|m| m.is_finite()));
        assert!(value.is_finite());
        for s in logstd {
            assert!((LOGSTD_MIN..=LOGSTD_MAX).contains(&s));
            assert_relative_eq!(s, -0.7);
        }
    }

    #[test]
    fn masked_ball_slot_does_not_affect_features() {
        // Changing the payload of a masked slot must not change the output.
        let net = small_net();
        let mut obs = test_obs();
        obs.dynamic_mask = vec![true, false];
        let base = net.forward(&obs).unwrap();
        for k in 0..DYNAMIC_OBS_DIM {
            obs.dynamic_obs[DYNAMIC_OBS_DIM + k] = 1234.5 + k as f64;
        }
        let changed = net.forward(&obs).unwrap();
        for i in 0..4 {
            assert_eq!(base.0[i], changed.0[i]);
        }
        assert_eq!(base.2, changed.2);
    }

    #[test]
    fn unmasked_ball_slot_does_affect_features() {
        let net = small_net();
        let mut obs = test_obs();
        obs.dynamic_mask = vec![true, true];
        let base = net.forward(&obs).unwrap();
        obs.dynamic_obs[DYNAMIC_OBS_DIM] += 0.5;
        let changed = net.forward(&obs).unwrap();
        assert_ne!(base.0, changed.0);
    }

    #[test]
    fn log_prob_matches_closed_form_gaussian() {
        let net = small_net();
        let obs = test_obs();
        let (mean, logstd, _) = net.forward(&obs).unwrap();
        let action = [0.1, -0.2, 0.3, 0.05];
        // scalar oracle
        let mut oracle = 0.0;
        for i in 0..4 {
            let std = logstd[i].exp();
            let z = (action[i] - mean[i]) / std;
            oracle += -0.5 * z * z - logstd[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        assert_relative_eq!(net.log_prob_value(&obs, &action).unwrap(), oracle, epsilon = 1e-12);

        // tape version agrees with the scalar version
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let f = net.encode(&mut tape, &bound, &obs).unwrap();
        let (mean_v, logstd_v) = net.actor_head(&mut tape, &bound, f);
        let lp = net.log_prob_var(&mut tape, mean_v, logstd_v, &action);
        assert_relative_eq!(tape.value(lp).item(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn sampled_action_log_prob_is_consistent() {
        let net = small_net();
        let obs = test_obs();
        let mut rng = seeding::rng_for(11, "sample", 0);
        let (action, lp, _) = net.sample(&obs, &mut rng).unwrap();
        let recomputed = net.log_prob_value(&obs, &action).unwrap();
        assert_relative_eq!(lp, recomputed, epsilon = 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_per_rng_stream() {
        let net = small_net();
        let obs = test_obs();
        let mut r1 = seeding::rng_for(5, "s", 0);
        let mut r2 = seeding::rng_for(5, "s", 0);
        assert_eq!(net.sample(&obs, &mut r1).unwrap().0, net.sample(&obs, &mut r2).unwrap().0);
    }

    #[test]
    fn entropy_matches_closed_form() {
        let net = small_net();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let logstd = tape.clamp(bound.var("actor.logstd"), LOGSTD_MIN, LOGSTD_MAX);
        let ent = net.entropy_var(&mut tape, logstd);
        let expected =
            4.0 * (-0.7) + 0.5 * 4.0 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(tape.value(ent).item(), expected, epsilon = 1e-12);
    }

    #[test]
    fn gradients_flow_to_every_block() {
        let net = small_net();
        let mut obs = test_obs();
        // Balls may spawn outside sensing range, in which case their slots are
        // masked and zeroed; force both visible with nonzero features so the
        // dynamic branch participates.
        obs.dynamic_mask = vec![true, true];
        for (i, x) in obs.dynamic_obs.iter_mut().enumerate() {
            *x = 0.05 * (i as f64 + 1.0);
        }
        let action = [0.1, 0.0, -0.1, 0.2];
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let f = net.encode(&mut tape, &bound, &obs).unwrap();
        let (mean, logstd) = net.actor_head(&mut tape, &bound, f);
        let value = net.critic_head(&mut tape, &bound, f);
        let lp = net.log_prob_var(&mut tape, mean, logstd, &action);
        let loss = tape.add(lp, value);
        let loss = tape.sum(loss);
        let grads = tape.backward(loss).unwrap();
        for probe in [
            "self.w1", "drone.w1", "static.w1", "dynamic.w1", "attn.wq", "attn.wo",
            "cross.wq", "actor.w1", "actor.logstd", "critic.w2",
        ] {
            let g = grads[bound.var(probe).0]
                .as_ref()
                .unwrap_or_else(|| panic!("no gradient for {probe}"));
            assert!(
                g.data.iter().any(|&x| x != 0.0),
                "gradient for {probe} is identically zero"
            );
        }
    }

    #[test]
    fn encoder_gradient_passes_finite_differences() {
        // Spot-check a handful of weights of the full encode+heads graph.
        let net = PolicyNet::new(
            NetConfig { d_embed: 8, hidden: 10, heads: 2, logstd_init: -0.7 },
            21,
        )
        .unwrap();
        let obs = test_obs();
        let action = [0.2, -0.3, 0.1, 0.0];

        let loss_of = |net: &PolicyNet| -> f64 {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let f = net.encode(&mut tape, &bound, &obs).unwrap();
            let (mean, logstd) = net.actor_head(&mut tape, &bound, f);
            let value = net.critic_head(&mut tape, &bound, f);
            let lp = net.log_prob_var(&mut tape, mean, logstd, &action);
            let combined = tape.add(lp, value);
            let s = tape.sum(combined);
            tape.value(s).item()
        };

        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let f = net.encode(&mut tape, &bound, &obs).unwrap();
        let (mean, logstd) = net.actor_head(&mut tape, &bound, f);
        let value = net.critic_head(&mut tape, &bound, f);
        let lp = net.log_prob_var(&mut tape, mean, logstd, &action);
        let combined = tape.add(lp, value);
        let loss = tape.sum(combined);
        let grads = tape.backward(loss).unwrap();

        let h = 1e-6;
        for name in ["attn.wq", "cross.wv", "self.w2", "actor.w1", "critic.w1"] {
            let g = grads[bound.var(name).0].as_ref().unwrap();
            let t = net.param(name).unwrap().as_ref().clone();
            for &idx in &[0usize, t.len() / 2, t.len() - 1] {
                let mut plus = net.clone();
                let mut tp = t.clone();
                tp.data[idx] += h;
                plus.set_param(name, tp).unwrap();
                let mut minus = net.clone();
                let mut tm = t.clone();
                tm.data[idx] -= h;
                minus.set_param(name, tm).unwrap();
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let ad = g.data[idx];
                let denom = fd.abs().max(ad.abs()).max(1e-6);
                assert!(
                    ((fd - ad) / denom).abs() < 1e-3,
                    "{name}[{idx}]: fd {fd} vs ad {ad}"
                );
            }
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = seeding::rng_for(77, "normal", 0);
        let n = 20000;
        let samples: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn set_param_rejects_shape_mismatch() {
        let mut net = small_net();
        assert!(net.set_param("actor.b2", Tensor::zeros(1, 5)).is_err());
        assert!(net.set_param("nope", Tensor::zeros(1, 1)).is_err());
    }
}
