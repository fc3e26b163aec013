//! Adam over named parameter tensors, with global gradient-norm clipping.

use crate::nn::checkpoint::Checkpoint;
use crate::nn::policy::{PolicyNet, LOGSTD_MAX, LOGSTD_MIN};
use crate::nn::tensor::Tensor;
use crate::{Error, Result};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 clip threshold; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: 0.5 }
    }
}

#[derive(Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, net: &PolicyNet) -> Adam {
        let m = net
            .params()
            .iter()
            .map(|(k, p)| (k.clone(), Tensor::zeros(p.rows, p.cols)))
            .collect();
        let v = net
            .params()
            .iter()
            .map(|(k, p)| (k.clone(), Tensor::zeros(p.rows, p.cols)))
            .collect();
        Adam { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update. Returns the pre-clip global gradient norm.
    pub fn step(
        &mut self,
        net: &mut PolicyNet,
        grads: &IndexMap<String, Tensor>,
    ) -> Result<f64> {
        let mut sq_norm = 0.0;
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient for {name}")));
            }
            sq_norm += g.data.iter().map(|x| x * x).sum::<f64>();
        }
        let norm = sq_norm.sqrt();
        let clip = if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
            self.cfg.max_grad_norm / norm
        } else {
            1.0
        };

        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        let names: Vec<String> = grads.keys().cloned().collect();
        for name in names {
            let g = &grads[&name];
            let m = self
                .m
                .get_mut(&name)
                .ok_or_else(|| Error::invalid(format!("optimizer has no slot for {name}")))?;
            let v = self.v.get_mut(&name).expect("m and v share keys");
            let param = net
                .param(&name)
                .ok_or_else(|| Error::invalid(format!("network has no parameter {name}")))?;
            if param.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: param.shape(),
                    got: g.shape(),
                });
            }
            let mut new_param = param.as_ref().clone();
            for i in 0..g.data.len() {
                let gi = g.data[i] * clip;
                m.data[i] = self.cfg.beta1 * m.data[i] + (1.0 - self.cfg.beta1) * gi;
                v.data[i] = self.cfg.beta2 * v.data[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                new_param.data[i] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
            if name == "actor.logstd" {
                for x in new_param.data.iter_mut() {
                    *x = x.clamp(LOGSTD_MIN, LOGSTD_MAX);
                }
            }
            net.set_param(&name, new_param)?;
        }
        Ok(norm)
    }

    pub fn capture(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.set_meta(&format!("{prefix}t"), self.t);
        for (name, t) in &self.m {
            ckpt.insert_tensor(&format!("{prefix}m.{name}"), t.clone());
        }
        for (name, t) in &self.v {
            ckpt.insert_tensor(&format!("{prefix}v.{name}"), t.clone());
        }
    }

    pub fn restore(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
        self.t = ckpt.meta_parse(&format!("{prefix}t"))?;
        for (name, slot) in self.m.iter_mut() {
            let key = format!("{prefix}m.{name}");
            let t = ckpt
                .tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ShapeMismatch {
                    name: key,
                    expected: slot.shape(),
                    got: t.shape(),
                });
            }
            *slot = t.clone();
        }
        for (name, slot) in self.v.iter_mut() {
            let key = format!("{prefix}v.{name}");
            let t = ckpt
                .tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            *slot = t.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::policy::NetConfig;

    fn make_net() -> PolicyNet {
        PolicyNet::new(NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 }, 1)
            .unwrap()
    }

    /// Gradient of f(w) = sum_i (w_i - target)^2 for one tensor, zeros
    /// elsewhere.
    fn quadratic_grads(net: &PolicyNet, name: &str, target: f64) -> IndexMap<String, Tensor> {
        let p = net.param(name).unwrap();
        let mut g = Tensor::zeros(p.rows, p.cols);
        for i in 0..p.len() {
            g.data[i] = 2.0 * (p.data[i] - target);
        }
        IndexMap::from([(name.to_string(), g)])
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut net = make_net();
        let cfg = AdamConfig { lr: 0.05, max_grad_norm: 0.0, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &net);
        for _ in 0..500 {
            let grads = quadratic_grads(&net, "actor.b2", 0.25);
            opt.step(&mut net, &grads).unwrap();
        }
        for &x in &net.param("actor.b2").unwrap().data {
            assert!((x - 0.25).abs() < 1e-3, "not converged: {x}");
        }
    }

    #[test]
    fn reports_preclip_norm_and_clips_updates() {
        let mut net = make_net();
        let cfg = AdamConfig { max_grad_norm: 0.5, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &net);
        let p = net.param("critic.b1").unwrap();
        let n_elems = p.len();
        let big = Tensor::from_vec(p.rows, p.cols, vec![100.0; n_elems]);
        let grads = IndexMap::from([("critic.b1".to_string(), big.clone())]);
        let norm = opt.step(&mut net, &grads).unwrap();
        let expected = (100.0f64 * 100.0 * n_elems as f64).sqrt();
        assert!((norm - expected).abs() < 1e-9);

        // A colinear gradient of different magnitude must give the same
        // clipped first step (same direction, both clipped to the cap).
        let mut net2 = make_net();
        let mut opt2 = Adam::new(cfg, &net2);
        let mut small = big;
        small.scale_assign(0.01);
        opt2.step(&mut net2, &IndexMap::from([("critic.b1".to_string(), small)])).unwrap();
        for (a, b) in net
            .param("critic.b1")
            .unwrap()
            .data
            .iter()
            .zip(&net2.param("critic.b1").unwrap().data)
        {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_nan_gradients() {
        let mut net = make_net();
        let mut opt = Adam::new(AdamConfig::default(), &net);
        let p = net.param("actor.b1").unwrap();
        let mut g = Tensor::zeros(p.rows, p.cols);
        g.data[0] = f64::NAN;
        assert!(opt.step(&mut net, &IndexMap::from([("actor.b1".to_string(), g)])).is_err());
    }

    #[test]
    fn logstd_is_clamped_after_update() {
        let mut net = make_net();
        let cfg = AdamConfig { lr: 10.0, max_grad_norm: 0.0, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, &net);
        let g = Tensor::from_vec(1, 4, vec![-1.0; 4]);
        for _ in 0..20 {
            opt.step(&mut net, &IndexMap::from([("actor.logstd".to_string(), g.clone())]))
                .unwrap();
        }
        for &x in &net.param("actor.logstd").unwrap().data {
            assert!(x <= LOGSTD_MAX + 1e-12);
        }
    }

    #[test]
    fn moment_checkpoint_round_trip_preserves_updates() {
        let mut net_a = make_net();
        let mut opt_a = Adam::new(AdamConfig::default(), &net_a);
        for _ in 0..3 {
            let grads = quadratic_grads(&net_a, "actor.w2", 0.1);
            opt_a.step(&mut net_a, &grads).unwrap();
        }
        let mut ckpt = Checkpoint::default();
        ckpt.capture_net("net.", &net_a);
        opt_a.capture(&mut ckpt, "opt.");
        let ckpt = Checkpoint::parse(&ckpt.serialize()).unwrap();

        let mut net_b = make_net();
        let mut opt_b = Adam::new(AdamConfig::default(), &net_b);
        ckpt.restore_net("net.", &mut net_b).unwrap();
        opt_b.restore(&ckpt, "opt.").unwrap();
        assert_eq!(opt_a.step_count(), opt_b.step_count());

        // Continued training from the restored state matches the original.
        for _ in 0..3 {
            let ga = quadratic_grads(&net_a, "actor.w2", 0.1);
            opt_a.step(&mut net_a, &ga).unwrap();
            let gb = quadratic_grads(&net_b, "actor.w2", 0.1);
            opt_b.step(&mut net_b, &gb).unwrap();
        }
        assert_eq!(
            net_a.param("actor.w2").unwrap().data,
            net_b.param("actor.w2").unwrap().data
        );
    }
}
