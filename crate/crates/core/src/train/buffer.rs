//! Rollout storage for PPO updates.

use super::gae;
use crate::env::Observation;

#[derive(Debug, Clone)]
pub struct Sample {
    pub obs: Observation,
    pub action: [f64; 4],
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub advantage: f64,
    pub ret: f64,
}

/// One (environment, agent) trajectory plus its bootstrap value.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub bootstrap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub trajectories: Vec<Trajectory>,
}

impl RolloutBuffer {
    /// Fill advantages and returns, then flatten into one sample list with
    /// advantages normalized over the whole batch.
    pub fn finish(mut self, gamma: f64, lambda: f64) -> Vec<Sample> {
        for traj in &mut self.trajectories {
            let rewards: Vec<f64> = traj.samples.iter().map(|s| s.reward).collect();
            let values: Vec<f64> = traj.samples.iter().map(|s| s.value).collect();
            let dones: Vec<bool> = traj.samples.iter().map(|s| s.done).collect();
            let (adv, ret) = gae::gae(&rewards, &values, &dones, traj.bootstrap, gamma, lambda);
            for (s, (a, r)) in traj.samples.iter_mut().zip(adv.iter().zip(&ret)) {
                s.advantage = *a;
                s.ret = *r;
            }
        }
        let mut samples: Vec<Sample> =
            self.trajectories.into_iter().flat_map(|t| t.samples).collect();
        normalize_advantages(&mut samples);
        samples
    }
}

fn normalize_advantages(samples: &mut [Sample]) {
    if samples.len() < 2 {
        return;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for s in samples {
        s.advantage = (s.advantage - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dummy_obs() -> Observation {
        Observation {
            self_obs: vec![0.0; crate::env::SELF_OBS_DIM],
            drones_obs: vec![],
            n_other: 0,
            static_obs: vec![2.0; 9],
            dynamic_obs: vec![],
            dynamic_mask: vec![],
        }
    }

    fn sample(reward: f64, value: f64, done: bool) -> Sample {
        Sample {
            obs: dummy_obs(),
            action: [0.0; 4],
            log_prob: 0.0,
            value,
            reward,
            done,
            advantage: 0.0,
            ret: 0.0,
        }
    }

    #[test]
    fn finish_normalizes_advantages_to_zero_mean_unit_std() {
        let mut buf = RolloutBuffer::default();
        for k in 0..4 {
            let t = Trajectory {
                samples: (0..10)
                    .map(|i| sample((i + k) as f64 * 0.1, 0.05 * i as f64, i == 9))
                    .collect(),
                bootstrap: 0.0,
            };
            buf.trajectories.push(t);
        }
        let samples = buf.finish(0.99, 0.95);
        assert_eq!(samples.len(), 40);
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-10);
        assert_relative_eq!(var, 1.0, epsilon = 1e-6);
        for s in &samples {
            assert!(s.ret.is_finite());
        }
    }

    #[test]
    fn returns_equal_value_plus_raw_advantage() {
        let mut buf = RolloutBuffer::default();
        buf.trajectories.push(Trajectory {
            samples: vec![sample(1.0, 0.5, false), sample(-0.3, 0.2, true)],
            bootstrap: 0.9,
        });
        // Compute raw GAE with the same inputs to check ret before the
        // normalization step touches only advantages.
        let (raw_adv, raw_ret) =
            gae::gae(&[1.0, -0.3], &[0.5, 0.2], &[false, true], 0.9, 0.99, 0.95);
        let samples = buf.finish(0.99, 0.95);
        for (s, (a, r)) in samples.iter().zip(raw_adv.iter().zip(&raw_ret)) {
            assert_relative_eq!(s.ret, *r, epsilon = 1e-12);
            assert_relative_eq!(s.ret - s.value, *a, epsilon = 1e-12);
        }
    }
}
