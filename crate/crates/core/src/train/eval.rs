//! Deterministic policy evaluation: roll episodes with the distribution
//! mean, then score the four satisfaction criteria per episode.

use crate::dynamics::CtbrCommand;
use crate::env::{cmd_from_normalized, run_episode, EnvConfig, EpisodeRecord, Observation, Policy};
use crate::nn::PolicyNet;
use crate::par::{self, Exec};
use crate::reward::laplacian_distance;
use crate::seeding;
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatisfactionThresholds {
    /// Mean velocity tracking error bound, m/s.
    pub e_v_max: f64,
    /// Mean normalized Laplacian shape error bound.
    pub e_shape_max: f64,
    /// Mean formation size error bound, m.
    pub size_err_max: f64,
    /// Mean per-step normalized action change bound.
    pub action_diff_max: f64,
}

impl Default for SatisfactionThresholds {
    fn default() -> Self {
        SatisfactionThresholds {
            e_v_max: 0.3,
            e_shape_max: 0.05,
            size_err_max: 0.25,
            action_diff_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EpisodeEval {
    pub flight_ok: bool,
    pub formation_ok: bool,
    pub obstacle_ok: bool,
    pub action_ok: bool,
    pub goal_reached: bool,
    pub collided: bool,
    pub mean_e_v: f64,
    pub mean_e_shape: f64,
    pub mean_size_err: f64,
    pub mean_action_diff: f64,
    pub steps: usize,
}

/// Score one recorded episode against the thresholds.
pub fn eval_episode(
    record: &EpisodeRecord,
    thresholds: &SatisfactionThresholds,
) -> Result<EpisodeEval> {
    let n_steps = record.steps.len();
    let n_drones = record.steps.first().map(|s| s.states.len()).unwrap_or(0);
    let mut sum_ev = 0.0;
    let mut sum_eshape = 0.0;
    let mut sum_size_err = 0.0;
    let mut sum_adiff = 0.0;
    let mut adiff_count = 0usize;
    for (t, step) in record.steps.iter().enumerate() {
        let positions: Vec<_> = step.states.iter().map(|s| s.p).collect();
        let ev: f64 = step
            .states
            .iter()
            .map(|s| (record.v_target - s.v).norm())
            .sum::<f64>()
            / n_drones as f64;
        sum_ev += ev;
        if n_drones >= 2 {
            sum_eshape += laplacian_distance(&positions, &record.formation_target, true)?;
            let mut size: f64 = 0.0;
            for i in 0..n_drones {
                for j in (i + 1)..n_drones {
                    size = size.max((positions[i] - positions[j]).norm());
                }
            }
            sum_size_err += (size - record.size_target).abs();
        } else {
            sum_size_err += record.size_target;
        }
        if t > 0 {
            let prev = &record.steps[t - 1];
            for d in 0..n_drones {
                let a = step.normalized_actions[d];
                let b = prev.normalized_actions[d];
                let diff: f64 =
                    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                sum_adiff += diff / 2.0;
                adiff_count += 1;
            }
        }
    }
    let mean_e_v = sum_ev / n_steps as f64;
    let mean_e_shape = sum_eshape / n_steps as f64;
    let mean_size_err = sum_size_err / n_steps as f64;
    let mean_action_diff = if adiff_count > 0 { sum_adiff / adiff_count as f64 } else { 0.0 };
    Ok(EpisodeEval {
        flight_ok: record.goal_reached && mean_e_v <= thresholds.e_v_max,
        formation_ok: n_drones >= 2
            && mean_e_shape <= thresholds.e_shape_max
            && mean_size_err <= thresholds.size_err_max,
        obstacle_ok: !record.collided,
        action_ok: mean_action_diff <= thresholds.action_diff_max,
        goal_reached: record.goal_reached,
        collided: record.collided,
        mean_e_v,
        mean_e_shape,
        mean_size_err,
        mean_action_diff,
        steps: n_steps,
    })
}

/// Fraction of episodes satisfying each criterion, plus the joint rate.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SatisfactionRates {
    pub flight: f64,
    pub formation: f64,
    pub obstacle: f64,
    pub action: f64,
    /// Fraction of episodes satisfying all four criteria at once. Bounded
    /// above by every per-objective rate.
    pub sr: f64,
}

impl SatisfactionRates {
    pub fn from_evals(evals: &[EpisodeEval]) -> SatisfactionRates {
        let n = evals.len().max(1) as f64;
        let all = |e: &&EpisodeEval| e.flight_ok && e.formation_ok && e.obstacle_ok && e.action_ok;
        SatisfactionRates {
            flight: evals.iter().filter(|e| e.flight_ok).count() as f64 / n,
            formation: evals.iter().filter(|e| e.formation_ok).count() as f64 / n,
            obstacle: evals.iter().filter(|e| e.obstacle_ok).count() as f64 / n,
            action: evals.iter().filter(|e| e.action_ok).count() as f64 / n,
            sr: evals.iter().filter(all).count() as f64 / n,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.flight + self.formation + self.obstacle + self.action) / 4.0
    }
}

/// Wraps a network as a deterministic environment policy (mean action).
pub struct NetPolicy<'a> {
    pub net: &'a PolicyNet,
    pub env_cfg: &'a EnvConfig,
}

impl Policy for NetPolicy<'_> {
    fn act(&mut self, _agent: usize, obs: &Observation) -> CtbrCommand {
        let mean = self.net.mean_action(obs).expect("policy forward failed");
        cmd_from_normalized(mean, &self.env_cfg.quad, self.env_cfg.clip_actions)
    }
}

/// Roll `episodes` evaluation episodes on freshly seeded environments and
/// aggregate satisfaction rates. Episode k runs on a world derived from
/// (seed, k), so results are reproducible and mode-independent.
pub fn evaluate(
    net: &PolicyNet,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    thresholds: &SatisfactionThresholds,
    exec: Exec,
) -> Result<(SatisfactionRates, Vec<EpisodeEval>)> {
    if episodes == 0 {
        return Err(crate::Error::invalid("evaluation needs at least one episode"));
    }
    let results: Vec<Result<EpisodeEval>> = par::map_indexed(exec, episodes, |k| {
        let mut cfg = env_cfg.clone();
        cfg.seed = seeding::derive_seed(seed, "eval-episode", k as u64);
        let mut policy = NetPolicy { net, env_cfg: env_cfg };
        let record = run_episode(&mut policy, &cfg)?;
        eval_episode(&record, thresholds)
    });
    let mut evals = Vec::with_capacity(episodes);
    for r in results {
        evals.push(r?);
    }
    Ok((SatisfactionRates::from_evals(&evals), evals))
}
