//! Headline metrics: collision-free rate and formation maintenance, plus a
//! sweep over obstacle densities.

use crate::env::{run_episode, EnvConfig, EpisodeRecord};
use crate::nn::PolicyNet;
use crate::par::{self, Exec};
use crate::reward::laplacian_distance;
use crate::seeding;
use crate::train::eval::NetPolicy;
use crate::Result;
use serde::{Deserialize, Serialize};

/// An episode counts as a success when it reaches the goal without any
/// collision.
pub fn episode_success(record: &EpisodeRecord) -> bool {
    record.goal_reached && !record.collided
}

/// Mean unnormalized Laplacian distance to the target formation over all
/// steps of one episode.
pub fn episode_formation_error(record: &EpisodeRecord) -> Result<f64> {
    let mut total = 0.0;
    for step in &record.steps {
        let positions: Vec<_> = step.states.iter().map(|s| s.p).collect();
        total += laplacian_distance(&positions, &record.formation_target, false)?;
    }
    Ok(total / record.steps.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MetricPoint {
    pub n_columns: usize,
    pub n_balls: usize,
    pub episodes: usize,
    /// Fraction of episodes that reach the goal collision-free.
    pub collision_free_rate: f64,
    /// Mean Laplacian formation error over successful episodes; absent when
    /// no episode succeeded.
    pub formation_maintenance: Option<f64>,
}

/// Evaluate one (columns, balls) cell over `episodes` seeded episodes.
pub fn metric_point(
    net: &PolicyNet,
    base_cfg: &EnvConfig,
    n_columns: usize,
    n_balls: usize,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<MetricPoint> {
    let results: Vec<Result<(bool, f64)>> = par::map_indexed(exec, episodes, |k| {
        let mut cfg = base_cfg.clone();
        cfg.n_columns = n_columns;
        cfg.n_balls = n_balls;
        cfg.seed = seeding::derive_seed(seed, "metric-episode", k as u64);
        let mut policy = NetPolicy { net, env_cfg: base_cfg };
        let record = run_episode(&mut policy, &cfg)?;
        let success = episode_success(&record);
        let fm = if success && cfg.n_drones >= 2 {
            episode_formation_error(&record)?
        } else {
            0.0
        };
        Ok((success, fm))
    });
    let mut successes = 0usize;
    let mut fm_sum = 0.0;
    for r in results {
        let (success, fm) = r?;
        if success {
            successes += 1;
            fm_sum += fm;
        }
    }
    Ok(MetricPoint {
        n_columns,
        n_balls,
        episodes,
        collision_free_rate: successes as f64 / episodes as f64,
        formation_maintenance: if successes > 0 && base_cfg.n_drones >= 2 {
            Some(fm_sum / successes as f64)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<MetricPoint>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n_columns,n_balls,episodes,collision_free_rate,formation_maintenance\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.n_columns,
                p.n_balls,
                p.episodes,
                p.collision_free_rate,
                p.formation_maintenance.map_or(String::new(), |v| v.to_string())
            ));
        }
        out
    }
}

/// Cross product of column and ball counts.
pub fn sweep(
    net: &PolicyNet,
    base_cfg: &EnvConfig,
    column_axis: &[usize],
    ball_axis: &[usize],
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<SweepReport> {
    let mut points = Vec::new();
    for (ci, &nc) in column_axis.iter().enumerate() {
        for (bi, &nb) in ball_axis.iter().enumerate() {
            let cell_seed =
                seeding::derive_seed(seed, "metric-cell", (ci * ball_axis.len() + bi) as u64);
            points.push(metric_point(net, base_cfg, nc, nb, episodes, cell_seed, exec)?);
        }
    }
    Ok(SweepReport { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, HoverPolicy, VelocityTrackerPolicy};
    use crate::nn::policy::NetConfig;
    use approx::assert_relative_eq;

    fn empty_cfg() -> EnvConfig {
        EnvConfig {
            n_columns: 0,
            n_balls: 0,
            clip_actions: false,
            pos_jitter: 0.0,
            yaw_jitter: 0.0,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn success_requires_goal_and_no_collision() {
        let cfg = empty_cfg();
        let mut tracker = VelocityTrackerPolicy {
            quad: cfg.quad,
            v_target: cfg.v_target,
            z_ref: cfg.start_centroid.z,
        };
        let good = run_episode(&mut tracker, &cfg).unwrap();
        assert!(episode_success(&good));

        let cfg_short = EnvConfig { episode_len: 10, ..empty_cfg() };
        let mut hover = HoverPolicy { quad: cfg_short.quad };
        let timeout = run_episode(&mut hover, &cfg_short).unwrap();
        assert!(!episode_success(&timeout));
    }

    #[test]
    fn formation_error_is_zero_for_the_exact_target() {
        // Hovering drones pinned at the formation target keep the error at
        // the jitter level; with zero jitter it is numerically zero.
        let cfg = EnvConfig { episode_len: 20, ..empty_cfg() };
        let mut hover = HoverPolicy { quad: cfg.quad };
        let record = run_episode(&mut hover, &cfg).unwrap();
        let fm = episode_formation_error(&record).unwrap();
        assert_relative_eq!(fm, 0.0, epsilon = 1e-4);
    }

    #[test]
    fn sweep_produces_a_full_grid_and_is_mode_independent() {
        let net = PolicyNet::new(
            NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 },
            5,
        )
        .unwrap();
        let cfg = EnvConfig { episode_len: 15, ..EnvConfig::default() };
        let run = |exec| {
            sweep(&net, &cfg, &[0, 4], &[0, 1], 2, 13, exec).unwrap().to_csv()
        };
        let seq = run(Exec::Sequential);
        assert_eq!(seq, run(Exec::Parallel));
        assert_eq!(seq.lines().count(), 5);
    }

    #[test]
    fn formation_maintenance_absent_without_successes() {
        let net = PolicyNet::new(
            NetConfig { d_embed: 8, hidden: 8, heads: 2, logstd_init: -0.7 },
            6,
        )
        .unwrap();
        // A short episode cap makes the goal unreachable, so no successes.
        let cfg = EnvConfig { episode_len: 5, ..EnvConfig::default() };
        let point = metric_point(&net, &cfg, 0, 0, 3, 1, Exec::Sequential).unwrap();
        assert_eq!(point.collision_free_rate, 0.0);
        assert!(point.formation_maintenance.is_none());
        let csv = SweepReport { points: vec![point] }.to_csv();
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }
}
