//! The multi-objective reward: shaping functions, the four reward components
//! (formation, flight, obstacle, action) and linear scalarization.

use crate::math::Vec3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub formation: f64,
    pub flight: f64,
    pub obstacle: f64,
    pub action: f64,
}

impl RewardVector {
    pub fn to_array(self) -> [f64; 4] {
        [self.formation, self.flight, self.obstacle, self.action]
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Nonnegative weights with unit L1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_formation: f64,
    pub w_flight: f64,
    pub w_obstacle: f64,
    pub w_action: f64,
}

impl WeightVector {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        let v = WeightVector {
            w_formation: w[0],
            w_flight: w[1],
            w_obstacle: w[2],
            w_action: w[3],
        };
        v.validate()?;
        Ok(v)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w_formation, self.w_flight, self.w_obstacle, self.w_action]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.to_array();
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let l1: f64 = w.iter().sum();
        if (l1 - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weight L1 norm must be 1, got {l1}")));
        }
        Ok(())
    }
}

/// Coefficients and thresholds for all reward terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha_heading: f64,
    pub alpha_v: f64,
    pub alpha_p: f64,
    pub alpha_height: f64,
    pub alpha_shape: f64,
    pub alpha_size: f64,
    pub alpha_dis: f64,
    pub alpha_net: f64,
    pub alpha_diff: f64,
    pub alpha_throt: f64,
    pub alpha_yaw: f64,
    pub alpha_warn: f64,
    pub alpha_hit: f64,
    /// Obstacle distance below which the warning penalty ramps in, m.
    pub d_safe: f64,
    /// Obstacle distance below which the hit penalty applies, m.
    pub d_warn: f64,
    /// Inter-drone distance below which the closeness penalty fires, m.
    pub dis_min: f64,
    /// Target formation size (largest pairwise distance), m.
    pub size_target: f64,
    /// Target formation vertices; the target Laplacian is built from these.
    pub formation_target: Vec<Vec3>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha_heading: 0.2,
            alpha_v: 0.5,
            alpha_p: 0.5,
            alpha_height: 0.2,
            alpha_shape: 1.0,
            alpha_size: 0.5,
            alpha_dis: -5.0,
            alpha_net: 0.3,
            alpha_diff: 0.3,
            alpha_throt: 0.2,
            alpha_yaw: 0.2,
            alpha_warn: 1.0,
            alpha_hit: -10.0,
            d_safe: 0.6,
            d_warn: 0.3,
            dis_min: 0.3,
            size_target: 1.0,
            formation_target: default_triangle(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_warn >= self.d_safe {
            return Err(Error::Config("d_warn must be below d_safe".into()));
        }
        Ok(())
    }
}

/// Equilateral triangle with side 1 centered on the origin, z = 0.
pub fn default_triangle() -> Vec<Vec3> {
    let r = 1.0 / 3.0f64.sqrt();
    [90.0f64, 210.0, 330.0]
        .iter()
        .map(|deg| {
            let a = deg.to_radians();
            Vec3::new(r * a.cos(), r * a.sin(), 0.0)
        })
        .collect()
}

pub fn shape_linear(e: f64) -> f64 {
    1.0 - e.abs()
}

pub fn shape_reciprocal(e: f64) -> Result<f64> {
    if e < 0.0 {
        return Err(Error::invalid("shape_reciprocal requires e >= 0"));
    }
    Ok(1.0 / (1.0 + e))
}

/// 1 when the error strictly exceeds the threshold, else 0.
pub fn shape_indicator(e: f64, thres: f64) -> f64 {
    if e > thres {
        1.0
    } else {
        0.0
    }
}

fn laplacian(points: &[Vec3], normalized: bool) -> Result<Vec<f64>> {
    let n = points.len();
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                adj[i * n + j] = (points[i] - points[j]).norm();
            }
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| adj[i * n..(i + 1) * n].iter().sum()).collect();
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            lap[i * n + j] = if i == j { degree[i] } else { -adj[i * n + j] };
        }
    }
    if normalized {
        if degree.iter().any(|&d| d <= 0.0) {
            return Err(Error::Numerical(
                "normalized Laplacian undefined for zero-degree vertex".into(),
            ));
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                lap[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok(lap)
}

/// Squared Frobenius distance between the (optionally normalized) graph
/// Laplacians of two point sets, using pairwise distances as edge weights.
pub fn laplacian_distance(positions: &[Vec3], target: &[Vec3], normalized: bool) -> Result<f64> {
    if positions.len() != target.len() || positions.len() < 2 {
        return Err(Error::invalid("laplacian_distance needs matching lists of >= 2 points"));
    }
    let a = laplacian(positions, normalized)?;
    let b = laplacian(target, normalized)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn pairwise_extremes(positions: &[Vec3]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            min = min.min(d);
            max = max.max(d);
        }
    }
    (min, max)
}

/// Formation component: shape similarity (normalized Laplacian), size error
/// and a closeness penalty when any pair falls below `dis_min`.
pub fn formation_reward(positions: &[Vec3], cfg: &RewardConfig) -> Result<f64> {
    if positions.len() < 2 {
        // A single drone degenerates to e_shape = 0 and size = 0.
        let e_size = cfg.size_target * cfg.size_target;
        return Ok(cfg.alpha_shape + cfg.alpha_size * shape_reciprocal(e_size)?);
    }
    let e_shape = laplacian_distance(positions, &cfg.formation_target, true)?;
    let (dis, size) = pairwise_extremes(positions);
    let e_size = (size - cfg.size_target) * (size - cfg.size_target);
    let penalty = shape_indicator(cfg.dis_min - dis, 0.0);
    Ok(cfg.alpha_shape * shape_reciprocal(e_shape)?
        + cfg.alpha_size * shape_reciprocal(e_size)?
        + cfg.alpha_dis * penalty)
}

/// Per-drone reference carried by the flight reward.
#[derive(Debug, Clone, Copy)]
pub struct FlightReference {
    /// Virtual centroid position at the current time, m.
    pub p_ref: Vec3,
    pub v_target: Vec3,
    pub h_target: Vec3,
}

/// Flight component: heading, velocity, reference position and altitude.
pub fn flight_reward(p: Vec3, v: Vec3, h: Vec3, reference: &FlightReference, cfg: &RewardConfig) -> Result<f64> {
    let e_height = (p.z - reference.p_ref.z).abs();
    let e_v = (reference.v_target - v).norm();
    let e_p = (reference.p_ref - p).norm();
    let e_heading = (h - reference.h_target).norm();
    Ok(cfg.alpha_heading * shape_linear(e_heading)
        + cfg.alpha_v * shape_linear(e_v)
        + cfg.alpha_p * shape_reciprocal(e_p)?
        + cfg.alpha_height * shape_linear(e_height))
}

/// Obstacle component. `d_min = None` means no obstacle is visible.
pub fn obstacle_reward(d_min: Option<f64>, cfg: &RewardConfig) -> Result<f64> {
    let Some(d) = d_min else { return Ok(0.0) };
    if d < 0.0 {
        return Err(Error::invalid("obstacle distance must be nonnegative"));
    }
    if d > cfg.d_safe {
        Ok(0.0)
    } else if d > cfg.d_warn {
        Ok(cfg.alpha_warn * (d - cfg.d_safe) / (cfg.d_safe - cfg.d_warn))
    } else {
        Ok(cfg.alpha_hit)
    }
}

/// Action-smoothness component over normalized policy actions in [-1,1]^4
/// and throttles in [0,1]^4. Errors are normalized into [0,1] before shaping.
pub fn action_reward(
    a_t: [f64; 4],
    a_prev: [f64; 4],
    throttles_t: [f64; 4],
    throttles_prev: [f64; 4],
    yaw_rate_cmd: f64,
    cfg: &RewardConfig,
) -> f64 {
    let l2 = |a: [f64; 4], b: [f64; 4]| -> f64 {
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let e_net = l2(a_t, a_prev) / 2.0;
    let e_diff = l2(throttles_t, throttles_prev) / 2.0;
    let e_throt = throttles_t.iter().sum::<f64>() / 4.0;
    let e_yaw = yaw_rate_cmd.abs() / std::f64::consts::PI;
    cfg.alpha_net * shape_linear(e_net)
        + cfg.alpha_diff * shape_linear(e_diff)
        + cfg.alpha_throt * shape_linear(e_throt)
        + cfg.alpha_yaw * shape_linear(e_yaw)
}

/// Linear utility: dot product of reward vector and weights.
pub fn scalarize(r: &RewardVector, w: &WeightVector) -> Result<f64> {
    w.validate()?;
    Ok(r.formation * w.w_formation
        + r.flight * w.w_flight
        + r.obstacle * w.w_obstacle
        + r.action * w.w_action)
}
