//! Procedural obstacle worlds: zigzag-grid static columns, parabolic dynamic
//! balls aimed at drones, plus the distance and collision queries everything
//! else builds on.

use crate::math::Vec3;
use crate::seeding;
use crate::{Error, Result, GRAVITY};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sensing cap for static obstacle distances, m.
pub const SENSE_CAP: f64 = 2.0;
/// Sensing radius for dynamic obstacles, m.
pub const BALL_SENSE_RADIUS: f64 = 2.0;
/// Drone bounding sphere radius, m.
pub const DRONE_RADIUS: f64 = 0.10;
/// Drone-drone collision threshold, m.
pub const DRONE_DRONE_DIST: f64 = 0.2;
/// Ground collision altitude, m.
pub const GROUND_Z: f64 = 0.05;

pub fn gravity_vec() -> Vec3 {
    Vec3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub center_xy: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub spawn_pos: Vec3,
    pub spawn_vel: Vec3,
    pub spawn_time: f64,
    pub radius: f64,
    pub flight_time: f64,
}

impl Ball {
    /// Ballistic position at absolute time `t`.
    pub fn position(&self, t: f64) -> Vec3 {
        let dt = t - self.spawn_time;
        self.spawn_pos + self.spawn_vel * dt + gravity_vec() * (0.5 * dt * dt)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.spawn_vel + gravity_vec() * (t - self.spawn_time)
    }
}

/// Zigzag lattice: row j at y0 + j*cell, x at x0 + k*cell + (j % 2)*row_offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cell_size: f64,
    pub row_offset: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cell_size: 0.5,
            row_offset: 0.25,
            x_min: 2.0,
            x_max: 10.0,
            y_min: -2.0,
            y_max: 2.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size <= 0.0 || (self.row_offset - self.cell_size / 2.0).abs() > 1e-12 {
            return Err(Error::Config("grid row_offset must equal cell_size/2".into()));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Config("grid region is empty".into()));
        }
        Ok(())
    }

    /// All lattice points inside the region, row-major.
    pub fn cells(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        let n_rows = ((self.y_max - self.y_min) / self.cell_size).floor() as i64 + 1;
        for j in 0..n_rows {
            let y = self.y_min + j as f64 * self.cell_size;
            if y > self.y_max {
                break;
            }
            let x0 = self.x_min + (j % 2) as f64 * self.row_offset;
            let mut k = 0i64;
            loop {
                let x = x0 + k as f64 * self.cell_size;
                if x > self.x_max {
                    break;
                }
                out.push([x, y]);
                k += 1;
            }
        }
        out
    }

    /// Whether a point sits exactly on the zigzag lattice.
    pub fn on_lattice(&self, p: [f64; 2]) -> bool {
        let j = (p[1] - self.y_min) / self.cell_size;
        if (j - j.round()).abs() > 1e-9 || j.round() < 0.0 {
            return false;
        }
        let j = j.round() as i64;
        let x0 = self.x_min + (j % 2) as f64 * self.row_offset;
        let k = (p[0] - x0) / self.cell_size;
        (k - k.round()).abs() < 1e-9 && k.round() >= 0.0
    }
}

/// Geometry constants for world generation, all configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub grid: GridSpec,
    pub column_radius: f64,
    pub column_height: f64,
    pub ball_radius: f64,
    /// Ball spawn distance ahead of the formation centroid along +x, m.
    pub ball_ahead: [f64; 2],
    /// Ball spawn height range, m.
    pub ball_height: [f64; 2],
    /// Ball lateral offset bound, m.
    pub ball_lateral: f64,
    /// Ball flight time range, s.
    pub ball_flight_time: [f64; 2],
    /// Respawn cooldown after a ball hits the ground, s.
    pub ball_cooldown: [f64; 2],
    pub goal_x: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            grid: GridSpec::default(),
            column_radius: 0.15,
            column_height: 3.0,
            ball_radius: 0.15,
            ball_ahead: [2.0, 4.0],
            ball_height: [1.5, 2.5],
            ball_lateral: 1.0,
            ball_flight_time: [0.8, 1.5],
            ball_cooldown: [1.0, 2.0],
            goal_x: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub columns: Vec<Column>,
    pub balls: Vec<Ball>,
    pub goal_x: f64,
    pub formation_target: Vec<Vec3>,
    pub region: GridSpec,
}

impl World {
    pub fn generate(
        spec: &WorldSpec,
        n_columns: usize,
        formation_target: Vec<Vec3>,
        rng_seed: u64,
    ) -> Result<World> {
        let columns = generate_columns(&spec.grid, n_columns, rng_seed)
            .map(|cells| {
                cells
                    .into_iter()
                    .map(|c| Column {
                        center_xy: c,
                        radius: spec.column_radius,
                        height: spec.column_height,
                    })
                    .collect()
            })?;
        Ok(World {
            columns,
            balls: Vec::new(),
            goal_x: spec.goal_x,
            formation_target,
            region: spec.grid,
        })
    }

    /// Structured text dump of the static layout for external plotting.
    pub fn layout_dump(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("goal_x = {}\n", self.goal_x));
        s.push_str(&format!(
            "region = {{ x_min = {}, x_max = {}, y_min = {}, y_max = {} }}\n",
            self.region.x_min, self.region.x_max, self.region.y_min, self.region.y_max
        ));
        for c in &self.columns {
            s.push_str(&format!(
                "[[columns]]\nx = {}\ny = {}\nr = {}\nh = {}\n",
                c.center_xy[0], c.center_xy[1], c.radius, c.height
            ));
        }
        s
    }
}

/// Sample `count` distinct zigzag cells for column centers.
pub fn generate_columns(spec: &GridSpec, count: usize, rng_seed: u64) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    let mut cells = spec.cells();
    if count > cells.len() {
        return Err(Error::invalid(format!(
            "requested {count} columns but region holds only {}",
            cells.len()
        )));
    }
    let mut rng = seeding::rng_for(rng_seed, "columns", 0);
    // Partial Fisher-Yates: the first `count` entries become the sample.
    for i in 0..count {
        let j = rng.gen_range(i..cells.len());
        cells.swap(i, j);
    }
    cells.truncate(count);
    Ok(cells)
}

/// Initial velocity so a ballistic point mass reaches `target` from `spawn`
/// after exactly `flight_time` seconds.
pub fn solve_parabola(spawn: Vec3, target: Vec3, flight_time: f64) -> Result<Vec3> {
    if flight_time <= 0.0 {
        return Err(Error::invalid("flight_time must be positive"));
    }
    let t = flight_time;
    Ok((target - spawn - gravity_vec() * (0.5 * t * t)) * (1.0 / t))
}

/// Spawn a new ball aimed at a uniformly chosen drone.
pub fn spawn_ball(
    spec: &WorldSpec,
    drone_positions: &[Vec3],
    centroid: Vec3,
    t_now: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Ball> {
    if drone_positions.is_empty() {
        return Err(Error::invalid("spawn_ball needs at least one drone"));
    }
    let target_idx = rng.gen_range(0..drone_positions.len());
    let spawn_pos = Vec3::new(
        centroid.x + rng.gen_range(spec.ball_ahead[0]..spec.ball_ahead[1]),
        centroid.y + rng.gen_range(-spec.ball_lateral..spec.ball_lateral),
        rng.gen_range(spec.ball_height[0]..spec.ball_height[1]),
    );
    let flight_time = rng.gen_range(spec.ball_flight_time[0]..spec.ball_flight_time[1]);
    let spawn_vel = solve_parabola(spawn_pos, drone_positions[target_idx], flight_time)?;
    Ok(Ball {
        spawn_pos,
        spawn_vel,
        spawn_time: t_now,
        radius: spec.ball_radius,
        flight_time,
    })
}

/// Distance from `p` to the nearest column surface (horizontal), clamped to
/// [0, SENSE_CAP]. Returns the cap when no column exists or the point is
/// above every column.
pub fn nearest_static_distance(p: Vec3, world: &World) -> f64 {
    let mut best = SENSE_CAP;
    for c in &world.columns {
        if p.z >= c.height {
            continue;
        }
        let dx = p.x - c.center_xy[0];
        let dy = p.y - c.center_xy[1];
        let d = (dx * dx + dy * dy).sqrt() - c.radius;
        best = best.min(d.max(0.0));
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionFlags {
    pub column: bool,
    pub ball: bool,
    pub drone: bool,
    pub ground: bool,
}

impl CollisionFlags {
    pub fn any(&self) -> bool {
        self.column || self.ball || self.drone || self.ground
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionReport {
    pub per_drone: Vec<CollisionFlags>,
}

impl CollisionReport {
    pub fn any(&self) -> bool {
        self.per_drone.iter().any(|f| f.any())
    }
}

/// Collision flags per drone against columns, balls, other drones and ground.
pub fn check_collisions(drone_positions: &[Vec3], world: &World, t: f64) -> CollisionReport {
    let n = drone_positions.len();
    let mut per_drone = vec![CollisionFlags::default(); n];
    let ball_positions: Vec<Vec3> = world.balls.iter().map(|b| b.position(t)).collect();
    for (i, &p) in drone_positions.iter().enumerate() {
        for c in &world.columns {
            if p.z < c.height {
                let dx = p.x - c.center_xy[0];
                let dy = p.y - c.center_xy[1];
                if (dx * dx + dy * dy).sqrt() - c.radius < DRONE_RADIUS {
                    per_drone[i].column = true;
                    break;
                }
            }
        }
        for (b, bp) in world.balls.iter().zip(&ball_positions) {
            if (p - *bp).norm() < b.radius + DRONE_RADIUS {
                per_drone[i].ball = true;
                break;
            }
        }
        if p.z < GROUND_Z {
            per_drone[i].ground = true;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (drone_positions[i] - drone_positions[j]).norm() < DRONE_DRONE_DIST {
                per_drone[i].drone = true;
                per_drone[j].drone = true;
            }
        }
    }
    CollisionReport { per_drone }
}
