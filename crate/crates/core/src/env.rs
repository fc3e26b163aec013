//! The decentralized multi-drone environment: reset with domain
//! randomization, per-agent observation assembly, synchronized stepping,
//! termination, and episode recording.

use crate::dynamics::{
    self, control_step_with_throttles, CtbrCommand, QuadrotorParams, QuadrotorState, CONTROL_DT,
};
use crate::math::{Quat, Vec3};
use crate::reward::{self, FlightReference, RewardConfig, RewardVector};
use crate::seeding;
use crate::world::{
    self, spawn_ball, CollisionReport, World, WorldSpec, BALL_SENSE_RADIUS, DRONE_DRONE_DIST,
    SENSE_CAP,
};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SELF_OBS_DIM: usize = 25;
pub const DRONE_OBS_DIM: usize = 7;
pub const STATIC_OBS_DIM: usize = 9;
pub const DYNAMIC_OBS_DIM: usize = 10;
/// Width of the drone identifier one-hot.
pub const ID_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// p(3) q(4) v(3) omega(3) h(3) u(3) v_rel(3) id(3).
    pub self_obs: Vec<f64>,
    /// Per other drone, by agent index: distance(1) rel pos(3) rel vel(3).
    pub drones_obs: Vec<f64>,
    pub n_other: usize,
    /// 3x3 distance tensor, row-major over (dx, dy) offsets.
    pub static_obs: Vec<f64>,
    /// Per ball slot, nearest first: distance(1) rel pos(3) rel vel(3) abs vel(3).
    pub dynamic_obs: Vec<f64>,
    /// One bit per ball slot; padded slots are masked out.
    pub dynamic_mask: Vec<bool>,
}

impl Observation {
    pub fn dims_ok(&self) -> bool {
        self.self_obs.len() == SELF_OBS_DIM
            && self.drones_obs.len() == self.n_other * DRONE_OBS_DIM
            && self.static_obs.len() == STATIC_OBS_DIM
            && self.dynamic_obs.len() == self.dynamic_mask.len() * DYNAMIC_OBS_DIM
    }

    pub fn visible_balls(&self) -> usize {
        self.dynamic_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_drones: usize,
    pub n_columns: usize,
    pub n_balls: usize,
    pub v_target: Vec3,
    /// Relative offsets around the start centroid.
    pub formation_target: Vec<Vec3>,
    /// Episode length in 50 Hz control steps.
    pub episode_len: usize,
    /// Initial position jitter radius, m.
    pub pos_jitter: f64,
    /// Initial yaw jitter bound, rad.
    pub yaw_jitter: f64,
    pub clip_actions: bool,
    pub seed: u64,
    pub start_centroid: Vec3,
    pub quad: QuadrotorParams,
    pub world: WorldSpec,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_drones: 3,
            n_columns: 10,
            n_balls: 2,
            v_target: Vec3::new(1.0, 0.0, 0.0),
            formation_target: reward::default_triangle(),
            episode_len: 750,
            pos_jitter: 0.05,
            yaw_jitter: 0.1 * std::f64::consts::PI,
            clip_actions: true,
            seed: 0,
            start_centroid: Vec3::new(0.0, 0.0, 1.0),
            quad: QuadrotorParams::default(),
            world: WorldSpec::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_drones < 1 || self.n_drones > ID_DIM {
            return Err(Error::Config(format!(
                "n_drones must be in 1..={ID_DIM} (identifier one-hot width)"
            )));
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode_len must be positive".into()));
        }
        if self.formation_target.len() != self.n_drones {
            return Err(Error::Config("formation_target length must equal n_drones".into()));
        }
        self.quad.validate()?;
        self.reward.validate()?;
        self.world.grid.validate()?;
        Ok(())
    }

    /// Reward config with the formation target resolved from this env.
    fn resolved_reward(&self) -> RewardConfig {
        let mut r = self.reward.clone();
        r.formation_target = self.formation_target.clone();
        r
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    pub collisions: CollisionReport,
    pub goal_reached: bool,
    pub timeout: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub reward_vectors: Vec<RewardVector>,
    pub done: bool,
    pub info: StepInfo,
}

/// One environment instance. Single-owner, internally sequential; run many
/// instances with independent seeds for parallel collection.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    reward_cfg: RewardConfig,
    world: World,
    drones: Vec<QuadrotorState>,
    time: f64,
    step_count: usize,
    episode_index: u64,
    prev_actions: Option<Vec<[f64; 4]>>,
    prev_throttles: Option<Vec<[f64; 4]>>,
    rng: ChaCha8Rng,
    pending_respawns: Vec<f64>,
    done: bool,
}

/// Map a normalized policy action in [-1, 1]^4 to a CTBR command.
pub fn cmd_from_normalized(a: [f64; 4], quad: &QuadrotorParams, clip: bool) -> CtbrCommand {
    let (c_min, c_max, rate_max) = action_ranges(quad, clip);
    CtbrCommand {
        c: c_min + (a[0].clamp(-1.0, 1.0) + 1.0) / 2.0 * (c_max - c_min),
        omega_cmd: Vec3::new(
            a[1].clamp(-1.0, 1.0) * rate_max,
            a[2].clamp(-1.0, 1.0) * rate_max,
            a[3].clamp(-1.0, 1.0) * rate_max,
        ),
    }
}

/// Inverse of [`cmd_from_normalized`] for commands inside the range.
pub fn normalized_from_cmd(cmd: &CtbrCommand, quad: &QuadrotorParams, clip: bool) -> [f64; 4] {
    let (c_min, c_max, rate_max) = action_ranges(quad, clip);
    [
        ((cmd.c - c_min) / (c_max - c_min) * 2.0 - 1.0).clamp(-1.0, 1.0),
        (cmd.omega_cmd.x / rate_max).clamp(-1.0, 1.0),
        (cmd.omega_cmd.y / rate_max).clamp(-1.0, 1.0),
        (cmd.omega_cmd.z / rate_max).clamp(-1.0, 1.0),
    ]
}

fn action_ranges(quad: &QuadrotorParams, clip: bool) -> (f64, f64, f64) {
    if clip {
        (0.4 * quad.max_thrust, 0.9 * quad.max_thrust, std::f64::consts::FRAC_PI_4)
    } else {
        (0.0, 0.9 * quad.max_thrust, std::f64::consts::PI)
    }
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Env> {
        cfg.validate()?;
        let rng = seeding::rng_for(cfg.seed, "env", 0);
        let reward_cfg = cfg.resolved_reward();
        let mut env = Env {
            world: World::generate(&cfg.world, 0, cfg.formation_target.clone(), cfg.seed)?,
            reward_cfg,
            drones: Vec::new(),
            time: 0.0,
            step_count: 0,
            episode_index: 0,
            prev_actions: None,
            prev_throttles: None,
            rng,
            pending_respawns: Vec::new(),
            done: false,
            cfg,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn drone_states(&self) -> &[QuadrotorState] {
        &self.drones
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Reset with domain randomization. Deterministic per (seed, reset index).
    pub fn reset(&mut self) -> Result<Vec<Observation>> {
        let world_seed = seeding::derive_seed(self.cfg.seed, "world", self.episode_index);
        self.world = World::generate(
            &self.cfg.world,
            self.cfg.n_columns,
            self.cfg.formation_target.clone(),
            world_seed,
        )?;
        self.episode_index += 1;
        self.time = 0.0;
        self.step_count = 0;
        self.prev_actions = None;
        self.prev_throttles = None;
        self.pending_respawns.clear();
        self.done = false;

        let mut placed = false;
        let offsets = self.cfg.formation_target.clone();
        for _attempt in 0..10 {
            let mut drones = Vec::with_capacity(self.cfg.n_drones);
            for offset in &offsets {
                let jitter = self.sample_jitter();
                let yaw = if self.cfg.yaw_jitter > 0.0 {
                    self.rng.gen_range(-self.cfg.yaw_jitter..self.cfg.yaw_jitter)
                } else {
                    0.0
                };
                drones.push(QuadrotorState::at_rest(
                    self.cfg.start_centroid + *offset + jitter,
                    Quat::from_yaw(yaw),
                ));
            }
            let overlap = (0..drones.len()).any(|i| {
                (i + 1..drones.len())
                    .any(|j| (drones[i].p - drones[j].p).norm() < DRONE_DRONE_DIST)
            });
            if !overlap {
                self.drones = drones;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(
                "initial formation overlaps after 10 jitter resamples",
            ));
        }

        // Dynamic obstacles start in flight immediately.
        let positions: Vec<Vec3> = self.drones.iter().map(|d| d.p).collect();
        let centroid = self.centroid();
        for _ in 0..self.cfg.n_balls {
            let ball = spawn_ball(&self.cfg.world, &positions, centroid, self.time, &mut self.rng)?;
            self.world.balls.push(ball);
        }
        Ok(self.observations())
    }

    fn sample_jitter(&mut self) -> Vec3 {
        let r = self.cfg.pos_jitter;
        if r == 0.0 {
            return Vec3::ZERO;
        }
        // Uniform in the ball of radius r by rejection.
        loop {
            let v = Vec3::new(
                self.rng.gen_range(-r..r),
                self.rng.gen_range(-r..r),
                self.rng.gen_range(-r..r),
            );
            if v.norm() <= r {
                return v;
            }
        }
    }

    fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for d in &self.drones {
            c += d.p;
        }
        c * (1.0 / self.drones.len() as f64)
    }

    fn flight_reference(&self) -> FlightReference {
        FlightReference {
            p_ref: self.cfg.start_centroid + self.cfg.v_target * self.time,
            v_target: self.cfg.v_target,
            h_target: Vec3::new(1.0, 0.0, 0.0),
        }
    }

    pub fn build_observation(&self, agent: usize) -> Observation {
        assert!(agent < self.cfg.n_drones, "agent index out of range");
        let me = &self.drones[agent];
        let (h, u) = dynamics::body_axes(&me.q).expect("state quaternion is unit");
        let v_rel = self.cfg.v_target - me.v;
        let mut id = [0.0; ID_DIM];
        id[agent % ID_DIM] = 1.0;

        let mut self_obs = Vec::with_capacity(SELF_OBS_DIM);
        self_obs.extend(me.p.to_array());
        self_obs.extend(me.q.to_array());
        self_obs.extend(me.v.to_array());
        self_obs.extend(me.omega.to_array());
        self_obs.extend(h.to_array());
        self_obs.extend(u.to_array());
        self_obs.extend(v_rel.to_array());
        self_obs.extend(id);

        let mut drones_obs = Vec::with_capacity((self.cfg.n_drones - 1) * DRONE_OBS_DIM);
        for (j, other) in self.drones.iter().enumerate() {
            if j == agent {
                continue;
            }
            let rel_p = other.p - me.p;
            let rel_v = other.v - me.v;
            drones_obs.push(rel_p.norm());
            drones_obs.extend(rel_p.to_array());
            drones_obs.extend(rel_v.to_array());
        }

        // 3x3 distance tensor at cell centers of a 0.5 m grid centered on
        // the drone, sampled at the drone's altitude.
        let cell = self.cfg.world.grid.cell_size;
        let mut static_obs = Vec::with_capacity(STATIC_OBS_DIM);
        for ix in -1i32..=1 {
            for iy in -1i32..=1 {
                let p = Vec3::new(
                    me.p.x + ix as f64 * cell,
                    me.p.y + iy as f64 * cell,
                    me.p.z,
                );
                static_obs.push(world::nearest_static_distance(p, &self.world));
            }
        }

        let mut visible: Vec<(f64, usize)> = self
            .world
            .balls
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let d = (b.position(self.time) - me.p).norm();
                (d <= BALL_SENSE_RADIUS).then_some((d, i))
            })
            .collect();
        visible.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let slots = self.cfg.n_balls;
        let mut dynamic_obs = vec![0.0; slots * DYNAMIC_OBS_DIM];
        let mut dynamic_mask = vec![false; slots];
        for (slot, &(d, i)) in visible.iter().take(slots).enumerate() {
            let b = &self.world.balls[i];
            let bp = b.position(self.time);
            let bv = b.velocity(self.time);
            let rel_p = bp - me.p;
            let rel_v = bv - me.v;
            let row = &mut dynamic_obs[slot * DYNAMIC_OBS_DIM..(slot + 1) * DYNAMIC_OBS_DIM];
            row[0] = d;
            row[1..4].copy_from_slice(&rel_p.to_array());
            row[4..7].copy_from_slice(&rel_v.to_array());
            row[7..10].copy_from_slice(&bv.to_array());
            dynamic_mask[slot] = true;
        }

        Observation {
            self_obs,
            drones_obs,
            n_other: self.cfg.n_drones - 1,
            static_obs,
            dynamic_obs,
            dynamic_mask,
        }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.cfg.n_drones).map(|a| self.build_observation(a)).collect()
    }

    /// Nearest obstacle surface distance for the obstacle reward;
    /// None when nothing is within sensing range.
    fn min_obstacle_distance(&self, p: Vec3) -> Option<f64> {
        let mut best: Option<f64> = None;
        let ds = world::nearest_static_distance(p, &self.world);
        if ds < SENSE_CAP {
            best = Some(ds);
        }
        for b in &self.world.balls {
            let d_center = (b.position(self.time) - p).norm();
            if d_center <= BALL_SENSE_RADIUS {
                let d = (d_center - b.radius).max(0.0);
                best = Some(best.map_or(d, |x: f64| x.min(d)));
            }
        }
        best
    }

    fn advance_balls(&mut self) -> Result<()> {
        let t = self.time;
        let mut respawn_count = 0;
        self.world.balls.retain(|b| {
            if b.position(t).z <= b.radius {
                respawn_count += 1;
                false
            } else {
                true
            }
        });
        for _ in 0..respawn_count {
            let cooldown = self
                .rng
                .gen_range(self.cfg.world.ball_cooldown[0]..self.cfg.world.ball_cooldown[1]);
            self.pending_respawns.push(t + cooldown);
        }
        let due: Vec<f64> =
            self.pending_respawns.iter().copied().filter(|&r| r <= t).collect();
        self.pending_respawns.retain(|&r| r > t);
        let positions: Vec<Vec3> = self.drones.iter().map(|d| d.p).collect();
        let centroid = self.centroid();
        for _ in due {
            let ball = spawn_ball(&self.cfg.world, &positions, centroid, t, &mut self.rng)?;
            self.world.balls.push(ball);
        }
        Ok(())
    }

    /// Advance the joint state by one 50 Hz control tick.
    pub fn step(&mut self, actions: &[CtbrCommand]) -> Result<StepResult> {
        if actions.len() != self.cfg.n_drones {
            return Err(Error::invalid(format!(
                "expected {} actions, got {}",
                self.cfg.n_drones,
                actions.len()
            )));
        }
        let clipped: Vec<CtbrCommand> = actions
            .iter()
            .map(|a| {
                if self.cfg.clip_actions {
                    a.clamp_narrow(&self.cfg.quad)
                } else {
                    a.clamp_wide(&self.cfg.quad)
                }
            })
            .collect();
        let normalized: Vec<[f64; 4]> = clipped
            .iter()
            .map(|c| normalized_from_cmd(c, &self.cfg.quad, self.cfg.clip_actions))
            .collect();

        let mut throttles = Vec::with_capacity(self.cfg.n_drones);
        for (drone, cmd) in self.drones.iter_mut().zip(&clipped) {
            let (next, thr) = control_step_with_throttles(drone, cmd, &self.cfg.quad);
            *drone = next;
            throttles.push(thr.to_array());
        }
        self.time += CONTROL_DT;
        self.step_count += 1;
        self.advance_balls()?;

        let positions: Vec<Vec3> = self.drones.iter().map(|d| d.p).collect();
        let collisions = world::check_collisions(&positions, &self.world, self.time);

        let reference = self.flight_reference();
        let formation = reward::formation_reward(&positions, &self.reward_cfg)?;
        let prev_actions = self.prev_actions.clone().unwrap_or_else(|| normalized.clone());
        let prev_throttles = self.prev_throttles.clone().unwrap_or_else(|| throttles.clone());
        let mut reward_vectors = Vec::with_capacity(self.cfg.n_drones);
        for i in 0..self.cfg.n_drones {
            let d = &self.drones[i];
            let (h, _) = dynamics::body_axes(&d.q).expect("unit quaternion");
            let flight = reward::flight_reward(d.p, d.v, h, &reference, &self.reward_cfg)?;
            let obstacle =
                reward::obstacle_reward(self.min_obstacle_distance(d.p), &self.reward_cfg)?;
            let action = reward::action_reward(
                normalized[i],
                prev_actions[i],
                throttles[i],
                prev_throttles[i],
                clipped[i].omega_cmd.z,
                &self.reward_cfg,
            );
            reward_vectors.push(RewardVector { formation, flight, obstacle, action });
        }
        self.prev_actions = Some(normalized);
        self.prev_throttles = Some(throttles);

        let goal_reached = self.drones.iter().all(|d| d.p.x > self.world.goal_x);
        let timeout = self.step_count >= self.cfg.episode_len;
        let done = goal_reached || timeout || collisions.any();
        self.done = done;

        Ok(StepResult {
            observations: self.observations(),
            reward_vectors,
            done,
            info: StepInfo { collisions, goal_reached, timeout },
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

/// Per-agent decision rule over observations.
pub trait Policy {
    fn act(&mut self, agent: usize, obs: &Observation) -> CtbrCommand;
}

/// Scripted hover: constant weight-compensating thrust, zero rates.
pub struct HoverPolicy {
    pub quad: QuadrotorParams,
}

impl Policy for HoverPolicy {
    fn act(&mut self, _agent: usize, _obs: &Observation) -> CtbrCommand {
        CtbrCommand::hover(&self.quad)
    }
}

/// Scripted velocity tracker: a small cascaded P controller that tilts the
/// thrust axis toward the desired acceleration and trims thrust for
/// altitude. Used as a kinematic oracle in tests and evaluation plumbing.
pub struct VelocityTrackerPolicy {
    pub quad: QuadrotorParams,
    pub v_target: Vec3,
    pub z_ref: f64,
}

impl Policy for VelocityTrackerPolicy {
    fn act(&mut self, _agent: usize, obs: &Observation) -> CtbrCommand {
        let p = Vec3::new(obs.self_obs[0], obs.self_obs[1], obs.self_obs[2]);
        let v = Vec3::new(obs.self_obs[7], obs.self_obs[8], obs.self_obs[9]);
        let omega = Vec3::new(obs.self_obs[10], obs.self_obs[11], obs.self_obs[12]);
        let u = Vec3::new(obs.self_obs[16], obs.self_obs[17], obs.self_obs[18]);

        let kv = 2.0;
        let kz = 4.0;
        let kvz = 3.0;
        let ktilt = 8.0;

        let az = kz * (self.z_ref - p.z) + kvz * (self.v_target.z - v.z);
        let c = (self.quad.mass * (crate::GRAVITY + az) / u.z.max(0.5))
            .clamp(0.0, 0.9 * self.quad.max_thrust);

        // Desired horizontal acceleration translates into a desired tilt of
        // the body z axis; command body rates proportional to the tilt error.
        let ax = kv * (self.v_target.x - v.x);
        let ay = kv * (self.v_target.y - v.y);
        let ux_des = (ax / crate::GRAVITY).clamp(-0.3, 0.3);
        let uy_des = (ay / crate::GRAVITY).clamp(-0.3, 0.3);
        let omega_cmd = Vec3::new(
            (-(uy_des - u.y) * ktilt).clamp(-0.7, 0.7) - 0.3 * omega.x,
            ((ux_des - u.x) * ktilt).clamp(-0.7, 0.7) - 0.3 * omega.y,
            0.0,
        );
        CtbrCommand { c, omega_cmd }
    }
}

/// One recorded control step of an episode.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub t: usize,
    pub states: Vec<QuadrotorState>,
    pub commands: Vec<CtbrCommand>,
    pub normalized_actions: Vec<[f64; 4]>,
    pub rewards: Vec<RewardVector>,
    pub collisions: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub steps: Vec<StepLog>,
    pub goal_reached: bool,
    pub collided: bool,
    pub formation_target: Vec<Vec3>,
    pub v_target: Vec3,
    pub size_target: f64,
}

impl EpisodeRecord {
    pub fn positions_at(&self, step: usize) -> Vec<Vec3> {
        self.steps[step].states.iter().map(|s| s.p).collect()
    }

    /// CSV trajectory log, one row per (step, drone).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,drone_id,px,py,pz,qw,qx,qy,qz,vx,vy,vz,c,wr,wp,wy,\
             r_formation,r_flight,r_obstacle,r_action,collision_flag\n",
        );
        for step in &self.steps {
            for (i, s) in step.states.iter().enumerate() {
                let cmd = &step.commands[i];
                let r = &step.rewards[i];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    step.t,
                    i,
                    s.p.x,
                    s.p.y,
                    s.p.z,
                    s.q.w,
                    s.q.x,
                    s.q.y,
                    s.q.z,
                    s.v.x,
                    s.v.y,
                    s.v.z,
                    cmd.c,
                    cmd.omega_cmd.x,
                    cmd.omega_cmd.y,
                    cmd.omega_cmd.z,
                    r.formation,
                    r.flight,
                    r.obstacle,
                    r.action,
                    step.collisions[i] as u8,
                ));
            }
        }
        out
    }
}

/// Roll one full episode under `policy` in a fresh environment.
pub fn run_episode<P: Policy>(policy: &mut P, cfg: &EnvConfig) -> Result<EpisodeRecord> {
    let mut env = Env::new(cfg.clone())?;
    let mut observations = env.observations();
    let mut steps = Vec::new();
    let (goal_reached, collided) = loop {
        let commands: Vec<CtbrCommand> = observations
            .iter()
            .enumerate()
            .map(|(agent, obs)| policy.act(agent, obs))
            .collect();
        let result = env.step(&commands)?;
        let normalized: Vec<[f64; 4]> = commands
            .iter()
            .map(|c| normalized_from_cmd(c, &cfg.quad, cfg.clip_actions))
            .collect();
        steps.push(StepLog {
            t: steps.len(),
            states: env.drone_states().to_vec(),
            commands,
            normalized_actions: normalized,
            rewards: result.reward_vectors.clone(),
            collisions: result.info.collisions.per_drone.iter().map(|f| f.any()).collect(),
        });
        if result.done {
            break (result.info.goal_reached, result.info.collisions.any());
        }
        observations = result.observations;
    };
    Ok(EpisodeRecord {
        steps,
        goal_reached,
        collided,
        formation_target: cfg.formation_target.clone(),
        v_target: cfg.v_target,
        size_target: cfg.reward.size_target,
    })
}
