//! Rigid-body quadrotor simulation: collective-thrust/body-rate commands go
//! through a proportional rate controller and an X-configuration motor mixer
//! to per-rotor thrusts, integrated with semi-implicit Euler and quaternion
//! kinematics.

use crate::math::{Quat, Vec3};
use crate::{Error, Result, GRAVITY};
use serde::{Deserialize, Serialize};

/// Physics substep, s. One 50 Hz control tick = 4 substeps.
pub const SUBSTEP_DT: f64 = 0.005;
pub const SUBSTEPS_PER_TICK: usize = 4;
/// Control tick, s (50 Hz command rate).
pub const CONTROL_DT: f64 = SUBSTEP_DT * SUBSTEPS_PER_TICK as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorState {
    /// Position, m, world frame.
    pub p: Vec3,
    /// Attitude, body -> world.
    pub q: Quat,
    /// Linear velocity, m/s, world frame.
    pub v: Vec3,
    /// Angular velocity, rad/s, body frame.
    pub omega: Vec3,
}

impl QuadrotorState {
    pub fn at_rest(p: Vec3, q: Quat) -> Self {
        QuadrotorState { p, q, v: Vec3::ZERO, omega: Vec3::ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite() && self.v.is_finite() && self.omega.is_finite()
    }
}

/// Collective thrust (N, total) plus body-rate setpoints (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtbrCommand {
    pub c: f64,
    pub omega_cmd: Vec3,
}

impl CtbrCommand {
    pub fn hover(params: &QuadrotorParams) -> Self {
        CtbrCommand { c: params.mass * GRAVITY, omega_cmd: Vec3::ZERO }
    }

    /// Clamp into the wide action range: c in [0, 0.9]*max_thrust, rates in [-pi, pi].
    pub fn clamp_wide(self, params: &QuadrotorParams) -> Self {
        self.clamp_to(0.0, 0.9 * params.max_thrust, std::f64::consts::PI)
    }

    /// Clamp into the conservative deployment range: c in [0.4, 0.9]*max_thrust,
    /// rates in [-pi/4, pi/4].
    pub fn clamp_narrow(self, params: &QuadrotorParams) -> Self {
        self.clamp_to(
            0.4 * params.max_thrust,
            0.9 * params.max_thrust,
            std::f64::consts::FRAC_PI_4,
        )
    }

    fn clamp_to(self, c_min: f64, c_max: f64, rate_max: f64) -> Self {
        CtbrCommand {
            c: self.c.clamp(c_min, c_max),
            omega_cmd: Vec3::new(
                self.omega_cmd.x.clamp(-rate_max, rate_max),
                self.omega_cmd.y.clamp(-rate_max, rate_max),
                self.omega_cmd.z.clamp(-rate_max, rate_max),
            ),
        }
    }
}

/// Airframe constants. Defaults are Crazyflie-like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// Diagonal inertia, kg m^2.
    pub inertia_diag: Vec3,
    /// Center-to-rotor distance, m.
    pub arm_length: f64,
    /// Total thrust of all four rotors, N.
    pub max_thrust: f64,
    /// Yaw torque per unit rotor thrust, m.
    pub torque_to_thrust: f64,
    /// Proportional body-rate gains per axis, N m / (rad/s).
    pub rate_gains: Vec3,
    /// Linear drag, N s / m.
    pub drag_coeff: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        QuadrotorParams {
            mass: 0.028,
            inertia_diag: Vec3::new(1.4e-5, 1.4e-5, 2.17e-5),
            arm_length: 0.046,
            max_thrust: 0.56,
            torque_to_thrust: 0.006,
            // The rate loop holds throttles for a full 20 ms tick, so the
            // discrete update is omega += gain*err*dt/I. gain = I/dt tracks
            // the command in one tick; larger than 2*I/dt diverges.
            rate_gains: Vec3::new(7.0e-4, 7.0e-4, 5.0e-4),
            drag_coeff: 1e-4,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.mass > 0.0
            && self.inertia_diag.x > 0.0
            && self.inertia_diag.y > 0.0
            && self.inertia_diag.z > 0.0
            && self.arm_length > 0.0
            && self.max_thrust > 0.0
            && self.torque_to_thrust > 0.0
            && self.rate_gains.x > 0.0
            && self.rate_gains.y > 0.0
            && self.rate_gains.z > 0.0
            && self.drag_coeff >= 0.0;
        if !positive {
            return Err(Error::Config("quadrotor params must be positive".into()));
        }
        if self.max_thrust <= self.mass * GRAVITY {
            return Err(Error::Config("max_thrust must exceed hover weight".into()));
        }
        Ok(())
    }

    pub fn hover_throttle(&self) -> f64 {
        self.mass * GRAVITY / self.max_thrust
    }
}

/// Per-rotor throttles as fractions of the per-rotor thrust limit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorThrottles {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl MotorThrottles {
    pub fn to_array(self) -> [f64; 4] {
        [self.t1, self.t2, self.t3, self.t4]
    }

    pub fn sum(self) -> f64 {
        self.t1 + self.t2 + self.t3 + self.t4
    }
}

// X configuration rotor geometry: rotor i sits at (x_i, y_i)*arm/sqrt(2) with
// yaw reaction sign s_i. Rows of the mixing matrix are mutually orthogonal,
// so the 4x4 solve has a closed form.
const ROTOR_X: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
const ROTOR_Y: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
const ROTOR_YAW: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Torque produced by a set of rotor thrusts, N m, body frame.
pub fn mixer_torque(throttles: MotorThrottles, params: &QuadrotorParams) -> Vec3 {
    let a = params.arm_length / std::f64::consts::SQRT_2;
    let k = params.torque_to_thrust;
    let f_max = params.max_thrust / 4.0;
    let f = throttles.to_array().map(|t| t * f_max);
    let mut tau = Vec3::ZERO;
    for i in 0..4 {
        tau.x += ROTOR_Y[i] * a * f[i];
        tau.y += -ROTOR_X[i] * a * f[i];
        tau.z += ROTOR_YAW[i] * k * f[i];
    }
    tau
}

/// Total thrust realized by a throttle set, N.
pub fn mixer_thrust(throttles: MotorThrottles, params: &QuadrotorParams) -> f64 {
    throttles.sum() * params.max_thrust / 4.0
}

/// Solve the X-configuration mixer for rotor thrusts realizing (c, tau),
/// clipping each rotor into [0, max_thrust/4].
pub fn mix(c: f64, tau: Vec3, params: &QuadrotorParams) -> MotorThrottles {
    let a = params.arm_length / std::f64::consts::SQRT_2;
    let k = params.torque_to_thrust;
    let f_max = params.max_thrust / 4.0;
    let mut t = [0.0; 4];
    for i in 0..4 {
        let f = c / 4.0 + ROTOR_Y[i] * tau.x / (4.0 * a) - ROTOR_X[i] * tau.y / (4.0 * a)
            + ROTOR_YAW[i] * tau.z / (4.0 * k);
        t[i] = (f / f_max).clamp(0.0, 1.0);
    }
    MotorThrottles { t1: t[0], t2: t[1], t3: t[2], t4: t[3] }
}

/// P rate controller plus mixer: CTBR command to motor throttles.
pub fn rate_pid_and_mix(
    state: &QuadrotorState,
    cmd: &CtbrCommand,
    params: &QuadrotorParams,
) -> MotorThrottles {
    let err = cmd.omega_cmd - state.omega;
    let tau = Vec3::new(
        params.rate_gains.x * err.x,
        params.rate_gains.y * err.y,
        params.rate_gains.z * err.z,
    );
    mix(cmd.c, tau, params)
}

/// One Newton-Euler integration substep with constant throttles.
/// Semi-implicit Euler; the quaternion is renormalized afterwards.
pub fn step_physics(
    state: &QuadrotorState,
    throttles: MotorThrottles,
    params: &QuadrotorParams,
    dt: f64,
) -> QuadrotorState {
    debug_assert!(dt > 0.0 && dt <= 0.01);
    let thrust_body = Vec3::new(0.0, 0.0, mixer_thrust(throttles, params));
    let force = state.q.rotate(thrust_body)
        + Vec3::new(0.0, 0.0, -params.mass * GRAVITY)
        + state.v * -params.drag_coeff;
    let v_new = state.v + force * (dt / params.mass);
    let p_new = state.p + v_new * dt;

    let tau = mixer_torque(throttles, params);
    let inertia = params.inertia_diag;
    let i_omega = Vec3::new(
        inertia.x * state.omega.x,
        inertia.y * state.omega.y,
        inertia.z * state.omega.z,
    );
    let gyro = state.omega.cross(i_omega);
    let omega_new = Vec3::new(
        state.omega.x + (tau.x - gyro.x) / inertia.x * dt,
        state.omega.y + (tau.y - gyro.y) / inertia.y * dt,
        state.omega.z + (tau.z - gyro.z) / inertia.z * dt,
    );

    // q_dot = 1/2 q (x) (0, omega), integrated with the updated rate.
    let dq = state.q.mul(Quat::new(0.0, omega_new.x, omega_new.y, omega_new.z));
    let q_new = Quat::new(
        state.q.w + 0.5 * dq.w * dt,
        state.q.x + 0.5 * dq.x * dt,
        state.q.y + 0.5 * dq.y * dt,
        state.q.z + 0.5 * dq.z * dt,
    )
    .normalized();

    QuadrotorState { p: p_new, q: q_new, v: v_new, omega: omega_new }
}

/// One 50 Hz control tick: run the rate loop and mixer once, then four
/// physics substeps with constant throttles.
pub fn control_step(
    state: &QuadrotorState,
    cmd: &CtbrCommand,
    params: &QuadrotorParams,
) -> QuadrotorState {
    control_step_with_throttles(state, cmd, params).0
}

/// Same as [`control_step`] but also returns the throttles that were applied,
/// which the action-smoothness reward consumes.
pub fn control_step_with_throttles(
    state: &QuadrotorState,
    cmd: &CtbrCommand,
    params: &QuadrotorParams,
) -> (QuadrotorState, MotorThrottles) {
    let throttles = rate_pid_and_mix(state, cmd, params);
    let mut s = *state;
    for _ in 0..SUBSTEPS_PER_TICK {
        s = step_physics(&s, throttles, params, SUBSTEP_DT);
    }
    (s, throttles)
}

/// Body x and z axes expressed in the world frame.
pub fn body_axes(q: &Quat) -> Result<(Vec3, Vec3)> {
    if (q.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("body_axes requires a unit quaternion"));
    }
    Ok((q.rotate(Vec3::new(1.0, 0.0, 0.0)), q.rotate(Vec3::new(0.0, 0.0, 1.0))))
}
