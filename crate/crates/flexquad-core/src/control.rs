//! Flight control: admittance setpoint shaping on top of a cascaded
//! position / attitude tracker.
//!
//! The admittance stage turns a reference pose plus a force error into a
//! compliant setpoint by integrating a virtual mass-damper-spring in x, y
//! and yaw (altitude stays pinned). The tracker below it is a conventional
//! P position loop, PID velocity loop, and P attitude loop with a rate PID,
//! producing a collective thrust and a body torque.

use nalgebra::{Matrix3, Vector3};

use crate::sim::{rotation_z, BodyParams, VehicleState, E3};
use crate::{ensure_finite, Error, Result};

/// Compliant-setpoint dynamics constants.
#[derive(Debug, Clone)]
pub struct AdmittanceParams {
    /// Virtual mass (kg).
    pub virtual_mass: f64,
    /// Virtual yaw inertia (kg m^2).
    pub virtual_inertia_z: f64,
    /// Translational damping diagonal (N s/m); z entry 0 pins altitude.
    pub damping: Vector3<f64>,
    /// Translational stiffness diagonal (N/m); z entry 0 pins altitude.
    pub stiffness: Vector3<f64>,
    /// Yaw damping (N m s/rad).
    pub yaw_damping: f64,
    /// Yaw stiffness (N m/rad).
    pub yaw_stiffness: f64,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self {
            virtual_mass: 1.0,
            virtual_inertia_z: 1.0,
            damping: Vector3::new(24.5, 24.5, 0.0),
            stiffness: Vector3::new(24.5, 24.5, 0.0),
            yaw_damping: 1.0,
            yaw_stiffness: 1.0,
        }
    }
}

impl AdmittanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.virtual_mass > 0.0 && self.virtual_inertia_z > 0.0) {
            return Err(Error::InvalidParam("virtual mass/inertia must be > 0".into()));
        }
        let finite = self.damping.iter().chain(self.stiffness.iter()).all(|v| v.is_finite() && *v >= 0.0);
        if !finite || !(self.yaw_damping >= 0.0) || !(self.yaw_stiffness >= 0.0) {
            return Err(Error::InvalidParam("admittance gains must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Reference pose the tracker should fly to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub pos: Vector3<f64>,
    pub yaw: f64,
}

/// Compliant setpoint generator.
///
/// Shapes `(reference, force error)` into a tracked setpoint through
/// m_v r_dd + D r_d + K (r - r_ref) = e_f, with the yaw channel running the
/// same law on the external yaw torque. Altitude bypasses the dynamics.
#[derive(Debug, Clone)]
pub struct Admittance {
    pub params: AdmittanceParams,
    pos: Vector3<f64>,
    vel: Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
    primed: bool,
}

impl Admittance {
    pub fn new(params: AdmittanceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            yaw: 0.0,
            yaw_rate: 0.0,
            primed: false,
        })
    }

    /// Jump the internal state to the reference (used on mode entry).
    pub fn reset_to(&mut self, reference: &Setpoint) {
        self.pos = reference.pos;
        self.vel = Vector3::zeros();
        self.yaw = reference.yaw;
        self.yaw_rate = 0.0;
        self.primed = true;
    }

    /// One semi-implicit step of the virtual dynamics.
    ///
    /// `force_error` is the fused external force minus the desired pressing
    /// force, world frame. `yaw_torque_error` is the external yaw torque
    /// minus its desired value. Passing `track_yaw = false` freezes the yaw
    /// channel at the reference (used while a controlled turn overrides it).
    pub fn shape(
        &mut self,
        reference: &Setpoint,
        force_error: Vector3<f64>,
        yaw_torque_error: f64,
        track_yaw: bool,
        dt: f64,
    ) -> Result<Setpoint> {
        ensure_finite("admittance force error", force_error.as_slice())?;
        ensure_finite("admittance yaw error", &[yaw_torque_error])?;
        if !self.primed {
            self.reset_to(reference);
        }
        let p = &self.params;
        for i in 0..2 {
            let acc = (force_error[i] - p.damping[i] * self.vel[i] - p.stiffness[i] * (self.pos[i] - reference.pos[i]))
                / p.virtual_mass;
            self.vel[i] += dt * acc;
            self.pos[i] += dt * self.vel[i];
        }
        // Altitude is not compliant.
        self.pos.z = reference.pos.z;
        self.vel.z = 0.0;

        if track_yaw {
            let acc = (yaw_torque_error - p.yaw_damping * self.yaw_rate - p.yaw_stiffness * (self.yaw - reference.yaw))
                / p.virtual_inertia_z;
            self.yaw_rate += dt * acc;
            self.yaw += dt * self.yaw_rate;
        } else {
            self.yaw = reference.yaw;
            self.yaw_rate = 0.0;
        }
        Ok(Setpoint { pos: self.pos, yaw: self.yaw })
    }

    pub fn shaped(&self) -> Setpoint {
        Setpoint { pos: self.pos, yaw: self.yaw }
    }
}

/// Gains for the position/attitude cascade.
#[derive(Debug, Clone)]
pub struct TrackerGains {
    pub pos_p: Vector3<f64>,
    pub vel_p: Vector3<f64>,
    pub vel_i: Vector3<f64>,
    pub vel_d: Vector3<f64>,
    /// Per-axis clamp on the velocity integrator (m/s * gain units).
    pub vel_int_limit: f64,
    /// Commanded horizontal acceleration cap (m/s^2).
    pub accel_xy_max: f64,
    /// Commanded vertical acceleration cap (m/s^2).
    pub accel_z_max: f64,
    pub att_p: Vector3<f64>,
    pub rate_p: Vector3<f64>,
    pub rate_i: Vector3<f64>,
    pub rate_int_limit: f64,
    /// Per-axis torque clamp (N m).
    pub torque_max: Vector3<f64>,
}

impl Default for TrackerGains {
    fn default() -> Self {
        Self {
            pos_p: Vector3::new(1.5, 1.5, 1.5),
            vel_p: Vector3::new(4.0, 4.0, 5.0),
            vel_i: Vector3::new(1.5, 1.5, 2.0),
            vel_d: Vector3::zeros(),
            vel_int_limit: 2.0,
            accel_xy_max: 6.0,
            accel_z_max: 5.0,
            att_p: Vector3::new(10.0, 10.0, 6.0),
            rate_p: Vector3::new(0.35, 0.35, 0.25),
            rate_i: Vector3::new(0.2, 0.2, 0.1),
            rate_int_limit: 0.5,
            torque_max: Vector3::new(1.5, 1.5, 0.6),
        }
    }
}

/// Thrust + torque command out of the cascade.
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput {
    /// Collective thrust (N).
    pub thrust: f64,
    /// Body torque (N m).
    pub torque: Vector3<f64>,
    /// Commanded world acceleration after caps (diagnostic).
    pub accel_cmd: Vector3<f64>,
}

/// Cascaded pose tracker.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub gains: TrackerGains,
    vel_int: Vector3<f64>,
    vel_err_prev: Option<Vector3<f64>>,
    rate_int: Vector3<f64>,
}

impl Tracker {
    pub fn new(gains: TrackerGains) -> Self {
        Self {
            gains,
            vel_int: Vector3::zeros(),
            vel_err_prev: None,
            rate_int: Vector3::zeros(),
        }
    }

    pub fn reset(&mut self) {
        self.vel_int = Vector3::zeros();
        self.vel_err_prev = None;
        self.rate_int = Vector3::zeros();
    }

    /// One control step: world-frame pose tracking to thrust + torque.
    ///
    /// `vel_ff` feeds a velocity profile through (zero for pure setpoints).
    pub fn track(
        &mut self,
        state: &VehicleState,
        setpoint: &Setpoint,
        vel_ff: Vector3<f64>,
        body: &BodyParams,
        dt: f64,
    ) -> Result<ControlOutput> {
        ensure_finite("setpoint", setpoint.pos.as_slice())?;
        ensure_finite("setpoint yaw", &[setpoint.yaw])?;
        ensure_finite("vel_ff", vel_ff.as_slice())?;
        let g = &self.gains;

        // Position P with a commanded-speed cap, then velocity PID.
        let mut v_cmd = g.pos_p.component_mul(&(setpoint.pos - state.pos)) + vel_ff;
        let v_norm = v_cmd.norm();
        if v_norm > body.v_limit {
            v_cmd *= body.v_limit / v_norm;
        }
        let v_err = v_cmd - state.vel;
        self.vel_int += v_err * dt;
        self.vel_int = self.vel_int.map(|v| v.clamp(-g.vel_int_limit, g.vel_int_limit));
        let v_err_d = match self.vel_err_prev {
            Some(prev) => (v_err - prev) / dt,
            None => Vector3::zeros(),
        };
        self.vel_err_prev = Some(v_err);
        let mut a_cmd = g.vel_p.component_mul(&v_err) + g.vel_i.component_mul(&self.vel_int) + g.vel_d.component_mul(&v_err_d);
        let a_xy = (a_cmd.x * a_cmd.x + a_cmd.y * a_cmd.y).sqrt();
        if a_xy > g.accel_xy_max {
            let s = g.accel_xy_max / a_xy;
            a_cmd.x *= s;
            a_cmd.y *= s;
        }
        a_cmd.z = a_cmd.z.clamp(-g.accel_z_max, g.accel_z_max);

        // Thrust direction. Gravity points along +e3 and the rotor force acts
        // along -R e3, so the desired body z axis is g e3 - a_cmd.
        let f_vec = body.gravity * E3 - a_cmd;
        let b3 = if f_vec.norm() > 1e-6 { f_vec.normalize() } else { E3 };
        let thrust = (body.mass * f_vec.dot(&(state.rot * E3))).clamp(0.0, body.thrust_scale);

        // Desired attitude from b3 and the yaw heading.
        let heading = Vector3::new(setpoint.yaw.cos(), setpoint.yaw.sin(), 0.0);
        let mut b2 = b3.cross(&heading);
        if b2.norm() < 1e-6 {
            b2 = b3.cross(&Vector3::new(-heading.y, heading.x, 0.0));
        }
        let b2 = b2.normalize();
        let b1 = b2.cross(&b3);
        let rot_des = Matrix3::from_columns(&[b1, b2, b3]);

        // Attitude P on the SO(3) error, rate PID below it.
        let e_mat = rot_des.transpose() * state.rot - state.rot.transpose() * rot_des;
        let e_rot = 0.5 * Vector3::new(e_mat[(2, 1)], e_mat[(0, 2)], e_mat[(1, 0)]);
        let omega_cmd = -g.att_p.component_mul(&e_rot);
        let w_err = omega_cmd - state.omega;
        self.rate_int += w_err * dt;
        self.rate_int = self.rate_int.map(|v| v.clamp(-g.rate_int_limit, g.rate_int_limit));
        let torque = (g.rate_p.component_mul(&w_err) + g.rate_i.component_mul(&self.rate_int))
            .zip_map(&g.torque_max, |t, m| t.clamp(-m, m));

        Ok(ControlOutput { thrust, torque, accel_cmd: a_cmd })
    }
}

/// Interaction behaviour requested by the mission script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionClass {
    /// Sustained contact with a commanded pressing force.
    Interaction,
    /// Stiff tracking that treats external forces as disturbances.
    DisturbanceReject,
    /// Deliberate collision followed by recovery.
    CollideBrake,
}

/// Active response to external forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightMode {
    /// Admittance with a force reference: lean into contact.
    StaticWrench,
    /// Ignore the force estimate, hold the trajectory.
    DisturbanceReject,
    /// Back off along the incoming velocity after an impact.
    Yield,
}

/// Map the mission class and the impact flag to a flight mode.
pub fn select_mode(class: MissionClass, impulsive_contact: bool) -> FlightMode {
    match class {
        MissionClass::Interaction => FlightMode::StaticWrench,
        MissionClass::DisturbanceReject => FlightMode::DisturbanceReject,
        MissionClass::CollideBrake => {
            if impulsive_contact {
                FlightMode::Yield
            } else {
                FlightMode::DisturbanceReject
            }
        }
    }
}

/// Where to retreat to after an impact: back along the pre-impact velocity.
pub fn recovery_setpoint(pos: Vector3<f64>, v_pre_impact: Vector3<f64>, horizon_s: f64) -> Vector3<f64> {
    pos - horizon_s * v_pre_impact
}

/// Convenience: world yaw-heading rotation for setpoint frames.
pub fn heading_rotation(yaw: f64) -> Matrix3<f64> {
    rotation_z(yaw)
}
