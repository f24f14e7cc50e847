//! Physics core: rigid-body vehicle, four spring-hinged arms, and a polygon
//! contact world, advanced by a fixed-step semi-implicit integrator.

pub mod arms;
pub mod contact;
pub mod rigid;

pub use arms::{arm_deflection_angle, arm_origin_body, arm_rotation, arm_tangent_body, ArmParams};
pub use contact::{detect_contacts, resolve_collision, ArmContact, ContactEvent, Environment, Polygon};
pub use rigid::{gram_schmidt, hat, rotation_z, step_rigid_body};

use crate::{ensure_finite, Error, Result};
use nalgebra::{Matrix3, Vector3};

pub const E3: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Rigid-body and geometry constants of the vehicle.
#[derive(Debug, Clone)]
pub struct BodyParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Body inertia (kg m^2), diagonal-dominant.
    pub inertia: Matrix3<f64>,
    /// Gravitational acceleration (m/s^2), along +e3.
    pub gravity: f64,
    /// Distance of each arm-frame origin from the geometric centre (m).
    pub arm_radius: f64,
    /// Centre-to-guard-edge distance when pressed flat against a wall (m).
    pub footprint_radius: f64,
    /// Radius of the contact guard circle around each arm origin (m).
    /// Chosen so that arm_radius*cos(45 deg) + guard_radius = footprint_radius.
    pub guard_radius: f64,
    /// Commanded-speed cap used by the controllers (m/s).
    pub v_limit: f64,
    /// Thrust command scale: thrust in newtons per unit normalized command.
    pub thrust_scale: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        let arm_radius = 0.15_f64;
        let footprint_radius = 0.21_f64;
        Self {
            mass: 1.12,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.02)),
            gravity: 9.81,
            arm_radius,
            footprint_radius,
            guard_radius: footprint_radius - arm_radius * std::f64::consts::FRAC_1_SQRT_2,
            v_limit: 4.0,
            thrust_scale: 32.5,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParam(format!("mass {} must be > 0", self.mass)));
        }
        if self.inertia.determinant() <= 0.0 {
            return Err(Error::InvalidParam("inertia must be positive definite".into()));
        }
        for (name, v) in [
            ("gravity", self.gravity),
            ("arm_radius", self.arm_radius),
            ("footprint_radius", self.footprint_radius),
            ("guard_radius", self.guard_radius),
            ("v_limit", self.v_limit),
            ("thrust_scale", self.thrust_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} {v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// Hover thrust in newtons.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Full simulation state of the vehicle.
#[derive(Debug, Clone)]
pub struct VehicleState {
    /// Position in the world frame (m).
    pub pos: Vector3<f64>,
    /// Velocity in the world frame (m/s).
    pub vel: Vector3<f64>,
    /// Body-to-world rotation.
    pub rot: Matrix3<f64>,
    /// Angular velocity in the body frame (rad/s).
    pub omega: Vector3<f64>,
    /// Arm deflection angles (rad).
    pub theta: [f64; 4],
    /// Arm deflection rates (rad/s).
    pub theta_dot: [f64; 4],
}

impl VehicleState {
    pub fn at_rest(pos: Vector3<f64>) -> Self {
        Self {
            pos,
            vel: Vector3::zeros(),
            rot: Matrix3::identity(),
            omega: Vector3::zeros(),
            theta: [0.0; 4],
            theta_dot: [0.0; 4],
        }
    }

    /// Yaw angle extracted from the rotation matrix (rad).
    pub fn yaw(&self) -> f64 {
        self.rot[(1, 0)].atan2(self.rot[(0, 0)])
    }

    pub fn validate(&self, arm: &ArmParams) -> Result<()> {
        ensure_finite("state.pos", self.pos.as_slice())?;
        ensure_finite("state.vel", self.vel.as_slice())?;
        ensure_finite("state.rot", self.rot.as_slice())?;
        ensure_finite("state.omega", self.omega.as_slice())?;
        ensure_finite("state.theta", &self.theta)?;
        ensure_finite("state.theta_dot", &self.theta_dot)?;
        let err = (self.rot.transpose() * self.rot - Matrix3::identity()).norm();
        if err > 1e-6 {
            return Err(Error::InvalidParam(format!("rotation not orthonormal (|R'R-I| = {err:.3e})")));
        }
        for (i, th) in self.theta.iter().enumerate() {
            if th.abs() > arm.theta_max + 1e-12 {
                return Err(Error::InvalidParam(format!("theta[{i}] = {th} beyond hard stop {}", arm.theta_max)));
            }
        }
        Ok(())
    }
}

/// External wrench injected by a scenario (test rigs, pulley loads, ...).
#[derive(Debug, Clone, Copy, Default)]
pub struct Injection {
    /// Constant force at the centre of mass, world frame (N).
    pub com_force: Vector3<f64>,
    /// Constant torque on the body, body frame (N m).
    pub body_torque: Vector3<f64>,
    /// Force along one arm's tangential axis, applied at that arm (N).
    pub arm_force: Option<(usize, f64)>,
}

/// What one physics step produced besides the new state.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub events: Vec<ContactEvent>,
    /// True if an impulsive restitution jump was applied this step.
    pub jumped: bool,
    /// Velocity immediately before a jump, if one happened.
    pub v_pre_jump: Option<Vector3<f64>>,
    /// Total contact + injected force on the body, world frame (N).
    pub ext_force_world: Vector3<f64>,
    /// Total contact + injected torque on the body, body frame (N m).
    pub ext_torque_body: Vector3<f64>,
    /// Net spring-loading torque on each arm (N m).
    pub arm_torques: [f64; 4],
    /// Contact-only force on the body, world frame (N).
    pub contact_force_world: Vector3<f64>,
    /// Deepest penetration among this step's contacts (m).
    pub max_penetration: f64,
}

/// The closed physics world: vehicle + obstacles, stepped at a fixed dt.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub body: BodyParams,
    pub arm: ArmParams,
    pub env: Environment,
    pub state: VehicleState,
    pub dt: f64,
    pub time: f64,
}

impl Simulator {
    pub fn new(body: BodyParams, arm: ArmParams, env: Environment, state: VehicleState, dt: f64) -> Result<Self> {
        body.validate()?;
        arm.validate()?;
        env.validate()?;
        state.validate(&arm)?;
        if !(dt > 0.0 && dt <= rigid::MAX_DT) {
            return Err(Error::BadTimestep(dt, rigid::MAX_DT));
        }
        Ok(Self { body, arm, env, state, dt, time: 0.0 })
    }

    /// Advance one physics step under a thrust/torque command and optional
    /// injected wrench. Contact forces and restitution jumps are resolved
    /// against the current state before integrating.
    pub fn step(&mut self, thrust: f64, tau_cmd: Vector3<f64>, inject: &Injection) -> Result<StepOutcome> {
        ensure_finite("thrust", &[thrust])?;
        ensure_finite("tau_cmd", tau_cmd.as_slice())?;

        let events = detect_contacts(&self.state, &self.env, &self.body, &self.arm);

        // Impulsive impact: instantaneous velocity jump, once per step, using
        // the deepest impulsive contact's surface normal.
        let mut jumped = false;
        let mut v_pre_jump = None;
        if let Some(ev) = events
            .iter()
            .filter(|e| e.impulsive)
            .max_by(|a, b| a.penetration.total_cmp(&b.penetration))
        {
            let n = ev.normal;
            let v_n = self.state.vel.dot(&n);
            if v_n < -self.env.v_impulse {
                v_pre_jump = Some(self.state.vel);
                self.state.vel = resolve_collision(self.state.vel, n, self.env.restitution, self.env.tangential_loss);
                jumped = true;
            }
        }

        // Contact forces through the compliant guards: each arm's normal load
        // is projected onto the arm's tangential axis, which is also the axis
        // the deflection estimator reads, so the force reconstructed from the
        // springs matches the force actually applied.
        let mut f_contact = Vector3::zeros();
        let mut tau_contact_body = Vector3::zeros();
        let mut arm_torques = [0.0_f64; 4];
        let mut max_pen = 0.0_f64;
        for ev in &events {
            let ArmContact::Arm(i) = ev.arm else { continue };
            max_pen = max_pen.max(ev.penetration);
            let r_body = arms::guard_center_body(i, self.body.arm_radius, self.arm.lever, self.state.theta[i]);
            let a_world = self.state.rot * arm_tangent_body(i, self.state.theta[i]);
            // The guard rides on the arm, so its velocity carries the
            // deflection rate; a wound arm rubbing the wall bleeds its
            // ring into the wall damper instead of oscillating freely.
            let v_pt = self.state.vel
                + (self.state.rot * self.state.omega).cross(&(self.state.rot * r_body))
                + self.state.theta_dot[i] * self.arm.lever * a_world;
            let v_n = v_pt.dot(&ev.normal);
            let n_mag = (self.env.wall_stiffness * ev.penetration + self.env.wall_damping * (-v_n).max(0.0)).max(0.0);
            let proj = ev.normal.dot(&a_world);
            let axial = n_mag * proj;
            let f_axial = axial * a_world;

            // The guard transmits the full load along the arm axis into the
            // spring, but only a friction cone's worth of it in the wall
            // plane: a cocked arm skids along the face instead of gripping
            // it, so the in-plane part is capped at mu times the normal load.
            let normal_load = f_axial.dot(&ev.normal);
            let mut f_tan = f_axial - normal_load * ev.normal;
            let cap = self.env.mu_c * normal_load;
            let tan_mag = f_tan.norm();
            if tan_mag > cap {
                f_tan *= cap / tan_mag;
            }
            let mut force = normal_load * ev.normal + f_tan;

            // Coulomb friction against sliding along the wall, scaled by the
            // actual normal load the guard transmits. Below the regularization
            // speed it blends to viscous so slow creep is damped instead of
            // slipping under the kinetic threshold unopposed.
            let v_t = v_pt - v_n * ev.normal;
            let speed_t = v_t.norm();
            if speed_t > 1e-9 {
                let grip = (speed_t / 0.01).min(1.0);
                force -= self.env.mu_c * normal_load * grip * (v_t / speed_t);
            }

            f_contact += force;
            let f_body = self.state.rot.transpose() * force;
            tau_contact_body += r_body.cross(&f_body);
            arm_torques[i] += self.arm.lever * axial;
        }

        // Injected wrench.
        let mut f_ext = f_contact + inject.com_force;
        let mut tau_ext = tau_contact_body + inject.body_torque;
        if let Some((i, mag)) = inject.arm_force {
            let a_world = self.state.rot * arm_tangent_body(i, self.state.theta[i]);
            f_ext += mag * a_world;
            let r_body = arm_origin_body(i, self.body.arm_radius);
            tau_ext += r_body.cross(&(self.state.rot.transpose() * (mag * a_world)));
            arm_torques[i] += self.arm.lever * mag;
        }

        // Hinge recoil: whatever torque the arm's inertia absorbs is taken
        // from the body, with the tangent offset sign giving each hinge its
        // spin direction about body z. Under a held load the spring carries
        // the drive and the term vanishes, and arms pressed evenly mirror
        // each other away, but an arm whose load just vanished unwinds
        // against the body and kicks it around yaw until the spring settles.
        for i in 0..4 {
            let wound = self.arm.stiffness * self.state.theta[i] + self.arm.damping * self.state.theta_dot[i];
            tau_ext.z += arms::NU[i].signum() * (wound - arm_torques[i]);
        }

        for i in 0..4 {
            let (th, thd) = arms::step_arm(self.state.theta[i], self.state.theta_dot[i], arm_torques[i], &self.arm, self.dt)?;
            self.state.theta[i] = th;
            self.state.theta_dot[i] = thd;
        }

        let (pos, vel, rot, omega) = step_rigid_body(
            &self.state,
            thrust,
            tau_cmd,
            f_ext,
            tau_ext,
            &self.body,
            self.dt,
        )?;
        self.state.pos = pos;
        self.state.vel = vel;
        self.state.rot = rot;
        self.state.omega = omega;
        self.time += self.dt;

        Ok(StepOutcome {
            events,
            jumped,
            v_pre_jump,
            ext_force_world: f_ext,
            ext_torque_body: tau_ext,
            arm_torques,
            contact_force_world: f_contact,
            max_penetration: max_pen,
        })
    }
}
