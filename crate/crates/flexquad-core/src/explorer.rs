//! Tactile exploration state machine.
//!
//! The explorer turns a force estimate and a yaw rate into setpoints for the
//! admittance stage. Three phases:
//!
//! 1. approach: step the setpoint forward until something pushes back;
//! 2. guarded turn: a contact-induced yaw transient hands heading authority
//!    to a slow commanded turn that sweeps the pressing direction around an
//!    outside corner until the next face is firmly felt;
//! 3. traverse: slide along the contact, pressing with a constant force
//!    reference, flipping the travel direction in place at inside corners.
//!
//! All directions live in the heading frame (the yaw-setpoint rotation).
//! Outside corners rotate the heading and keep the travel direction; inside
//! corners keep the heading and swap the travel direction. Forces are used
//! in the action convention: the negated external-force estimate, i.e. what
//! the vehicle pushes onto the world.

use nalgebra::{Matrix3, Vector3};

use crate::control::Setpoint;
use crate::filters::{LowPass, MovingAverage};
use crate::sim::rotation_z;
use crate::{ensure_finite, Error, Result};

/// One-hot contact normal over the heading-frame axes [+x, -x, +y, -y].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactNormal(pub [f64; 4]);

impl ContactNormal {
    pub fn new(v: [f64; 4]) -> Result<Self> {
        let ones = v.iter().filter(|x| **x == 1.0).count();
        let zeros = v.iter().filter(|x| **x == 0.0).count();
        if ones != 1 || zeros != 3 {
            return Err(Error::InvalidParam(format!("contact normal {v:?} is not one-hot")));
        }
        Ok(Self(v))
    }

    pub const PLUS_X: Self = Self([1.0, 0.0, 0.0, 0.0]);
    pub const MINUS_X: Self = Self([0.0, 1.0, 0.0, 0.0]);
    pub const PLUS_Y: Self = Self([0.0, 0.0, 1.0, 0.0]);
    pub const MINUS_Y: Self = Self([0.0, 0.0, 0.0, 1.0]);

    /// Unit vector toward the pressed surface, heading frame.
    pub fn normal(&self) -> Vector3<f64> {
        match self.hot() {
            0 => Vector3::new(1.0, 0.0, 0.0),
            1 => Vector3::new(-1.0, 0.0, 0.0),
            2 => Vector3::new(0.0, 1.0, 0.0),
            _ => Vector3::new(0.0, -1.0, 0.0),
        }
    }

    /// Index of the set entry (0..4).
    pub fn hot(&self) -> usize {
        self.0.iter().position(|x| *x == 1.0).unwrap_or(0)
    }
}

/// Travel direction along the contact, heading frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveDirection {
    PlusY,
    MinusY,
    MinusX,
    PlusX,
}

impl MoveDirection {
    pub fn unit(&self) -> Vector3<f64> {
        match self {
            MoveDirection::PlusY => Vector3::new(0.0, 1.0, 0.0),
            MoveDirection::MinusY => Vector3::new(0.0, -1.0, 0.0),
            MoveDirection::MinusX => Vector3::new(-1.0, 0.0, 0.0),
            MoveDirection::PlusX => Vector3::new(1.0, 0.0, 0.0),
        }
    }

    /// Which heading-frame axis a collision on this course is read from.
    fn force_axis(&self) -> usize {
        match self {
            MoveDirection::PlusX | MoveDirection::MinusX => 0,
            MoveDirection::PlusY | MoveDirection::MinusY => 1,
        }
    }
}

/// Classify a collision from the action force while moving on `course`.
///
/// The travel axis is read first; if it carries no signal the other axis is
/// consulted, so a press already established keeps reproducing itself.
/// Returns None when neither axis exceeds the threshold.
pub fn collision_normal(course: MoveDirection, f_action: Vector3<f64>, threshold: f64) -> Option<ContactNormal> {
    let axes = if course.force_axis() == 0 { [0, 1] } else { [1, 0] };
    for axis in axes {
        let f = f_action[axis];
        if f.abs() > threshold {
            return Some(match (axis, f > 0.0) {
                (0, true) => ContactNormal::PLUS_X,
                (0, false) => ContactNormal::MINUS_X,
                (_, true) => ContactNormal::PLUS_Y,
                (_, false) => ContactNormal::MINUS_Y,
            });
        }
    }
    None
}

/// Travel direction that keeps a pressed surface on the contact side.
pub fn move_direction(contact: ContactNormal) -> MoveDirection {
    match contact.hot() {
        0 => MoveDirection::PlusY,
        1 => MoveDirection::MinusY,
        2 => MoveDirection::MinusX,
        _ => MoveDirection::PlusX,
    }
}

/// Exploration phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Turn,
    Traverse,
}

/// Thresholds and rates of the state machine.
#[derive(Debug, Clone)]
pub struct ExplorerParams {
    /// Yaw-rate magnitude that hands control to the guarded turn (rad/s).
    pub yaw_rate_trigger: f64,
    /// Commanded turn rate during the guarded turn (rad/s).
    pub turn_rate: f64,
    /// Force magnitude that establishes contact (N).
    pub contact_force: f64,
    /// Force magnitude that ends a guarded turn (N); must exceed `contact_force`.
    pub turn_exit_force: f64,
    /// Setpoint advance per decision along the travel direction (m).
    pub step: f64,
    /// Pressing force reference against the contact (N).
    pub press_force: f64,
    /// Altitude setpoint (m, world z).
    pub hover_z: f64,
    /// Moving-average window on the force input (samples).
    pub force_window: usize,
    /// Yaw-rate low-pass cutoff (Hz).
    pub yaw_rate_cutoff_hz: f64,
    /// Turn swept before the force exit is armed (rad).
    pub turn_arm_angle: f64,
    /// Turn swept at which the guarded turn gives up (rad).
    pub turn_cap: f64,
    /// Consecutive ticks the exit force must hold; rejects one-tick rings.
    pub exit_hold_ticks: usize,
    /// Quiet time after a turn before the rate trigger re-arms (s). The
    /// seating slam rings the yaw rate well past the trigger while settling.
    pub turn_holdoff: f64,
}

impl Default for ExplorerParams {
    fn default() -> Self {
        Self {
            yaw_rate_trigger: 0.4,
            turn_rate: 0.26,
            contact_force: 1.5,
            turn_exit_force: 1.6,
            step: 0.25,
            press_force: 1.25,
            hover_z: -0.7,
            force_window: 50,
            // Wide enough that the brief single-arm torque spike at a corner
            // slip-off survives; the spike is only a few ticks long.
            yaw_rate_cutoff_hz: 15.0,
            turn_arm_angle: 0.2,
            turn_cap: std::f64::consts::PI,
            exit_hold_ticks: 3,
            turn_holdoff: 1.5,
        }
    }
}

impl ExplorerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("yaw_rate_trigger", self.yaw_rate_trigger),
            ("turn_rate", self.turn_rate),
            ("contact_force", self.contact_force),
            ("turn_exit_force", self.turn_exit_force),
            ("step", self.step),
            ("press_force", self.press_force),
            ("yaw_rate_cutoff_hz", self.yaw_rate_cutoff_hz),
            ("turn_cap", self.turn_cap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} {v} must be finite and > 0")));
            }
        }
        if self.turn_exit_force <= self.contact_force {
            return Err(Error::InvalidParam(format!(
                "turn exit force {} must exceed contact force {}",
                self.turn_exit_force, self.contact_force
            )));
        }
        if self.force_window == 0 {
            return Err(Error::InvalidParam("force window must be >= 1".into()));
        }
        if self.exit_hold_ticks == 0 {
            return Err(Error::InvalidParam("exit hold must be >= 1 tick".into()));
        }
        if !(self.turn_holdoff >= 0.0 && self.turn_holdoff.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "turn holdoff {} must be finite and >= 0",
                self.turn_holdoff
            )));
        }
        Ok(())
    }
}

/// What the explorer hands to the admittance stage each decision tick.
#[derive(Debug, Clone)]
pub struct ExplorerOutput {
    /// Reference pose (position + yaw setpoint).
    pub reference: Setpoint,
    /// Desired external force, world frame (what the wall should push back).
    pub press_reference_world: Vector3<f64>,
    /// False while a guarded turn owns the yaw channel.
    pub track_yaw: bool,
    pub phase: Phase,
    pub course: MoveDirection,
    pub contact: Option<ContactNormal>,
    /// Smoothed action force, heading frame (diagnostic, drives thresholds).
    pub f_action: Vector3<f64>,
}

/// The exploration state machine, ticked at the estimator rate.
pub struct Explorer {
    pub params: ExplorerParams,
    phase: Phase,
    course: MoveDirection,
    contact: Option<ContactNormal>,
    yaw_sp: f64,
    r_star: Vector3<f64>,
    turn_accum: f64,
    turn_sign: f64,
    exit_streak: usize,
    holdoff_ticks: usize,
    force_avg: [MovingAverage; 3],
    yaw_rate_lpf: LowPass,
    dt: f64,
}

impl Explorer {
    pub fn new(params: ExplorerParams, start: Vector3<f64>, start_yaw: f64, tick_hz: f64) -> Result<Self> {
        params.validate()?;
        if !(tick_hz > 0.0) {
            return Err(Error::InvalidParam("explorer rate must be > 0".into()));
        }
        let w = params.force_window;
        let lpf = LowPass::from_cutoff(params.yaw_rate_cutoff_hz, tick_hz);
        Ok(Self {
            params,
            phase: Phase::Approach,
            course: MoveDirection::PlusX,
            contact: None,
            yaw_sp: start_yaw,
            r_star: start,
            turn_accum: 0.0,
            turn_sign: 1.0,
            exit_streak: 0,
            holdoff_ticks: 0,
            force_avg: std::array::from_fn(|_| MovingAverage::new(w)),
            yaw_rate_lpf: lpf,
            dt: 1.0 / tick_hz,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// One decision tick.
    ///
    /// `fused_world` is the raw fused external-force estimate; the yaw rate
    /// is the gyro z. Smoothing happens inside.
    pub fn tick(&mut self, pose: Vector3<f64>, fused_world: Vector3<f64>, yaw_rate: f64) -> Result<ExplorerOutput> {
        ensure_finite("explorer pose", pose.as_slice())?;
        ensure_finite("explorer force", fused_world.as_slice())?;
        ensure_finite("explorer yaw rate", &[yaw_rate])?;
        let p = self.params.clone();
        let f_avg_world = Vector3::from_fn(|i, _| self.force_avg[i].push(fused_world[i]));
        let rate = self.yaw_rate_lpf.push(yaw_rate);
        let heading = rotation_z(self.yaw_sp);
        let f_act = -(heading.transpose() * f_avg_world);
        let p_head = heading.transpose() * pose;
        self.holdoff_ticks = self.holdoff_ticks.saturating_sub(1);

        match self.phase {
            Phase::Approach => {
                if rate.abs() > p.yaw_rate_trigger {
                    self.enter_turn(pose, rate);
                } else if f_act.x.abs() > p.contact_force || f_act.y.abs() > p.contact_force {
                    if let Some(cn) = collision_normal(self.course, f_act, p.contact_force) {
                        self.contact = Some(cn);
                        self.course = move_direction(cn);
                    }
                    self.phase = Phase::Traverse;
                    self.traverse_setpoint(&heading, p_head);
                } else {
                    // Step the carrot along the course, hold the cross axis
                    // where the previous reference left it.
                    let dir = self.course.unit();
                    let prev = heading.transpose() * self.r_star;
                    let mut sp = p_head + p.step * dir;
                    if dir.x != 0.0 {
                        sp.y = prev.y;
                    } else {
                        sp.x = prev.x;
                    }
                    sp.z = p.hover_z;
                    self.r_star = heading * sp;
                }
            }
            Phase::Turn => {
                // The exit looks at the unsmoothed force so the slam of the
                // next face registers; the average would flatten it. Any axis
                // over the exit threshold counts, held for a few ticks so a
                // grazing bounce cannot fake a seat: contact and course are
                // kept relative to the heading, so after the sweep the seated
                // wall is dead ahead by construction and the press reproduces
                // it.
                let f_raw = -(rotation_z(self.yaw_sp).transpose() * fused_world);
                let armed = self.turn_accum >= p.turn_arm_angle;
                if armed && f_raw.x.abs().max(f_raw.y.abs()) >= p.turn_exit_force {
                    self.exit_streak += 1;
                } else {
                    self.exit_streak = 0;
                }
                if self.exit_streak >= p.exit_hold_ticks {
                    self.contact = Some(ContactNormal::PLUS_X);
                    self.course = move_direction(ContactNormal::PLUS_X);
                    self.leave_turn();
                } else {
                    self.yaw_sp += self.turn_sign * p.turn_rate * self.dt;
                    self.turn_accum += p.turn_rate * self.dt;
                    if self.turn_accum >= p.turn_cap {
                        self.leave_turn();
                    }
                }
            }
            Phase::Traverse => {
                if self.holdoff_ticks == 0 && rate.abs() > p.yaw_rate_trigger {
                    self.enter_turn(pose, rate);
                } else {
                    if let Some(cn) = collision_normal(self.course, f_act, p.contact_force) {
                        if Some(cn) != self.contact {
                            self.contact = Some(cn);
                            self.course = move_direction(cn);
                        }
                    }
                    self.traverse_setpoint(&heading, p_head);
                }
            }
        }

        let heading_now = rotation_z(self.yaw_sp);
        let press = match (self.phase, self.contact) {
            (Phase::Approach, _) | (_, None) => Vector3::zeros(),
            (_, Some(cn)) => heading_now * (-p.press_force * cn.normal()),
        };
        Ok(ExplorerOutput {
            reference: Setpoint { pos: self.r_star, yaw: self.yaw_sp },
            press_reference_world: press,
            track_yaw: self.phase != Phase::Turn,
            phase: self.phase,
            course: self.course,
            contact: self.contact,
            f_action: f_act,
        })
    }

    fn enter_turn(&mut self, pose: Vector3<f64>, rate: f64) {
        self.phase = Phase::Turn;
        // With a pressed surface on record the sweep goes toward that side;
        // the spike sign alone is unreliable because a late trigger can ride
        // the attitude loop's rebound, which spins opposite to the release.
        self.turn_sign = match self.contact {
            Some(cn) => {
                let n = cn.normal();
                let d = self.course.unit();
                -(n.x * d.y - n.y * d.x).signum()
            }
            None => {
                if rate >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        self.turn_accum = 0.0;
        self.exit_streak = 0;
        // Freeze the reference where the trigger caught us. The slip-off
        // spike fires just past the face end, so the pivot happens hugging
        // the corner and the rotating press can reach the next face.
        self.r_star = Vector3::new(pose.x, pose.y, self.params.hover_z);
    }

    fn leave_turn(&mut self) {
        self.phase = Phase::Traverse;
        self.holdoff_ticks = (self.params.turn_holdoff / self.dt).round() as usize;
    }

    /// Travel axis steps forward, contact axis rides the current position so
    /// only the force error pushes across it.
    fn traverse_setpoint(&mut self, heading: &Matrix3<f64>, p_head: Vector3<f64>) {
        let mut sp = p_head + self.params.step * self.course.unit();
        sp.z = self.params.hover_z;
        self.r_star = heading * sp;
    }
}
