//! Scenario descriptions: environment presets, mission selection, and every
//! tunable the runner honours, loadable from flat `key = value` text.
//!
//! The format is deliberately dumb: one assignment per line, `#` comments,
//! dotted key names for grouping. Unknown keys and malformed values are
//! rejected with their line number so sweep configs fail loudly.

use nalgebra::{Point2, Vector3};
use std::path::Path;

use crate::control::{AdmittanceParams, TrackerGains};
use crate::estimator::FilterBank;
use crate::explorer::ExplorerParams;
use crate::mapper::MapperParams;
use crate::sim::{ArmParams, BodyParams, Environment, Polygon};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionKind {
    ExploreMap,
    StaticWrench,
    Cob,
}

/// Which plan the collision-aware waypoint mission flies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CobPlanChoice {
    /// Let the planner pick the faster profile.
    Auto,
    /// Conventional waypoint flight: step setpoint at the goal.
    Direct,
    /// Follow the collide profile into the wall, then recover.
    Collide,
}

/// Parameters of the waypoint-with-wall mission, along the world x axis.
#[derive(Debug, Clone)]
pub struct CobMission {
    pub goal_x: f64,
    /// Vehicle-centre x at which wall contact occurs, if a wall is present.
    pub wall_x: Option<f64>,
    pub a_max: f64,
    pub v_max: f64,
    pub plan: CobPlanChoice,
}

/// Constant-force regulation mission (press against a wall, or hold free
/// flight under an injected pull).
#[derive(Debug, Clone)]
pub struct WrenchMission {
    /// Desired external force, world frame (N).
    pub force_des: Vector3<f64>,
    pub reference: Vector3<f64>,
    pub yaw: f64,
}

/// External disturbance injected at the centre of mass over a time window.
#[derive(Debug, Clone)]
pub struct InjectSchedule {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub start: f64,
    pub stop: f64,
}

/// Sensor-noise switches; everything off gives clean, replayable traces.
#[derive(Debug, Clone)]
pub struct NoiseParams {
    pub enabled: bool,
    pub accel_sigma: f64,
    pub arm_sigma: f64,
    pub pose_sigma: f64,
}

/// Loop rates. Physics must be an integer multiple of control, control of
/// the estimator and map rates; rows land on exact decimations.
#[derive(Debug, Clone)]
pub struct Rates {
    pub physics_hz: f64,
    pub control_hz: f64,
    pub estimator_hz: f64,
    pub map_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { physics_hz: 500.0, control_hz: 100.0, estimator_hz: 50.0, map_hz: 100.0 / 3.0 }
    }
}

fn divider(fast: f64, slow: f64, what: &str) -> Result<usize> {
    let ratio = fast / slow;
    let rounded = ratio.round();
    if !(ratio.is_finite() && rounded >= 1.0 && (ratio - rounded).abs() < 1e-6) {
        return Err(Error::InvalidParam(format!(
            "{what}: {fast} Hz is not an integer multiple of {slow} Hz"
        )));
    }
    Ok(rounded as usize)
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        if !(self.physics_hz >= self.control_hz && self.control_hz >= self.estimator_hz) {
            return Err(Error::InvalidParam(
                "rates must satisfy physics >= control >= estimator".into(),
            ));
        }
        self.control_divider()?;
        self.estimator_divider()?;
        self.map_divider()?;
        Ok(())
    }

    /// Physics steps per control tick.
    pub fn control_divider(&self) -> Result<usize> {
        divider(self.physics_hz, self.control_hz, "control rate")
    }

    /// Control ticks per estimator tick.
    pub fn estimator_divider(&self) -> Result<usize> {
        divider(self.control_hz, self.estimator_hz, "estimator rate")
    }

    /// Control ticks per map tick.
    pub fn map_divider(&self) -> Result<usize> {
        divider(self.control_hz, self.map_hz, "map rate")
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mission: MissionKind,
    pub environment: Environment,
    pub body: BodyParams,
    pub arm: ArmParams,
    pub bank: FilterBank,
    pub admittance: AdmittanceParams,
    pub gains: TrackerGains,
    pub explorer: ExplorerParams,
    pub mapper: MapperParams,
    pub rates: Rates,
    pub duration: f64,
    pub seed: u64,
    pub start_pos: Vector3<f64>,
    pub start_yaw: f64,
    pub wrench: WrenchMission,
    pub cob: CobMission,
    pub inject: InjectSchedule,
    pub noise: NoiseParams,
    /// Retreat horizon after an unplanned impact (s of pre-impact velocity).
    pub yield_horizon: f64,
    /// How long the retreat setpoint is held (s).
    pub yield_time: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            mission: MissionKind::ExploreMap,
            environment: Environment::free_space(),
            body: BodyParams::default(),
            arm: ArmParams::default(),
            bank: FilterBank::default(),
            admittance: AdmittanceParams::default(),
            gains: TrackerGains::default(),
            explorer: ExplorerParams::default(),
            mapper: MapperParams::default(),
            rates: Rates::default(),
            duration: 20.0,
            seed: 0,
            start_pos: Vector3::new(0.0, 0.0, -0.7),
            start_yaw: 0.0,
            wrench: WrenchMission {
                force_des: Vector3::zeros(),
                reference: Vector3::new(0.0, 0.0, -0.7),
                yaw: 0.0,
            },
            cob: CobMission {
                goal_x: 2.0,
                wall_x: None,
                a_max: 3.0,
                v_max: 2.0,
                plan: CobPlanChoice::Auto,
            },
            inject: InjectSchedule {
                force: Vector3::zeros(),
                torque: Vector3::zeros(),
                start: 0.0,
                stop: 0.0,
            },
            noise: NoiseParams { enabled: false, accel_sigma: 0.05, arm_sigma: 0.003, pose_sigma: 0.0 },
            yield_horizon: 0.5,
            yield_time: 0.4,
        }
    }
}

impl Scenario {
    /// Instantiate a named preset geometry plus its usual mission.
    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Scenario::default();
        s.name = name.to_ascii_lowercase().replace('_', "-");
        match name {
            // Rectangular object centred at the origin; approach from the west
            // and circulate with the wall on the right.
            "BOX_1220x1000" => {
                s.environment.obstacles = vec![Polygon::rect(-0.61, -0.5, 0.61, 0.5)?];
                s.start_pos = Vector3::new(-1.0, 0.0, -0.7);
                s.duration = 75.0;
                // Weak yaw authority so the single-guard moment at a convex
                // corner actually swings the body instead of being servoed
                // away before the rate trigger can see it.
                s.gains.att_p.z = 2.5;
                s.gains.rate_p.z = 0.15;
            }
            // L-shaped channel: a long wall ending against a perpendicular
            // one. The inside corner flips the course without any yaw spike.
            "CORRIDOR_CONCAVE_CONVEX" => {
                s.environment.obstacles = vec![
                    Polygon::rect(0.0, -1.5, 0.08, 0.5)?,
                    Polygon::rect(-1.5, 0.5, 0.08, 0.58)?,
                ];
                s.start_pos = Vector3::new(-0.6, -1.2, -0.7);
                s.duration = 16.0;
            }
            // Single wall with the press reference on its face. The contact
            // task gets a stiffer velocity integral so the press force
            // charges within the run.
            "WALL_PUSH" => {
                s.environment.obstacles = vec![Polygon::rect(0.3, -1.0, 0.38, 1.0)?];
                s.mission = MissionKind::StaticWrench;
                s.start_pos = Vector3::new(-0.4, 0.0, -0.7);
                s.wrench.force_des = Vector3::new(-1.0, 0.0, 0.0);
                s.wrench.reference = Vector3::new(0.09, 0.0, -0.7);
                s.gains.vel_i = Vector3::new(5.0, 5.0, 2.0);
                s.duration = 12.0;
            }
            // Free flight with a constant pull at the centre of mass.
            "PULLEY_COM" => {
                s.mission = MissionKind::StaticWrench;
                s.inject.force = Vector3::new(1.0, 0.0, 0.0);
                s.inject.start = 2.0;
                s.inject.stop = f64::INFINITY;
                s.duration = 8.0;
            }
            // Wall two metres ahead on the x axis, goal on its contact line.
            "COB_WALL" => {
                s.environment.obstacles = vec![Polygon::rect(2.21, -1.5, 2.29, 1.5)?];
                s.mission = MissionKind::Cob;
                s.cob.wall_x = Some(2.0);
                s.duration = 10.0;
            }
            other => {
                return Err(Error::InvalidParam(format!("unknown environment preset {other}")))
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParam("duration must be > 0".into()));
        }
        self.rates.validate()?;
        self.explorer.validate()?;
        self.bank.validate(self.rates.estimator_hz)?;
        if self.mission == MissionKind::Cob {
            if !(self.cob.a_max > 0.0 && self.cob.v_max > 0.0) {
                return Err(Error::InvalidParam("cob limits must be > 0".into()));
            }
            if self.cob.plan == CobPlanChoice::Collide && self.cob.wall_x.is_none() {
                return Err(Error::InvalidParam("collide plan requested without a wall".into()));
            }
        }
        Ok(())
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ScenarioParse { line, msg: msg.into() }
}

fn num(value: &str, line: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("expected a number, got {value:?}")))
}

fn int(value: &str, line: usize) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("expected a non-negative integer, got {value:?}")))
}

fn boolean(value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(parse_err(line, format!("expected true/false, got {other:?}"))),
    }
}

fn floats(value: &str, line: usize) -> Result<Vec<f64>> {
    value.split_whitespace().map(|tok| num(tok, line)).collect()
}

fn triple(value: &str, line: usize) -> Result<Vector3<f64>> {
    let v = floats(value, line)?;
    if v.len() != 3 {
        return Err(parse_err(line, format!("expected three numbers, got {}", v.len())));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// Apply one `key = value` assignment. `line` is only used in diagnostics;
/// CLI overrides pass 0.
pub fn apply_key(s: &mut Scenario, key: &str, value: &str, line: usize) -> Result<()> {
    match key {
        "name" => s.name = value.to_string(),
        "environment" => {
            let preset = Scenario::preset(value).map_err(|_| {
                parse_err(line, format!("unknown environment preset {value:?}"))
            })?;
            let name = std::mem::take(&mut s.name);
            *s = preset;
            if name != "scenario" {
                s.name = name;
            }
        }
        "mission" => {
            s.mission = match value {
                "EXPLORE_MAP" => MissionKind::ExploreMap,
                "STATIC_WRENCH" => MissionKind::StaticWrench,
                "COB" => MissionKind::Cob,
                other => return Err(parse_err(line, format!("unknown mission {other:?}"))),
            }
        }
        "duration" => s.duration = num(value, line)?,
        "seed" => {
            s.seed = value
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("expected a seed integer, got {value:?}")))?
        }
        "start.pos" => s.start_pos = triple(value, line)?,
        "start.yaw" => s.start_yaw = num(value, line)?,

        "rates.physics_hz" => s.rates.physics_hz = num(value, line)?,
        "rates.control_hz" => s.rates.control_hz = num(value, line)?,
        "rates.estimator_hz" => s.rates.estimator_hz = num(value, line)?,
        "rates.map_hz" => s.rates.map_hz = num(value, line)?,

        "body.mass" => s.body.mass = num(value, line)?,
        "body.thrust_scale" => s.body.thrust_scale = num(value, line)?,
        "body.v_limit" => s.body.v_limit = num(value, line)?,

        "arm.stiffness" => s.arm.stiffness = num(value, line)?,
        "arm.damping" => s.arm.damping = num(value, line)?,
        "arm.inertia" => s.arm.inertia_zz = num(value, line)?,
        "arm.lever" => s.arm.lever = num(value, line)?,

        "env.stiffness" => s.environment.wall_stiffness = num(value, line)?,
        "env.damping" => s.environment.wall_damping = num(value, line)?,
        "env.friction" => s.environment.mu_c = num(value, line)?,
        "env.restitution" => s.environment.restitution = num(value, line)?,
        "env.tangential_loss" => s.environment.tangential_loss = num(value, line)?,
        "env.v_impulse" => s.environment.v_impulse = num(value, line)?,

        "estimator.median_window" => s.bank.median_window = int(value, line)?,
        "estimator.lpf_alpha" => s.bank.lpf_alpha = num(value, line)?,
        "estimator.notch_enabled" => s.bank.notch_enabled = boolean(value, line)?,
        "estimator.accel_median_window" => s.bank.accel_median_window = int(value, line)?,
        "estimator.accel_lpf_alpha" => s.bank.accel_lpf_alpha = num(value, line)?,
        "estimator.k_i" => s.bank.k_i = num(value, line)?,
        "estimator.xi_f" => s.bank.xi_f = num(value, line)?,
        "estimator.theta_th" => s.bank.theta_th = num(value, line)?,
        "estimator.k_o" => s.bank.k_o = num(value, line)?,

        "admittance.stiffness_xy" => {
            let k = num(value, line)?;
            s.admittance.stiffness = Vector3::new(k, k, 0.0);
        }
        "admittance.damping_xy" => {
            let d = num(value, line)?;
            s.admittance.damping = Vector3::new(d, d, 0.0);
        }

        "tracker.pos_p" => s.gains.pos_p = triple(value, line)?,
        "tracker.vel_p" => s.gains.vel_p = triple(value, line)?,
        "tracker.vel_i" => s.gains.vel_i = triple(value, line)?,
        "tracker.att_p" => s.gains.att_p = triple(value, line)?,
        "tracker.rate_p" => s.gains.rate_p = triple(value, line)?,

        "explorer.yaw_rate_trigger" => s.explorer.yaw_rate_trigger = num(value, line)?,
        "explorer.turn_rate" => s.explorer.turn_rate = num(value, line)?,
        "explorer.contact_force" => s.explorer.contact_force = num(value, line)?,
        "explorer.turn_exit_force" => s.explorer.turn_exit_force = num(value, line)?,
        "explorer.step" => s.explorer.step = num(value, line)?,
        "explorer.press_force" => s.explorer.press_force = num(value, line)?,
        "explorer.hover_z" => s.explorer.hover_z = num(value, line)?,
        "explorer.force_window" => s.explorer.force_window = int(value, line)?,
        "explorer.turn_arm_angle" => s.explorer.turn_arm_angle = num(value, line)?,

        "mapper.force_gate" => s.mapper.force_gate = num(value, line)?,
        "mapper.dedup_radius" => s.mapper.dedup_radius = num(value, line)?,

        "wrench.force" => s.wrench.force_des = triple(value, line)?,
        "wrench.ref" => s.wrench.reference = triple(value, line)?,
        "wrench.yaw" => s.wrench.yaw = num(value, line)?,

        "cob.goal" => s.cob.goal_x = num(value, line)?,
        "cob.wall" => {
            s.cob.wall_x = if value == "none" { None } else { Some(num(value, line)?) }
        }
        "cob.a_max" => s.cob.a_max = num(value, line)?,
        "cob.v_max" => s.cob.v_max = num(value, line)?,
        "cob.plan" => {
            s.cob.plan = match value {
                "auto" => CobPlanChoice::Auto,
                "direct" => CobPlanChoice::Direct,
                "collide" => CobPlanChoice::Collide,
                other => return Err(parse_err(line, format!("unknown cob plan {other:?}"))),
            }
        }

        "inject.force" => s.inject.force = triple(value, line)?,
        "inject.torque" => s.inject.torque = triple(value, line)?,
        "inject.start" => s.inject.start = num(value, line)?,
        "inject.stop" => s.inject.stop = num(value, line)?,

        "noise.enabled" => s.noise.enabled = boolean(value, line)?,
        "noise.accel_sigma" => s.noise.accel_sigma = num(value, line)?,
        "noise.arm_sigma" => s.noise.arm_sigma = num(value, line)?,
        "noise.pose_sigma" => s.noise.pose_sigma = num(value, line)?,

        "yield.horizon" => s.yield_horizon = num(value, line)?,
        "yield.time" => s.yield_time = num(value, line)?,

        _ if key.starts_with("polygon.") => {
            let idx: usize = key["polygon.".len()..]
                .parse()
                .map_err(|_| parse_err(line, format!("bad polygon index in {key:?}")))?;
            let coords = floats(value, line)?;
            if coords.len() < 6 || coords.len() % 2 != 0 {
                return Err(parse_err(line, "polygon needs an even list of at least 6 numbers"));
            }
            let verts = coords.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
            let poly = Polygon::new(verts).map_err(|e| parse_err(line, e.to_string()))?;
            if s.environment.obstacles.len() <= idx {
                s.environment.obstacles.resize_with(idx + 1, || poly.clone());
            }
            s.environment.obstacles[idx] = poly;
        }
        other => return Err(parse_err(line, format!("unknown key {other:?}"))),
    }
    Ok(())
}

/// Parse scenario text. Later assignments override earlier ones, so an
/// `environment` preset line should come before its tweaks.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut s = Scenario::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
        apply_key(&mut s, key.trim(), value.trim(), line_no)?;
    }
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let mut s = parse_scenario(&text)?;
    if s.name == "scenario" {
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            s.name = stem.to_string();
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mission_only_file_gets_all_defaults() {
        let s = parse_scenario("mission = EXPLORE_MAP\n").unwrap();
        assert_relative_eq!(s.explorer.yaw_rate_trigger, 0.4);
        assert_relative_eq!(s.explorer.turn_rate, 0.26);
        assert_relative_eq!(s.explorer.contact_force, 1.5);
        assert_relative_eq!(s.explorer.turn_exit_force, 1.6);
        assert_relative_eq!(s.explorer.step, 0.25);
        assert_relative_eq!(s.explorer.press_force, 1.25);
        assert_relative_eq!(s.mapper.force_gate, 1.51);
        assert_relative_eq!(s.rates.physics_hz, 500.0);
    }

    #[test]
    fn turn_exit_below_contact_force_is_rejected() {
        let err = parse_scenario("explorer.turn_exit_force = 1.4\n").unwrap_err();
        assert!(err.to_string().contains("exceed"), "{err}");
    }

    #[test]
    fn box_preset_is_the_catalogued_rectangle() {
        let s = parse_scenario("environment = BOX_1220x1000\n").unwrap();
        assert_eq!(s.environment.obstacles.len(), 1);
        let poly = &s.environment.obstacles[0];
        let xs: Vec<f64> = poly.verts.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = poly.verts.iter().map(|p| p.y).collect();
        let w = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        let h = ys.iter().cloned().fold(f64::MIN, f64::max)
            - ys.iter().cloned().fold(f64::MAX, f64::min);
        assert_relative_eq!(w, 1.22, epsilon = 1e-12);
        assert_relative_eq!(h, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_keys_carry_line_numbers() {
        let err = parse_scenario("duration = 5\nbogus.key = 1\n").unwrap_err();
        match err {
            Error::ScenarioParse { line, ref msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus.key"), "{msg}");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let s = parse_scenario("# a comment\n\nduration = 3.5 # trailing\n").unwrap();
        assert_relative_eq!(s.duration, 3.5);
    }

    #[test]
    fn non_integer_rate_ratio_is_rejected() {
        let err = parse_scenario("rates.control_hz = 77\n").unwrap_err();
        assert!(err.to_string().contains("integer multiple"), "{err}");
    }

    #[test]
    fn custom_polygons_and_overrides_apply_in_order() {
        let text = "environment = WALL_PUSH\n\
                    polygon.0 = 1.0 -1.0  1.1 -1.0  1.1 1.0  1.0 1.0\n\
                    env.restitution = 0.2\n\
                    wrench.force = -2 0 0\n";
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.environment.obstacles.len(), 1);
        assert_relative_eq!(s.environment.obstacles[0].verts[0].x, 1.0);
        assert_relative_eq!(s.environment.restitution, 0.2);
        assert_relative_eq!(s.wrench.force_des.x, -2.0);
        assert_eq!(s.mission, MissionKind::StaticWrench);
    }

    #[test]
    fn collide_plan_without_wall_is_rejected() {
        let text = "environment = COB_WALL\ncob.wall = none\ncob.plan = collide\n";
        let err = parse_scenario(text).unwrap_err();
        assert!(err.to_string().contains("without a wall"), "{err}");
    }
}
