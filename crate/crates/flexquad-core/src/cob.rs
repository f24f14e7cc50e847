//! Minimum-time 1-D waypoint plans that may include a deliberate collision.
//!
//! A conventional plan is a bang-bang (accelerate, optionally cruise at the
//! speed cap, brake) arc. A collide plan instead keeps accelerating into a
//! wall, takes the near-plastic restitution jump v -> -e v as free braking,
//! cleans up the small rebound, and can beat the conventional arc when the
//! wall sits at the goal and the speed cap binds. Plans are exact piecewise
//! profiles; the chooser compares total times.

use crate::{ensure_finite, Error, Result};

/// 1-D waypoint problem with an optional wall between start and goal.
#[derive(Debug, Clone)]
pub struct CobProblem {
    pub start_pos: f64,
    pub start_vel: f64,
    pub goal: f64,
    /// Vehicle-centre coordinate at which contact occurs, if a wall exists.
    pub wall: Option<f64>,
    pub a_max: f64,
    pub v_max: f64,
    pub restitution: f64,
}

impl CobProblem {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "cob problem",
            &[self.start_pos, self.start_vel, self.goal, self.a_max, self.v_max, self.restitution],
        )?;
        if !(self.a_max > 0.0) || !(self.v_max > 0.0) {
            return Err(Error::InvalidParam("a_max and v_max must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.restitution) {
            return Err(Error::InvalidParam(format!("restitution {} outside [0, 1)", self.restitution)));
        }
        if self.start_vel.abs() > self.v_max + 1e-12 {
            return Err(Error::InvalidParam("start velocity exceeds v_max".into()));
        }
        if let Some(w) = self.wall {
            let to_wall = w - self.start_pos;
            let to_goal = self.goal - self.start_pos;
            if to_wall == 0.0 || to_goal == 0.0 || to_wall.signum() != to_goal.signum() {
                return Err(Error::InvalidParam("wall must lie on the way to the goal".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    NoCollision,
    CollideToStop,
    CollideToDecelerate,
}

/// One piece of a plan: a constant-acceleration stretch or the instantaneous
/// restitution jump at the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanStep {
    Accel { accel: f64, duration: f64 },
    Jump { restitution: f64 },
}

#[derive(Debug, Clone)]
pub struct CobPlan {
    pub start_pos: f64,
    pub start_vel: f64,
    pub steps: Vec<PlanStep>,
    pub total_time: f64,
    pub kind: PlanKind,
}

impl CobPlan {
    /// State (position, velocity) at time `t` along the plan; clamps to the
    /// terminal state beyond the end.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let mut x = self.start_pos;
        let mut v = self.start_vel;
        let mut clock = 0.0;
        for step in &self.steps {
            match *step {
                PlanStep::Jump { restitution } => {
                    if t < clock {
                        return (x, v);
                    }
                    v = -restitution * v;
                }
                PlanStep::Accel { accel, duration } => {
                    let dt = (t - clock).clamp(0.0, duration);
                    if dt < duration {
                        return (x + v * dt + 0.5 * accel * dt * dt, v + accel * dt);
                    }
                    x += v * duration + 0.5 * accel * duration * duration;
                    v += accel * duration;
                    clock += duration;
                }
            }
        }
        (x, v)
    }

    pub fn terminal(&self) -> (f64, f64) {
        self.sample(self.total_time)
    }
}

fn steps_time(steps: &[PlanStep]) -> f64 {
    steps
        .iter()
        .map(|s| match s {
            PlanStep::Accel { duration, .. } => *duration,
            PlanStep::Jump { .. } => 0.0,
        })
        .sum()
}

fn push_accel(steps: &mut Vec<PlanStep>, accel: f64, duration: f64) {
    if duration > 1e-12 {
        steps.push(PlanStep::Accel { accel, duration });
    }
}

/// Minimum-time arc of a speed-capped double integrator from (x0, v0) to
/// rest at xf. Acceleration is +-a with an optional cruise at +-v_max.
fn min_time_arc(x0: f64, v0: f64, xf: f64, a: f64, v_max: f64) -> Vec<PlanStep> {
    let d = xf - x0;
    if d.abs() < 1e-12 && v0.abs() < 1e-12 {
        return Vec::new();
    }
    // Displacement consumed by braking straight to rest; it decides whether
    // the arc starts by pushing forward or backward.
    let brake_disp = v0 * v0.abs() / (2.0 * a);
    let sigma = if d >= brake_disp { 1.0 } else { -1.0 };
    // Mirror to the canonical forward case.
    let (d, v0) = (sigma * d, sigma * v0);
    let peak_sq = a * d + 0.5 * v0 * v0;
    let peak = peak_sq.max(0.0).sqrt();
    let mut steps = Vec::new();
    if peak <= v_max {
        push_accel(&mut steps, sigma * a, (peak - v0) / a);
        push_accel(&mut steps, -sigma * a, peak / a);
    } else {
        let d1 = (v_max * v_max - v0 * v0) / (2.0 * a);
        let d3 = v_max * v_max / (2.0 * a);
        push_accel(&mut steps, sigma * a, (v_max - v0) / a);
        push_accel(&mut steps, 0.0, (d - d1 - d3) / v_max);
        push_accel(&mut steps, -sigma * a, v_max / a);
    }
    steps
}

/// Closed-form minimum time for a rest-to-rest move of |d| metres:
/// triangular 2 sqrt(d/a) while the peak stays under the cap, otherwise
/// trapezoidal v/a + d/v.
pub fn bang_bang_time(d: f64, a_max: f64, v_max: f64) -> Result<(f64, Vec<PlanStep>)> {
    ensure_finite("bang-bang distance", &[d, a_max])?;
    if !(a_max > 0.0) || !(v_max > 0.0) {
        return Err(Error::InvalidParam("a_max and v_max must be > 0".into()));
    }
    let steps = min_time_arc(0.0, 0.0, d, a_max, v_max);
    Ok((steps_time(&steps), steps))
}

/// Direct bang-bang plan from start to goal, ignoring any wall.
pub fn no_collision_plan(p: &CobProblem) -> Result<CobPlan> {
    p.validate()?;
    let steps = min_time_arc(p.start_pos, p.start_vel, p.goal, p.a_max, p.v_max);
    Ok(CobPlan {
        start_pos: p.start_pos,
        start_vel: p.start_vel,
        total_time: steps_time(&steps),
        steps,
        kind: PlanKind::NoCollision,
    })
}

/// Plan that accelerates into the wall, jumps v -> -e v, and finishes at the
/// goal: braking the rebound to rest back at the wall when the goal is the
/// wall, otherwise a bang-bang arc from the post-jump state.
pub fn collide_plan(p: &CobProblem) -> Result<CobPlan> {
    p.validate()?;
    let wall = p.wall.ok_or_else(|| Error::InvalidParam("collide plan needs a wall".into()))?;
    let sigma = (wall - p.start_pos).signum();
    // Canonical frame: wall ahead in +x.
    let d_wall = sigma * (wall - p.start_pos);
    let v0 = sigma * p.start_vel;
    if v0 < 0.0 {
        return Err(Error::InvalidParam("start velocity points away from the wall".into()));
    }
    let mut steps = Vec::new();
    let hit_sq = v0 * v0 + 2.0 * p.a_max * d_wall;
    let v_hit = if hit_sq.sqrt() <= p.v_max {
        push_accel(&mut steps, sigma * p.a_max, (hit_sq.sqrt() - v0) / p.a_max);
        hit_sq.sqrt()
    } else {
        let d1 = (p.v_max * p.v_max - v0 * v0) / (2.0 * p.a_max);
        push_accel(&mut steps, sigma * p.a_max, (p.v_max - v0) / p.a_max);
        push_accel(&mut steps, 0.0, (d_wall - d1) / p.v_max);
        p.v_max
    };
    steps.push(PlanStep::Jump { restitution: p.restitution });
    let v_back = p.restitution * v_hit;

    let goal_rel = sigma * (p.goal - p.start_pos);
    let kind = if (goal_rel - d_wall).abs() < 1e-12 {
        // Brake the rebound, then a short arc back to the wall.
        push_accel(&mut steps, sigma * p.a_max, v_back / p.a_max);
        let recede = v_back * v_back / (2.0 * p.a_max);
        if recede > 1e-12 {
            for s in min_time_arc(d_wall - recede, 0.0, d_wall, p.a_max, p.v_max) {
                let PlanStep::Accel { accel, duration } = s else { continue };
                push_accel(&mut steps, sigma * accel, duration);
            }
        }
        PlanKind::CollideToStop
    } else {
        for s in min_time_arc(d_wall, -v_back, goal_rel, p.a_max, p.v_max) {
            let PlanStep::Accel { accel, duration } = s else { continue };
            push_accel(&mut steps, sigma * accel, duration);
        }
        PlanKind::CollideToDecelerate
    };
    Ok(CobPlan {
        start_pos: p.start_pos,
        start_vel: p.start_vel,
        total_time: steps_time(&steps),
        steps,
        kind,
    })
}

/// Evaluate both plan kinds where geometry permits and return the faster;
/// ties go to the conventional plan. A goal strictly beyond the wall leaves
/// only the collide plan.
pub fn choose_plan(p: &CobProblem) -> Result<CobPlan> {
    p.validate()?;
    let Some(wall) = p.wall else { return no_collision_plan(p) };
    let sigma = (wall - p.start_pos).signum();
    let blocked = sigma * (p.goal - p.start_pos) > sigma * (wall - p.start_pos) + 1e-12;
    let collide = collide_plan(p)?;
    if blocked {
        return Ok(collide);
    }
    let direct = no_collision_plan(p)?;
    if collide.total_time < direct.total_time {
        Ok(collide)
    } else {
        Ok(direct)
    }
}

/// Step-response quality of a measured position trace.
#[derive(Debug, Clone)]
pub struct ManeuverMetrics {
    /// First sample reaching 90% of the step; None if never reached.
    pub tau_r: Option<f64>,
    /// First sample after which the trace stays inside the +-5% band; None
    /// if it is still outside at the end.
    pub tau_s: Option<f64>,
    /// RMS error versus the reference over the settled window.
    pub rmse: Option<f64>,
}

/// Rise/settling/rmse of `trace` (time, position) for a step from `from` to
/// `to`, with the usual 90% rise and 5% band conventions.
pub fn measure_metrics(trace: &[(f64, f64)], from: f64, to: f64) -> Result<ManeuverMetrics> {
    let step = to - from;
    if trace.is_empty() || step.abs() < 1e-12 {
        return Err(Error::InvalidParam("metrics need a trace and a nonzero step".into()));
    }
    for (t, x) in trace {
        ensure_finite("metrics trace", &[*t, *x])?;
    }
    let rise_level = from + 0.9 * step;
    let band = 0.05 * step.abs();
    let tau_r = trace
        .iter()
        .find(|(_, x)| (x - rise_level) * step.signum() >= 0.0)
        .map(|(t, _)| *t);
    let last_outside = trace.iter().rposition(|(_, x)| (x - to).abs() > band);
    let tau_s = match last_outside {
        None => Some(trace[0].0),
        Some(i) if i + 1 < trace.len() => Some(trace[i + 1].0),
        Some(_) => None,
    };
    let rmse = tau_s.map(|ts| {
        let (mut sum, mut n) = (0.0, 0usize);
        for (t, x) in trace.iter().filter(|(t, _)| *t >= ts) {
            let _ = t;
            sum += (x - to) * (x - to);
            n += 1;
        }
        (sum / n.max(1) as f64).sqrt()
    });
    Ok(ManeuverMetrics { tau_r, tau_s, rmse })
}
