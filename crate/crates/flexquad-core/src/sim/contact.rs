//! Obstacle world and contact handling.
//!
//! Obstacles are simple closed polygons in the xy plane, extruded to constant
//! height. Contact is detected per arm through a guard circle around each
//! arm-frame origin; sustained contact is resolved by a penalty force (spring
//! + damper in the penetration) and fast approaches by an impulsive
//! restitution jump on the body velocity.

use crate::{Error, Result};
use nalgebra::{Point2, Vector2, Vector3};

use super::arms::{arm_tangent_body, guard_center_body, ArmParams};
use super::{BodyParams, VehicleState};

/// Closed simple polygon in the xy plane.
#[derive(Debug, Clone)]
pub struct Polygon {
    pub verts: Vec<Point2<f64>>,
}

impl Polygon {
    pub fn new(verts: Vec<Point2<f64>>) -> Result<Self> {
        if verts.len() < 3 {
            return Err(Error::InvalidParam(format!("polygon needs >= 3 vertices, got {}", verts.len())));
        }
        for (i, v) in verts.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite()) {
                return Err(Error::InvalidParam(format!("polygon vertex {i} not finite")));
            }
            let j = (i + 1) % verts.len();
            if (verts[j] - verts[i]).norm() < 1e-9 {
                return Err(Error::InvalidParam(format!("polygon edge {i} has zero length")));
            }
        }
        // Reject self-intersection between non-adjacent edges; obstacle
        // polygons are tiny, O(n^2) is fine.
        let n = verts.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (a1, a2) = (verts[i], verts[(i + 1) % n]);
                let (b1, b2) = (verts[j], verts[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::InvalidParam(format!("polygon self-intersects (edges {i}, {j})")));
                }
            }
        }
        Ok(Self { verts })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    /// Even-odd point containment.
    pub fn contains(&self, p: Point2<f64>) -> bool {
        let mut inside = false;
        let n = self.verts.len();
        let mut j = n - 1;
        for i in 0..n {
            let (vi, vj) = (self.verts[i], self.verts[j]);
            if (vi.y > p.y) != (vj.y > p.y) {
                let x_cross = vi.x + (p.y - vi.y) / (vj.y - vi.y) * (vj.x - vi.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Closest point on the boundary to `p` and the distance to it.
    pub fn closest_boundary_point(&self, p: Point2<f64>) -> (Point2<f64>, f64) {
        let mut best = (self.verts[0], f64::INFINITY);
        let n = self.verts.len();
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            let q = closest_on_segment(p, a, b);
            let d = (p - q).norm();
            if d < best.1 {
                best = (q, d);
            }
        }
        best
    }
}

fn closest_on_segment(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> Point2<f64> {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    a + t * ab
}

fn segments_intersect(a1: Point2<f64>, a2: Point2<f64>, b1: Point2<f64>, b2: Point2<f64>) -> bool {
    let d = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let d1 = d(b1, b2, a1);
    let d2 = d(b1, b2, a2);
    let d3 = d(a1, a2, b1);
    let d4 = d(a1, a2, b2);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

/// Obstacle set plus contact-law constants.
#[derive(Debug, Clone)]
pub struct Environment {
    pub obstacles: Vec<Polygon>,
    /// Penalty stiffness (N/m).
    pub wall_stiffness: f64,
    /// Penalty damping against approach speed (N s/m).
    pub wall_damping: f64,
    /// Coulomb friction coefficient for sliding contact.
    pub mu_c: f64,
    /// Coefficient of restitution for impulsive impacts.
    pub restitution: f64,
    /// Tangential speed fraction lost in an impulsive impact.
    pub tangential_loss: f64,
    /// Approach speed above which an impact is impulsive (m/s).
    pub v_impulse: f64,
}

impl Environment {
    pub fn free_space() -> Self {
        Self {
            obstacles: Vec::new(),
            wall_stiffness: 800.0,
            wall_damping: 40.0,
            mu_c: 0.15,
            restitution: 0.09,
            tangential_loss: 0.5,
            v_impulse: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wall_stiffness > 0.0) || !(self.wall_damping >= 0.0) {
            return Err(Error::InvalidParam("wall stiffness/damping must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::InvalidParam(format!("restitution {} outside [0,1]", self.restitution)));
        }
        if !(0.0..=1.0).contains(&self.tangential_loss) {
            return Err(Error::InvalidParam(format!("tangential_loss {} outside [0,1]", self.tangential_loss)));
        }
        if !(self.mu_c >= 0.0 && self.v_impulse >= 0.0) {
            return Err(Error::InvalidParam("mu_c and v_impulse must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which part of the vehicle made contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmContact {
    Arm(usize),
    Center,
}

/// One arm-guard/obstacle contact at an instant.
#[derive(Debug, Clone)]
pub struct ContactEvent {
    pub arm: ArmContact,
    /// Contact point on the obstacle boundary, world xy (z = vehicle z).
    pub point: Vector3<f64>,
    /// Unit outward surface normal (from obstacle toward the vehicle).
    pub normal: Vector3<f64>,
    /// Guard-circle penetration depth (m).
    pub penetration: f64,
    /// Approach speed along -normal of the contacting arm point (m/s).
    pub approach_speed: f64,
    /// True if the approach is fast enough for an impulsive jump.
    pub impulsive: bool,
}

/// Detect all arm-guard contacts of the current state against the obstacle
/// set, with each guard at its deflected position. Events are ordered by arm
/// index, then obstacle order; at most one event per (arm, obstacle) pair.
pub fn detect_contacts(state: &VehicleState, env: &Environment, body: &BodyParams, arm_params: &ArmParams) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    let omega_world = state.rot * state.omega;
    for arm in 0..4 {
        let r_body = guard_center_body(arm, body.arm_radius, arm_params.lever, state.theta[arm]);
        let r_world = state.rot * r_body;
        let center3 = state.pos + r_world;
        let center = Point2::new(center3.x, center3.y);
        for poly in &env.obstacles {
            let inside = poly.contains(center);
            let (closest, dist) = poly.closest_boundary_point(center);
            let penetration = if inside { body.guard_radius + dist } else { body.guard_radius - dist };
            if penetration <= 0.0 {
                continue;
            }
            let dir: Vector2<f64> = if inside { closest - center } else { center - closest };
            let n2 = if dir.norm() > 1e-12 { dir.normalize() } else { Vector2::new(0.0, -1.0) };
            let normal = Vector3::new(n2.x, n2.y, 0.0);
            let v_pt = state.vel
                + omega_world.cross(&r_world)
                + state.theta_dot[arm] * arm_params.lever * (state.rot * arm_tangent_body(arm, state.theta[arm]));
            let v_n = v_pt.dot(&normal);
            events.push(ContactEvent {
                arm: ArmContact::Arm(arm),
                point: Vector3::new(closest.x, closest.y, state.pos.z),
                normal,
                penetration,
                approach_speed: (-v_n).max(0.0),
                impulsive: v_n < -env.v_impulse,
            });
        }
    }
    events
}

/// Impulsive restitution law: the normal velocity component reverses scaled
/// by the restitution coefficient, the tangential component keeps a
/// (1 - tangential_loss) fraction.
pub fn resolve_collision(v: Vector3<f64>, normal: Vector3<f64>, restitution: f64, tangential_loss: f64) -> Vector3<f64> {
    let v_n = v.dot(&normal);
    let v_t = v - v_n * normal;
    v_t * (1.0 - tangential_loss) + (-restitution * v_n) * normal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ArmParams;
    use approx::assert_relative_eq;

    #[test]
    fn polygon_rejects_degenerate_edges() {
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
        ];
        assert!(Polygon::new(verts).is_err());
    }

    #[test]
    fn polygon_rejects_self_intersection() {
        // Bowtie.
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(Polygon::new(verts).is_err());
    }

    #[test]
    fn containment_and_closest_point() {
        let p = Polygon::rect(0.0, 0.0, 2.0, 1.0).unwrap();
        assert!(p.contains(Point2::new(1.0, 0.5)));
        assert!(!p.contains(Point2::new(-0.1, 0.5)));
        let (q, d) = p.closest_boundary_point(Point2::new(-1.0, 0.5));
        assert_relative_eq!(q.x, 0.0);
        assert_relative_eq!(q.y, 0.5);
        assert_relative_eq!(d, 1.0);
    }

    #[test]
    fn far_vehicle_has_no_contacts() {
        let env = Environment {
            obstacles: vec![Polygon::rect(1.0, -1.0, 2.0, 1.0).unwrap()],
            ..Environment::free_space()
        };
        let state = VehicleState::at_rest(Vector3::zeros());
        let body = BodyParams::default();
        assert!(detect_contacts(&state, &env, &body, &ArmParams::default()).is_empty());
    }

    #[test]
    fn touching_wall_contacts_front_arms() {
        let env = Environment {
            obstacles: vec![Polygon::rect(0.21, -1.0, 1.0, 1.0).unwrap()],
            ..Environment::free_space()
        };
        // Centre 0.205 m from the wall face: guards penetrate ~5 mm.
        let state = VehicleState::at_rest(Vector3::new(0.005, 0.0, 0.0));
        let body = BodyParams::default();
        let events = detect_contacts(&state, &env, &body, &ArmParams::default());
        assert_eq!(events.len(), 2);
        for ev in &events {
            assert!(matches!(ev.arm, ArmContact::Arm(1) | ArmContact::Arm(2)));
            assert_relative_eq!(ev.normal.x, -1.0, epsilon = 1e-9);
            assert!(ev.penetration > 0.0 && ev.penetration < 0.01);
            assert!(!ev.impulsive);
        }
    }

    #[test]
    fn fast_approach_is_impulsive() {
        let env = Environment {
            obstacles: vec![Polygon::rect(0.21, -1.0, 1.0, 1.0).unwrap()],
            ..Environment::free_space()
        };
        let mut state = VehicleState::at_rest(Vector3::new(0.005, 0.0, 0.0));
        state.vel = Vector3::new(1.0, 0.0, 0.0);
        let events = detect_contacts(&state, &env, &BodyParams::default(), &ArmParams::default());
        assert!(events.iter().all(|e| e.impulsive));
        assert_relative_eq!(events[0].approach_speed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn head_on_restitution_jump() {
        let v = resolve_collision(Vector3::new(2.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 0.09, 0.5);
        assert_relative_eq!(v.x, -0.18, epsilon = 1e-12);
        assert_eq!(v.y, 0.0);
        assert_eq!(v.z, 0.0);
    }

    #[test]
    fn oblique_restitution_jump() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = resolve_collision(Vector3::new(s, s, 0.0), Vector3::new(-1.0, 0.0, 0.0), 0.09, 0.5);
        // Normal component reversed at 9%, tangential halved.
        assert_relative_eq!(v.x, -0.09 * s, epsilon = 1e-12);
        assert_relative_eq!(v.y, 0.5 * s, epsilon = 1e-12);
        assert_relative_eq!(v.norm(), 0.359, epsilon = 1e-3);
    }
}
