//! Rigid-body translational/rotational dynamics.
//!
//! Convention: world e3 points down. Gravity acts along +e3 and the total
//! thrust f acts along the body -b3 axis, so the translational dynamics are
//! m v_dot = m g e3 - f R e3 + f_ext, and hover is exactly f = m g at R = I.

use crate::{ensure_finite, Error, Result};
use nalgebra::{Matrix3, Vector3};

use super::{BodyParams, VehicleState, E3};

/// Largest accepted physics step (s).
pub const MAX_DT: f64 = 0.01;

/// Skew-symmetric (hat) map.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation about the world/body z axis.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues rotation for an axis-angle increment.
fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let angle = w.norm();
    if angle < 1e-12 {
        return Matrix3::identity() + hat(w);
    }
    let axis = w / angle;
    let k = hat(&axis);
    Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * (k * k)
}

/// Re-orthonormalise a rotation matrix by Gram-Schmidt on its columns.
pub fn gram_schmidt(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let mut c1 = r.column(1) - r.column(1).dot(&c0) * c0;
    c1.normalize_mut();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// One semi-implicit step of the rigid-body dynamics: angular state first,
/// then linear velocity with the updated attitude, then position.
///
/// Returns (pos, vel, rot, omega). `f_ext` is a world-frame force at the
/// centre of mass, `tau_ext` a body-frame torque.
#[allow(clippy::too_many_arguments)]
pub fn step_rigid_body(
    state: &VehicleState,
    thrust: f64,
    tau_cmd: Vector3<f64>,
    f_ext: Vector3<f64>,
    tau_ext: Vector3<f64>,
    body: &BodyParams,
    dt: f64,
) -> Result<(Vector3<f64>, Vector3<f64>, Matrix3<f64>, Vector3<f64>)> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::BadTimestep(dt, MAX_DT));
    }
    ensure_finite("rigid step inputs", &[thrust])?;
    ensure_finite("rigid step force", f_ext.as_slice())?;
    ensure_finite("rigid step torque", tau_ext.as_slice())?;

    let h = &body.inertia;
    let h_inv = h.try_inverse().ok_or_else(|| Error::InvalidParam("singular inertia".into()))?;

    // H omega_dot = tau + tau_ext + (H omega) x omega
    let gyro = (h * state.omega).cross(&state.omega);
    let omega = state.omega + dt * (h_inv * (tau_cmd + tau_ext + gyro));

    let rot = gram_schmidt(&(state.rot * exp_so3(&(omega * dt))));

    // m v_dot = m g e3 - f R e3 + f_ext
    let accel = body.gravity * E3 - (thrust / body.mass) * (rot * E3) + f_ext / body.mass;
    let vel = state.vel + dt * accel;
    let pos = state.pos + dt * vel;

    Ok((pos, vel, rot, omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hat_matches_cross_product() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(1.0, 0.5, -0.7);
        assert!((hat(&a) * b - a.cross(&b)).norm() < 1e-14);
    }

    #[test]
    fn exp_of_z_spin_matches_rotation_z() {
        let r = exp_so3(&Vector3::new(0.0, 0.0, 0.4));
        assert!((r - rotation_z(0.4)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_dt() {
        let s = VehicleState::at_rest(Vector3::zeros());
        let b = BodyParams::default();
        assert!(step_rigid_body(&s, 1.0, Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), &b, 0.0).is_err());
        assert!(step_rigid_body(&s, 1.0, Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), &b, 0.02).is_err());
    }

    proptest! {
        #[test]
        fn gram_schmidt_always_orthonormal(
            ax in -1.0_f64..1.0, ay in -1.0_f64..1.0, az in -1.0_f64..1.0,
            eps in -1e-3_f64..1e-3,
        ) {
            let w = Vector3::new(ax, ay, az);
            let mut r = exp_so3(&w);
            r[(0, 1)] += eps; // small drift
            let g = gram_schmidt(&r);
            prop_assert!((g.transpose() * g - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((g.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn yaw_torque_spins_about_z() {
        let b = BodyParams::default();
        let mut s = VehicleState::at_rest(Vector3::zeros());
        let dt = 1.0 / 500.0;
        for _ in 0..500 {
            let (p, v, r, w) =
                step_rigid_body(&s, b.hover_thrust(), Vector3::new(0.0, 0.0, 0.02), Vector3::zeros(), Vector3::zeros(), &b, dt).unwrap();
            s.pos = p;
            s.vel = v;
            s.rot = r;
            s.omega = w;
        }
        // omega_z ~ tau/H_zz * t = 0.02/0.02 * 1.0
        assert_relative_eq!(s.omega.z, 1.0, epsilon = 1e-9);
        assert!(s.yaw() > 0.4);
    }
}
