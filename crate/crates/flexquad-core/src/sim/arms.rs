//! Passive spring-hinged arm dynamics and arm-frame geometry.
//!
//! Each arm is a torsional mass-spring-damper about its hinge z axis:
//! J theta_ddot + b theta_dot + k theta = tau_ext, with a hard stop at
//! +/- theta_max that zeroes the deflection rate.
//!
//! Arm frames: arm i sits at angle mu_i from the body x axis, and its
//! tangential axis a1 (the direction its tip moves and the axis contact
//! forces are sensed along) points at varphi_i = nu_i + mu_i + theta_i.

use crate::{ensure_finite, Error, Result};
use nalgebra::{Matrix3, Vector3};

use super::rigid::{rotation_z, MAX_DT};

/// Strut directions of the four arms from the body x axis (rad).
pub const MU: [f64; 4] = [
    3.0 * std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_4,
    -std::f64::consts::FRAC_PI_4,
    -3.0 * std::f64::consts::FRAC_PI_4,
];

/// Tangential-axis offsets: -pi/2 for the front pair, +pi/2 for the rear.
pub const NU: [f64; 4] = [
    -std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
];

/// Torsional parameters of one arm hinge.
#[derive(Debug, Clone)]
pub struct ArmParams {
    /// Hinge inertia about z (kg m^2).
    pub inertia_zz: f64,
    /// Viscous damping (N m s/rad).
    pub damping: f64,
    /// Spring stiffness (N m/rad).
    pub stiffness: f64,
    /// Hinge-to-load lever arm (m).
    pub lever: f64,
    /// Hard-stop deflection (rad).
    pub theta_max: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            inertia_zz: 0.0015,
            damping: 0.009,
            stiffness: 1.307,
            lever: 0.113,
            theta_max: 30.0_f64.to_radians(),
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("arm inertia", self.inertia_zz),
            ("arm damping", self.damping),
            ("arm stiffness", self.stiffness),
            ("arm lever", self.lever),
            ("arm theta_max", self.theta_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} {v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// Spring energy + kinetic energy of one arm (J).
    pub fn energy(&self, theta: f64, theta_dot: f64) -> f64 {
        0.5 * self.inertia_zz * theta_dot * theta_dot + 0.5 * self.stiffness * theta * theta
    }
}

/// Deflection-dependent arm-frame angle varphi_i = nu_i + mu_i + theta.
pub fn arm_deflection_angle(arm: usize, theta: f64) -> f64 {
    NU[arm] + MU[arm] + theta
}

/// z rotation of an arm frame at angle varphi.
pub fn arm_rotation(varphi: f64) -> Matrix3<f64> {
    rotation_z(varphi)
}

/// Arm-frame origin (motor location) in the body frame.
pub fn arm_origin_body(arm: usize, arm_radius: f64) -> Vector3<f64> {
    Vector3::new(arm_radius * MU[arm].cos(), arm_radius * MU[arm].sin(), 0.0)
}

/// Unit tangential axis a1 of arm `arm` in the body frame, at deflection theta.
pub fn arm_tangent_body(arm: usize, theta: f64) -> Vector3<f64> {
    let phi = arm_deflection_angle(arm, theta);
    Vector3::new(phi.cos(), phi.sin(), 0.0)
}

/// Guard-circle centre of arm `arm` in the body frame. The guard rides the
/// arm tip, which swings along the tangential axis as the flexure winds, so
/// the guard retreats from whatever pushed it; the arm, much softer than a
/// wall, is the compliance a pressed surface actually works against.
pub fn guard_center_body(arm: usize, arm_radius: f64, lever: f64, theta: f64) -> Vector3<f64> {
    arm_origin_body(arm, arm_radius) + lever * theta * arm_tangent_body(arm, theta)
}

/// One semi-implicit step of a single arm hinge, with the hard stop applied.
pub fn step_arm(theta: f64, theta_dot: f64, tau_ext: f64, params: &ArmParams, dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::BadTimestep(dt, MAX_DT));
    }
    ensure_finite("arm step", &[theta, theta_dot, tau_ext])?;
    let accel = (tau_ext - params.damping * theta_dot - params.stiffness * theta) / params.inertia_zz;
    let mut thd = theta_dot + dt * accel;
    let mut th = theta + dt * thd;
    if th > params.theta_max {
        th = params.theta_max;
        thd = 0.0;
    } else if th < -params.theta_max {
        th = -params.theta_max;
        thd = 0.0;
    }
    Ok((th, thd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 500.0;

    #[test]
    fn frame_angles_at_rest() {
        use std::f64::consts::FRAC_PI_4;
        assert_relative_eq!(arm_deflection_angle(0, 0.0), FRAC_PI_4);
        assert_relative_eq!(arm_deflection_angle(1, 0.0), -FRAC_PI_4);
        assert_relative_eq!(arm_deflection_angle(2, 0.0), FRAC_PI_4);
        assert_relative_eq!(arm_deflection_angle(3, 0.1), -FRAC_PI_4 + 0.1);
    }

    #[test]
    fn tangent_axes_are_perpendicular_to_struts() {
        for i in 0..4 {
            let strut = arm_origin_body(i, 1.0);
            let tan = arm_tangent_body(i, 0.0);
            assert!(strut.dot(&tan).abs() < 1e-12, "arm {i}");
        }
    }

    #[test]
    fn constant_torque_settles_at_spring_balance() {
        let p = ArmParams::default();
        // 1 N at the lever: steady deflection F*l/k ~ 4.95 degrees.
        let tau = 1.0 * p.lever;
        let (mut th, mut thd) = (0.0, 0.0);
        for _ in 0..5000 {
            (th, thd) = step_arm(th, thd, tau, &p, DT).unwrap();
        }
        assert_relative_eq!(th, 0.113 / 1.307, epsilon = 1e-6);
        assert_relative_eq!(th.to_degrees(), 4.9537, epsilon = 1e-3);
        assert!(thd.abs() < 1e-8);
    }

    #[test]
    fn free_release_energy_never_increases() {
        let p = ArmParams::default();
        let (mut th, mut thd) = (0.2, 0.0);
        let mut e_prev = p.energy(th, thd);
        for _ in 0..5000 {
            (th, thd) = step_arm(th, thd, 0.0, &p, DT).unwrap();
            let e = p.energy(th, thd);
            assert!(e <= e_prev + 1e-15, "energy rose {e_prev} -> {e}");
            e_prev = e;
        }
        assert!(e_prev < 1e-6);
    }

    #[test]
    fn hard_stop_clamps_and_zeroes_rate() {
        let p = ArmParams::default();
        let (mut th, mut thd) = (0.0, 0.0);
        for _ in 0..2000 {
            (th, thd) = step_arm(th, thd, 5.0, &p, DT).unwrap(); // way past the stop
        }
        assert_relative_eq!(th, p.theta_max);
        assert_eq!(thd, 0.0);
    }

    #[test]
    fn rejects_nonfinite_torque() {
        let p = ArmParams::default();
        assert!(step_arm(0.0, 0.0, f64::NAN, &p, DT).is_err());
    }

    proptest! {
        #[test]
        fn energy_monotone_for_random_initial_conditions(
            th0 in -0.5_f64..0.5,
            thd0 in -5.0_f64..5.0,
        ) {
            let p = ArmParams::default();
            let (mut th, mut thd) = (th0.clamp(-p.theta_max, p.theta_max), thd0);
            let mut e_prev = p.energy(th, thd);
            for _ in 0..400 {
                (th, thd) = step_arm(th, thd, 0.0, &p, DT).unwrap();
                let e = p.energy(th, thd);
                prop_assert!(e <= e_prev + 1e-12);
                e_prev = e;
            }
        }
    }
}
