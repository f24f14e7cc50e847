//! External force/torque estimation.
//!
//! Two complementary force channels are fused:
//!
//! * per-arm: spring deflection -> first-order observer -> world frame via
//!   the arm rotation, accurate and fast whenever the guards are loaded;
//! * centre of mass: measured acceleration against the commanded thrust,
//!   which also sees forces that bypass the arms but reads quasi-static
//!   loads only through the (slow) thrust trim.
//!
//! The fusion key: a contact indicator from summed arm deflections selects
//! the arm channel, except while the CoM estimate is changing fast (impacts),
//! where the CoM channel is blended back in element-wise.
//!
//! A separate first-order momentum observer estimates the external yaw
//! torque used by the yaw admittance.

use nalgebra::{Matrix3, Vector3};

use crate::filters::{BandStop, LowPass, MedianFilter};
use crate::sim::{arm_rotation, arm_deflection_angle, ArmParams, BodyParams, E3};
use crate::{ensure_finite, Error, Result};

/// Filter and observer constants for the estimator.
#[derive(Debug, Clone)]
pub struct FilterBank {
    /// Median window on raw arm angles (samples).
    pub median_window: usize,
    /// Low-pass constant on arm angles, per sample.
    pub lpf_alpha: f64,
    /// Band-stop centre on arm angles (Hz); rejects frame-vibration ringing.
    pub notch_center_hz: f64,
    /// Band-stop half width (Hz).
    pub notch_half_width_hz: f64,
    /// Band-stop can be bypassed for clean replays.
    pub notch_enabled: bool,
    /// Median window on measured acceleration (samples).
    pub accel_median_window: usize,
    /// Low-pass constant on measured acceleration, per sample.
    pub accel_lpf_alpha: f64,
    /// Arm force observer gain (1/s).
    pub k_i: f64,
    /// Fusion sensitivity: kappa = clamp(xi_f * |d/dt com|, 0, 1), per axis.
    pub xi_f: f64,
    /// Contact indicator threshold on summed |theta| (rad).
    pub theta_th: f64,
    /// Yaw momentum observer gain (1/s).
    pub k_o: f64,
}

impl Default for FilterBank {
    fn default() -> Self {
        Self {
            median_window: 5,
            lpf_alpha: 0.3,
            notch_center_hz: 7.0,
            notch_half_width_hz: 2.0,
            notch_enabled: true,
            accel_median_window: 5,
            accel_lpf_alpha: 0.08,
            k_i: 20.0,
            xi_f: 0.02,
            theta_th: 0.035,
            k_o: 10.0,
        }
    }
}

impl FilterBank {
    pub fn validate(&self, sample_hz: f64) -> Result<()> {
        if self.median_window == 0 || self.accel_median_window == 0 {
            return Err(Error::InvalidParam("median window must be >= 1".into()));
        }
        for (name, a) in [("lpf_alpha", self.lpf_alpha), ("accel_lpf_alpha", self.accel_lpf_alpha)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidParam(format!("{name} {a} outside (0, 1]")));
            }
        }
        if self.notch_enabled && self.notch_center_hz + self.notch_half_width_hz >= sample_hz / 2.0 {
            return Err(Error::InvalidParam("band-stop reaches Nyquist".into()));
        }
        for (name, v) in [("k_i", self.k_i), ("theta_th", self.theta_th), ("k_o", self.k_o)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} {v} must be > 0")));
            }
        }
        if !(self.xi_f >= 0.0) {
            return Err(Error::InvalidParam("xi_f must be >= 0".into()));
        }
        Ok(())
    }
}

/// Raw signals the estimator consumes each tick. Everything here is logged
/// to the trace, so a replay reproduces the estimate stream exactly.
#[derive(Debug, Clone)]
pub struct EstimatorInputs {
    /// Unfiltered arm deflection readings (rad).
    pub raw_theta: [f64; 4],
    /// Measured world-frame acceleration (m/s^2).
    pub accel: Vector3<f64>,
    /// Normalized thrust command (thrust_scale newtons per unit).
    pub thrust_norm: f64,
    /// Body-to-world rotation.
    pub rot: Matrix3<f64>,
    /// Body angular velocity (rad/s).
    pub omega: Vector3<f64>,
    /// Commanded body torque (N m).
    pub tau_cmd: Vector3<f64>,
}

/// One tick's estimate bundle.
#[derive(Debug, Clone)]
pub struct ForceEstimate {
    /// Per-arm external force reconstruction, world frame (N).
    pub per_arm: [Vector3<f64>; 4],
    /// Centre-of-mass channel, world frame (N).
    pub com: Vector3<f64>,
    /// Fused external force, world frame (N).
    pub fused: Vector3<f64>,
    /// Fused external force rotated into the body frame (N).
    pub body: Vector3<f64>,
    /// Contact indicator: arms loaded beyond the deflection threshold.
    pub upsilon: bool,
    /// Element-wise CoM blend-back weight in [0, 1].
    pub kappa: Vector3<f64>,
    /// External yaw torque from the momentum observer (N m).
    pub yaw_torque: f64,
    /// Arm angles after the filter chain (rad).
    pub theta_filtered: [f64; 4],
}

impl ForceEstimate {
    pub fn zero() -> Self {
        Self {
            per_arm: [Vector3::zeros(); 4],
            com: Vector3::zeros(),
            fused: Vector3::zeros(),
            body: Vector3::zeros(),
            upsilon: false,
            kappa: Vector3::zeros(),
            yaw_torque: 0.0,
            theta_filtered: [0.0; 4],
        }
    }
}

/// Contact indicator: 1 iff the summed absolute arm deflection exceeds the
/// threshold (strictly).
pub fn contact_indicator(theta: &[f64; 4], theta_th: f64) -> bool {
    theta.iter().map(|t| t.abs()).sum::<f64>() > theta_th
}

/// World-frame force reconstructed from one arm's observer output: the force
/// acts along the arm's tangential axis at its current deflection.
pub fn arm_force_to_world(force_a1: f64, arm: usize, theta: f64, rot: &Matrix3<f64>) -> Vector3<f64> {
    let r_arm = arm_rotation(arm_deflection_angle(arm, theta));
    rot * (r_arm * Vector3::new(force_a1, 0.0, 0.0))
}

/// Centre-of-mass channel: m a - m g e3 + f R e3.
pub fn estimate_com_force(
    accel: Vector3<f64>,
    thrust_norm: f64,
    thrust_scale: f64,
    mass: f64,
    gravity: f64,
    rot: &Matrix3<f64>,
) -> Vector3<f64> {
    mass * accel - mass * gravity * E3 + thrust_norm * thrust_scale * (rot * E3)
}

/// Element-wise fusion of the CoM and arm channels.
///
/// fused = (1 - u + u k) com + (1 - k) u arm_sum, with
/// k = clamp(xi_f |com_rate|, 0, 1) per axis and u the contact indicator.
/// Degenerate cases are exact: u = 0 gives the CoM channel bit for bit,
/// u = 1 with k = 0 the arm sum, u = 1 with k = 1 the CoM channel.
pub fn fuse_forces(
    com: Vector3<f64>,
    arm_sum: Vector3<f64>,
    upsilon: bool,
    com_rate: Vector3<f64>,
    xi_f: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let u = if upsilon { 1.0 } else { 0.0 };
    let kappa = com_rate.map(|r| (xi_f * r.abs()).clamp(0.0, 1.0));
    let fused = Vector3::from_fn(|i, _| {
        let k = kappa[i];
        (1.0 - u + u * k) * com[i] + (1.0 - k) * u * arm_sum[i]
    });
    (fused, kappa)
}

/// Rotate a world-frame force into the body frame.
pub fn world_to_body(f_world: Vector3<f64>, rot: &Matrix3<f64>) -> Vector3<f64> {
    rot.transpose() * f_world
}

struct ArmChain {
    median: MedianFilter,
    lpf: LowPass,
    notch: Option<BandStop>,
}

impl ArmChain {
    fn push(&mut self, x: f64) -> f64 {
        let y = self.lpf.push(self.median.push(x));
        match &mut self.notch {
            Some(n) => n.push(y),
            None => y,
        }
    }
}

/// Stateful estimator stepped at a fixed rate from logged-compatible inputs.
pub struct Estimator {
    bank: FilterBank,
    dt: f64,
    mass: f64,
    gravity: f64,
    thrust_scale: f64,
    inertia: Matrix3<f64>,
    stiffness: f64,
    lever: f64,
    arm_chains: [ArmChain; 4],
    accel_median: [MedianFilter; 3],
    accel_lpf: [LowPass; 3],
    /// Observer states: per-arm force along a1 (N).
    delta_arm: [f64; 4],
    com_prev: Option<Vector3<f64>>,
    momentum_integral: Vector3<f64>,
    tau_est: Vector3<f64>,
    momentum_primed: bool,
}

impl Estimator {
    pub fn new(bank: FilterBank, body: &BodyParams, arm: &ArmParams, sample_hz: f64) -> Result<Self> {
        bank.validate(sample_hz)?;
        if !(sample_hz > 0.0) {
            return Err(Error::InvalidParam("estimator rate must be > 0".into()));
        }
        let mk_chain = || ArmChain {
            median: MedianFilter::new(bank.median_window),
            lpf: LowPass::new(bank.lpf_alpha),
            notch: bank
                .notch_enabled
                .then(|| BandStop::new(bank.notch_center_hz, bank.notch_half_width_hz, sample_hz)),
        };
        Ok(Self {
            dt: 1.0 / sample_hz,
            mass: body.mass,
            gravity: body.gravity,
            thrust_scale: body.thrust_scale,
            inertia: body.inertia,
            stiffness: arm.stiffness,
            lever: arm.lever,
            arm_chains: [mk_chain(), mk_chain(), mk_chain(), mk_chain()],
            accel_median: std::array::from_fn(|_| MedianFilter::new(bank.accel_median_window)),
            accel_lpf: std::array::from_fn(|_| LowPass::new(bank.accel_lpf_alpha)),
            delta_arm: [0.0; 4],
            com_prev: None,
            momentum_integral: Vector3::zeros(),
            tau_est: Vector3::zeros(),
            momentum_primed: false,
            bank,
        })
    }

    /// Advance one estimator tick.
    pub fn tick(&mut self, inp: &EstimatorInputs) -> Result<ForceEstimate> {
        ensure_finite("estimator theta", &inp.raw_theta)?;
        ensure_finite("estimator accel", inp.accel.as_slice())?;
        ensure_finite("estimator thrust", &[inp.thrust_norm])?;

        // Arm channel.
        let mut theta_f = [0.0_f64; 4];
        let mut per_arm = [Vector3::zeros(); 4];
        let mut arm_sum = Vector3::zeros();
        for i in 0..4 {
            theta_f[i] = self.arm_chains[i].push(inp.raw_theta[i]);
            // First-order observer toward the quasi-static spring inversion.
            let target = self.stiffness * theta_f[i] / self.lever;
            self.delta_arm[i] += self.dt * self.bank.k_i * (target - self.delta_arm[i]);
            per_arm[i] = arm_force_to_world(self.delta_arm[i], i, theta_f[i], &inp.rot);
            arm_sum += per_arm[i];
        }

        // CoM channel.
        let accel_f = Vector3::from_fn(|i, _| self.accel_lpf[i].push(self.accel_median[i].push(inp.accel[i])));
        let com = estimate_com_force(accel_f, inp.thrust_norm, self.thrust_scale, self.mass, self.gravity, &inp.rot);
        let com_rate = match self.com_prev {
            Some(prev) => (com - prev) / self.dt,
            None => Vector3::zeros(),
        };
        self.com_prev = Some(com);

        let upsilon = contact_indicator(&theta_f, self.bank.theta_th);
        let (fused, kappa) = fuse_forces(com, arm_sum, upsilon, com_rate, self.bank.xi_f);
        let body = world_to_body(fused, &inp.rot);

        // Yaw momentum observer on H omega.
        let momentum = self.inertia * inp.omega;
        if !self.momentum_primed {
            self.momentum_integral = momentum;
            self.momentum_primed = true;
        } else {
            let gyro = momentum.cross(&inp.omega);
            self.momentum_integral += self.dt * (inp.tau_cmd + gyro + self.tau_est);
        }
        self.tau_est = self.bank.k_o * (momentum - self.momentum_integral);

        Ok(ForceEstimate {
            per_arm,
            com,
            fused,
            body,
            upsilon,
            kappa,
            yaw_torque: self.tau_est.z,
            theta_filtered: theta_f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{rotation_z, Environment, Injection, Simulator, VehicleState};
    use approx::assert_relative_eq;

    fn hover_inputs() -> EstimatorInputs {
        let body = BodyParams::default();
        EstimatorInputs {
            raw_theta: [0.0; 4],
            accel: Vector3::zeros(),
            thrust_norm: body.hover_thrust() / body.thrust_scale,
            rot: Matrix3::identity(),
            omega: Vector3::zeros(),
            tau_cmd: Vector3::zeros(),
        }
    }

    #[test]
    fn com_channel_zero_at_hover() {
        let inp = hover_inputs();
        let com = estimate_com_force(inp.accel, inp.thrust_norm, 32.5, 1.12, 9.81, &inp.rot);
        assert!(com.norm() < 1e-12);
    }

    #[test]
    fn com_channel_reads_lateral_acceleration() {
        let inp = hover_inputs();
        let com = estimate_com_force(Vector3::new(1.0, 0.0, 0.0), inp.thrust_norm, 32.5, 1.12, 9.81, &inp.rot);
        assert_relative_eq!(com.x, 1.12, epsilon = 1e-12);
        assert!(com.y.abs() < 1e-12 && com.z.abs() < 1e-12);
    }

    #[test]
    fn indicator_threshold_is_strict() {
        assert!(!contact_indicator(&[0.02, -0.01, 0.004, 0.0], 0.035)); // sum 0.034
        assert!(!contact_indicator(&[0.035, 0.0, 0.0, 0.0], 0.035)); // boundary
        assert!(contact_indicator(&[0.05, 0.0, 0.0, 0.0], 0.035));
    }

    #[test]
    fn arm_force_direction_follows_arm_frame() {
        // Arm index 1 at rest: tangential axis at -45 degrees.
        let f = arm_force_to_world(1.0, 1, 0.0, &Matrix3::identity());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(f.x, s, epsilon = 1e-12);
        assert_relative_eq!(f.y, -s, epsilon = 1e-12);
        // Vehicle yawed 90 degrees rotates the reconstruction with it.
        let f = arm_force_to_world(1.0, 1, 0.0, &rotation_z(std::f64::consts::FRAC_PI_2));
        assert_relative_eq!(f.x, s, epsilon = 1e-12);
        assert_relative_eq!(f.y, s, epsilon = 1e-12);
    }

    #[test]
    fn world_to_body_under_yaw() {
        let body = world_to_body(Vector3::new(1.0, 0.0, 0.0), &rotation_z(std::f64::consts::FRAC_PI_2));
        assert_relative_eq!(body.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(body.y, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn fusion_degeneracies_exact() {
        let com = Vector3::new(1.25, -0.5, 3.0);
        let arm = Vector3::new(0.9, 0.1, -2.0);
        // No contact: CoM channel verbatim.
        let (fused, _) = fuse_forces(com, arm, false, Vector3::new(1e9, 1e9, 1e9), 0.02);
        assert_eq!(fused, com);
        // Contact, static CoM: arm sum verbatim.
        let (fused, kappa) = fuse_forces(com, arm, true, Vector3::zeros(), 0.02);
        assert_eq!(fused, arm);
        assert_eq!(kappa, Vector3::zeros());
        // Contact, fast CoM: CoM channel verbatim.
        let (fused, kappa) = fuse_forces(com, arm, true, Vector3::new(1e9, 1e9, 1e9), 0.02);
        assert_eq!(fused, com);
        assert_eq!(kappa, Vector3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn kappa_clamped_elementwise() {
        let (_, kappa) = fuse_forces(Vector3::zeros(), Vector3::zeros(), true, Vector3::new(100.0, 0.0, 10.0), 0.02);
        assert_relative_eq!(kappa.x, 1.0);
        assert_relative_eq!(kappa.y, 0.0);
        assert_relative_eq!(kappa.z, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn yaw_observer_converges_to_constant_torque() {
        // Free-spinning body under an unmodelled constant 0.1 N m yaw torque.
        let body = BodyParams::default();
        let mut est = Estimator::new(FilterBank::default(), &body, &ArmParams::default(), 50.0).unwrap();
        let mut omega = Vector3::zeros();
        let dt = 1.0 / 50.0;
        let mut out = ForceEstimate::zero();
        for k in 0..100 {
            // True dynamics, integrated at the estimator rate for simplicity.
            let h = body.inertia;
            let gyro = (h * omega).cross(&omega);
            let omega_next = omega + dt * (h.try_inverse().unwrap() * (Vector3::new(0.0, 0.0, 0.1) + gyro));
            let inp = EstimatorInputs {
                raw_theta: [0.0; 4],
                accel: Vector3::zeros(),
                thrust_norm: 0.0,
                rot: Matrix3::identity(),
                omega: omega_next,
                tau_cmd: Vector3::zeros(),
            };
            out = est.tick(&inp).unwrap();
            omega = omega_next;
            if k == 24 {
                // Converged by 0.5 s at k_o = 10.
                assert_relative_eq!(out.yaw_torque, 0.1, epsilon = 1e-3);
            }
        }
        assert_relative_eq!(out.yaw_torque, 0.1, epsilon = 1e-3);
    }

    #[test]
    fn arm_injection_tracked_within_ten_percent() {
        // Constant 1 N along arm 0's tangential axis in closed physics; the
        // fused estimate follows the injected truth.
        let body = BodyParams::default();
        let arm = ArmParams::default();
        let mut sim = Simulator::new(
            body.clone(),
            arm.clone(),
            Environment::free_space(),
            VehicleState::at_rest(Vector3::zeros()),
            1.0 / 500.0,
        )
        .unwrap();
        let mut est = Estimator::new(FilterBank::default(), &body, &arm, 50.0).unwrap();
        let inject = Injection { arm_force: Some((0, 1.0)), ..Default::default() };
        let f = body.hover_thrust();
        let mut truth = Vector3::zeros();
        let mut fused = Vector3::zeros();
        let mut v_prev = Vector3::zeros();
        for k in 0..2500 {
            let out = sim.step(f, Vector3::zeros(), &inject).unwrap();
            truth = out.ext_force_world;
            if (k + 1) % 10 == 0 {
                let accel = (sim.state.vel - v_prev) * 50.0;
                v_prev = sim.state.vel;
                let e = est
                    .tick(&EstimatorInputs {
                        raw_theta: sim.state.theta,
                        accel,
                        thrust_norm: f / body.thrust_scale,
                        rot: sim.state.rot,
                        omega: sim.state.omega,
                        tau_cmd: Vector3::zeros(),
                    })
                    .unwrap();
                fused = e.fused;
                assert!(e.upsilon || k < 200, "indicator should latch once loaded");
            }
        }
        let err = (fused - truth).norm() / truth.norm();
        assert!(err < 0.1, "fused {fused:?} vs truth {truth:?} ({err:.3})");
    }
}
