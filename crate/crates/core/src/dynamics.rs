//! Reduced vectored-thrust model of a VTOL vehicle.
//!
//! The state is position, velocity and yaw. Roll, pitch and yaw rate are
//! virtual inputs realized by an (ideal or first-order) inner attitude loop.
//! The third axis points down: gravity enters with a positive sign and the
//! thrust acts along the negative body z-axis.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVector = SVector<f64, 7>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Unwrapped yaw angle.
    pub psi: f64,
}

impl ReducedState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>, psi: f64) -> Self {
        Self { p, v, psi }
    }

    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self::new(p, Vector3::zeros(), 0.0)
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::from_column_slice(&[
            self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.psi,
        ])
    }

    pub fn from_vector(z: &StateVector) -> Self {
        Self {
            p: Vector3::new(z[0], z[1], z[2]),
            v: Vector3::new(z[3], z[4], z[5]),
            psi: z[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

/// Thrust plus the virtual attitude inputs `[f, phi, theta, mu_psi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub f: f64,
    pub phi: f64,
    pub theta: f64,
    pub mu_psi: f64,
}

impl ControlInput {
    pub fn new(f: f64, phi: f64, theta: f64, mu_psi: f64) -> Self {
        Self {
            f,
            phi,
            theta,
            mu_psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub m: f64,
    /// m/s^2
    pub g: f64,
    /// Thrust saturation, N.
    pub f_max: f64,
    /// Roll/pitch command limit, rad.
    pub angle_max: f64,
    /// First-order attitude lag, s. Zero means the inner loop is ideal.
    pub attitude_lag_tau: f64,
    /// Guard on cos(phi)cos(theta).
    pub singularity_eps: f64,
    /// Minimum gap between gravity and the vertical acceleration command, m/s^2.
    pub accel_margin: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 0.03,
            g: 9.81,
            f_max: 0.31,
            angle_max: 0.6,
            attitude_lag_tau: 0.0,
            singularity_eps: 1e-6,
            accel_margin: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad("mass must be positive");
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("gravity must be positive");
        }
        if !(self.f_max > 0.0) {
            return bad("f_max must be positive");
        }
        if !(self.angle_max > 0.0 && self.angle_max < std::f64::consts::FRAC_PI_2) {
            return bad("angle_max must lie in (0, pi/2)");
        }
        if !(self.attitude_lag_tau >= 0.0) {
            return bad("attitude_lag_tau must be nonnegative");
        }
        if !(self.singularity_eps > 0.0) {
            return bad("singularity_eps must be positive");
        }
        if !(self.accel_margin > 0.0 && self.accel_margin < self.g) {
            return bad("accel_margin must lie in (0, g)");
        }
        Ok(())
    }

    /// Thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.m * self.g
    }

    /// Largest horizontal specific force available when the vertical axis
    /// is balanced and thrust sits at its limit.
    pub fn lateral_authority(&self) -> f64 {
        let total = self.f_max / self.m;
        (total * total - self.g * self.g).max(0.0).sqrt()
    }
}

/// Additive disturbance acting on the vehicle during one plant step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceInput {
    /// Specific force added to the velocity derivative, m/s^2.
    pub force: Vector3<f64>,
    /// Kinematic hold point. When set, position is pinned to it and the
    /// velocity zeroed after every step.
    pub hold: Option<Vector3<f64>>,
}

impl DisturbanceInput {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn force(force: Vector3<f64>) -> Self {
        Self { force, hold: None }
    }

    pub fn hold_active(&self) -> bool {
        self.hold.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SaturationFlags {
    pub thrust: bool,
    pub roll: bool,
    pub pitch: bool,
}

impl SaturationFlags {
    pub fn any(&self) -> bool {
        self.thrust || self.roll || self.pitch
    }
}

/// Unit thrust direction (negated) of the body z-axis in the inertial frame
/// for roll `phi`, pitch `theta`, yaw `psi`.
fn thrust_axis(phi: f64, theta: f64, psi: f64) -> Vector3<f64> {
    let (sphi, cphi) = phi.sin_cos();
    let (stheta, ctheta) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    Vector3::new(
        sphi * spsi + cpsi * stheta * cphi,
        -sphi * cpsi + spsi * stheta * cphi,
        cphi * ctheta,
    )
}

/// Time derivative of the reduced state.
pub fn reduced_dynamics(
    x: &ReducedState,
    u: &ControlInput,
    d: &DisturbanceInput,
    params: &VehicleParams,
) -> Result<StateVector> {
    let cos_product = u.phi.cos() * u.theta.cos();
    if cos_product <= params.singularity_eps {
        return Err(Error::SingularAttitude { cos_product });
    }
    let accel = Vector3::new(0.0, 0.0, params.g) - thrust_axis(u.phi, u.theta, x.psi) * (u.f / params.m)
        + d.force;
    Ok(StateVector::from_column_slice(&[
        x.v.x, x.v.y, x.v.z, accel.x, accel.y, accel.z, u.mu_psi,
    ]))
}

/// Clamp thrust to `[0, f_max]` and roll/pitch to `[-angle_max, angle_max]`.
pub fn saturate(u: &ControlInput, params: &VehicleParams) -> (ControlInput, SaturationFlags) {
    let f = u.f.clamp(0.0, params.f_max);
    let phi = u.phi.clamp(-params.angle_max, params.angle_max);
    let theta = u.theta.clamp(-params.angle_max, params.angle_max);
    let flags = SaturationFlags {
        thrust: f != u.f,
        roll: phi != u.phi,
        pitch: theta != u.theta,
    };
    (ControlInput { f, phi, theta, mu_psi: u.mu_psi }, flags)
}

/// Pin the state to a hold point with zero velocity; yaw is untouched.
pub fn clamp_to_hold(x: &ReducedState, point: &Vector3<f64>) -> ReducedState {
    ReducedState {
        p: *point,
        v: Vector3::zeros(),
        psi: x.psi,
    }
}

/// One classical RK4 step of length `h` with `u` and `d` held constant.
pub fn step(
    x: &ReducedState,
    u: &ControlInput,
    d: &DisturbanceInput,
    h: f64,
    params: &VehicleParams,
) -> Result<ReducedState> {
    if !(h > 0.0) {
        return Err(Error::InvalidParams(format!("step size must be positive, got {h}")));
    }
    let z = x.to_vector();
    let f = |z: &StateVector| reduced_dynamics(&ReducedState::from_vector(z), u, d, params);
    let k1 = f(&z)?;
    let k2 = f(&(z + k1 * (h / 2.0)))?;
    let k3 = f(&(z + k2 * (h / 2.0)))?;
    let k4 = f(&(z + k3 * h))?;
    let next = ReducedState::from_vector(&(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
    Ok(match &d.hold {
        Some(point) => clamp_to_hold(&next, point),
        None => next,
    })
}

/// Realized roll and pitch of the inner attitude loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeState {
    pub phi: f64,
    pub theta: f64,
}

impl AttitudeState {
    /// Advance the first-order lag toward the commanded angles over `h`
    /// (exact discretization). With `tau == 0` the commands are realized
    /// instantly.
    pub fn advance(&mut self, cmd: &ControlInput, h: f64, tau: f64) {
        if tau <= 0.0 {
            self.phi = cmd.phi;
            self.theta = cmd.theta;
        } else {
            let decay = (-h / tau).exp();
            self.phi = cmd.phi + (self.phi - cmd.phi) * decay;
            self.theta = cmd.theta + (self.theta - cmd.theta) * decay;
        }
    }

    /// The input seen by the plant: commanded thrust and yaw rate with the
    /// realized angles.
    pub fn realize(&self, cmd: &ControlInput) -> ControlInput {
        ControlInput {
            f: cmd.f,
            phi: self.phi,
            theta: self.theta,
            mu_psi: cmd.mu_psi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn hover_thrust_cancels_gravity() {
        let p = params();
        let x = ReducedState::new(Vector3::new(1.0, -2.0, -1.0), Vector3::new(0.3, 0.1, 0.0), 0.7);
        let u = ControlInput::new(p.m * p.g, 0.0, 0.0, 0.0);
        let dz = reduced_dynamics(&x, &u, &DisturbanceInput::none(), &p).unwrap();
        assert_eq!(dz[0], 0.3);
        assert_eq!(dz[1], 0.1);
        assert_abs_diff_eq!(dz[5], 0.0, epsilon = 1e-15);
        assert_eq!(dz[3], 0.0);
        assert_eq!(dz[6], 0.0);
    }

    #[test]
    fn explicit_hover_thrust_value() {
        let p = params();
        let u = ControlInput::new(0.2943, 0.0, 0.0, 0.0);
        let dz = reduced_dynamics(&ReducedState::at_rest(Vector3::zeros()), &u, &DisturbanceInput::none(), &p)
            .unwrap();
        assert_abs_diff_eq!(dz[5], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_acceleration_matches_hand_evaluation() {
        // Values from a 30-digit evaluation of the translational equations.
        let p = params();
        let x = ReducedState::new(Vector3::zeros(), Vector3::zeros(), 0.3);
        let u = ControlInput::new(0.30, 0.1, -0.05, 0.0);
        let dz = reduced_dynamics(&x, &u, &DisturbanceInput::none(), &p).unwrap();
        assert_abs_diff_eq!(dz[3], 0.180_055_964_399_973_68, epsilon = 1e-13);
        assert_abs_diff_eq!(dz[4], 1.100_705_724_368_195_1, epsilon = 1e-13);
        assert_abs_diff_eq!(dz[5], -0.127_606_691_655_042_67, epsilon = 1e-13);
    }

    #[test]
    fn singular_attitude_rejected() {
        let p = params();
        let u = ControlInput::new(0.3, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let err = reduced_dynamics(&ReducedState::at_rest(Vector3::zeros()), &u, &DisturbanceInput::none(), &p);
        assert!(matches!(err, Err(Error::SingularAttitude { .. })));
    }

    #[test]
    fn saturation_cases() {
        let p = params();
        let (u, flags) = saturate(&ControlInput::new(0.5, 0.0, 0.0, 0.0), &p);
        assert_eq!(u.f, 0.31);
        assert!(flags.thrust && !flags.roll && !flags.pitch);

        let inside = ControlInput::new(0.2, 0.1, -0.1, 0.3);
        let (u, flags) = saturate(&inside, &p);
        assert_eq!(u, inside);
        assert!(!flags.any());

        let (u, flags) = saturate(&ControlInput::new(0.2, -1.2, 0.0, 0.0), &p);
        assert_eq!(u.phi, -0.6);
        assert!(flags.roll);

        let (u, flags) = saturate(&ControlInput::new(-0.1, 0.0, 0.0, 0.0), &p);
        assert_eq!(u.f, 0.0);
        assert!(flags.thrust);
    }

    #[test]
    fn hover_is_a_fixed_point_of_step() {
        let p = params();
        let x = ReducedState::new(Vector3::new(0.25, 0.0, -1.0), Vector3::zeros(), 0.0);
        let u = ControlInput::new(p.hover_thrust(), 0.0, 0.0, 0.0);
        for h in [1e-4, 0.002, 0.01, 0.5] {
            let next = step(&x, &u, &DisturbanceInput::none(), h, &p).unwrap();
            assert_eq!(next, x);
        }
        let spinning = ControlInput { mu_psi: 0.5, ..u };
        let next = step(&x, &spinning, &DisturbanceInput::none(), 0.01, &p).unwrap();
        assert_eq!(next.p, x.p);
        assert_abs_diff_eq!(next.psi, 0.005, epsilon = 1e-15);
    }

    #[test]
    fn free_fall_is_exact() {
        let p = params();
        let mut x = ReducedState::at_rest(Vector3::zeros());
        let u = ControlInput::default();
        for _ in 0..100 {
            x = step(&x, &u, &DisturbanceInput::none(), 0.01, &p).unwrap();
        }
        assert_abs_diff_eq!(x.p.z, 4.905, epsilon = 1e-10);
        assert_abs_diff_eq!(x.v.z, 9.81, epsilon = 1e-12);
    }

    #[test]
    fn hold_clamps_after_step() {
        let p = params();
        let point = Vector3::new(0.25, 0.0, -1.0);
        let d = DisturbanceInput {
            force: Vector3::new(1.0, 0.0, 0.0),
            hold: Some(point),
        };
        let x = ReducedState::new(point, Vector3::zeros(), 0.2);
        let u = ControlInput::new(0.0, 0.1, 0.1, 1.0);
        let next = step(&x, &u, &d, 0.01, &p).unwrap();
        assert_eq!(next.p, point);
        assert_eq!(next.v, Vector3::zeros());
        assert_abs_diff_eq!(next.psi, 0.21, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let p = params();
        let x = ReducedState::at_rest(Vector3::zeros());
        assert!(step(&x, &ControlInput::default(), &DisturbanceInput::none(), 0.0, &p).is_err());
    }

    #[test]
    fn attitude_lag_converges() {
        let cmd = ControlInput::new(0.3, 0.2, -0.1, 0.0);
        let mut att = AttitudeState::default();
        att.advance(&cmd, 0.05, 0.05);
        assert_abs_diff_eq!(att.phi, 0.2 * (1.0 - (-1.0f64).exp()), epsilon = 1e-15);
        let mut ideal = AttitudeState::default();
        ideal.advance(&cmd, 0.002, 0.0);
        assert_eq!(ideal.realize(&cmd), cmd);
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let bad = VehicleParams { m: 0.0, ..params() };
        assert!(bad.validate().is_err());
        let bad = VehicleParams { angle_max: 1.6, ..params() };
        assert!(bad.validate().is_err());
        let p = params();
        assert_abs_diff_eq!(p.lateral_authority(), ((0.31f64 / 0.03).powi(2) - 9.81f64.powi(2)).sqrt(), epsilon = 1e-12);
    }
}
