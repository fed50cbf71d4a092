//! Feedback-linearizing outer loop.
//!
//! The virtual input `mu = [mu_p, mu_psi]` turns the reduced model into a
//! triple double integrator plus a yaw integrator. [`feedback_linearize`]
//! maps it back to thrust, roll and pitch.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, ReducedState, VehicleParams};
use crate::error::{Error, Result};
use crate::maneuver::ReferencePoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub k_p: f64,
    pub k_d: f64,
    pub k_psi: f64,
    /// Zero (the default) disables integral action.
    pub k_i: f64,
    /// Per-component clamp on the integrator state, m*s.
    pub eta_limit: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_p: 16.0,
            k_d: 8.0,
            k_psi: 2.0,
            k_i: 0.0,
            eta_limit: 0.5,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.k_p) || !positive(self.k_d) || !positive(self.k_psi) {
            return Err(Error::InvalidGains("k_p, k_d and k_psi must be positive".into()));
        }
        if !(self.k_i >= 0.0 && self.k_i.is_finite()) {
            return Err(Error::InvalidGains("k_i must be nonnegative".into()));
        }
        if !positive(self.eta_limit) {
            return Err(Error::InvalidGains("eta_limit must be positive".into()));
        }
        Ok(())
    }

    pub fn has_integral(&self) -> bool {
        self.k_i > 0.0
    }
}

/// State of the position-error integrator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorState {
    pub eta_p: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualInput {
    pub mu_p: Vector3<f64>,
    pub mu_psi: f64,
    /// Set when the vertical channel was clamped to keep thrust positive.
    pub clamped: bool,
}

/// Tracking law: feedforward plus PD (and optional integral) feedback on the
/// error with respect to `reference`.
pub fn tracking_virtual_input(
    x: &ReducedState,
    reference: &ReferencePoint,
    gains: &Gains,
    eta: &IntegratorState,
    params: &VehicleParams,
) -> VirtualInput {
    let mut mu_p = reference.a
        - (x.p - reference.p) * gains.k_p
        - (x.v - reference.v) * gains.k_d
        - eta.eta_p * gains.k_i;
    let mu_psi = reference.psi_dot - gains.k_psi * (x.psi - reference.psi);
    let ceiling = params.g - params.accel_margin;
    let clamped = mu_p.z > ceiling;
    if clamped {
        mu_p.z = ceiling;
    }
    VirtualInput {
        mu_p,
        mu_psi,
        clamped,
    }
}

/// `Q(psi)` such that horizontal acceleration equals `-(f/m) Q(psi) [s(phi), s(theta)c(phi)]`.
pub fn yaw_mixing(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(s, c, -c, s)
}

/// Exact inversion of the translational dynamics for an acceleration
/// command. Only requires `mu_p.z < g`.
pub fn invert_acceleration(
    mu_p: &Vector3<f64>,
    mu_psi: f64,
    psi: f64,
    params: &VehicleParams,
) -> Result<ControlInput> {
    let lift = mu_p.z - params.g;
    if !(-lift > params.singularity_eps) {
        return Err(Error::ThrustSingularity {
            mu3: mu_p.z,
            margin: params.singularity_eps,
        });
    }
    // Q is orthogonal, so its inverse is the transpose.
    let scaled = yaw_mixing(psi).transpose() * Vector2::new(mu_p.x, mu_p.y) / lift;
    let theta = scaled.y.atan();
    let phi = (theta.cos() * scaled.x).atan();
    let f = -params.m * lift / (phi.cos() * theta.cos());
    Ok(ControlInput {
        f,
        phi,
        theta,
        mu_psi,
    })
}

/// Thrust, roll and pitch that realize `mu`, refusing commands that come
/// closer to free fall than the configured acceleration margin.
pub fn feedback_linearize(mu: &VirtualInput, psi: f64, params: &VehicleParams) -> Result<ControlInput> {
    // Clamped commands sit exactly at the margin; allow rounding there.
    if params.g - mu.mu_p.z < params.accel_margin * (1.0 - 1e-9) {
        return Err(Error::ThrustSingularity {
            mu3: mu.mu_p.z,
            margin: params.accel_margin,
        });
    }
    invert_acceleration(&mu.mu_p, mu.mu_psi, psi, params)
}

/// Rectangle-rule integration of the position error with a per-component clamp.
pub fn update_integrator(
    eta: &IntegratorState,
    position_error: &Vector3<f64>,
    h: f64,
    gains: &Gains,
) -> IntegratorState {
    let lim = gains.eta_limit;
    IntegratorState {
        eta_p: (eta.eta_p + position_error * h).map(|c| c.clamp(-lim, lim)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{reduced_dynamics, DisturbanceInput};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn zero_error_passes_feedforward() {
        let r = ReferencePoint {
            p: Vector3::new(0.1, 0.2, -1.0),
            v: Vector3::new(0.1, 0.0, 0.0),
            a: Vector3::new(0.0, 0.04, 0.0),
            psi: 0.3,
            psi_dot: 0.1,
        };
        let mu = tracking_virtual_input(&r.state(), &r, &Gains::default(), &IntegratorState::default(), &params());
        assert_eq!(mu.mu_p, r.a);
        assert_eq!(mu.mu_psi, 0.1);
        assert!(!mu.clamped);
    }

    #[test]
    fn pure_proportional() {
        let r = ReferencePoint::hover(Vector3::zeros(), 0.0);
        let x = ReducedState::at_rest(Vector3::new(1.0, 0.0, 0.0));
        let g = Gains {
            k_p: 4.0,
            ..Gains::default()
        };
        let mu = tracking_virtual_input(&x, &r, &g, &IntegratorState::default(), &params());
        assert_eq!(mu.mu_p, Vector3::new(-4.0, 0.0, 0.0));
    }

    #[test]
    fn vertical_command_clamped_below_gravity() {
        let r = ReferencePoint::hover(Vector3::zeros(), 0.0);
        let x = ReducedState::at_rest(Vector3::new(0.0, 0.0, -10.0));
        let mu = tracking_virtual_input(&x, &r, &Gains::default(), &IntegratorState::default(), &params());
        assert!(mu.clamped);
        assert_eq!(mu.mu_p.z, 9.81 - 1.0);
        assert!(feedback_linearize(&mu, 0.0, &params()).is_ok());
    }

    #[test]
    fn hover_inversion() {
        let p = params();
        for psi in [-2.0, 0.0, 0.7, 3.0] {
            let mu = VirtualInput {
                mu_p: Vector3::zeros(),
                mu_psi: 0.0,
                clamped: false,
            };
            let u = feedback_linearize(&mu, psi, &p).unwrap();
            assert_abs_diff_eq!(u.f, p.m * p.g, epsilon = 1e-15);
            assert_eq!(u.phi, 0.0);
            assert_eq!(u.theta, 0.0);
        }
    }

    #[test]
    fn linearization_is_exact() {
        let p = params();
        let mut seed = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let mu = VirtualInput {
                mu_p: Vector3::new(2.0 * next(), 2.0 * next(), 3.0 * next()),
                mu_psi: next(),
                clamped: false,
            };
            let x = ReducedState::new(Vector3::zeros(), Vector3::zeros(), 4.0 * next());
            let u = feedback_linearize(&mu, x.psi, &p).unwrap();
            let dz = reduced_dynamics(&x, &u, &DisturbanceInput::none(), &p).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(dz[3 + i], mu.mu_p[i], epsilon = 1e-12);
            }
            assert_eq!(dz[6], mu.mu_psi);
        }
    }

    #[test]
    fn roll_pitch_split_rotates_with_yaw() {
        // At psi = pi/2, Q = [[1, 0], [0, 1]], so a +x acceleration must come
        // from roll alone: -(f/m) s(phi) = mu1.
        let p = params();
        let mu = VirtualInput {
            mu_p: Vector3::new(1.0, 0.0, 0.0),
            mu_psi: 0.0,
            clamped: false,
        };
        let u = feedback_linearize(&mu, FRAC_PI_2, &p).unwrap();
        assert_abs_diff_eq!(u.theta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.phi, (-1.0f64 / 9.81).atan(), epsilon = 1e-15);
        let q = yaw_mixing(FRAC_PI_2);
        let horiz = -q * Vector2::new(u.phi.sin(), u.theta.sin() * u.phi.cos()) * (u.f / p.m);
        assert_abs_diff_eq!(horiz.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(horiz.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_commands_near_free_fall() {
        let mu = VirtualInput {
            mu_p: Vector3::new(0.0, 0.0, 9.5),
            mu_psi: 0.0,
            clamped: false,
        };
        assert!(matches!(
            feedback_linearize(&mu, 0.0, &params()),
            Err(Error::ThrustSingularity { .. })
        ));
    }

    #[test]
    fn integrator_rules() {
        let g = Gains::default();
        let eta = IntegratorState::default();
        assert_eq!(update_integrator(&eta, &Vector3::zeros(), 0.01, &g), eta);

        let mut eta = IntegratorState::default();
        let g_wide = Gains { eta_limit: 5.0, ..g };
        for _ in 0..100 {
            eta = update_integrator(&eta, &Vector3::new(1.0, 0.0, 0.0), 0.01, &g_wide);
        }
        assert_abs_diff_eq!(eta.eta_p.x, 1.0, epsilon = 1e-12);

        let mut eta = IntegratorState::default();
        for _ in 0..1000 {
            eta = update_integrator(&eta, &Vector3::new(3.0, -3.0, 0.1), 0.01, &g);
        }
        assert_eq!(eta.eta_p.x, 0.5);
        assert_eq!(eta.eta_p.y, -0.5);
        assert!(eta.eta_p.z <= 0.5);
    }

    #[test]
    fn gains_validation() {
        assert!(Gains::default().validate().is_ok());
        assert!(Gains { k_p: 0.0, ..Gains::default() }.validate().is_err());
        assert!(Gains { k_i: -1.0, ..Gains::default() }.validate().is_err());
        assert!(Gains { k_i: 0.0, ..Gains::default() }.validate().is_ok());
    }
}
