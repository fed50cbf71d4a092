//! Time-parametrized reference maneuvers.
//!
//! Every maneuver is built from a position curve with analytic first and
//! second derivatives and a constant yaw reference, so the full state and
//! input references follow from the flat outputs.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, ReducedState, StateVector, VehicleParams};
use crate::error::{Error, Result};
use crate::tracking::invert_acceleration;

/// Default spacing of the precomputed reference table, s.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub psi: f64,
    pub psi_dot: f64,
}

impl ReferencePoint {
    pub fn hover(p: Vector3<f64>, psi: f64) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
            psi,
            psi_dot: 0.0,
        }
    }

    /// Desired reduced state `z_d`.
    pub fn state(&self) -> ReducedState {
        ReducedState::new(self.p, self.v, self.psi)
    }

    pub fn state_vector(&self) -> StateVector {
        self.state().to_vector()
    }

    /// Parameter derivative of `z_d`.
    pub fn state_rate(&self) -> StateVector {
        StateVector::from_column_slice(&[
            self.v.x,
            self.v.y,
            self.v.z,
            self.a.x,
            self.a.y,
            self.a.z,
            self.psi_dot,
        ])
    }
}

/// Anything that maps a parameter to a reference point over a bounded domain.
pub trait Reference {
    fn eval(&self, tau: f64) -> ReferencePoint;
    fn domain(&self) -> (f64, f64);
    /// Parameters where the acceleration is allowed to jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Serializable maneuver description used by scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManeuverSpec {
    Circle {
        radius: f64,
        speed: f64,
        center: [f64; 3],
        #[serde(default)]
        psi_d: f64,
    },
    Turn90 {
        speed: f64,
        #[serde(default = "default_leg_length")]
        leg_length: f64,
        #[serde(default = "default_fillet_radius")]
        fillet_radius: f64,
        start: [f64; 3],
        #[serde(default)]
        psi_d: f64,
    },
    Hover {
        position: [f64; 3],
        duration: f64,
        #[serde(default)]
        psi_d: f64,
    },
}

fn default_leg_length() -> f64 {
    0.5
}

fn default_fillet_radius() -> f64 {
    0.2
}

impl ManeuverSpec {
    pub fn build(&self) -> Result<Maneuver> {
        match *self {
            ManeuverSpec::Circle {
                radius,
                speed,
                center,
                psi_d,
            } => Maneuver::circle(radius, speed, Vector3::from(center), psi_d),
            ManeuverSpec::Turn90 {
                speed,
                leg_length,
                fillet_radius,
                start,
                psi_d,
            } => Maneuver::turn90(speed, leg_length, fillet_radius, Vector3::from(start), psi_d),
            ManeuverSpec::Hover {
                position,
                duration,
                psi_d,
            } => Maneuver::hover(Vector3::from(position), psi_d, duration),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Path {
    Circle {
        center: Vector3<f64>,
        radius: f64,
        omega: f64,
    },
    /// Leg along +x, quarter-circle fillet turning toward +y, leg along +y.
    Turn90 {
        start: Vector3<f64>,
        leg: f64,
        fillet: f64,
        speed: f64,
    },
    Hover {
        position: Vector3<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Maneuver {
    path: Path,
    psi_d: f64,
    tau_min: f64,
    tau_max: f64,
    closed: bool,
    grid_step: f64,
    samples: Vec<(f64, StateVector)>,
}

impl Maneuver {
    /// Horizontal circle traversed counter-clockwise at constant speed.
    pub fn circle(radius: f64, speed: f64, center: Vector3<f64>, psi_d: f64) -> Result<Self> {
        if !(radius > 0.0 && speed > 0.0) {
            return Err(Error::InvalidManeuver(
                "circle radius and speed must be positive".into(),
            ));
        }
        let omega = speed / radius;
        Ok(Self::with_path(
            Path::Circle {
                center,
                radius,
                omega,
            },
            psi_d,
            TAU / omega,
            true,
        ))
    }

    /// Straight leg, quarter-circle fillet, straight leg at constant speed.
    pub fn turn90(
        speed: f64,
        leg_length: f64,
        fillet_radius: f64,
        start: Vector3<f64>,
        psi_d: f64,
    ) -> Result<Self> {
        if !(speed > 0.0 && leg_length > 0.0 && fillet_radius > 0.0) {
            return Err(Error::InvalidManeuver(
                "turn speed, leg length and fillet radius must be positive".into(),
            ));
        }
        let duration = (2.0 * leg_length + FRAC_PI_2 * fillet_radius) / speed;
        Ok(Self::with_path(
            Path::Turn90 {
                start,
                leg: leg_length,
                fillet: fillet_radius,
                speed,
            },
            psi_d,
            duration,
            false,
        ))
    }

    /// Constant position reference over `[0, duration]`.
    pub fn hover(position: Vector3<f64>, psi_d: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidManeuver("hover duration must be positive".into()));
        }
        Ok(Self::with_path(Path::Hover { position }, psi_d, duration, false))
    }

    fn with_path(path: Path, psi_d: f64, tau_max: f64, closed: bool) -> Self {
        let mut m = Self {
            path,
            psi_d,
            tau_min: 0.0,
            tau_max,
            closed,
            grid_step: DEFAULT_GRID_STEP,
            samples: Vec::new(),
        };
        m.resample(DEFAULT_GRID_STEP);
        m
    }

    /// Rebuild the sampled table with a different grid step.
    pub fn with_grid_step(mut self, grid_step: f64) -> Result<Self> {
        if !(grid_step > 0.0) {
            return Err(Error::InvalidManeuver("grid step must be positive".into()));
        }
        self.resample(grid_step);
        Ok(self)
    }

    fn resample(&mut self, grid_step: f64) {
        self.grid_step = grid_step;
        let span = self.tau_max - self.tau_min;
        let mut taus = Vec::new();
        let mut k = 0usize;
        loop {
            let tau = self.tau_min + k as f64 * grid_step;
            // Closed paths stop short of the period (that node equals node 0).
            if self.closed && tau >= self.tau_max - 1e-9 * grid_step.max(span) {
                break;
            }
            if !self.closed && tau >= self.tau_max - 1e-12 {
                taus.push(self.tau_max);
                break;
            }
            taus.push(tau);
            k += 1;
        }
        self.samples = taus
            .into_iter()
            .map(|tau| (tau, self.eval(tau).state_vector()))
            .collect();
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    /// Period of a closed path.
    pub fn period(&self) -> Option<f64> {
        self.closed.then_some(self.tau_max - self.tau_min)
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn samples(&self) -> &[(f64, StateVector)] {
        &self.samples
    }

    /// The sampled reference table as CSV: `tau,pd1..3,vd1..3,ad1..3,psid,psidotd`.
    pub fn write_table_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "tau", "pd1", "pd2", "pd3", "vd1", "vd2", "vd3", "ad1", "ad2", "ad3", "psid", "psidotd",
        ])?;
        for (tau, _) in &self.samples {
            let r = self.eval(*tau);
            let row = [*tau, r.p.x, r.p.y, r.p.z, r.v.x, r.v.y, r.v.z, r.a.x, r.a.y, r.a.z, r.psi, r.psi_dot];
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn psi_d(&self) -> f64 {
        self.psi_d
    }

    /// Configured reference speed.
    pub fn nominal_speed(&self) -> f64 {
        match self.path {
            Path::Circle { radius, omega, .. } => radius * omega,
            Path::Turn90 { speed, .. } => speed,
            Path::Hover { .. } => 0.0,
        }
    }

    /// Map an arbitrary parameter into the domain: wrap when closed,
    /// clamp otherwise.
    pub fn normalize_tau(&self, tau: f64) -> f64 {
        if tau >= self.tau_min && tau < self.tau_max {
            return tau;
        }
        if self.closed {
            let period = self.tau_max - self.tau_min;
            let t = self.tau_min + (tau - self.tau_min).rem_euclid(period);
            if t >= self.tau_max {
                self.tau_min
            } else {
                t
            }
        } else {
            tau.clamp(self.tau_min, self.tau_max)
        }
    }

    /// Signed parameter difference `a - b`, taken modulo the period when
    /// closed.
    pub fn tau_difference(&self, a: f64, b: f64) -> f64 {
        let diff = a - b;
        match self.period() {
            Some(period) => {
                let wrapped = diff.rem_euclid(period);
                if wrapped > period / 2.0 {
                    wrapped - period
                } else {
                    wrapped
                }
            }
            None => diff,
        }
    }

    pub fn eval(&self, tau: f64) -> ReferencePoint {
        let tau = self.normalize_tau(tau);
        let (p, v, a) = match self.path {
            Path::Circle {
                center,
                radius,
                omega,
            } => {
                let (s, c) = (omega * tau).sin_cos();
                (
                    center + Vector3::new(c, s, 0.0) * radius,
                    Vector3::new(-s, c, 0.0) * (radius * omega),
                    Vector3::new(c, s, 0.0) * (-radius * omega * omega),
                )
            }
            Path::Turn90 {
                start,
                leg,
                fillet,
                speed,
            } => turn90_point(start, leg, fillet, speed, tau * speed),
            Path::Hover { position } => (position, Vector3::zeros(), Vector3::zeros()),
        };
        ReferencePoint {
            p,
            v,
            a,
            psi: self.psi_d,
            psi_dot: 0.0,
        }
    }

    /// Euclidean distance from `p` to the geometric path.
    pub fn path_distance(&self, p: &Vector3<f64>) -> f64 {
        match self.path {
            Path::Circle { center, radius, .. } => {
                let d = p - center;
                let rho = d.x.hypot(d.y);
                (rho - radius).hypot(d.z)
            }
            Path::Turn90 {
                start, leg, fillet, ..
            } => {
                let corner = start + Vector3::new(leg, 0.0, 0.0);
                let arc_end = start + Vector3::new(leg + fillet, fillet, 0.0);
                let end = arc_end + Vector3::new(0.0, leg, 0.0);
                let d1 = segment_distance(p, &start, &corner);
                let d2 = segment_distance(p, &arc_end, &end);
                let center = start + Vector3::new(leg, fillet, 0.0);
                let rel = p - center;
                // Arc angle measured from -y toward +x, spanning [0, pi/2].
                let angle = rel.x.atan2(-rel.y);
                let d3 = if (0.0..=FRAC_PI_2).contains(&angle) {
                    (rel.x.hypot(rel.y) - fillet).hypot(rel.z)
                } else {
                    f64::INFINITY
                };
                d1.min(d2).min(d3)
            }
            Path::Hover { position } => (p - position).norm(),
        }
    }
}

impl Reference for Maneuver {
    fn eval(&self, tau: f64) -> ReferencePoint {
        Maneuver::eval(self, tau)
    }

    fn domain(&self) -> (f64, f64) {
        (self.tau_min, self.tau_max)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.path {
            Path::Turn90 {
                leg, fillet, speed, ..
            } => vec![leg / speed, (leg + FRAC_PI_2 * fillet) / speed],
            _ => Vec::new(),
        }
    }
}

fn turn90_point(
    start: Vector3<f64>,
    leg: f64,
    fillet: f64,
    speed: f64,
    s: f64,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let arc_len = FRAC_PI_2 * fillet;
    if s <= leg {
        (
            start + Vector3::new(s, 0.0, 0.0),
            Vector3::new(speed, 0.0, 0.0),
            Vector3::zeros(),
        )
    } else if s <= leg + arc_len {
        let alpha = (s - leg) / fillet;
        let (sa, ca) = alpha.sin_cos();
        let center = start + Vector3::new(leg, fillet, 0.0);
        (
            center + Vector3::new(sa, -ca, 0.0) * fillet,
            Vector3::new(ca, sa, 0.0) * speed,
            Vector3::new(-sa, ca, 0.0) * (speed * speed / fillet),
        )
    } else {
        let along = s - leg - arc_len;
        (
            start + Vector3::new(leg + fillet, fillet + along, 0.0),
            Vector3::new(0.0, speed, 0.0),
            Vector3::zeros(),
        )
    }
}

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub max_deviation: f64,
    pub at_tau: f64,
    pub checked: usize,
}

/// Central-difference check of `v ≈ dp/dτ` and `a ≈ dv/dτ`.
///
/// Nodes are spaced `dt` apart; nodes closer than `dt` to an
/// acceleration breakpoint are skipped.
pub fn validate_derivatives<R: Reference + ?Sized>(
    reference: &R,
    dt: f64,
    tol: f64,
) -> Result<DerivativeReport> {
    let (lo, hi) = reference.domain();
    if !(dt > 0.0) || hi - lo <= 2.0 * dt {
        return Err(Error::InvalidManeuver(format!(
            "difference step {dt} too large for domain [{lo}, {hi}]"
        )));
    }
    let breaks = reference.breakpoints();
    let n = ((hi - lo) / dt).floor() as usize;
    let mut report = DerivativeReport {
        max_deviation: 0.0,
        at_tau: lo,
        checked: 0,
    };
    let mut offending = Vec::new();
    for k in 1..n {
        let tau = lo + k as f64 * dt;
        if tau + dt > hi || breaks.iter().any(|b| (tau - b).abs() <= dt) {
            continue;
        }
        let before = reference.eval(tau - dt);
        let here = reference.eval(tau);
        let after = reference.eval(tau + dt);
        let dp = (after.p - before.p) / (2.0 * dt);
        let dv = (after.v - before.v) / (2.0 * dt);
        let dpsi = (after.psi - before.psi) / (2.0 * dt);
        let dev = (dp - here.v)
            .amax()
            .max((dv - here.a).amax())
            .max((dpsi - here.psi_dot).abs());
        report.checked += 1;
        if dev > report.max_deviation {
            report.max_deviation = dev;
            report.at_tau = tau;
        }
        if dev > tol {
            offending.push(tau);
        }
    }
    if offending.is_empty() {
        Ok(report)
    } else {
        Err(Error::InconsistentDerivatives {
            max_deviation: report.max_deviation,
            at_tau: report.at_tau,
            offending,
        })
    }
}

/// Open-loop input that reproduces the reference exactly: the virtual
/// acceleration is the reference acceleration and the yaw rate input is the
/// reference yaw rate.
pub fn nominal_input(reference: &ReferencePoint, params: &VehicleParams) -> Result<ControlInput> {
    invert_acceleration(&reference.a, reference.psi_dot, reference.psi, params)
}
