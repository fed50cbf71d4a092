//! Scenario orchestration: closed-loop rollouts with hold and drag
//! disturbances, traces, metrics and tracking-vs-regulation comparisons.

pub mod metrics;
pub mod plotdata;
pub mod trace;

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    saturate, step, AttitudeState, ControlInput, DisturbanceInput, ReducedState, StateVector, VehicleParams,
};
use crate::error::{Error, Result};
use crate::lyapunov::{certify, LyapunovCertificate};
use crate::maneuver::{nominal_input, Maneuver, ManeuverSpec};
use crate::regulation::{regulation_control, Metric, ProjectionConfig, ProjectionState};
use crate::tracking::{feedback_linearize, tracking_virtual_input, update_integrator, Gains, IntegratorState};

pub use metrics::Metrics;
pub use trace::{TraceLog, TraceRecord, TRACE_HEADER};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Tracking,
    Regulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// Lyapunov solution of the 7-state closed loop with `Q = I`.
    Lyapunov,
    Diagonal { weights: [f64; 7] },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSpec {
    pub metric: MetricSpec,
    pub window_halfwidth: f64,
    pub refine_tol: f64,
    pub grid_step: f64,
    pub forward_only: bool,
    pub tube_threshold: Option<f64>,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self {
            metric: MetricSpec::Lyapunov,
            window_halfwidth: 1.0,
            refine_tol: 1e-5,
            grid_step: crate::maneuver::DEFAULT_GRID_STEP,
            forward_only: false,
            tube_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldSpec {
    /// Defaults to the maneuver start position.
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    #[serde(default)]
    pub start: f64,
    pub release: f64,
    /// Stop integrating the position error while held.
    #[serde(default = "yes")]
    pub freeze_integrator: bool,
}

fn yes() -> bool {
    true
}

/// Resolved hold window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hold {
    pub point: Vector3<f64>,
    pub start: f64,
    pub release: f64,
}

impl Hold {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.release
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragSpec {
    /// Friction force, N. Exactly one of `magnitude` and `authority_fraction`.
    #[serde(default)]
    pub magnitude: Option<f64>,
    /// Friction force as a fraction of the vehicle's lateral authority.
    #[serde(default)]
    pub authority_fraction: Option<f64>,
    /// Velocity regularization, m/s.
    #[serde(default = "default_drag_epsilon")]
    pub epsilon: f64,
    #[serde(default = "yes")]
    pub horizontal_only: bool,
}

fn default_drag_epsilon() -> f64 {
    0.01
}

/// Resolved regularized Coulomb drag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drag {
    /// N
    pub magnitude: f64,
    pub epsilon: f64,
    pub horizontal_only: bool,
}

impl DragSpec {
    pub fn resolve(&self, params: &VehicleParams) -> Result<Drag> {
        let magnitude = match (self.magnitude, self.authority_fraction) {
            (Some(m), None) => m,
            (None, Some(frac)) => frac * params.m * params.lateral_authority(),
            _ => {
                return Err(Error::Scenario(
                    "drag needs exactly one of magnitude or authority_fraction".into(),
                ))
            }
        };
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::Scenario("drag magnitude must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Scenario("drag epsilon must be positive".into()));
        }
        Ok(Drag {
            magnitude,
            epsilon: self.epsilon,
            horizontal_only: self.horizontal_only,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// At rest at the maneuver start position, yaw at its reference.
    HoverAtStart,
    /// The reference state at `tau` shifted by a position offset.
    OnManeuver {
        tau: f64,
        #[serde(default)]
        position_offset: [f64; 3],
    },
    Explicit {
        p: [f64; 3],
        #[serde(default)]
        v: [f64; 3],
        #[serde(default)]
        psi: f64,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::HoverAtStart
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    /// Plant integration step, s.
    pub plant_dt: f64,
    /// Plant steps per controller update.
    pub control_divider: u32,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            plant_dt: 0.002,
            control_divider: 5,
        }
    }
}

impl Timing {
    pub fn control_dt(&self) -> f64 {
        self.plant_dt * self.control_divider as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "scenario_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub maneuver: ManeuverSpec,
    pub mode: ControllerMode,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub projection: ProjectionSpec,
    #[serde(default)]
    pub vehicle: VehicleParams,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub hold: Option<HoldSpec>,
    #[serde(default)]
    pub drag: Option<DragSpec>,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub seed: u64,
    /// Uniform position jitter added to the initial state, m (drawn from `seed`).
    #[serde(default)]
    pub initial_jitter: f64,
    #[serde(default)]
    pub timing: Timing,
    /// Path deviation that marks a run as diverged, m.
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    /// End the rollout once an open maneuver has been traversed.
    #[serde(default = "yes")]
    pub stop_at_end: bool,
}

fn scenario_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

fn default_divergence() -> f64 {
    5.0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn with_mode(&self, mode: ControllerMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported scenario schema_version {}",
                self.schema_version
            )));
        }
        self.vehicle.validate()?;
        self.gains.validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Scenario("duration must be nonnegative".into()));
        }
        if let Some(h) = &self.hold {
            if !(h.release > h.start) {
                return Err(Error::Scenario("hold release must come after its start".into()));
            }
            if !(h.release < self.duration) {
                return Err(Error::Scenario("hold release must precede the end of the run".into()));
            }
        }
        if let Some(d) = &self.drag {
            d.resolve(&self.vehicle)?;
        }
        if !(self.timing.plant_dt > 0.0) || self.timing.control_divider == 0 {
            return Err(Error::Scenario("invalid timing".into()));
        }
        if !(self.initial_jitter >= 0.0) {
            return Err(Error::Scenario("initial_jitter must be nonnegative".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Scenario("divergence_threshold must be positive".into()));
        }
        self.maneuver.build()?;
        Ok(())
    }

    /// Lyapunov certificate for the scenario gains; for integral action the
    /// augmented loop is certified too.
    pub fn certificate(&self) -> Result<LyapunovCertificate> {
        if self.gains.has_integral() {
            certify(&self.gains, true, None)?;
        }
        certify(&self.gains, false, None)
    }

    pub fn projection_config(&self) -> Result<ProjectionConfig> {
        let spec = &self.projection;
        let metric = match &spec.metric {
            MetricSpec::Lyapunov => ProjectionConfig::from_certificate(&self.certificate()?)?.metric,
            MetricSpec::Diagonal { weights } => Metric::from_diagonal(&StateVector::from_column_slice(weights)),
            MetricSpec::Matrix { rows } => {
                if rows.len() != 7 || rows.iter().any(|r| r.len() != 7) {
                    return Err(Error::Scenario("projection metric must be 7x7".into()));
                }
                Metric::from_fn(|i, j| rows[i][j])
            }
        };
        let cfg = ProjectionConfig {
            metric,
            window_halfwidth: spec.window_halfwidth,
            refine_tol: spec.refine_tol,
            grid_step: spec.grid_step,
            forward_only: spec.forward_only,
            tube_threshold: spec.tube_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Position pinned and velocity zeroed while the hold is active.
pub fn apply_hold(x: &ReducedState, hold: Option<&Hold>, t: f64) -> ReducedState {
    match hold {
        Some(h) if h.active(t) => crate::dynamics::clamp_to_hold(x, &h.point),
        _ => *x,
    }
}

/// Regularized Coulomb friction opposing the (horizontal) velocity, as a
/// specific force.
pub fn drag_force(v: &Vector3<f64>, drag: &Drag, params: &VehicleParams) -> DisturbanceInput {
    let mut vh = *v;
    if drag.horizontal_only {
        vh.z = 0.0;
    }
    let force = -vh * (drag.magnitude / params.m) / (vh.norm() + drag.epsilon);
    DisturbanceInput::force(force)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TraceLog,
    pub metrics: Metrics,
}

struct Rollout<'a> {
    scenario: &'a Scenario,
    maneuver: Maneuver,
    params: VehicleParams,
    projection: ProjectionConfig,
    hold: Option<Hold>,
    drag: Option<Drag>,
    tau0: f64,
}

impl<'a> Rollout<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let projection = scenario.projection_config()?;
        let maneuver = scenario.maneuver.build()?.with_grid_step(projection.grid_step)?;
        let params = scenario.vehicle;
        let hold = scenario.hold.map(|h| Hold {
            point: h
                .position
                .map(Vector3::from)
                .unwrap_or_else(|| maneuver.eval(maneuver.tau_min()).p),
            start: h.start,
            release: h.release,
        });
        let drag = scenario.drag.map(|d| d.resolve(&params)).transpose()?;
        let tau0 = match scenario.initial {
            InitialCondition::OnManeuver { tau, .. } => tau,
            _ => maneuver.tau_min(),
        };
        Ok(Self {
            scenario,
            maneuver,
            params,
            projection,
            hold,
            drag,
            tau0,
        })
    }

    fn initial_state(&self) -> ReducedState {
        let m = &self.maneuver;
        let mut x = match self.scenario.initial {
            InitialCondition::HoverAtStart => {
                let r = m.eval(m.tau_min());
                ReducedState::new(r.p, Vector3::zeros(), r.psi)
            }
            InitialCondition::OnManeuver { tau, position_offset } => {
                let mut s = m.eval(tau).state();
                s.p += Vector3::from(position_offset);
                s
            }
            InitialCondition::Explicit { p, v, psi } => ReducedState::new(p.into(), v.into(), psi),
        };
        if self.scenario.initial_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
            let j = self.scenario.initial_jitter;
            for c in x.p.iter_mut() {
                *c += rng.random_range(-j..=j);
            }
        }
        apply_hold(&x, self.hold.as_ref(), 0.0)
    }

    fn disturbance(&self, x: &ReducedState, t: f64) -> DisturbanceInput {
        let mut d = match &self.drag {
            Some(drag) => drag_force(&x.v, drag, &self.params),
            None => DisturbanceInput::none(),
        };
        if let Some(h) = self.hold.as_ref().filter(|h| h.active(t)) {
            d.hold = Some(h.point);
        }
        d
    }

    fn run(&self) -> Result<RunOutput> {
        let s = self.scenario;
        let m = &self.maneuver;
        let params = &self.params;
        let gains = &s.gains;
        let timing = s.timing;
        let dt_c = timing.control_dt();
        let n_steps = if s.duration > 0.0 {
            ((s.duration - 1e-9) / dt_c).floor() as usize + 1
        } else {
            0
        };

        let mut x = self.initial_state();
        let mut att = AttitudeState::default();
        if let Ok(u0) = nominal_input(&m.eval(self.tau0), params) {
            att = AttitudeState {
                phi: u0.phi,
                theta: u0.theta,
            };
        }
        let mut eta = IntegratorState::default();
        let mut proj_state = ProjectionState::default();
        let mut trace = TraceLog::default();
        let mut diverged = false;
        let mut completed = false;
        let mut failure = None;
        let freeze = s.hold.map(|h| h.freeze_integrator).unwrap_or(false);

        for k in 0..n_steps {
            let t = k as f64 * dt_c;
            if !x.is_finite() || m.path_distance(&x.p) > s.divergence_threshold {
                diverged = true;
                break;
            }
            let z = x.to_vector();
            let step_result = match s.mode {
                ControllerMode::Tracking => {
                    let tau = m.normalize_tau(self.tau0 + t);
                    let reference = m.eval(tau);
                    let mu = tracking_virtual_input(&x, &reference, gains, &eta, params);
                    feedback_linearize(&mu, x.psi, params).map(|u| {
                        let e = z - reference.state_vector();
                        let dist_sq = (e.transpose() * self.projection.metric * e)[(0, 0)];
                        (u, tau, reference, mu, dist_sq)
                    })
                }
                ControllerMode::Regulation => regulation_control(
                    &x,
                    m,
                    gains,
                    &eta,
                    &self.projection,
                    &mut proj_state,
                    params,
                )
                .map(|(u, diag)| {
                    (u, diag.projection.tau_star, diag.reference, diag.mu, diag.projection.dist_sq)
                }),
            };
            let (u_raw, tau, reference, mu, dist_sq) = match step_result {
                Ok(v) => v,
                Err(e) => {
                    diverged = true;
                    failure = Some(e.to_string());
                    break;
                }
            };
            let (u, sat) = saturate(&u_raw, params);
            trace.records.push(TraceRecord {
                t,
                tau,
                x,
                reference,
                mu_p: mu.mu_p,
                mu_psi: mu.mu_psi,
                u,
                sat,
                disturbance: self.disturbance(&x, t).force,
                dist_sq,
                eta: eta.eta_p,
            });

            if s.stop_at_end && !m.closed() {
                let at_end = match s.mode {
                    ControllerMode::Tracking => self.tau0 + t >= m.tau_max(),
                    ControllerMode::Regulation => tau >= m.tau_max() - s.projection.refine_tol,
                };
                if at_end {
                    completed = true;
                    break;
                }
            }

            let held = self.hold.as_ref().is_some_and(|h| h.active(t));
            if gains.has_integral() && !(held && freeze) {
                eta = update_integrator(&eta, &(x.p - reference.p), dt_c, gains);
            }

            for j in 0..timing.control_divider {
                let tp = t + j as f64 * timing.plant_dt;
                att.advance(&u, timing.plant_dt, params.attitude_lag_tau);
                let applied: ControlInput = att.realize(&u);
                let d = self.disturbance(&x, tp);
                match step(&x, &applied, &d, timing.plant_dt, params) {
                    Ok(next) => x = next,
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            if failure.is_some() {
                diverged = true;
                break;
            }
        }

        let mut metrics = Metrics::from_trace(&trace, m);
        metrics.diverged = diverged;
        metrics.completed = completed;
        metrics.failure = failure;
        Ok(RunOutput { trace, metrics })
    }
}

/// Deterministic closed-loop rollout: plant at `timing.plant_dt`, controller
/// every `timing.control_divider` plant steps.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    Rollout::new(scenario)?.run()
}

/// Geometric path and resolved maneuver of a scenario, for post-hoc analysis.
pub fn scenario_maneuver(scenario: &Scenario) -> Result<Maneuver> {
    scenario.maneuver.build()?.with_grid_step(scenario.projection.grid_step)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ratios {
    pub peak_speed: Option<f64>,
    pub peak_thrust: Option<f64>,
    pub max_path_deviation: Option<f64>,
    pub saturation_duty: Option<f64>,
    pub mean_speed: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdicts {
    pub regulation_peak_speed_lower: bool,
    pub regulation_path_deviation_lower: bool,
    pub regulation_saturation_lower_or_equal: bool,
    pub tracking_diverged: bool,
    pub regulation_diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub schema_version: u32,
    pub name: String,
    pub tracking: Metrics,
    pub regulation: Metrics,
    /// Tracking value over regulation value.
    pub ratios: Ratios,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub tracking: RunOutput,
    pub regulation: RunOutput,
    pub summary: ComparisonSummary,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn without_mode(s: &Scenario) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(s)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("mode");
        obj.remove("name");
    }
    Ok(v)
}

/// Run a tracking and a regulation scenario that differ only in mode.
pub fn compare(s_tracking: &Scenario, s_regulation: &Scenario) -> Result<Comparison> {
    if s_tracking.mode != ControllerMode::Tracking || s_regulation.mode != ControllerMode::Regulation {
        return Err(Error::ScenarioMismatch(format!(
            "expected tracking vs regulation, got {:?} vs {:?}",
            s_tracking.mode, s_regulation.mode
        )));
    }
    if without_mode(s_tracking)? != without_mode(s_regulation)? {
        return Err(Error::ScenarioMismatch(
            "scenarios differ in fields other than mode".into(),
        ));
    }
    let tracking = run_scenario(s_tracking)?;
    let regulation = run_scenario(s_regulation)?;
    let (t, r) = (&tracking.metrics, &regulation.metrics);
    let summary = ComparisonSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        name: s_regulation.name.clone(),
        ratios: Ratios {
            peak_speed: ratio(t.peak_speed, r.peak_speed),
            peak_thrust: ratio(t.peak_thrust, r.peak_thrust),
            max_path_deviation: ratio(t.max_path_deviation, r.max_path_deviation),
            saturation_duty: ratio(t.saturation_duty, r.saturation_duty),
            mean_speed: ratio(t.mean_speed, r.mean_speed),
        },
        verdicts: Verdicts {
            regulation_peak_speed_lower: r.peak_speed < t.peak_speed,
            regulation_path_deviation_lower: r.max_path_deviation < t.max_path_deviation,
            regulation_saturation_lower_or_equal: r.saturation_duty <= t.saturation_duty,
            tracking_diverged: t.diverged,
            regulation_diverged: r.diverged,
        },
        tracking: t.clone(),
        regulation: r.clone(),
    };
    Ok(Comparison {
        tracking,
        regulation,
        summary,
    })
}

impl Comparison {
    /// Writes `tracking_trace.csv`, `regulation_trace.csv` and `summary.json`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let dir = out_dir.as_ref();
        fs::create_dir_all(dir)?;
        self.tracking.trace.write_csv(fs::File::create(dir.join("tracking_trace.csv"))?)?;
        self.regulation
            .trace
            .write_csv(fs::File::create(dir.join("regulation_trace.csv"))?)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    schema_version: u32,
    name: &'a str,
    mode: ControllerMode,
    metrics: &'a Metrics,
}

impl RunOutput {
    /// Writes `trace.csv`, `metrics.json` and the sampled `maneuver.csv`.
    pub fn write(&self, scenario: &Scenario, out_dir: impl AsRef<Path>) -> Result<()> {
        let dir = out_dir.as_ref();
        fs::create_dir_all(dir)?;
        self.trace.write_csv(fs::File::create(dir.join("trace.csv"))?)?;
        scenario_maneuver(scenario)?.write_table_csv(fs::File::create(dir.join("maneuver.csv"))?)?;
        let file = MetricsFile {
            schema_version: SUMMARY_SCHEMA_VERSION,
            name: &scenario.name,
            mode: scenario.mode,
            metrics: &self.metrics,
        };
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_scenario(mode: ControllerMode) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{
                "maneuver": {{"kind": "circle", "radius": 0.25, "speed": 0.1, "center": [0.0, 0.0, -1.0]}},
                "mode": "{}",
                "duration": 3.0
            }}"#,
            if mode == ControllerMode::Tracking { "tracking" } else { "regulation" }
        ))
        .unwrap()
    }

    #[test]
    fn hold_semantics() {
        let hold = Hold {
            point: Vector3::new(0.25, 0.0, -1.0),
            start: 0.0,
            release: 5.0,
        };
        let x = ReducedState::new(Vector3::new(0.3, 0.1, -0.9), Vector3::new(0.1, 0.0, 0.0), 0.2);
        let held = apply_hold(&x, Some(&hold), 1.0);
        assert_eq!(held.p, hold.point);
        assert_eq!(held.v, Vector3::zeros());
        assert_eq!(held.psi, 0.2);
        assert_eq!(apply_hold(&x, Some(&hold), 5.0), x);
        assert_eq!(apply_hold(&x, None, 1.0), x);
    }

    #[test]
    fn drag_semantics() {
        let params = VehicleParams::default();
        let drag = Drag {
            magnitude: 0.02,
            epsilon: 0.01,
            horizontal_only: true,
        };
        assert_eq!(drag_force(&Vector3::zeros(), &drag, &params).force, Vector3::zeros());
        let d = drag_force(&Vector3::new(100.0, 0.0, 5.0), &drag, &params).force;
        assert!((d.norm() - 0.02 / 0.03).abs() < 1e-3);
        assert!(d.x < 0.0);
        assert_eq!(d.z, 0.0);
    }

    #[test]
    fn drag_spec_resolution() {
        let params = VehicleParams::default();
        let spec = DragSpec {
            magnitude: None,
            authority_fraction: Some(0.3),
            epsilon: 0.01,
            horizontal_only: true,
        };
        let d = spec.resolve(&params).unwrap();
        assert!((d.magnitude - 0.3 * 0.03 * params.lateral_authority()).abs() < 1e-15);
        let both = DragSpec {
            magnitude: Some(0.1),
            ..spec
        };
        assert!(both.resolve(&params).is_err());
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let mut s = circle_scenario(ControllerMode::Regulation);
        s.duration = 0.0;
        let out = run_scenario(&s).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.metrics.n_records, 0);
        assert_eq!(out.metrics.peak_speed, 0.0);
        assert!(out.metrics.settling_time.is_none());
        assert!(!out.metrics.diverged);
    }

    #[test]
    fn trace_has_uniform_control_grid() {
        let out = run_scenario(&circle_scenario(ControllerMode::Tracking)).unwrap();
        assert_eq!(out.trace.len(), 300);
        for (k, r) in out.trace.records.iter().enumerate() {
            assert!((r.t - k as f64 * 0.01).abs() < 1e-12);
            assert_eq!(r.tau, r.t);
        }
    }

    #[test]
    fn compare_guards_modes_and_fields() {
        let t = circle_scenario(ControllerMode::Tracking);
        let r = circle_scenario(ControllerMode::Regulation);
        assert!(matches!(compare(&r, &r), Err(Error::ScenarioMismatch(_))));
        assert!(matches!(compare(&t, &t), Err(Error::ScenarioMismatch(_))));
        let mut other = r.clone();
        other.duration = 4.0;
        assert!(matches!(compare(&t, &other), Err(Error::ScenarioMismatch(_))));
        assert!(compare(&t, &r).is_ok());
    }

    #[test]
    fn scenario_validation() {
        let mut s = circle_scenario(ControllerMode::Tracking);
        s.hold = Some(HoldSpec {
            position: None,
            start: 0.0,
            release: 10.0,
            freeze_integrator: true,
        });
        assert!(s.validate().is_err());
        let bad = r#"{"maneuver": {"kind": "circle", "radius": 0.25, "speed": 0.1, "center": [0,0,-1]},
                      "mode": "tracking", "duration": 1.0, "schema_version": 7}"#;
        assert!(Scenario::from_json(bad).is_err());
        let unknown = r#"{"maneuver": {"kind": "circle", "radius": 0.25, "speed": 0.1, "center": [0,0,-1]},
                          "mode": "tracking", "duration": 1.0, "bogus": 1}"#;
        assert!(Scenario::from_json(unknown).is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let mut s = circle_scenario(ControllerMode::Regulation);
        s.initial_jitter = 0.01;
        s.seed = 7;
        let a = Rollout::new(&s).unwrap().initial_state();
        let b = Rollout::new(&s).unwrap().initial_state();
        assert_eq!(a, b);
        s.seed = 8;
        let c = Rollout::new(&s).unwrap().initial_state();
        assert_ne!(a, c);
        assert!((a.p - Vector3::new(0.25, 0.0, -1.0)).amax() <= 0.01);
    }
}
