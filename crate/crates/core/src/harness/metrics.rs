use serde::{Deserialize, Serialize};

use super::trace::TraceLog;
use crate::maneuver::Maneuver;

/// Tube radius used for the settling time, m.
pub const SETTLING_TUBE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_records: usize,
    /// Time span covered by the trace, s.
    pub duration: f64,
    /// m/s
    pub peak_speed: f64,
    /// m/s
    pub mean_speed: f64,
    /// `1 - mean_speed / v_d`; absent for zero-speed references or empty traces.
    pub speed_deficit: Option<f64>,
    /// N
    pub peak_thrust: f64,
    /// Fraction of controller steps with a saturated thrust command.
    pub saturation_duty: f64,
    /// m
    pub max_path_deviation: f64,
    pub final_path_deviation: f64,
    /// Time after which the path deviation stays below 1 cm.
    pub settling_time: Option<f64>,
    pub diverged: bool,
    /// An open maneuver was traversed to its end.
    pub completed: bool,
    pub failure: Option<String>,
}

impl Metrics {
    /// Metrics of a trace against the geometric path of `maneuver`.
    pub fn from_trace(trace: &TraceLog, maneuver: &Maneuver) -> Self {
        let recs = &trace.records;
        let n = recs.len();
        if n == 0 {
            return Self {
                n_records: 0,
                duration: 0.0,
                peak_speed: 0.0,
                mean_speed: 0.0,
                speed_deficit: None,
                peak_thrust: 0.0,
                saturation_duty: 0.0,
                max_path_deviation: 0.0,
                final_path_deviation: 0.0,
                settling_time: None,
                diverged: false,
                completed: false,
                failure: None,
            };
        }
        let speeds: Vec<f64> = recs.iter().map(|r| r.speed()).collect();
        let deviations: Vec<f64> = recs.iter().map(|r| maneuver.path_distance(&r.x.p)).collect();
        let mean_speed = speeds.iter().sum::<f64>() / n as f64;
        let v_d = maneuver.nominal_speed();
        let settling_time = match deviations.iter().rposition(|&d| d >= SETTLING_TUBE) {
            None => Some(recs[0].t),
            Some(last) if last + 1 < n => Some(recs[last + 1].t),
            Some(_) => None,
        };
        Self {
            n_records: n,
            duration: recs[n - 1].t - recs[0].t,
            peak_speed: speeds.iter().copied().fold(0.0, f64::max),
            mean_speed,
            speed_deficit: (v_d > 0.0).then(|| 1.0 - mean_speed / v_d),
            peak_thrust: recs.iter().map(|r| r.u.f).fold(0.0, f64::max),
            saturation_duty: recs.iter().filter(|r| r.sat.thrust).count() as f64 / n as f64,
            max_path_deviation: deviations.iter().copied().fold(0.0, f64::max),
            final_path_deviation: deviations[n - 1],
            settling_time,
            diverged: false,
            completed: false,
            failure: None,
        }
    }
}
