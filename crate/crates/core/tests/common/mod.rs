#![allow(dead_code)]

use manreg_core::harness::{ControllerMode, Scenario, TraceLog};

pub const CIRCLE: &str = r#"{"kind": "circle", "radius": 0.25, "speed": 0.1, "center": [0.0, 0.0, -1.0]}"#;
pub const TURN: &str = r#"{"kind": "turn90", "speed": 0.2, "start": [0.5, 0.0, -1.0]}"#;

/// Scenario from a maneuver JSON snippet plus extra top-level fields.
pub fn scenario(maneuver: &str, mode: ControllerMode, duration: f64, extra: &str) -> Scenario {
    let mode = match mode {
        ControllerMode::Tracking => "tracking",
        ControllerMode::Regulation => "regulation",
    };
    let extra = if extra.is_empty() { String::new() } else { format!(", {extra}") };
    let text = format!(r#"{{"maneuver": {maneuver}, "mode": "{mode}", "duration": {duration}{extra}}}"#);
    Scenario::from_json(&text).unwrap_or_else(|e| panic!("bad test scenario {text}: {e}"))
}

pub fn on_maneuver(tau: f64, offset: [f64; 3]) -> String {
    format!(
        r#""initial": {{"kind": "on_maneuver", "tau": {tau}, "position_offset": [{}, {}, {}]}}"#,
        offset[0], offset[1], offset[2]
    )
}

pub fn position_error(trace: &TraceLog) -> Vec<f64> {
    trace.records.iter().map(|r| (r.x.p - r.reference.p).norm()).collect()
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (slope, intercept, 1.0 - ss_res / syy)
}
