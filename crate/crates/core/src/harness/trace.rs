//! Per-step rollout records and their CSV form.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector3;

use crate::dynamics::{ControlInput, ReducedState, SaturationFlags};
use crate::error::{Error, Result};
use crate::maneuver::ReferencePoint;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// First line of every trace file.
pub fn schema_line() -> String {
    format!("# manreg-trace schema_version={TRACE_SCHEMA_VERSION}")
}

pub const TRACE_HEADER: [&str; 37] = [
    "t", "tau", "p1", "p2", "p3", "v1", "v2", "v3", "psi", "pd1", "pd2", "pd3", "vd1", "vd2", "vd3", "ad1",
    "ad2", "ad3", "psid", "psidotd", "mu1", "mu2", "mu3", "mupsi", "f", "phi_cmd", "theta_cmd", "sat_f",
    "sat_phi", "sat_theta", "d1", "d2", "d3", "dist_sq", "eta1", "eta2", "eta3",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    /// Reference parameter: projected in regulation mode, wall-clock in tracking mode.
    pub tau: f64,
    pub x: ReducedState,
    pub reference: ReferencePoint,
    pub mu_p: Vector3<f64>,
    pub mu_psi: f64,
    /// Command after saturation.
    pub u: ControlInput,
    pub sat: SaturationFlags,
    pub disturbance: Vector3<f64>,
    pub dist_sq: f64,
    pub eta: Vector3<f64>,
}

impl TraceRecord {
    fn to_values(&self) -> [f64; 37] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let r = &self.reference;
        [
            self.t,
            self.tau,
            self.x.p.x,
            self.x.p.y,
            self.x.p.z,
            self.x.v.x,
            self.x.v.y,
            self.x.v.z,
            self.x.psi,
            r.p.x,
            r.p.y,
            r.p.z,
            r.v.x,
            r.v.y,
            r.v.z,
            r.a.x,
            r.a.y,
            r.a.z,
            r.psi,
            r.psi_dot,
            self.mu_p.x,
            self.mu_p.y,
            self.mu_p.z,
            self.mu_psi,
            self.u.f,
            self.u.phi,
            self.u.theta,
            b(self.sat.thrust),
            b(self.sat.roll),
            b(self.sat.pitch),
            self.disturbance.x,
            self.disturbance.y,
            self.disturbance.z,
            self.dist_sq,
            self.eta.x,
            self.eta.y,
            self.eta.z,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        let v3 = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
        TraceRecord {
            t: v[0],
            tau: v[1],
            x: ReducedState::new(v3(2), v3(5), v[8]),
            reference: ReferencePoint {
                p: v3(9),
                v: v3(12),
                a: v3(15),
                psi: v[18],
                psi_dot: v[19],
            },
            mu_p: v3(20),
            mu_psi: v[23],
            u: ControlInput::new(v[24], v[25], v[26], v[23]),
            sat: SaturationFlags {
                thrust: v[27] != 0.0,
                roll: v[28] != 0.0,
                pitch: v[29] != 0.0,
            },
            disturbance: v3(30),
            dist_sq: v[33],
            eta: v3(34),
        }
    }

    pub fn speed(&self) -> f64 {
        self.x.v.norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", schema_line())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for rec in &self.records {
            w.write_record(rec.to_values().iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Trace(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let first = first.trim_end();
        if first != schema_line() {
            return Err(Error::Trace(format!(
                "unsupported trace schema line {first:?}, expected {:?}",
                schema_line()
            )));
        }
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != TRACE_HEADER {
            return Err(Error::Trace(format!("unexpected trace header {header:?}")));
        }
        let mut records = Vec::new();
        for row in r.records() {
            let row = row?;
            let values = row
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Trace(format!("bad value {s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != TRACE_HEADER.len() {
                return Err(Error::Trace(format!("row has {} columns", values.len())));
            }
            records.push(TraceRecord::from_values(&values));
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(seed: [f64; 8]) -> TraceRecord {
        TraceRecord {
            t: seed[0].abs(),
            tau: seed[1],
            x: ReducedState::new(Vector3::new(seed[2], seed[3], seed[4]), Vector3::new(seed[5], seed[6], seed[7]), seed[1]),
            reference: ReferencePoint::hover(Vector3::new(seed[7], seed[6], seed[5]), 0.0),
            mu_p: Vector3::new(seed[4], seed[3], seed[2]),
            mu_psi: seed[0],
            u: ControlInput::new(seed[2].abs(), seed[3], seed[4], seed[0]),
            sat: SaturationFlags {
                thrust: seed[5] > 0.0,
                roll: false,
                pitch: seed[6] > 0.0,
            },
            disturbance: Vector3::new(seed[1], 0.0, seed[2]),
            dist_sq: seed[3] * seed[3],
            eta: Vector3::new(seed[7], seed[1], seed[0]),
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(seed in prop::array::uniform8(-1e3f64..1e3)) {
            let log = TraceLog { records: vec![record(seed), record(seed.map(|v| v * 0.5))] };
            let text = log.to_csv_string().unwrap();
            let back = TraceLog::read_csv(text.as_bytes()).unwrap();
            prop_assert_eq!(back, log);
        }
    }

    #[test]
    fn header_is_fixed() {
        let text = TraceLog::default().to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# manreg-trace schema_version=1");
        assert_eq!(lines.next().unwrap(), TRACE_HEADER.join(","));
    }

    #[test]
    fn rejects_wrong_schema() {
        let text = "# manreg-trace schema_version=99\nt\n";
        assert!(TraceLog::read_csv(text.as_bytes()).is_err());
        let text = format!("{}\nt,tau\n", schema_line());
        assert!(TraceLog::read_csv(text.as_bytes()).is_err());
    }
}
