//! Maneuver regulation: project the state onto the reference curve and run
//! the tracking law against the projected reference point.

use nalgebra::{DMatrix, SMatrix};

use crate::dynamics::{ControlInput, ReducedState, StateVector, VehicleParams};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovCertificate;
use crate::maneuver::{Maneuver, ReferencePoint};
use crate::tracking::{feedback_linearize, tracking_virtual_input, Gains, IntegratorState, VirtualInput};

pub type Metric = SMatrix<f64, 7, 7>;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// Symmetric positive-definite weighting of the state distance.
    pub metric: Metric,
    pub window_halfwidth: f64,
    pub refine_tol: f64,
    /// Must equal the maneuver's table spacing.
    pub grid_step: f64,
    /// Never let the projected parameter move backwards.
    pub forward_only: bool,
    /// Optional tube level on the squared distance.
    pub tube_threshold: Option<f64>,
}

impl ProjectionConfig {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            window_halfwidth: 1.0,
            refine_tol: 1e-5,
            grid_step: crate::maneuver::DEFAULT_GRID_STEP,
            forward_only: false,
            tube_threshold: None,
        }
    }

    /// Uses the 7-state Lyapunov solution as the metric.
    pub fn from_certificate(cert: &LyapunovCertificate) -> Result<Self> {
        let p = &cert.p;
        if p.nrows() < 7 || p.ncols() < 7 {
            return Err(Error::Dimension(format!("certificate P is {}x{}", p.nrows(), p.ncols())));
        }
        let metric = Metric::from_fn(|i, j| p[(i, j)]);
        let cfg = Self::new(metric);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.metric;
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidProjection("metric is not symmetric".into()));
        }
        let dyn_m = DMatrix::from_fn(7, 7, |i, j| m[(i, j)]);
        if dyn_m.cholesky().is_none() {
            return Err(Error::InvalidProjection("metric is not positive definite".into()));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol < self.grid_step && self.grid_step <= self.window_halfwidth) {
            return Err(Error::InvalidProjection(
                "need 0 < refine_tol < grid_step <= window_halfwidth".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionState {
    pub tau_prev: f64,
    pub initialized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub tau_star: f64,
    pub dist_sq: f64,
    /// Two separate local minima with values within 1% were found.
    pub ambiguous: bool,
    /// `dist_sq` reached the configured tube threshold.
    pub out_of_tube: bool,
}

fn weighted_sq(metric: &Metric, e: &StateVector) -> f64 {
    e.dot(&(metric * e))
}

/// Squared metric distance between `z` and the reference at `tau`.
pub fn distance_sq(z: &StateVector, m: &Maneuver, metric: &Metric, tau: f64) -> f64 {
    weighted_sq(metric, &(z - m.eval(tau).state_vector()))
}

/// Golden-section search for a minimizer of `f` on `[a, b]`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // One parabolic step through the final bracket; kept only if it improves.
    let (fa, fm, fb) = (f(a), f(mid), f(b));
    let h = 0.5 * (b - a);
    let denom = fa - 2.0 * fm + fb;
    if h > 0.0 && denom > 0.0 {
        let vertex = mid + 0.5 * h * (fa - fb) / denom;
        if vertex > a && vertex < b && f(vertex) < fm {
            return vertex;
        }
    }
    mid
}

/// `argmin_tau ||z - z_d(tau)||_P^2`: a coarse scan of the maneuver table
/// (whole curve on the first call, a window around the previous result
/// afterwards) refined by golden-section search.
pub fn project(
    z: &StateVector,
    m: &Maneuver,
    cfg: &ProjectionConfig,
    st: &mut ProjectionState,
) -> Result<Projection> {
    if (cfg.grid_step - m.grid_step()).abs() > 1e-12 {
        return Err(Error::InvalidProjection(format!(
            "projection grid step {} does not match the maneuver table ({})",
            cfg.grid_step,
            m.grid_step()
        )));
    }
    let samples = m.samples();
    let metric = &cfg.metric;
    let (tau_min, tau_max) = (m.tau_min(), m.tau_max());
    let period = m.period();

    // Candidate nodes ordered along the curve, as (offset, index). The offset
    // is an unwrapped parameter used for ordering and refinement.
    let full = !st.initialized || period.is_some_and(|p| 2.0 * cfg.window_halfwidth >= p);
    let mut nodes: Vec<(f64, usize)> = if full {
        samples.iter().enumerate().map(|(i, (tau, _))| (*tau, i)).collect()
    } else {
        let w = cfg.window_halfwidth;
        let tau_prev = st.tau_prev;
        samples
            .iter()
            .enumerate()
            .filter_map(|(i, (tau, _))| {
                let off = m.tau_difference(*tau, tau_prev);
                (off.abs() <= w).then_some((tau_prev + off, i))
            })
            .collect()
    };
    if nodes.is_empty() {
        return Err(Error::EmptyWindow { tau: st.tau_prev });
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let cyclic = full && period.is_some();

    let costs: Vec<f64> = nodes
        .iter()
        .map(|&(_, i)| weighted_sq(metric, &(z - samples[i].1)))
        .collect();
    let n = costs.len();
    let mut best = 0;
    for (k, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = k;
        }
    }

    // Local minima of the scanned profile; window edges do not count.
    let mut minima: Vec<f64> = Vec::new();
    for k in 0..n {
        let (prev, next) = if cyclic {
            (Some(costs[(k + n - 1) % n]), Some(costs[(k + 1) % n]))
        } else {
            (k.checked_sub(1).map(|j| costs[j]), costs.get(k + 1).copied())
        };
        let is_min = match (prev, next) {
            (Some(p), Some(q)) => costs[k] <= p && costs[k] <= q,
            // Open-path endpoints are genuine boundary minima.
            (None, Some(q)) => (!st.initialized || nodes[k].0 <= tau_min + 1e-12) && costs[k] <= q,
            (Some(p), None) => (!st.initialized || nodes[k].0 >= tau_max - 1e-12) && costs[k] <= p,
            (None, None) => true,
        };
        if is_min {
            minima.push(costs[k]);
        }
    }
    minima.sort_by(f64::total_cmp);
    let ambiguous = minima.len() >= 2 && minima[1] > 0.0 && minima[1] <= 1.01 * minima[0];

    // Refinement bracket of one grid step on each side.
    let center = nodes[best].0;
    let h = cfg.grid_step;
    let (mut lo, mut hi) = (center - h, center + h);
    if period.is_none() {
        lo = lo.max(tau_min);
        hi = hi.min(tau_max);
    }
    let cost = |tau: f64| distance_sq(z, m, metric, tau);
    let mut tau_star = if hi > lo {
        let t = golden_section(cost, lo, hi, cfg.refine_tol);
        // The bracket ends are candidates too (open-path endpoints).
        [t, lo, hi]
            .into_iter()
            .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
            .unwrap_or(t)
    } else {
        center
    };
    tau_star = m.normalize_tau(tau_star);

    if cfg.forward_only && st.initialized && m.tau_difference(tau_star, st.tau_prev) < 0.0 {
        tau_star = st.tau_prev;
    }
    let dist_sq = cost(tau_star);
    st.tau_prev = tau_star;
    st.initialized = true;
    Ok(Projection {
        tau_star,
        dist_sq,
        ambiguous,
        out_of_tube: cfg.tube_threshold.is_some_and(|c| dist_sq >= c),
    })
}

/// Exhaustive scan of the whole domain at step `dtau`. Exact ties go to the
/// smaller parameter.
pub fn project_brute_force(z: &StateVector, m: &Maneuver, metric: &Metric, dtau: f64) -> f64 {
    assert!(dtau > 0.0, "dtau must be positive");
    let (lo, hi) = (m.tau_min(), m.tau_max());
    let n = ((hi - lo) / dtau).floor() as usize;
    let mut best_tau = lo;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let tau = lo + k as f64 * dtau;
        if m.closed() && tau >= hi {
            break;
        }
        let c = distance_sq(z, m, metric, tau);
        if c < best {
            best = c;
            best_tau = tau;
        }
    }
    best_tau
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationDiagnostics {
    pub projection: Projection,
    pub reference: ReferencePoint,
    pub mu: VirtualInput,
    /// `z - z_d(tau_star)`
    pub error: StateVector,
}

/// Tracking law evaluated at the projected reference point, followed by the
/// exact inversion. Uses the tracking gains unchanged.
pub fn regulation_control(
    x: &ReducedState,
    m: &Maneuver,
    gains: &Gains,
    eta: &IntegratorState,
    cfg: &ProjectionConfig,
    st: &mut ProjectionState,
    params: &VehicleParams,
) -> Result<(ControlInput, RegulationDiagnostics)> {
    let z = x.to_vector();
    let projection = project(&z, m, cfg, st)?;
    let reference = m.eval(projection.tau_star);
    let mu = tracking_virtual_input(x, &reference, gains, eta, params);
    let u = feedback_linearize(&mu, x.psi, params)?;
    Ok((
        u,
        RegulationDiagnostics {
            projection,
            reference,
            mu,
            error: z - reference.state_vector(),
        },
    ))
}
