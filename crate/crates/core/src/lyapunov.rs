//! Closed-loop error dynamics and their quadratic Lyapunov certificate.
//!
//! Error coordinates are ordered `[p(3), v(3), psi, eta(3)]`; the integrator
//! block is present only for the augmented system.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tracking::Gains;

/// Condition estimate above which the Lyapunov solve is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearSystem {
    /// Double integrators on position plus an integrator on yaw, optionally
    /// augmented with `eta_dot = p`.
    pub fn vtol(with_integral: bool) -> Self {
        let n = if with_integral { 10 } else { 7 };
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, 4);
        for i in 0..3 {
            a[(i, 3 + i)] = 1.0;
            b[(3 + i, i)] = 1.0;
            if with_integral {
                a[(7 + i, i)] = 1.0;
            }
        }
        b[(6, 3)] = 1.0;
        Self { a, b }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub system: LinearSystem,
    pub k: DMatrix<f64>,
    pub a_c: DMatrix<f64>,
}

/// Feedback matrix of the tracking law and the resulting `A + B K`.
pub fn build_closed_loop(gains: &Gains, with_integral: bool) -> Result<ClosedLoop> {
    gains.validate()?;
    let system = LinearSystem::vtol(with_integral);
    let n = system.n_states();
    let mut k = DMatrix::zeros(4, n);
    for i in 0..3 {
        k[(i, i)] = -gains.k_p;
        k[(i, 3 + i)] = -gains.k_d;
        if with_integral {
            k[(i, 7 + i)] = -gains.k_i;
        }
    }
    k[(3, 6)] = -gains.k_psi;
    let a_c = &system.a + &system.b * &k;
    Ok(ClosedLoop { system, k, a_c })
}

/// Eigenvalues through a bounded real Schur iteration. The unbounded variant
/// can stall on defective spectra (critically damped gains give repeated
/// poles), so the deflation tolerance is relaxed step by step instead.
pub fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let max_iter = 10_000 * a.nrows().max(1);
    [f64::EPSILON, 1e-14, 1e-12, 1e-10].into_iter().find_map(|eps| {
        Schur::try_new(a.clone(), eps, max_iter).map(|s| s.complex_eigenvalues().iter().copied().collect())
    })
}

/// Largest real part over the eigenvalues; NaN if they cannot be computed.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    let Some(eig) = eigenvalues(a) else {
        return f64::NAN;
    };
    eig.iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Routh test for one axis of the closed loop: `s^2 + k_d s + k_p`, or
/// `s^3 + k_d s^2 + k_p s + k_i` with integral action.
pub fn routh_stable_axis(gains: &Gains, with_integral: bool) -> bool {
    if with_integral {
        gains.k_d > 0.0 && gains.k_p > 0.0 && gains.k_i > 0.0 && gains.k_d * gains.k_p > gains.k_i
    } else {
        gains.k_d > 0.0 && gains.k_p > 0.0
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn symmetric_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Positive definiteness by attempted Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of `A_c^T P + P A_c + Q`.
    pub residual: f64,
    /// Ratio of extreme singular values of the vectorized operator.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Solve `A_c^T P + P A_c = -Q` through the vectorized (Kronecker) linear
/// system.
pub fn solve_lyapunov(a_c: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovSolution> {
    check_square(a_c, "A_c")?;
    check_square(q, "Q")?;
    let n = a_c.nrows();
    if q.nrows() != n {
        return Err(Error::Dimension(format!("A_c is {n}x{n} but Q is {}x{}", q.nrows(), q.ncols())));
    }
    let max_real = spectral_abscissa(a_c);
    if !(max_real < 0.0) {
        return Err(Error::NonHurwitz { max_real });
    }
    if symmetric_defect(q) > 1e-12 * q.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite("Q is not symmetric".into()));
    }
    if !is_positive_definite(q) {
        return Err(Error::NotPositiveDefinite("Q".into()));
    }

    // Column-major vec: vec(A^T P) = (I kron A^T) vec(P), vec(P A) = (A^T kron I) vec(P).
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a_c.transpose();
    let operator = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());

    let singular = operator.clone().singular_values();
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let vec_p = operator.lu().solve(&rhs).ok_or(Error::SingularLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let residual = (a_c.transpose() * &p + &p * a_c + q).norm();
    Ok(LyapunovSolution {
        p,
        residual,
        condition,
        ill_conditioned: condition > ILL_CONDITIONED,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub gains: Gains,
    pub with_integral: bool,
    pub a_c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub min_eig_p: f64,
    pub min_eig_q: f64,
    pub spectral_abscissa: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
    /// No coupling between distinct axes or between position blocks and yaw.
    pub block_diagonal: bool,
}

/// Build the closed loop for `gains`, solve for `P` and check every
/// hypothesis needed to use `P` as the projection metric.
pub fn certify(gains: &Gains, with_integral: bool, q: Option<DMatrix<f64>>) -> Result<LyapunovCertificate> {
    let closed = build_closed_loop(gains, with_integral)?;
    let n = closed.a_c.nrows();
    let q = q.unwrap_or_else(|| DMatrix::identity(n, n));
    let sol = solve_lyapunov(&closed.a_c, &q)?;
    if !is_positive_definite(&sol.p) {
        return Err(Error::NotPositiveDefinite("Lyapunov solution P".into()));
    }
    let q_scale = q.norm();
    if !(sol.residual <= 1e-9 * q_scale) {
        return Err(Error::NotPositiveDefinite(format!(
            "residual {:e} exceeds tolerance",
            sol.residual
        )));
    }
    let block_diagonal = is_block_diagonal(&sol.p, with_integral);
    Ok(LyapunovCertificate {
        gains: *gains,
        with_integral,
        spectral_abscissa: spectral_abscissa(&closed.a_c),
        min_eig_p: min_symmetric_eigenvalue(&sol.p),
        min_eig_q: min_symmetric_eigenvalue(&q),
        a_c: closed.a_c,
        q,
        p: sol.p,
        residual: sol.residual,
        condition: sol.condition,
        ill_conditioned: sol.ill_conditioned,
        block_diagonal,
    })
}

/// Group index of each error coordinate: axis 0..3 for position, velocity
/// and integrator entries of that axis, 3 for yaw.
fn axis_of(i: usize) -> usize {
    match i {
        0..=2 => i,
        3..=5 => i - 3,
        6 => 3,
        _ => i - 7,
    }
}

fn is_block_diagonal(p: &DMatrix<f64>, _with_integral: bool) -> bool {
    let n = p.nrows();
    let scale = p.amax();
    (0..n).all(|i| {
        (0..n).all(|j| axis_of(i) == axis_of(j) || p[(i, j)].abs() <= 1e-12 * scale)
    })
}

#[derive(Debug, Serialize)]
pub struct CertificateReport {
    pub gains: Gains,
    pub with_integral: bool,
    pub n_states: usize,
    pub a_c: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub residual: f64,
    pub min_eig_p: f64,
    pub min_eig_q: f64,
    pub eigenvalues_p: Vec<f64>,
    pub closed_loop_eigenvalues: Vec<[f64; 2]>,
    pub spectral_abscissa: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
    pub block_diagonal: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LyapunovCertificate {
    pub fn report(&self) -> CertificateReport {
        let mut eig_p: Vec<f64> = self.p.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig_p.sort_by(f64::total_cmp);
        let mut eig_a: Vec<[f64; 2]> = eigenvalues(&self.a_c)
            .unwrap_or_default()
            .iter()
            .map(|e| [e.re, e.im])
            .collect();
        eig_a.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        CertificateReport {
            gains: self.gains,
            with_integral: self.with_integral,
            n_states: self.p.nrows(),
            a_c: rows(&self.a_c),
            q: rows(&self.q),
            p: rows(&self.p),
            residual: self.residual,
            min_eig_p: self.min_eig_p,
            min_eig_q: self.min_eig_q,
            eigenvalues_p: eig_p,
            closed_loop_eigenvalues: eig_a,
            spectral_abscissa: self.spectral_abscissa,
            condition: self.condition,
            ill_conditioned: self.ill_conditioned,
            block_diagonal: self.block_diagonal,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report())?)
    }
}
