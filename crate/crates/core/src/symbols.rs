//! Scalar symbols of the conjugated interface operator.
//!
//! On each side of the interface `x_n = 0` the operator is
//! `div(A grad)` with a constant symmetric positive-definite matrix `A`.
//! After conjugation by `exp(tau * phi)` with the piecewise weight
//! `phi(x_n) = alpha * x_n + beta * x_n^2 / 2`, a tangential Fourier mode
//! `xi'` sees the factorization
//!
//! ```text
//! a_nn [ (D_n + s + i tau phi')^2 + m^2 ]
//!   = a_nn (D_n + s + i e)(D_n + s + i f),   e/f = tau phi' +/- m,
//! ```
//!
//! where `m(xi')^2 = <B xi', xi'> / a_nn` and `s(xi') = <t, xi'>` come from
//! [`reduce_coefficients`]. Everything here is closed-form per frequency.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Side of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

/// The two diffusion matrices, `A_plus` for `x_n > 0` and `A_minus` for
/// `x_n < 0`. The last coordinate is the normal one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    pub a_plus: DMatrix<f64>,
    pub a_minus: DMatrix<f64>,
}

impl ModelCoefficients {
    pub fn new(a_plus: DMatrix<f64>, a_minus: DMatrix<f64>) -> Result<Self> {
        let n = a_plus.nrows();
        if n < 2 {
            return Err(LabError::validation("coefficients.dimension", "need n >= 2"));
        }
        if a_minus.shape() != (n, n) || a_plus.ncols() != n {
            return Err(LabError::validation(
                "coefficients",
                format!(
                    "A_plus is {:?}, A_minus is {:?}; both must be n x n",
                    a_plus.shape(),
                    a_minus.shape()
                ),
            ));
        }
        check_spd(&a_plus, "coefficients.plus")?;
        check_spd(&a_minus, "coefficients.minus")?;
        Ok(ModelCoefficients { a_plus, a_minus })
    }

    /// Diagonal coefficients `diag(c_1, ..., c_n)` per side.
    pub fn diagonal(c_plus: &[f64], c_minus: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(c_plus)),
            DMatrix::from_diagonal(&DVector::from_column_slice(c_minus)),
        )
    }

    pub fn dim(&self) -> usize {
        self.a_plus.nrows()
    }

    pub fn matrix(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::Plus => &self.a_plus,
            Side::Minus => &self.a_minus,
        }
    }

    pub fn reduce(&self) -> Result<(ReducedCoefficients, ReducedCoefficients)> {
        Ok((reduce_coefficients(&self.a_plus)?, reduce_coefficients(&self.a_minus)?))
    }
}

fn check_spd(a: &DMatrix<f64>, field: &str) -> Result<()> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(LabError::validation(field, "entries must be finite"));
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(LabError::validation(
                    field,
                    format!("symmetry check failed at ({i}, {j})"),
                ));
            }
        }
    }
    let min_eig = a.clone().symmetric_eigenvalues().min();
    if min_eig <= 0.0 {
        return Err(LabError::validation(
            field,
            format!("positive-definiteness check failed: smallest eigenvalue {min_eig:e}"),
        ));
    }
    Ok(())
}

/// Interface reduction of one coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedCoefficients {
    pub a_nn: f64,
    /// `t_j = a_nj / a_nn`, length `n - 1`.
    pub t: Vec<f64>,
    /// `b_jk = a_jk - a_nj a_nk / a_nn`, row-major `(n-1) x (n-1)`.
    #[serde(skip)]
    pub b: DMatrix<f64>,
}

impl ReducedCoefficients {
    pub fn tangential_dim(&self) -> usize {
        self.t.len()
    }

    /// `<B xi', xi'> / a_nn`.
    pub fn m_squared(&self, xi: &[f64]) -> f64 {
        let x = DVector::from_column_slice(xi);
        (x.dot(&(&self.b * &x)) / self.a_nn).max(0.0)
    }

    pub fn m(&self, xi: &[f64]) -> f64 {
        self.m_squared(xi).sqrt()
    }

    pub fn s(&self, xi: &[f64]) -> f64 {
        self.t.iter().zip(xi).map(|(t, x)| t * x).sum()
    }

    /// `(lambda_0, lambda_1)`: min and max of `m` on the unit sphere.
    pub fn lambda_bounds(&self) -> (f64, f64) {
        let eig = (&self.b / self.a_nn).symmetric_eigenvalues();
        (eig.min().max(0.0).sqrt(), eig.max().sqrt())
    }
}

/// Split `A` into the normal coefficient, the tangential shift and the
/// Schur complement.
pub fn reduce_coefficients(a: &DMatrix<f64>) -> Result<ReducedCoefficients> {
    let n = a.nrows();
    if n < 2 || a.ncols() != n {
        return Err(LabError::validation("coefficients", "need a square matrix with n >= 2"));
    }
    check_spd(a, "coefficients")?;
    let k = n - 1;
    let a_nn = a[(k, k)];
    let t: Vec<f64> = (0..k).map(|j| a[(k, j)] / a_nn).collect();
    let b = DMatrix::from_fn(k, k, |j, l| a[(j, l)] - a[(k, j)] * a[(k, l)] / a_nn);
    Ok(ReducedCoefficients { a_nn, t, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSpec {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta: f64,
}

impl WeightSpec {
    pub fn new(alpha_plus: f64, alpha_minus: f64, beta: f64) -> Result<Self> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(alpha_plus) {
            return Err(LabError::validation("weight.alpha_plus", format!("must be > 0, got {alpha_plus}")));
        }
        if !finite_pos(alpha_minus) {
            return Err(LabError::validation("weight.alpha_minus", format!("must be > 0, got {alpha_minus}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(LabError::validation("weight.beta", format!("must be >= 0, got {beta}")));
        }
        Ok(WeightSpec {
            alpha_plus,
            alpha_minus,
            beta,
        })
    }

    pub fn alpha(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.alpha_plus,
            Side::Minus => self.alpha_minus,
        }
    }

    pub fn phi(&self, side: Side, x_n: f64) -> f64 {
        self.alpha(side) * x_n + 0.5 * self.beta * x_n * x_n
    }

    pub fn phi_prime(&self, side: Side, x_n: f64) -> f64 {
        self.alpha(side) + self.beta * x_n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentialFrequency {
    pub tau: f64,
    pub xi: Vec<f64>,
}

impl TangentialFrequency {
    pub fn new(tau: f64, xi: Vec<f64>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(LabError::validation("tau", format!("must be > 0, got {tau}")));
        }
        if !xi.iter().all(|v| v.is_finite()) {
            return Err(LabError::validation("xi", "entries must be finite"));
        }
        Ok(TangentialFrequency { tau, xi })
    }

    pub fn xi_abs(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn lambda(&self) -> f64 {
        self.tau.hypot(self.xi_abs())
    }
}

/// Both reductions together with the weight: everything needed to evaluate
/// per-side symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceModel {
    pub plus: ReducedCoefficients,
    pub minus: ReducedCoefficients,
    pub weight: WeightSpec,
}

impl InterfaceModel {
    pub fn new(coeffs: &ModelCoefficients, weight: WeightSpec) -> Result<Self> {
        let (plus, minus) = coeffs.reduce()?;
        Ok(InterfaceModel { plus, minus, weight })
    }

    pub fn side(&self, side: Side) -> &ReducedCoefficients {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    /// `(m, s, e, f)` on one side at normal position `x_n`.
    pub fn side_symbols(&self, side: Side, freq: &TangentialFrequency, x_n: f64) -> (f64, f64, f64, f64) {
        let red = self.side(side);
        let m = red.m(&freq.xi);
        let tp = freq.tau * self.weight.phi_prime(side, x_n);
        (m, red.s(&freq.xi), tp + m, tp - m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolValues {
    pub m_plus: f64,
    pub m_minus: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub f_plus: f64,
    pub f_minus: f64,
    pub phi_prime_plus: f64,
    pub phi_prime_minus: f64,
}

/// Evaluate all per-side symbols. Both sides use the same `x_n`, which lets
/// callers read off interface values at `x_n = 0`.
pub fn symbol_values(
    red_plus: &ReducedCoefficients,
    red_minus: &ReducedCoefficients,
    w: &WeightSpec,
    freq: &TangentialFrequency,
    x_n: f64,
) -> SymbolValues {
    let m_plus = red_plus.m(&freq.xi);
    let m_minus = red_minus.m(&freq.xi);
    let pp = w.phi_prime(Side::Plus, x_n);
    let pm = w.phi_prime(Side::Minus, x_n);
    SymbolValues {
        m_plus,
        m_minus,
        s_plus: red_plus.s(&freq.xi),
        s_minus: red_minus.s(&freq.xi),
        e_plus: freq.tau * pp + m_plus,
        e_minus: freq.tau * pm + m_minus,
        f_plus: freq.tau * pp - m_plus,
        f_minus: freq.tau * pm - m_minus,
        phi_prime_plus: pp,
        phi_prime_minus: pm,
    }
}

/// `sup_{|xi'| = 1} m_plus / m_minus` and a maximizing unit direction, from
/// the generalized eigenproblem of the pencil `(B+/a+, B-/a-)`.
pub fn sup_m_ratio(red_plus: &ReducedCoefficients, red_minus: &ReducedCoefficients) -> (f64, Vec<f64>) {
    let kp = &red_plus.b / red_plus.a_nn;
    let km = &red_minus.b / red_minus.a_nn;
    let chol = Cholesky::new(km).expect("minus-side form is positive-definite");
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .expect("Cholesky factor of a positive-definite form is invertible");
    let c = &linv * kp * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (imax, mu) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let y = eig.eigenvectors.column(imax).into_owned();
    let mut w = linv.transpose() * y;
    w /= w.norm();
    canonical_sign(w.as_mut_slice());
    (mu.max(0.0).sqrt(), w.iter().copied().collect())
}

/// Flip so the first entry of significant size is positive.
fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Direct sampling of `m_plus / m_minus` over the unit sphere in dimensions
/// `1..=3`, used to cross-check [`sup_m_ratio`].
pub fn sup_m_ratio_sampled(
    red_plus: &ReducedCoefficients,
    red_minus: &ReducedCoefficients,
    samples: usize,
) -> (f64, Vec<f64>) {
    let k = red_plus.tangential_dim();
    let dirs: Vec<Vec<f64>> = match k {
        1 => vec![vec![1.0]],
        2 => (0..samples)
            .map(|i| {
                let th = std::f64::consts::PI * i as f64 / samples as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => fibonacci_sphere(samples),
        _ => panic!("sampling oracle supports tangential dimension 1..=3, got {k}"),
    };
    let mut best = (f64::NEG_INFINITY, dirs[0].clone());
    for d in dirs {
        let r = red_plus.m(&d) / red_minus.m(&d);
        if r > best.0 {
            best = (r, d);
        }
    }
    canonical_sign(&mut best.1);
    best
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            vec![r * th.cos(), y, r * th.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub satisfied: bool,
    pub sup_ratio: f64,
    pub sigma: Option<f64>,
    pub witness_direction: Vec<f64>,
}

impl ConditionReport {
    /// Default `sigma0 = (1 + sigma) / 2` when the condition holds.
    pub fn default_sigma0(&self) -> Option<f64> {
        self.sigma.map(|s| 0.5 * (1.0 + s))
    }
}

pub fn check_condition(coeffs: &ModelCoefficients, w: &WeightSpec) -> Result<ConditionReport> {
    let (rp, rm) = coeffs.reduce()?;
    Ok(condition_from_reduced(&rp, &rm, w))
}

pub fn condition_from_reduced(rp: &ReducedCoefficients, rm: &ReducedCoefficients, w: &WeightSpec) -> ConditionReport {
    let (sup_ratio, witness) = sup_m_ratio(rp, rm);
    let q = w.alpha_plus / w.alpha_minus;
    let satisfied = q > sup_ratio;
    ConditionReport {
        satisfied,
        sup_ratio,
        sigma: satisfied.then(|| (q / sup_ratio).sqrt()),
        witness_direction: witness,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegionLabel {
    GammaOnly,
    TildeOnly,
    Both,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::GammaOnly => "GammaOnly",
            RegionLabel::TildeOnly => "TildeOnly",
            RegionLabel::Both => "Both",
        }
    }
}

/// Membership in the cone where `f_plus` is elliptic positive
/// (`|xi'| < 2` or `tau alpha_plus > sigma0 m_plus`) and in the cone where
/// `f_minus` is elliptic negative (`|xi'| > 1` and `tau alpha_plus < sigma m_plus`).
pub fn classify_region(
    red_plus: &ReducedCoefficients,
    w: &WeightSpec,
    freq: &TangentialFrequency,
    sigma0: f64,
    sigma: f64,
) -> Result<RegionLabel> {
    if !(1.0 < sigma0 && sigma0 < sigma) {
        return Err(LabError::validation(
            "regions.sigma0",
            format!("need 1 < sigma0 < sigma, got sigma0 = {sigma0}, sigma = {sigma}"),
        ));
    }
    let xi_abs = freq.xi_abs();
    let m = red_plus.m(&freq.xi);
    let ta = freq.tau * w.alpha_plus;
    let in_gamma = xi_abs < 2.0 || ta > sigma0 * m;
    let in_tilde = xi_abs > 1.0 && ta < sigma * m;
    match (in_gamma, in_tilde) {
        (true, true) => Ok(RegionLabel::Both),
        (true, false) => Ok(RegionLabel::GammaOnly),
        (false, true) => Ok(RegionLabel::TildeOnly),
        (false, false) => Err(LabError::CoverFailure { tau: freq.tau, xi_abs }),
    }
}

/// Constants of the effective sub-ellipticity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SubellipticityParams {
    /// `tau / |xi'|` must lie in `[1/c_ratio, c_ratio]` near the characteristic set.
    pub c_ratio: f64,
    /// Required lower bound `tau beta >= c_prime * lambda`.
    pub c_prime: f64,
    /// Width of the near-characteristic set `|f| <= delta * lambda`.
    pub delta: f64,
}

impl Default for SubellipticityParams {
    fn default() -> Self {
        SubellipticityParams {
            c_ratio: 10.0,
            c_prime: 0.1,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubellipticityReport {
    pub q2: f64,
    pub q1: f64,
    /// `{q2, q1}`.
    pub bracket: f64,
    /// `{xi_n + s, f}`.
    pub bracket_f: f64,
    pub on_char_set: bool,
    /// Away from `|f| <= delta * lambda` this is vacuously true; on that set it
    /// requires `tau / |xi'|` in range and `tau beta >= c_prime * lambda`.
    pub lemma_holds: bool,
}

/// Real and imaginary parts `(q2, q1)` of the principal symbol divided by
/// `a_nn`, as functions of `(x_n, xi_n)`.
pub fn q_pair(
    red: &ReducedCoefficients,
    w: &WeightSpec,
    side: Side,
    freq: &TangentialFrequency,
    xi_n: f64,
    x_n: f64,
) -> (f64, f64) {
    let z = xi_n + red.s(&freq.xi);
    let tp = freq.tau * w.phi_prime(side, x_n);
    (z * z + red.m_squared(&freq.xi) - tp * tp, tp * z)
}

pub fn subellipticity_report(
    red: &ReducedCoefficients,
    w: &WeightSpec,
    side: Side,
    freq: &TangentialFrequency,
    xi_n: f64,
    x_n: f64,
    params: &SubellipticityParams,
) -> SubellipticityReport {
    let (q2, q1) = q_pair(red, w, side, freq, xi_n, x_n);
    let z = xi_n + red.s(&freq.xi);
    let tp = freq.tau * w.phi_prime(side, x_n);
    let tb = freq.tau * w.beta;
    let bracket = 2.0 * tb * (z * z + tp * tp);
    let lam = freq.lambda();
    let tol = 1e-9 * lam * lam;
    let f = tp - red.m(&freq.xi);
    let ratio = freq.tau / freq.xi_abs();
    let ratio_ok = ratio >= 1.0 / params.c_ratio && ratio <= params.c_ratio;
    SubellipticityReport {
        q2,
        q1,
        bracket,
        bracket_f: tb,
        on_char_set: q2.abs() <= tol && q1.abs() <= tol,
        lemma_holds: f.abs() > params.delta * lam || (ratio_ok && tb >= params.c_prime * lam),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Zone {
    Zone1,
    Zone2,
    Zone3,
}

/// Perturbation of the weight `Phi = phi + kappa` on one side, given by the
/// gradient of `kappa` at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Convexification {
    /// `d kappa / d x'`.
    pub grad_tangential: Vec<f64>,
    /// `d kappa / d x_n`.
    pub d_normal: f64,
    /// Bound `||kappa'||` used in the zone thresholds; at least the norm of
    /// `grad_tangential`.
    pub norm_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexifiedReport {
    pub frak_m: Complex64,
    pub frak_e: f64,
    pub frak_f: f64,
    pub zone: Zone,
    pub smooth_root: bool,
    pub realpart_bound_ok: bool,
}

/// Symbols of the operator conjugated by the perturbed weight. Zones use
/// plus-side quantities and `1 < sigma0 < sigma`.
#[allow(clippy::too_many_arguments)]
pub fn convexified_symbols(
    model: &InterfaceModel,
    side: Side,
    kappa: &Convexification,
    freq: &TangentialFrequency,
    x_n: f64,
    sigma0: f64,
    sigma: f64,
) -> Result<ConvexifiedReport> {
    let red = model.side(side);
    let k = red.tangential_dim();
    if kappa.grad_tangential.len() != k || freq.xi.len() != k {
        return Err(LabError::validation("kappa_grad", "dimension mismatch with xi'"));
    }
    let tau = freq.tau;
    let z: Vec<Complex64> = freq
        .xi
        .iter()
        .zip(&kappa.grad_tangential)
        .map(|(x, g)| Complex64::new(*x, tau * g))
        .collect();
    let mut m2 = Complex64::new(0.0, 0.0);
    for j in 0..k {
        for l in 0..k {
            m2 += red.b[(j, l)] / red.a_nn * z[j] * z[l];
        }
    }
    let frak_m = m2.sqrt();
    let centre = tau * (model.weight.phi_prime(side, x_n) + kappa.d_normal + red.s(&kappa.grad_tangential));
    let (l0, l1) = red.lambda_bounds();
    let xi_abs = freq.xi_abs();
    let grad = kappa.grad_tangential.iter().map(|g| g * g).sum::<f64>().sqrt();
    let smooth_root = tau * grad * 2.0 * l1 <= l0 * xi_abs;
    let bound = 0.75 * l0 * l0 * xi_abs * xi_abs;
    let realpart_bound_ok = !smooth_root || m2.re >= bound - 1e-12 * bound.max(m2.re.abs());

    let norm_k = kappa.norm_bound.max(grad);
    let mp = model.plus.m(&freq.xi);
    let ap = model.weight.alpha_plus;
    let (l0p, l1p) = model.plus.lambda_bounds();
    let zone = if tau * ap <= sigma * mp {
        Zone::Zone1
    } else if l0p * xi_abs / (2.0 * l1p * norm_k) >= tau && tau >= sigma0 * mp / ap {
        Zone::Zone2
    } else if tau >= l0p * xi_abs / (4.0 * l1p * norm_k) {
        Zone::Zone3
    } else {
        return Err(LabError::ZoneFailure { tau, xi_abs });
    };
    Ok(ConvexifiedReport {
        frak_m,
        frak_e: centre + frak_m.re,
        frak_f: centre - frak_m.re,
        zone,
        smooth_root,
        realpart_bound_ok,
    })
}
