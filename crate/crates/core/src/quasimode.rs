//! Explicit quasi-modes for weights that violate the interface condition.
//!
//! When some direction has `m_plus/alpha_plus > m_minus/alpha_minus`, the
//! cone of frequencies with `f_plus(0) < 0 < f_minus(0)` is non-empty. In that
//! cone the factor `D_n + i f` has a decaying null solution on each side, and
//! a combination of the two minus-side null solutions matches value and flux
//! at the interface. Cutting these off gives functions whose conjugated image
//! is exponentially small relative to their size.
//!
//! Per tangential frequency the profile is, with `Q(x) = exp(x (f(0) + tau beta x / 2))`:
//!
//! ```text
//! u_plus  = e^{-i s_plus x}  psi  Q_plus  chi0(k x)
//! u_minus = e^{-i s_minus x} psi (a Q_minus chi0(k_f x) + b Qtilde_minus chi0(k_e x))
//! ```
//!
//! where `Qtilde` uses `e(0)` in place of `f(0)` and `k = tau beta gamma / |f(0)|`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cutoff::{Chi1, CutoffShape};
use crate::error::{LabError, Result};
use crate::fit::{self, LinearFit};
use crate::parallel::{self, Execution};
use crate::quadrature::{by_scale, composite, GaussLegendre};
use crate::symbols::{condition_from_reduced, InterfaceModel, Side, TangentialFrequency};

/// Unit vector `(tau0, xi0)` inside the violation cone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationPoint {
    pub tau0: f64,
    pub xi0: Vec<f64>,
}

impl ViolationPoint {
    /// `|xi0| / tau0`, the ray ratio used by sweeps.
    pub fn ray_ratio(&self) -> f64 {
        self.xi0.iter().map(|v| v * v).sum::<f64>().sqrt() / self.tau0
    }

    /// Unit tangential direction of `xi0`.
    pub fn direction(&self) -> Vec<f64> {
        let n = self.xi0.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.xi0.iter().map(|v| v / n).collect()
    }

    /// `f_plus(0) < 0 < f_minus(0)` at this point.
    pub fn is_strict(&self, model: &InterfaceModel) -> bool {
        let w = &model.weight;
        let fp = self.tau0 * w.alpha_plus - model.plus.m(&self.xi0);
        let fm = self.tau0 * w.alpha_minus - model.minus.m(&self.xi0);
        fp < 0.0 && fm > 0.0
    }
}

/// Midpoint of the violation interval along the witness direction, or
/// `None` when the condition holds or the interval is empty.
pub fn find_violation(model: &InterfaceModel) -> Option<ViolationPoint> {
    let report = condition_from_reduced(&model.plus, &model.minus, &model.weight);
    if report.satisfied {
        return None;
    }
    let d = &report.witness_direction;
    let lo = model.minus.m(d) / model.weight.alpha_minus;
    let hi = model.plus.m(d) / model.weight.alpha_plus;
    if lo >= hi {
        return None;
    }
    let t = 0.5 * (lo + hi);
    let norm = (t * t + 1.0).sqrt();
    let p = ViolationPoint {
        tau0: t / norm,
        xi0: d.iter().map(|v| v / norm).collect(),
    };
    p.is_strict(model).then_some(p)
}

/// Interface coefficients `(a, b)` with `a + b = 1` and
/// `a - b = a_nn^+ m_plus / (a_nn^- m_minus)`.
pub fn ab_coefficients(model: &InterfaceModel, xi: &[f64]) -> Result<(f64, f64)> {
    let mm = model.minus.m(xi);
    if mm <= 0.0 {
        return Err(LabError::validation("xi", "m_minus vanishes (xi' = 0)"));
    }
    let diff = model.plus.a_nn * model.plus.m(xi) / (model.minus.a_nn * mm);
    let a = 0.5 * (1.0 + diff);
    Ok((a, 1.0 - a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiModeSpec {
    pub violation: ViolationPoint,
    pub gamma: f64,
    /// Support radius of the frequency cut-off `chi1`.
    pub cutoff_width: f64,
    pub cutoff_shape: CutoffShape,
}

impl QuasiModeSpec {
    pub fn new(violation: ViolationPoint, gamma: f64, cutoff_width: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(LabError::validation("quasimode.gamma", format!("must be >= 1, got {gamma}")));
        }
        if !(cutoff_width > 0.0 && cutoff_width < 0.5) {
            return Err(LabError::validation(
                "quasimode.cutoff_width",
                format!("must lie in (0, 0.5), got {cutoff_width}"),
            ));
        }
        Ok(QuasiModeSpec {
            violation,
            gamma,
            cutoff_width,
            cutoff_shape: CutoffShape::default(),
        })
    }

    pub fn with_shape(mut self, shape: CutoffShape) -> Self {
        self.cutoff_shape = shape;
        self
    }

    /// Frequency cut-off `psi(tau, xi')`.
    pub fn psi(&self, tau: f64, xi: &[f64]) -> f64 {
        let lam = (tau * tau + xi.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let chi1 = Chi1::new(self.cutoff_width, self.cutoff_shape);
        let d = xi
            .iter()
            .zip(&self.violation.xi0)
            .map(|(x, x0)| (x / lam - x0).powi(2))
            .sum::<f64>()
            .sqrt();
        chi1.eval(tau / lam - self.violation.tau0) * chi1.eval(d)
    }

    /// Per-coordinate box containing `supp psi(tau, .)`.
    pub fn xi_box(&self, tau: f64) -> Vec<(f64, f64)> {
        let w = self.cutoff_width;
        let r = self.violation.xi0.iter().map(|v| v * v).sum::<f64>().sqrt() + w;
        let mu = 1.0 / (1.0 - r * r).max(1e-12).sqrt();
        self.violation
            .xi0
            .iter()
            .map(|x0| {
                let (lo, hi) = (x0 - w, x0 + w);
                (tau * lo.min(lo * mu), tau * hi.max(hi * mu))
            })
            .collect()
    }
}

/// Everything about the quasi-mode that depends only on `(tau, xi')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyProfile {
    pub tau: f64,
    pub psi: f64,
    pub a: f64,
    pub b: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub f_plus: f64,
    pub f_minus: f64,
    pub e_minus: f64,
    pub k_plus: f64,
    pub k_f: f64,
    pub k_e: f64,
    pub ann_plus: f64,
    pub ann_minus: f64,
    pub tau_beta: f64,
    pub shape: CutoffShape,
}

/// Value and conjugated-operator image of the quasi-mode at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuasiModeSample {
    pub u: Complex64,
    pub residual: Complex64,
}

impl FrequencyProfile {
    pub fn new(spec: &QuasiModeSpec, model: &InterfaceModel, tau: f64, xi: &[f64]) -> Result<Self> {
        let freq = TangentialFrequency::new(tau, xi.to_vec())?;
        let (m_plus, s_plus, _, f_plus) = model.side_symbols(Side::Plus, &freq, 0.0);
        let (m_minus, s_minus, e_minus, f_minus) = model.side_symbols(Side::Minus, &freq, 0.0);
        if f_plus >= 0.0 {
            return Err(LabError::validation(
                "xi",
                format!("outside the violation cone: f_plus(0) = {f_plus:e} >= 0 at tau = {tau}"),
            ));
        }
        if f_minus <= 0.0 {
            return Err(LabError::validation(
                "xi",
                format!("outside the violation cone: f_minus(0) = {f_minus:e} <= 0 at tau = {tau}"),
            ));
        }
        let tau_beta = tau * model.weight.beta;
        if tau_beta <= 0.0 {
            return Err(LabError::validation("weight.beta", "quasi-mode needs beta > 0"));
        }
        let (a, b) = ab_coefficients(model, xi)?;
        let tbg = tau_beta * spec.gamma;
        Ok(FrequencyProfile {
            tau,
            psi: spec.psi(tau, xi),
            a,
            b,
            m_plus,
            m_minus,
            s_plus,
            s_minus,
            f_plus,
            f_minus,
            e_minus,
            k_plus: tbg / f_plus.abs(),
            k_f: tbg / f_minus,
            k_e: tbg / e_minus,
            ann_plus: model.plus.a_nn,
            ann_minus: model.minus.a_nn,
            tau_beta,
            shape: spec.cutoff_shape,
        })
    }

    fn q(&self, f0: f64, x: f64) -> f64 {
        (x * (f0 + 0.5 * self.tau_beta * x)).exp()
    }

    /// `x_n >= 0` uses the plus profile, `x_n < 0` the minus one.
    pub fn eval(&self, x: f64) -> QuasiModeSample {
        if x >= 0.0 {
            self.eval_side(Side::Plus, x)
        } else {
            self.eval_side(Side::Minus, x)
        }
    }

    /// One-sided profile; at `x = 0` this gives the one-sided trace.
    pub fn eval_side(&self, side: Side, x: f64) -> QuasiModeSample {
        match side {
            Side::Plus => {
                let phase = Complex64::from_polar(self.psi, -self.s_plus * x);
                let k = self.k_plus;
                let q = self.q(self.f_plus, x);
                let (c0, c1, c2) = self.shape.chi0_all(k * x);
                let r = self.ann_plus * q * (2.0 * self.m_plus * k * c1 - k * k * c2);
                QuasiModeSample {
                    u: phase * (q * c0),
                    residual: phase * r,
                }
            }
            Side::Minus => {
                let phase = Complex64::from_polar(self.psi, -self.s_minus * x);
                let (kf, ke) = (self.k_f, self.k_e);
                let qf = self.q(self.f_minus, x);
                let qe = self.q(self.e_minus, x);
                let (f0, f1, f2) = self.shape.chi0_all(kf * x);
                let (e0, e1, e2) = self.shape.chi0_all(ke * x);
                let u = self.a * qf * f0 + self.b * qe * e0;
                let m = self.m_minus;
                let r = self.ann_minus
                    * (self.a * qf * (2.0 * m * kf * f1 - kf * kf * f2)
                        + self.b * qe * (-2.0 * m * ke * e1 - ke * ke * e2));
                QuasiModeSample {
                    u: phase * u,
                    residual: phase * r,
                }
            }
        }
    }

    /// `(D_n + s + i tau phi') u` at `x_n = 0` from each side.
    pub fn interface_flux(&self) -> (Complex64, Complex64) {
        let i = Complex64::i();
        (
            i * self.m_plus * self.psi,
            i * self.m_minus * (self.a - self.b) * self.psi,
        )
    }

    /// Quadrature breakpoints and resolution scale for the plus side.
    fn plus_breaks(&self) -> (Vec<f64>, f64) {
        let k = self.k_plus;
        (vec![0.0, 0.5 / k, 1.0 / k], (1.0 / self.f_plus.abs()).min(0.5 / k))
    }

    fn minus_breaks(&self) -> (Vec<f64>, f64) {
        let mut b = vec![-1.0 / self.k_e, -0.5 / self.k_e, -1.0 / self.k_f, -0.5 / self.k_f, 0.0];
        b.sort_by(f64::total_cmp);
        b.dedup();
        (b, (1.0 / self.f_minus).min(0.5 / self.k_f))
    }

    /// `(int |u|^2, int |residual|^2)` over `x_n`, per side, summed.
    pub fn x_integrals(&self, nodes_per_scale: usize, rule: &GaussLegendre) -> (f64, f64) {
        let mut uu = 0.0;
        let mut rr = 0.0;
        for side in [Side::Plus, Side::Minus] {
            let (breaks, scale) = match side {
                Side::Plus => self.plus_breaks(),
                Side::Minus => self.minus_breaks(),
            };
            for win in breaks.windows(2) {
                for (x, w) in by_scale(win[0], win[1], scale, nodes_per_scale, rule) {
                    let s = self.eval_side(side, x);
                    uu += w * s.u.norm_sqr();
                    rr += w * s.residual.norm_sqr();
                }
            }
        }
        (uu, rr)
    }

    /// Analytic lower bound for `int |u|^2 dx_n` (before the `psi^2` factor).
    pub fn norm_lower_bound(&self) -> f64 {
        let tbg = self.k_plus * self.f_plus.abs();
        let fp = self.f_plus.abs();
        let fm = self.f_minus;
        (1.0 - (-fp * fp / tbg).exp()) / (2.0 * fp) + (1.0 - (-fm * fm / tbg).exp()) / (8.0 * fm)
    }
}

/// Pointwise quasi-mode value and residual.
pub fn eval_quasimode(
    spec: &QuasiModeSpec,
    model: &InterfaceModel,
    tau: f64,
    xi: &[f64],
    x_n: f64,
) -> Result<QuasiModeSample> {
    Ok(FrequencyProfile::new(spec, model, tau, xi)?.eval(x_n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per cut-off length scale in `x_n`.
    pub nodes_per_scale: usize,
    /// Nodes across the support of `psi` per tangential coordinate.
    pub xi_nodes: usize,
    /// Points per Gauss–Legendre panel.
    pub panel_order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_per_scale: 64,
            xi_nodes: 128,
            panel_order: 16,
        }
    }
}

impl QuadratureSpec {
    fn doubled(&self) -> Self {
        QuadratureSpec {
            nodes_per_scale: 2 * self.nodes_per_scale,
            xi_nodes: 2 * self.xi_nodes,
            ..*self
        }
    }
}

/// One row of the per-frequency inspection table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub xi_abs: f64,
    pub psi: f64,
    pub u_sq: f64,
    pub residual_sq: f64,
    pub lower_bound_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiModeEval {
    pub tau: f64,
    pub norm_residual: f64,
    pub norm_u: f64,
    pub ratio: f64,
    /// Square root of the analytic lower bound for `||u||^2`.
    pub norm_u_lower: f64,
    pub per_frequency: Vec<FrequencyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiModeSweep {
    pub evals: Vec<QuasiModeEval>,
    /// `log(ratio)` against `tau`.
    pub fit: LinearFit,
}

/// Tensor Gauss–Legendre nodes over a box.
fn tensor_nodes(bounds: &[(f64, f64)], per_dim: usize, rule: &GaussLegendre) -> Vec<(Vec<f64>, f64)> {
    let panels = per_dim.div_ceil(rule.nodes.len()).max(1);
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for &(lo, hi) in bounds {
        let pts = composite(&[lo, hi], panels, rule);
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                pts.iter().map(move |(x, wx)| {
                    let mut q = p.clone();
                    q.push(*x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    out
}

fn eval_single(spec: &QuasiModeSpec, model: &InterfaceModel, tau: f64, quad: &QuadratureSpec) -> Result<QuasiModeEval> {
    let rule = GaussLegendre::new(quad.panel_order);
    let nodes = tensor_nodes(&spec.xi_box(tau), quad.xi_nodes, &rule);
    let mut uu = 0.0;
    let mut rr = 0.0;
    let mut lb = 0.0;
    let mut rows = Vec::new();
    for (xi, w) in nodes {
        if spec.psi(tau, &xi) == 0.0 {
            continue;
        }
        let prof = FrequencyProfile::new(spec, model, tau, &xi)?;
        let (u2, r2) = prof.x_integrals(quad.nodes_per_scale, &rule);
        let l2 = prof.psi * prof.psi * prof.norm_lower_bound();
        uu += w * u2;
        rr += w * r2;
        lb += w * l2;
        rows.push(FrequencyRow {
            xi_abs: xi.iter().map(|v| v * v).sum::<f64>().sqrt(),
            psi: prof.psi,
            u_sq: u2,
            residual_sq: r2,
            lower_bound_sq: l2,
        });
    }
    if uu <= 0.0 {
        return Err(LabError::validation(
            "tau",
            format!("quasi-mode vanishes at tau = {tau}: no frequency inside supp psi"),
        ));
    }
    Ok(QuasiModeEval {
        tau,
        norm_residual: rr.sqrt(),
        norm_u: uu.sqrt(),
        ratio: (rr / uu).sqrt(),
        norm_u_lower: lb.sqrt(),
        per_frequency: rows,
    })
}

/// Norms at one `tau`, accepted only if doubling the resolution changes
/// neither norm by more than 0.1%. Returns the finer evaluation.
pub fn quasimode_eval(spec: &QuasiModeSpec, model: &InterfaceModel, tau: f64, quad: &QuadratureSpec) -> Result<QuasiModeEval> {
    let coarse = eval_single(spec, model, tau, quad)?;
    let fine = eval_single(spec, model, tau, &quad.doubled())?;
    for (name, c, f) in [
        ("||u||", coarse.norm_u, fine.norm_u),
        ("||M u||", coarse.norm_residual, fine.norm_residual),
    ] {
        let rel = (c - f).abs() / f.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-3 {
            return Err(LabError::non_convergence(
                "quasi-mode quadrature",
                format!("{name} changed by {rel:.3e} under doubling at tau = {tau}"),
            ));
        }
    }
    Ok(fine)
}

pub fn quasimode_norms(
    spec: &QuasiModeSpec,
    model: &InterfaceModel,
    tau_list: &[f64],
    quad: &QuadratureSpec,
    exec: Execution,
) -> Result<QuasiModeSweep> {
    let mut evals = parallel::map(exec, tau_list, |&tau| quasimode_eval(spec, model, tau, quad))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    evals.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let taus: Vec<f64> = evals.iter().map(|e| e.tau).collect();
    let logs: Vec<f64> = evals.iter().map(|e| e.ratio.ln()).collect();
    let fit = if taus.len() >= 2 {
        fit::linear(&taus, &logs)
    } else {
        LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
        }
    };
    Ok(QuasiModeSweep { evals, fit })
}

/// Rectangular sampling grid for the physical-space quasi-mode. `x_n` must
/// contain 0; both one-sided traces are stored there.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGrid {
    pub x_prime: Vec<f64>,
    pub x_n: Vec<f64>,
}

impl PhysicalGrid {
    /// Uniform grid with `nx` tangential points on `[-half_width, half_width]`
    /// and `nn` normal points on `[x_min, x_max]`.
    pub fn uniform(half_width: f64, nx: usize, x_min: f64, x_max: f64, nn: usize) -> Self {
        let lin = |a: f64, b: f64, n: usize| (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
        let mut x_n = lin(x_min, x_max, nn);
        if let Some(z) = x_n.iter_mut().min_by(|a, b| a.abs().total_cmp(&b.abs())) {
            *z = 0.0;
        }
        PhysicalGrid {
            x_prime: lin(-half_width, half_width, nx),
            x_n,
        }
    }
}

/// `v(x', x_n)` on a grid. Row `j` of `values` holds `x_n[j]`; at the
/// interface row the plus trace is stored, the minus trace separately.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFunction2D {
    pub x_prime: Vec<f64>,
    pub x_n: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
    pub trace_minus: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalReport {
    pub tau: f64,
    pub norm_v: f64,
    pub norm_pv: f64,
    pub ratio_v: f64,
    pub ratio_u: f64,
    /// `max |v+(x',0) - v-(x',0)| / max |v|`.
    pub continuity_error: f64,
    /// Relative mismatch of the conormal fluxes at `x_n = 0`.
    pub flux_error: f64,
    /// Largest `|v|` at points with `tau^{1/2} |x'| >= 1`.
    pub outside_support_max: f64,
}

struct PhysicalFields {
    v: Vec<Vec<Complex64>>,
    pv: Vec<Vec<Complex64>>,
    trace_minus: Vec<Complex64>,
    pv_trace_minus: Vec<Complex64>,
    flux_plus: Vec<Complex64>,
    flux_minus: Vec<Complex64>,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

fn physical_fields(
    spec: &QuasiModeSpec,
    model: &InterfaceModel,
    tau: f64,
    grid: &PhysicalGrid,
    xi_nodes: usize,
    panel_order: usize,
) -> Result<PhysicalFields> {
    let rule = GaussLegendre::new(panel_order);
    let nodes: Vec<(f64, f64)> = tensor_nodes(&spec.xi_box(tau), xi_nodes, &rule)
        .into_iter()
        .map(|(x, w)| (x[0], w))
        .filter(|(x, _)| spec.psi(tau, &[*x]) > 0.0)
        .collect();
    let profiles = nodes
        .iter()
        .map(|(x, _)| FrequencyProfile::new(spec, model, tau, &[*x]))
        .collect::<Result<Vec<_>>>()?;
    let nq = nodes.len();
    let nxp = grid.x_prime.len();
    // Inverse transform weights e^{i x' xi} dxi / (2 pi).
    let kernel = DMatrix::from_fn(nxp, nq, |i, q| {
        Complex64::from_polar(nodes[q].1 / (2.0 * std::f64::consts::PI), grid.x_prime[i] * nodes[q].0)
    });
    let sqrt_tau = tau.sqrt();
    let cut: Vec<(f64, f64, f64)> = grid
        .x_prime
        .iter()
        .map(|x| {
            let (c0, c1, c2) = spec.cutoff_shape.chi0_all(sqrt_tau * x);
            (c0, sqrt_tau * c1, tau * c2)
        })
        .collect();
    let i = Complex64::i();
    // For one x_n slice: (v, P v) across x'.
    let slice = |side: Side, x: f64| -> (Vec<Complex64>, Vec<Complex64>) {
        let samples: Vec<QuasiModeSample> = profiles.iter().map(|p| p.eval_side(side, x)).collect();
        let u = nalgebra::DVector::from_iterator(nq, samples.iter().map(|s| s.u));
        let du = nalgebra::DVector::from_iterator(nq, samples.iter().zip(&nodes).map(|(s, (xi, _))| s.u * *xi));
        let mu = nalgebra::DVector::from_iterator(nq, samples.iter().map(|s| s.residual));
        let w = &kernel * u;
        let d1w = &kernel * du;
        let pw = &kernel * mu;
        let b = model.side(side).b[(0, 0)];
        let mut v = Vec::with_capacity(nxp);
        let mut pv = Vec::with_capacity(nxp);
        for k in 0..nxp {
            let (c0, c1, c2) = cut[k];
            v.push(c0 * w[k]);
            // P(chi w) = chi P w + b [2 (D chi)(D w) + (D^2 chi) w], D = -i d/dx'.
            pv.push(c0 * pw[k] + b * (2.0 * (-i * c1) * d1w[k] - c2 * w[k]));
        }
        (v, pv)
    };
    let mut v = Vec::with_capacity(grid.x_n.len());
    let mut pv = Vec::with_capacity(grid.x_n.len());
    let mut trace_minus = Vec::new();
    let mut pv_trace_minus = Vec::new();
    for &x in &grid.x_n {
        let side = if x >= 0.0 { Side::Plus } else { Side::Minus };
        let (a, b) = slice(side, x);
        v.push(a);
        pv.push(b);
        if x == 0.0 {
            let (a, b) = slice(Side::Minus, 0.0);
            trace_minus = a;
            pv_trace_minus = b;
        }
    }
    let flux = |pick: fn(&FrequencyProfile) -> Complex64| -> Vec<Complex64> {
        let f = nalgebra::DVector::from_iterator(nq, profiles.iter().map(pick));
        let out = &kernel * f;
        (0..nxp).map(|k| cut[k].0 * out[k]).collect()
    };
    Ok(PhysicalFields {
        v,
        pv,
        trace_minus,
        pv_trace_minus,
        flux_plus: flux(|p| p.interface_flux().0 * p.ann_plus),
        flux_minus: flux(|p| p.interface_flux().1 * p.ann_minus),
    })
}

fn l2_norms(grid: &PhysicalGrid, f: &PhysicalFields) -> Result<(f64, f64)> {
    let iz = grid
        .x_n
        .iter()
        .position(|x| *x == 0.0)
        .ok_or_else(|| LabError::validation("grid2d.x_n", "must contain 0"))?;
    let wp = trapezoid_weights(&grid.x_prime);
    let minus_w = trapezoid_weights(&grid.x_n[..=iz]);
    let plus_w = trapezoid_weights(&grid.x_n[iz..]);
    let mut vv = 0.0;
    let mut pp = 0.0;
    let mut add = |row_v: &[Complex64], row_p: &[Complex64], wn: f64| {
        for k in 0..wp.len() {
            vv += wn * wp[k] * row_v[k].norm_sqr();
            pp += wn * wp[k] * row_p[k].norm_sqr();
        }
    };
    for (j, wn) in minus_w.iter().enumerate() {
        if j == iz {
            add(&f.trace_minus, &f.pv_trace_minus, *wn);
        } else {
            add(&f.v[j], &f.pv[j], *wn);
        }
    }
    for (j, wn) in plus_w.iter().enumerate() {
        add(&f.v[iz + j], &f.pv[iz + j], *wn);
    }
    Ok((vv.sqrt(), pp.sqrt()))
}

/// Physical-space quasi-mode for `n = 2` with diagonal coefficients.
/// Compares its residual ratio with the frequency-space ratio at the same
/// `tau` and checks the interface conditions on the grid.
pub fn build_physical_v(
    spec: &QuasiModeSpec,
    model: &InterfaceModel,
    tau: f64,
    grid: &PhysicalGrid,
    quad: &QuadratureSpec,
) -> Result<(InterfaceFunction2D, PhysicalReport)> {
    if model.plus.tangential_dim() != 1 {
        return Err(LabError::validation("coefficients.dimension", "physical-space quasi-mode needs n = 2"));
    }
    if model.plus.t[0] != 0.0 || model.minus.t[0] != 0.0 {
        return Err(LabError::validation(
            "coefficients",
            "physical-space quasi-mode needs a_n1 = 0 on both sides",
        ));
    }
    let coarse = physical_fields(spec, model, tau, grid, quad.xi_nodes, quad.panel_order)?;
    let fine = physical_fields(spec, model, tau, grid, 2 * quad.xi_nodes, quad.panel_order)?;
    let (nv_c, np_c) = l2_norms(grid, &coarse)?;
    let (nv, np) = l2_norms(grid, &fine)?;
    for (name, c, f) in [("||v||", nv_c, nv), ("||P v||", np_c, np)] {
        let rel = (c - f).abs() / f.max(f64::MIN_POSITIVE);
        if rel > 1e-3 {
            return Err(LabError::non_convergence(
                "physical quasi-mode quadrature",
                format!("{name} changed by {rel:.3e} under doubling at tau = {tau}"),
            ));
        }
    }
    let iz = grid.x_n.iter().position(|x| *x == 0.0).unwrap();
    let vmax = fine
        .v
        .iter()
        .chain(std::iter::once(&fine.trace_minus))
        .flat_map(|r| r.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    let cont = fine.v[iz]
        .iter()
        .zip(&fine.trace_minus)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let fmax = fine.flux_plus.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let flux_err = fine
        .flux_plus
        .iter()
        .zip(&fine.flux_minus)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let sqrt_tau = tau.sqrt();
    let outside = grid
        .x_prime
        .iter()
        .enumerate()
        .filter(|(_, x)| sqrt_tau * x.abs() >= 1.0)
        .flat_map(|(k, _)| fine.v.iter().map(move |row| row[k].norm()))
        .fold(0.0, f64::max);
    let ratio_u = quasimode_eval(spec, model, tau, quad)?.ratio;
    let report = PhysicalReport {
        tau,
        norm_v: nv,
        norm_pv: np,
        ratio_v: np / nv,
        ratio_u,
        continuity_error: cont / vmax.max(f64::MIN_POSITIVE),
        flux_error: flux_err / fmax.max(f64::MIN_POSITIVE),
        outside_support_max: outside,
    };
    let func = InterfaceFunction2D {
        x_prime: grid.x_prime.clone(),
        x_n: grid.x_n.clone(),
        values: fine.v,
        trace_minus: fine.trace_minus,
    };
    Ok((func, report))
}
