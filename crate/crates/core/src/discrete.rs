//! Finite differences for one tangential frequency.
//!
//! The unknown is a pair of grid functions, `v_minus` on `x_min..=0` and
//! `v_plus` on `0..=x_max`, with independent traces at the interface node.
//! Both outer ends are clamped (the outer node and its neighbour are zero).
//! The two interface traces are eliminated through the transmission rows, so
//! the remaining free values parametrize exactly the admissible functions.
//!
//! Rows of the assembled operator sit at every interior node of either side;
//! columns are the free values. The matrix is therefore slightly tall.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fit::{self, LinearFit};
use crate::linalg::{self, RowBanded};
use crate::parallel::{self, Execution};
use crate::symbols::{
    subellipticity_report, sup_m_ratio, InterfaceModel, Side, SubellipticityParams, SubellipticityReport,
    TangentialFrequency,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Columns above which [`min_singular_value`] switches from a dense SVD to
/// inverse iteration.
pub const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub h: f64,
    pub interface_index: usize,
}

impl Grid1D {
    pub fn x(&self, i: usize) -> f64 {
        if i == self.interface_index {
            0.0
        } else {
            self.x_min + self.h * i as f64
        }
    }

    /// Nodes on the plus side, interface included.
    pub fn plus_len(&self) -> usize {
        self.n - self.interface_index
    }

    /// Position of plus-side local node `j`.
    pub fn x_plus(&self, j: usize) -> f64 {
        self.x(self.interface_index + j)
    }
}

pub fn make_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid1D> {
    if !(x_min < 0.0 && x_max > 0.0) {
        return Err(LabError::validation(
            "grid",
            format!("need x_min < 0 < x_max, got ({x_min}, {x_max})"),
        ));
    }
    if n < 16 {
        return Err(LabError::validation("grid.n", format!("need at least 16 nodes, got {n}")));
    }
    let h = (x_max - x_min) / (n - 1) as f64;
    let pos = -x_min / h;
    let i0 = pos.round();
    if (pos - i0).abs() > 1e-9 * pos.max(1.0) {
        return Err(LabError::validation(
            "grid.n",
            format!("0 is not a grid node for ({x_min}, {x_max}, {n}): it falls at index {pos}"),
        ));
    }
    let i0 = i0 as usize;
    if i0 < 4 || n - i0 < 5 {
        return Err(LabError::validation("grid", "each side needs at least 4 intervals"));
    }
    Ok(Grid1D {
        x_min,
        x_max,
        n,
        h,
        interface_index: i0,
    })
}

/// One-sided grid functions. `v_minus[i]` lives at global node `i`
/// (`0..=i0`), `v_plus[j]` at global node `i0 + j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceFunction {
    pub v_minus: Vec<Complex64>,
    pub v_plus: Vec<Complex64>,
}

impl InterfaceFunction {
    pub fn zeros(grid: &Grid1D) -> Self {
        InterfaceFunction {
            v_minus: vec![ZERO; grid.interface_index + 1],
            v_plus: vec![ZERO; grid.plus_len()],
        }
    }

    /// Sample `f(side, x)` at every node; the interface is sampled from both sides.
    pub fn sample(grid: &Grid1D, f: impl Fn(Side, f64) -> Complex64) -> Self {
        InterfaceFunction {
            v_minus: (0..=grid.interface_index).map(|i| f(Side::Minus, grid.x(i))).collect(),
            v_plus: (0..grid.plus_len()).map(|j| f(Side::Plus, grid.x_plus(j))).collect(),
        }
    }

    pub fn trace_minus(&self) -> Complex64 {
        *self.v_minus.last().unwrap()
    }

    pub fn trace_plus(&self) -> Complex64 {
        self.v_plus[0]
    }

    /// Discrete L2 norm with trapezoid weights on each side.
    pub fn l2_norm(&self, h: f64) -> f64 {
        (trapezoid_sq(&self.v_minus, h) + trapezoid_sq(&self.v_plus, h)).sqrt()
    }
}

fn trapezoid_sq(v: &[Complex64], h: f64) -> f64 {
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().map(|z| z.norm_sqr()).sum();
    h * (inner + 0.5 * (v[0].norm_sqr() + v[n - 1].norm_sqr()))
}

/// Conjugated jump data: `v_plus(0) - v_minus(0) = theta` and
/// `a+ (D + s+ + i tau phi'+) v_plus(0) - a- (D + s- + i tau phi'-) v_minus(0) = big_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TransmissionData {
    pub theta: Complex64,
    pub big_theta: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Direct,
    Factored,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Factored => "factored",
        }
    }
}

/// A node of the two-sided grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    /// Global index `0..=i0`.
    Minus(usize),
    /// Local index `0..plus_len`.
    Plus(usize),
}

impl NodeRef {
    fn value(self, v: &InterfaceFunction) -> Complex64 {
        match self {
            NodeRef::Minus(i) => v.v_minus[i],
            NodeRef::Plus(j) => v.v_plus[j],
        }
    }
}

/// Affine expression `sum coef * free[col] + c_theta * theta + c_big * big_theta`.
#[derive(Debug, Clone, PartialEq)]
struct Affine {
    terms: Vec<(usize, Complex64)>,
    c_theta: Complex64,
    c_big: Complex64,
}

impl Affine {
    fn eval(&self, free: &[Complex64], data: &TransmissionData) -> Complex64 {
        self.terms.iter().map(|(c, k)| k * free[*c]).sum::<Complex64>() + self.c_theta * data.theta + self.c_big * data.big_theta
    }
}

/// Map between free values and full interface functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    i0: usize,
    plus_len: usize,
    /// Plus trace `p` and minus trace `q`.
    p: Affine,
    q: Affine,
    /// Interface flux coefficients: `a+ (D + s+ + i tau alpha+)` applied to
    /// `(p, v1, v2)` and `a- (...)` applied to `(q, v_{-1}, v_{-2})`.
    flux_plus: [Complex64; 3],
    flux_minus: [Complex64; 3],
}

impl Embedding {
    fn new(model: &InterfaceModel, freq: &TangentialFrequency, grid: &Grid1D) -> Result<Self> {
        let h = grid.h;
        let tau = freq.tau;
        let (ap, am) = (model.plus.a_nn, model.minus.a_nn);
        let cp = model.plus.s(&freq.xi) + I * tau * model.weight.alpha_plus;
        let cm = model.minus.s(&freq.xi) + I * tau * model.weight.alpha_minus;
        // D v(0+) ~ -i(-3p + 4 v1 - v2)/(2h),  D v(0-) ~ -i(3q - 4 v_{-1} + v_{-2})/(2h).
        let flux_plus = [
            ap * (-I * (-3.0) / (2.0 * h) + cp),
            ap * (-I * 4.0 / (2.0 * h)),
            ap * (-I * (-1.0) / (2.0 * h)),
        ];
        let flux_minus = [
            am * (-I * 3.0 / (2.0 * h) + cm),
            am * (-I * (-4.0) / (2.0 * h)),
            am * (-I * 1.0 / (2.0 * h)),
        ];
        let a_p = flux_plus[0];
        let a_m = flux_minus[0];
        let pivot = a_p - a_m;
        if pivot.norm() <= 1e-14 * (a_p.norm() + a_m.norm()) {
            return Err(LabError::SingularConstraint(format!(
                "interface pivot {pivot} vanishes at tau = {tau}"
            )));
        }
        let i0 = grid.interface_index;
        let plus_len = grid.plus_len();
        let emb_cols = Embedding {
            i0,
            plus_len,
            p: Affine {
                terms: vec![],
                c_theta: ZERO,
                c_big: ZERO,
            },
            q: Affine {
                terms: vec![],
                c_theta: ZERO,
                c_big: ZERO,
            },
            flux_plus,
            flux_minus,
        };
        // A+ p - A- q = Theta - F+ (v1, v2) + F- (v_{-1}, v_{-2}) with q = p - theta.
        let col = |r: NodeRef| emb_cols.free_index(r).expect("interface neighbours are free");
        let inv = 1.0 / pivot;
        let p_terms = vec![
            (col(NodeRef::Plus(1)), -flux_plus[1] * inv),
            (col(NodeRef::Plus(2)), -flux_plus[2] * inv),
            (col(NodeRef::Minus(i0 - 1)), flux_minus[1] * inv),
            (col(NodeRef::Minus(i0 - 2)), flux_minus[2] * inv),
        ];
        let p = Affine {
            terms: p_terms.clone(),
            c_theta: -a_m * inv,
            c_big: inv,
        };
        let q = Affine {
            terms: p_terms,
            c_theta: -a_m * inv - 1.0,
            c_big: inv,
        };
        Ok(Embedding { p, q, ..emb_cols })
    }

    pub fn n_free(&self) -> usize {
        (self.i0 - 2) + (self.plus_len - 3)
    }

    /// Column of a free node, `None` for clamped or interface nodes.
    pub fn free_index(&self, r: NodeRef) -> Option<usize> {
        match r {
            NodeRef::Minus(i) if i >= 2 && i < self.i0 => Some(i - 2),
            NodeRef::Plus(j) if j >= 1 && j + 3 <= self.plus_len => Some(self.i0 - 2 + j - 1),
            _ => None,
        }
    }

    pub fn embed(&self, free: &[Complex64], data: &TransmissionData) -> InterfaceFunction {
        assert_eq!(free.len(), self.n_free());
        let mut v = InterfaceFunction {
            v_minus: vec![ZERO; self.i0 + 1],
            v_plus: vec![ZERO; self.plus_len],
        };
        let nm = self.i0 - 2;
        v.v_minus[2..self.i0].copy_from_slice(&free[..nm]);
        v.v_plus[1..self.plus_len - 2].copy_from_slice(&free[nm..]);
        v.v_plus[0] = self.p.eval(free, data);
        v.v_minus[self.i0] = self.q.eval(free, data);
        v
    }

    pub fn restrict(&self, v: &InterfaceFunction) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.n_free());
        out.extend_from_slice(&v.v_minus[2..self.i0]);
        out.extend_from_slice(&v.v_plus[1..self.plus_len - 2]);
        out
    }

    /// Residuals `(jump - theta, flux jump - Theta)` of the transmission rows.
    pub fn constraint_residuals(&self, v: &InterfaceFunction, data: &TransmissionData) -> (Complex64, Complex64) {
        let i0 = self.i0;
        let fp = self.flux_plus[0] * v.v_plus[0] + self.flux_plus[1] * v.v_plus[1] + self.flux_plus[2] * v.v_plus[2];
        let fm = self.flux_minus[0] * v.v_minus[i0] + self.flux_minus[1] * v.v_minus[i0 - 1] + self.flux_minus[2] * v.v_minus[i0 - 2];
        (v.v_plus[0] - v.v_minus[i0] - data.theta, fp - fm - data.big_theta)
    }

    /// Conormal fluxes `(a+ Z+ v(0+), a- Z- v(0-))` with one-sided differences.
    pub fn fluxes(&self, v: &InterfaceFunction) -> (Complex64, Complex64) {
        let i0 = self.i0;
        (
            self.flux_plus[0] * v.v_plus[0] + self.flux_plus[1] * v.v_plus[1] + self.flux_plus[2] * v.v_plus[2],
            self.flux_minus[0] * v.v_minus[i0] + self.flux_minus[1] * v.v_minus[i0 - 1] + self.flux_minus[2] * v.v_minus[i0 - 2],
        )
    }
}

/// One operator row: the node it sits at and its stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStencil {
    pub node: NodeRef,
    pub entries: Vec<(NodeRef, Complex64)>,
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: RowBanded,
    pub embedding: Embedding,
    pub stencils: Vec<RowStencil>,
    pub tau: f64,
    pub xi: Vec<f64>,
    pub mode: Mode,
    pub grid: Grid1D,
}

impl AssembledOperator {
    /// Apply the interior rows to a full interface function.
    pub fn apply(&self, v: &InterfaceFunction) -> Vec<Complex64> {
        self.stencils
            .iter()
            .map(|r| r.entries.iter().map(|(n, c)| c * n.value(v)).sum())
            .collect()
    }

    /// Split [`apply`](Self::apply) output by side.
    pub fn apply_sides(&self, v: &InterfaceFunction) -> (Vec<Complex64>, Vec<Complex64>) {
        let out = self.apply(v);
        let mut minus = Vec::new();
        let mut plus = Vec::new();
        for (r, val) in self.stencils.iter().zip(out) {
            match r.node {
                NodeRef::Minus(_) => minus.push(val),
                NodeRef::Plus(_) => plus.push(val),
            }
        }
        (minus, plus)
    }
}

struct SideCtx {
    side: Side,
    a: f64,
    s: f64,
    m: f64,
    tau: f64,
    alpha: f64,
    beta: f64,
}

impl SideCtx {
    fn new(model: &InterfaceModel, freq: &TangentialFrequency, side: Side) -> Self {
        let red = model.side(side);
        SideCtx {
            side,
            a: red.a_nn,
            s: red.s(&freq.xi),
            m: red.m(&freq.xi),
            tau: freq.tau,
            alpha: model.weight.alpha(side),
            beta: model.weight.beta,
        }
    }

    fn tphi(&self, x: f64) -> f64 {
        self.tau * (self.alpha + self.beta * x)
    }

    fn node(&self, k: usize) -> NodeRef {
        match self.side {
            Side::Minus => NodeRef::Minus(k),
            Side::Plus => NodeRef::Plus(k),
        }
    }
}

/// Difference stencil for `D = -i d/dx` at local node `k` of a side with
/// `len` nodes: centered inside, second-order one-sided at either end.
fn d_stencil(k: usize, len: usize, h: f64) -> Vec<(usize, Complex64)> {
    let c = -I / (2.0 * h);
    if k == 0 {
        vec![(0, -3.0 * c), (1, 4.0 * c), (2, -c)]
    } else if k == len - 1 {
        vec![(k, 3.0 * c), (k - 1, -4.0 * c), (k - 2, c)]
    } else {
        vec![(k - 1, -c), (k + 1, c)]
    }
}

fn side_rows(ctx: &SideCtx, grid: &Grid1D, mode: Mode) -> Vec<RowStencil> {
    let h = grid.h;
    let (len, x_of): (usize, Box<dyn Fn(usize) -> f64>) = match ctx.side {
        Side::Minus => (grid.interface_index + 1, Box::new(|k| grid.x(k))),
        Side::Plus => (grid.plus_len(), Box::new(|k| grid.x_plus(k))),
    };
    let tb = ctx.tau * ctx.beta;
    (1..len - 1)
        .map(|k| {
            let x = x_of(k);
            let entries = match mode {
                Mode::Direct => {
                    let tp = ctx.tphi(x);
                    let first = Complex64::new(2.0 * tp, -2.0 * ctx.s) / (2.0 * h);
                    let zeroth = Complex64::new(tb + ctx.s * ctx.s - tp * tp + ctx.m * ctx.m, 2.0 * ctx.s * tp);
                    let a = ctx.a;
                    vec![
                        (ctx.node(k - 1), a * (-1.0 / (h * h) - first)),
                        (ctx.node(k), a * (2.0 / (h * h) + zeroth)),
                        (ctx.node(k + 1), a * (-1.0 / (h * h) + first)),
                    ]
                }
                Mode::Factored => {
                    // a (D + s + i e)(D + s + i f), staggered: the inner factor
                    // lives on the half-nodes k -+ 1/2 and the outer factor
                    // differences and averages it back onto node k.
                    let half = |l: usize| -> [Complex64; 2] {
                        let f = ctx.tphi(0.5 * (x_of(l) + x_of(l + 1))) - ctx.m;
                        let z = 0.5 * Complex64::new(ctx.s, f);
                        [I / h + z, -I / h + z]
                    };
                    let z = 0.5 * Complex64::new(ctx.s, ctx.tphi(x) + ctx.m);
                    let (wl, wr) = (I / h + z, -I / h + z);
                    let (lo, hi) = (half(k - 1), half(k));
                    vec![
                        (ctx.node(k - 1), ctx.a * wl * lo[0]),
                        (ctx.node(k), ctx.a * (wl * lo[1] + wr * hi[0])),
                        (ctx.node(k + 1), ctx.a * wr * hi[1]),
                    ]
                }
            };
            RowStencil {
                node: ctx.node(k),
                entries,
            }
        })
        .collect()
}

pub fn assemble_operator(
    model: &InterfaceModel,
    freq: &TangentialFrequency,
    grid: &Grid1D,
    mode: Mode,
) -> Result<AssembledOperator> {
    let embedding = Embedding::new(model, freq, grid)?;
    let mut stencils = side_rows(&SideCtx::new(model, freq, Side::Minus), grid, mode);
    stencils.extend(side_rows(&SideCtx::new(model, freq, Side::Plus), grid, mode));
    let mut matrix = RowBanded::new(embedding.n_free());
    let i0 = grid.interface_index;
    for row in &stencils {
        let mut entries: Vec<(usize, Complex64)> = Vec::new();
        for &(node, c) in &row.entries {
            match node {
                NodeRef::Plus(0) => entries.extend(embedding.p.terms.iter().map(|(col, k)| (*col, c * k))),
                NodeRef::Minus(i) if i == i0 => entries.extend(embedding.q.terms.iter().map(|(col, k)| (*col, c * k))),
                _ => {
                    if let Some(col) = embedding.free_index(node) {
                        entries.push((col, c));
                    }
                }
            }
        }
        matrix.push_row(&entries);
    }
    Ok(AssembledOperator {
        matrix,
        embedding,
        stencils,
        tau: freq.tau,
        xi: freq.xi.clone(),
        mode,
        grid: *grid,
    })
}

/// Smallest singular value of the operator on admissible functions, in the
/// Euclidean norm of the free values.
pub fn min_singular_value(op: &AssembledOperator) -> Result<f64> {
    linalg::sigma_min(&op.matrix, DENSE_LIMIT)
}

/// Largest mesh Peclet number `tau |phi'| h` over the grid. Above
/// [`MAX_PECLET`] the centred first-derivative term dominates the
/// second-difference one and the scheme acquires spurious near-null modes.
pub fn peclet_number(model: &InterfaceModel, tau: f64, grid: &Grid1D) -> f64 {
    let w = &model.weight;
    let phi = [
        w.phi_prime(Side::Minus, grid.x_min),
        w.phi_prime(Side::Minus, 0.0),
        w.phi_prime(Side::Plus, 0.0),
        w.phi_prime(Side::Plus, grid.x_max),
    ];
    tau * grid.h * phi.iter().fold(0.0f64, |a, p| a.max(p.abs()))
}

pub const MAX_PECLET: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub xi_abs: f64,
    pub sigma_min: f64,
    pub sigma_over_tau32: f64,
    pub n: usize,
    pub h: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlemanSweep {
    pub rows: Vec<SweepRow>,
    /// `log sigma_min` against `log tau`.
    pub fit: LinearFit,
}

/// Sweep along the ray `xi' = ray_ratio * tau * direction`.
#[allow(clippy::too_many_arguments)]
pub fn carleman_sweep(
    model: &InterfaceModel,
    direction: &[f64],
    ray_ratio: f64,
    tau_list: &[f64],
    grid: &Grid1D,
    mode: Mode,
    exec: Execution,
) -> Result<CarlemanSweep> {
    let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dn == 0.0 || direction.len() != model.plus.tangential_dim() {
        return Err(LabError::validation("ray.direction", "must be a nonzero vector of length n - 1"));
    }
    if !(ray_ratio.is_finite() && ray_ratio >= 0.0) {
        return Err(LabError::validation("ray.ratio", format!("must be >= 0, got {ray_ratio}")));
    }
    if let Some(&tau) = tau_list.iter().find(|&&t| peclet_number(model, t, grid) > MAX_PECLET) {
        return Err(LabError::validation(
            "grid.n",
            format!(
                "grid under-resolves tau = {tau}: tau max|phi'| h = {:.3} exceeds {MAX_PECLET}",
                peclet_number(model, tau, grid)
            ),
        ));
    }
    let rows = parallel::map(exec, tau_list, |&tau| -> Result<SweepRow> {
        let xi: Vec<f64> = direction.iter().map(|d| ray_ratio * tau * d / dn).collect();
        let freq = TangentialFrequency::new(tau, xi)?;
        let op = assemble_operator(model, &freq, grid, mode)?;
        let s = min_singular_value(&op)?;
        Ok(SweepRow {
            tau,
            xi_abs: freq.xi_abs(),
            sigma_min: s,
            sigma_over_tau32: s / tau.powf(1.5),
            n: grid.n,
            h: grid.h,
            mode,
        })
    });
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let fit = if rows.len() >= 2 {
        let lt: Vec<f64> = rows.iter().map(|r| r.tau.ln()).collect();
        let ls: Vec<f64> = rows.iter().map(|r| r.sigma_min.ln()).collect();
        fit::linear(&lt, &ls)
    } else {
        LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
        }
    };
    Ok(CarlemanSweep { rows, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSides {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Derivative `D v = -i v'` on one side: centered inside, one-sided at the ends.
fn d_side(v: &[Complex64], h: f64) -> Vec<Complex64> {
    let len = v.len();
    (0..len)
        .map(|k| d_stencil(k, len, h).into_iter().map(|(l, c)| c * v[l]).sum())
        .collect()
}

/// Both sides of the per-frequency two-sided estimate for an admissible `v`.
pub fn estimate_sides(
    v: &InterfaceFunction,
    data: &TransmissionData,
    model: &InterfaceModel,
    freq: &TangentialFrequency,
    grid: &Grid1D,
) -> Result<EstimateSides> {
    if v.v_minus.len() != grid.interface_index + 1 || v.v_plus.len() != grid.plus_len() {
        return Err(LabError::validation("v", "length does not match the grid"));
    }
    let op = assemble_operator(model, freq, grid, Mode::Direct)?;
    let (r1, r2) = op.embedding.constraint_residuals(v, data);
    let (fp, fm) = op.embedding.fluxes(v);
    let scale1 = v.trace_plus().norm().max(v.trace_minus().norm()).max(data.theta.norm());
    let scale2 = fp.norm().max(fm.norm()).max(data.big_theta.norm());
    if r1.norm() > 1e-8 * scale1 || r2.norm() > 1e-8 * scale2 {
        return Err(LabError::validation(
            "v",
            format!(
                "transmission constraints violated: |jump| = {:.3e}, |flux jump| = {:.3e}",
                r1.norm(),
                r2.norm()
            ),
        ));
    }
    let h = grid.h;
    let tau = freq.tau;
    let xi = freq.xi_abs();
    let (pm, pp) = op.apply_sides(v);
    let l2 = |w: &[Complex64]| (h * w.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    let t32 = tau.powf(1.5);
    let t12 = tau.sqrt();
    let lhs = l2(&pm) + l2(&pp) + t32 * data.theta.norm() + t12 * xi * data.theta.norm() + t12 * data.big_theta.norm();

    let norm_v = v.l2_norm(h);
    let dm = d_side(&v.v_minus, h);
    let dp = d_side(&v.v_plus, h);
    let norm_dv = (trapezoid_sq(&dm, h) + trapezoid_sq(&dp, h)).sqrt();
    let traces = v.trace_minus().norm() + v.trace_plus().norm();
    let dtraces = dm.last().unwrap().norm() + dp[0].norm();
    let rhs = t32 * norm_v + t12 * (norm_dv + xi * norm_v) + t32 * traces + t12 * (dtraces + xi * traces);
    let ratio = if lhs == 0.0 { 0.0 } else { rhs / lhs };
    Ok(EstimateSides { lhs, rhs, ratio })
}

/// Project an interface function onto the admissible set: clamp the outer
/// ends and recompute both traces from the transmission rows.
pub fn enforce_transmission(
    v: &InterfaceFunction,
    data: &TransmissionData,
    model: &InterfaceModel,
    freq: &TangentialFrequency,
    grid: &Grid1D,
) -> Result<InterfaceFunction> {
    let emb = Embedding::new(model, freq, grid)?;
    Ok(emb.embed(&emb.restrict(v), data))
}

/// Random admissible function: complex Gaussian free values, `smoothness`
/// passes of nearest-neighbour averaging per side, then the interface traces
/// solved from the transmission rows.
pub fn random_admissible_v(
    model: &InterfaceModel,
    freq: &TangentialFrequency,
    grid: &Grid1D,
    data: &TransmissionData,
    seed: u64,
    smoothness: usize,
) -> Result<InterfaceFunction> {
    let emb = Embedding::new(model, freq, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_minus = grid.interface_index - 2;
    let mut free: Vec<Complex64> = (0..emb.n_free())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    for _ in 0..smoothness {
        let (minus, plus) = free.split_at_mut(n_minus);
        average_pass(minus);
        average_pass(plus);
    }
    Ok(emb.embed(&free, data))
}

fn average_pass(v: &mut [Complex64]) {
    let old = v.to_vec();
    let n = old.len();
    for (k, out) in v.iter_mut().enumerate() {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(n - 1);
        let s: Complex64 = old[lo..=hi].iter().sum();
        *out = s / (hi - lo + 1) as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorSign {
    /// `g = lambda + gamma t`.
    Elliptic,
    /// `g = -lambda + gamma t`.
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalflineSpec {
    pub lambda: f64,
    pub gamma_slope: f64,
    pub sign: FactorSign,
}

impl HalflineSpec {
    pub fn g(&self, t: f64) -> f64 {
        let l = match self.sign {
            FactorSign::Elliptic => self.lambda,
            FactorSign::Reversed => -self.lambda,
        };
        l + self.gamma_slope * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalflineReport {
    /// `||D_t w + i g w||^2`.
    pub lhs_sq: f64,
    /// `||w'||^2 + ||g w||^2 + int g' |w|^2 + g(0) |w(0)|^2`.
    pub rhs_sq: f64,
    pub slack: f64,
    pub identity_residual: f64,
}

/// Discrete energy identity for `D_t + i g` on the half-line `t >= 0`.
/// `omega[k]` sits at `t = k h`. Differences are forward; node norms use
/// trapezoid weights, cell norms weight `h`.
pub fn halfline_factor_check(spec: &HalflineSpec, omega: &[Complex64], h: f64) -> HalflineReport {
    let n = omega.len();
    if n < 2 || omega.iter().all(|z| *z == ZERO) {
        return HalflineReport {
            lhs_sq: 0.0,
            rhs_sq: 0.0,
            slack: 0.0,
            identity_residual: 0.0,
        };
    }
    let mut lhs = 0.0;
    let mut dsq = 0.0;
    for k in 0..n - 1 {
        let d = (omega[k + 1] - omega[k]) / h;
        let g = spec.g(k as f64 * h);
        // D w + i g w = -i (w' - g w).
        lhs += h * (d - g * omega[k]).norm_sqr();
        dsq += h * d.norm_sqr();
    }
    let w: Vec<f64> = (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h }).collect();
    let wsq: f64 = (0..n).map(|k| w[k] * omega[k].norm_sqr()).sum();
    let gwsq: f64 = (0..n).map(|k| w[k] * (spec.g(k as f64 * h) * omega[k].norm()).powi(2)).sum();
    let w0 = omega[0].norm_sqr();
    let rhs = dsq + gwsq + spec.gamma_slope * wsq + spec.g(0.0) * w0;
    let slack = match spec.sign {
        FactorSign::Elliptic => lhs - (spec.lambda * spec.lambda * wsq + spec.lambda * w0),
        FactorSign::Reversed => lhs - (spec.gamma_slope * wsq - spec.lambda * w0),
    };
    HalflineReport {
        lhs_sq: lhs,
        rhs_sq: rhs,
        slack,
        identity_residual: (lhs - rhs).abs(),
    }
}

/// Random smooth test profile on `[0, length]`: a few complex Gaussian
/// bumps near the origin, tapered to vanish on the last quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothProfile {
    bumps: Vec<(Complex64, f64, f64)>,
    length: f64,
}

impl SmoothProfile {
    pub fn random(seed: u64, length: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps = (0..3)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let center = 2.0 * rand::Rng::random::<f64>(&mut rng);
                let width = 0.3 + 0.7 * rand::Rng::random::<f64>(&mut rng);
                (Complex64::new(re, im), center, width)
            })
            .collect();
        SmoothProfile { bumps, length }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let taper = crate::cutoff::CutoffShape::Smooth.chi0(t / (0.75 * self.length));
        if taper == 0.0 {
            return ZERO;
        }
        let s: Complex64 = self
            .bumps
            .iter()
            .map(|(c, t0, w)| c * (-((t - t0) / w).powi(2)).exp())
            .sum();
        s * taper
    }

    /// Samples at `t = k h` for `k = 0..=n` with `h = length / n`.
    pub fn sample(&self, n: usize) -> (Vec<Complex64>, f64) {
        let h = self.length / n as f64;
        ((0..=n).map(|k| self.eval(k as f64 * h)).collect(), h)
    }
}

/// Sampling used when choosing `beta` automatically.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSearch {
    pub params: SubellipticityParams,
    pub taus: Vec<f64>,
    /// Multiples of `tau` for `|xi'|`.
    pub xi_over_tau: Vec<f64>,
    pub x_samples: usize,
    pub max_doublings: usize,
}

impl Default for BetaSearch {
    fn default() -> Self {
        let geom = |a: f64, b: f64, n: usize| -> Vec<f64> {
            (0..n).map(|k| a * (b / a).powf(k as f64 / (n - 1) as f64)).collect()
        };
        BetaSearch {
            params: SubellipticityParams::default(),
            taus: geom(1.0, 1000.0, 13),
            xi_over_tau: geom(0.01, 100.0, 41),
            x_samples: 9,
            max_doublings: 20,
        }
    }
}

/// One point of the sampled sub-ellipticity check (at `xi_n = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubellipticitySample {
    pub side: Side,
    pub x_n: f64,
    pub tau: f64,
    pub xi_abs: f64,
    pub f: f64,
    pub lambda: f64,
    pub near_char: bool,
    pub report: SubellipticityReport,
}

/// Evaluate the sub-ellipticity report over the sampling set of `search`:
/// both sides, `x_samples` points across each half of the grid, the `tau`
/// list, `|xi'| = r tau` for each ratio, along every coordinate axis and the
/// witness direction of the interface condition.
pub fn subellipticity_samples(model: &InterfaceModel, grid: &Grid1D, search: &BetaSearch) -> Vec<SubellipticitySample> {
    let w = &model.weight;
    let k = model.plus.tangential_dim();
    let mut dirs: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|l| if l == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let witness = sup_m_ratio(&model.plus, &model.minus).1;
    if !dirs.contains(&witness) {
        dirs.push(witness);
    }
    let ns = search.x_samples.max(2);
    let mut out = Vec::new();
    for side in [Side::Minus, Side::Plus] {
        let (a, b) = match side {
            Side::Minus => (grid.x_min, 0.0),
            Side::Plus => (0.0, grid.x_max),
        };
        let red = model.side(side);
        for q in 0..ns {
            let x = a + (b - a) * q as f64 / (ns - 1) as f64;
            for &tau in &search.taus {
                for r in &search.xi_over_tau {
                    for d in &dirs {
                        let xi: Vec<f64> = d.iter().map(|v| v * r * tau).collect();
                        let freq = TangentialFrequency { tau, xi };
                        let report = subellipticity_report(red, w, side, &freq, 0.0, x, &search.params);
                        let f = tau * w.phi_prime(side, x) - red.m(&freq.xi);
                        let lambda = freq.lambda();
                        out.push(SubellipticitySample {
                            side,
                            x_n: x,
                            tau,
                            xi_abs: freq.xi_abs(),
                            f,
                            lambda,
                            near_char: f.abs() <= search.params.delta * lambda,
                            report,
                        });
                    }
                }
            }
        }
    }
    out
}

/// `phi' > 0` at both outer ends of the grid.
pub fn weight_increasing(model: &InterfaceModel, grid: &Grid1D) -> bool {
    let w = &model.weight;
    w.phi_prime(Side::Minus, grid.x_min) > 0.0 && w.phi_prime(Side::Plus, grid.x_max) > 0.0
}

/// Whether the sampled sub-ellipticity lemma holds for the model's `beta`
/// and `phi' > 0` on both sides of the domain.
pub fn subellipticity_sampled(model: &InterfaceModel, grid: &Grid1D, search: &BetaSearch) -> bool {
    weight_increasing(model, grid) && subellipticity_samples(model, grid, search).iter().all(|s| s.report.lemma_holds)
}

/// Smallest `beta` in `1, 2, 4, ...` passing [`subellipticity_sampled`].
pub fn select_beta(model: &InterfaceModel, grid: &Grid1D, search: &BetaSearch) -> Result<f64> {
    let mut beta = 1.0;
    for _ in 0..=search.max_doublings {
        let mut m = model.clone();
        m.weight.beta = beta;
        if subellipticity_sampled(&m, grid, search) {
            return Ok(beta);
        }
        beta *= 2.0;
    }
    Err(LabError::non_convergence(
        "beta selection",
        format!(
            "no beta up to {} passes the sampled sub-ellipticity check with phi' > 0 on ({}, {})",
            beta / 2.0,
            grid.x_min,
            grid.x_max
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{ModelCoefficients, WeightSpec};
    use proptest::prelude::*;

    fn model(ap: f64, am: f64, beta: f64) -> InterfaceModel {
        let c = ModelCoefficients::diagonal(&[4.0, 1.0], &[1.0, 1.0]).unwrap();
        InterfaceModel::new(&c, WeightSpec::new(ap, am, beta).unwrap()).unwrap()
    }

    fn general_model() -> InterfaceModel {
        let ap = nalgebra::DMatrix::from_row_slice(2, 2, &[3.0, 0.7, 0.7, 1.5]);
        let am = nalgebra::DMatrix::from_row_slice(2, 2, &[1.2, -0.4, -0.4, 0.8]);
        let c = ModelCoefficients::new(ap, am).unwrap();
        InterfaceModel::new(&c, WeightSpec::new(2.0, 1.0, 1.0).unwrap()).unwrap()
    }

    fn freq(tau: f64, xi: f64) -> TangentialFrequency {
        TangentialFrequency::new(tau, vec![xi]).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(-0.3, 0.3, 601).unwrap();
        assert!((g.h - 0.001).abs() < 1e-15);
        assert_eq!(g.interface_index, 300);
        assert_eq!(g.x(300), 0.0);
        assert!(make_grid(-0.3, 0.3, 600).is_err());
        assert!(make_grid(-1.0, 1.0, 3).is_err());
    }

    #[test]
    fn tau_zero_is_minus_laplacian() {
        let m = model(1.0, 1.0, 1.0);
        let g = make_grid(-1.0, 1.0, 41).unwrap();
        let f = TangentialFrequency { tau: 0.0, xi: vec![0.0] };
        let op = assemble_operator(&m, &f, &g, Mode::Direct).unwrap();
        let v = InterfaceFunction::sample(&g, |_, _| Complex64::new(1.0, 0.0));
        for r in op.apply(&v) {
            assert!(r.norm() < 1e-10);
        }
        let row = &op.stencils[5];
        let h2 = g.h * g.h;
        assert!((row.entries[1].1 - Complex64::new(2.0 / h2, 0.0)).norm() < 1e-9);
    }

    fn plane_wave_error(mode: Mode, n: usize) -> f64 {
        let m = general_model();
        let g = make_grid(-1.0, 1.0, n).unwrap();
        let fr = freq(3.0, 2.0);
        let op = assemble_operator(&m, &fr, &g, mode).unwrap();
        let k = 2.5;
        let v = InterfaceFunction::sample(&g, |_, x| Complex64::from_polar(1.0, k * x));
        let out = op.apply(&v);
        let mut err: f64 = 0.0;
        for (row, val) in op.stencils.iter().zip(out) {
            let (side, x) = match row.node {
                NodeRef::Minus(i) => (Side::Minus, g.x(i)),
                NodeRef::Plus(j) => (Side::Plus, g.x_plus(j)),
            };
            if x.abs() < 0.25 || x.abs() > 0.75 {
                continue;
            }
            let red = m.side(side);
            let c = red.s(&fr.xi) + I * fr.tau * m.weight.phi_prime(side, x);
            // a [(k + c)^2 + m^2 + tau beta] e^{ikx}
            let sym = red.a_nn * ((k + c) * (k + c) + red.m_squared(&fr.xi) + fr.tau * m.weight.beta);
            err = err.max((val - sym * Complex64::from_polar(1.0, k * x)).norm());
        }
        err
    }

    #[test]
    fn plane_wave_symbol_second_order() {
        for mode in [Mode::Direct, Mode::Factored] {
            let e: Vec<f64> = [201, 401, 801].iter().map(|&n| plane_wave_error(mode, n)).collect();
            for o in fit::observed_orders(&e) {
                assert!((1.8..=2.2).contains(&o), "{mode:?}: {e:?}");
            }
        }
    }

    #[test]
    fn direct_and_factored_agree() {
        let m = general_model();
        let mut prev = f64::NAN;
        for n in [201, 401, 801] {
            let g = make_grid(-1.0, 1.0, n).unwrap();
            let fr = freq(3.0, 2.0);
            let v = InterfaceFunction::sample(&g, |_, x| Complex64::new((-8.0 * x * x).exp(), x.sin()));
            let a = assemble_operator(&m, &fr, &g, Mode::Direct).unwrap().apply(&v);
            let b = assemble_operator(&m, &fr, &g, Mode::Factored).unwrap().apply(&v);
            let diff = (g.h * a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()).sqrt();
            if prev.is_finite() {
                assert!((prev / diff).log2() > 0.9, "{prev} -> {diff}");
            }
            prev = diff;
        }
    }

    #[test]
    fn embedding_satisfies_constraints() {
        let m = general_model();
        let g = make_grid(-0.5, 0.5, 101).unwrap();
        let fr = freq(20.0, -7.0);
        let op = assemble_operator(&m, &fr, &g, Mode::Direct).unwrap();
        let data = TransmissionData {
            theta: Complex64::new(0.3, -1.0),
            big_theta: Complex64::new(2.0, 0.5),
        };
        let free: Vec<Complex64> = (0..op.embedding.n_free()).map(|k| Complex64::new((k as f64).sin(), 1.0)).collect();
        let v = op.embedding.embed(&free, &data);
        let (r1, r2) = op.embedding.constraint_residuals(&v, &data);
        assert!(r1.norm() < 1e-13 && r2.norm() < 1e-10 * op.embedding.fluxes(&v).0.norm());
        assert_eq!(op.embedding.restrict(&v), free);
        // Matrix action equals stencil action on the homogeneous embedding.
        let v0 = op.embedding.embed(&free, &TransmissionData::default());
        let a = op.matrix.matvec(&free);
        let b = op.apply(&v0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() <= 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn under_resolved_sweep_is_rejected() {
        let m = model(3.0, 1.0, 1.0);
        let g = make_grid(-0.3, 0.3, 201).unwrap();
        assert!(peclet_number(&m, 200.0, &g) <= MAX_PECLET);
        let err = carleman_sweep(&m, &[1.0], 0.5, &[100.0, 283.0], &g, Mode::Direct, Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("grid.n"));
    }

    #[test]
    fn bandwidth() {
        let m = model(3.0, 1.0, 1.0);
        let g = make_grid(-0.3, 0.3, 101).unwrap();
        let d = assemble_operator(&m, &freq(10.0, 5.0), &g, Mode::Direct).unwrap();
        let f = assemble_operator(&m, &freq(10.0, 5.0), &g, Mode::Factored).unwrap();
        assert!(d.stencils.iter().all(|r| r.entries.len() == 3));
        assert!(f.stencils.iter().all(|r| r.entries.len() == 3));
        assert_eq!(d.matrix.nrows, d.matrix.ncols + 2);
    }

    #[test]
    fn dense_and_iterative_sigma_agree_on_operator() {
        let m = model(3.0, 1.0, 1.0);
        let g = make_grid(-0.3, 0.3, 201).unwrap();
        let op = assemble_operator(&m, &freq(50.0, 25.0), &g, Mode::Direct).unwrap();
        let d = linalg::sigma_min_dense(&op.matrix.to_dense());
        let it = linalg::sigma_min_inverse_iteration(&op.matrix, 1e-12, 5000, 1).unwrap();
        assert!((d - it).abs() <= 1e-8 * d, "{d} vs {it}");
    }

    #[test]
    fn estimate_sides_zero_and_rejection() {
        let m = model(3.0, 1.0, 1.0);
        let g = make_grid(-0.3, 0.3, 61).unwrap();
        let fr = freq(10.0, 5.0);
        let z = InterfaceFunction::zeros(&g);
        let e = estimate_sides(&z, &TransmissionData::default(), &m, &fr, &g).unwrap();
        assert_eq!((e.lhs, e.rhs, e.ratio), (0.0, 0.0, 0.0));
        let mut bad = random_admissible_v(&m, &fr, &g, &TransmissionData::default(), 1, 2).unwrap();
        bad.v_plus[0] += Complex64::new(1.0, 0.0);
        assert!(matches!(
            estimate_sides(&bad, &TransmissionData::default(), &m, &fr, &g),
            Err(LabError::Validation { .. })
        ));
    }

    #[test]
    fn random_v_determinism_and_admissibility() {
        let m = general_model();
        let g = make_grid(-0.3, 0.3, 121).unwrap();
        let fr = freq(30.0, 12.0);
        let data = TransmissionData {
            theta: Complex64::new(0.1, 0.2),
            big_theta: Complex64::new(-1.0, 3.0),
        };
        let a = random_admissible_v(&m, &fr, &g, &data, 42, 3).unwrap();
        let b = random_admissible_v(&m, &fr, &g, &data, 42, 3).unwrap();
        assert_eq!(a, b);
        assert!(estimate_sides(&a, &data, &m, &fr, &g).is_ok());
        let c = random_admissible_v(&m, &fr, &g, &data, 43, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn smoothing_reduces_h1_seminorm() {
        let m = model(3.0, 1.0, 1.0);
        let g = make_grid(-0.3, 0.3, 121).unwrap();
        let fr = freq(30.0, 12.0);
        let semi = |v: &InterfaceFunction| -> f64 {
            let d = |w: &[Complex64]| w.windows(2).map(|p| (p[1] - p[0]).norm_sqr()).sum::<f64>();
            d(&v.v_minus[..v.v_minus.len() - 1]) + d(&v.v_plus[1..])
        };
        let mut wins = 0;
        for seed in 0..100 {
            let rough = random_admissible_v(&m, &fr, &g, &TransmissionData::default(), seed, 0).unwrap();
            let smooth = random_admissible_v(&m, &fr, &g, &TransmissionData::default(), seed, 5).unwrap();
            if semi(&smooth) < semi(&rough) {
                wins += 1;
            }
        }
        assert_eq!(wins, 100);
    }

    #[test]
    fn halfline_zero_and_gaussian() {
        let spec = HalflineSpec {
            lambda: 3.0,
            gamma_slope: 1.0,
            sign: FactorSign::Elliptic,
        };
        let z = vec![ZERO; 100];
        let r = halfline_factor_check(&spec, &z, 0.01);
        assert_eq!((r.lhs_sq, r.rhs_sq, r.slack, r.identity_residual), (0.0, 0.0, 0.0, 0.0));
        let mut res = Vec::new();
        let prof = SmoothProfile::random(3, 8.0);
        for n in [400usize, 800, 1600] {
            let (om, h) = prof.sample(n);
            let r = halfline_factor_check(&spec, &om, h);
            assert!(r.slack > 0.0);
            let rev = halfline_factor_check(&HalflineSpec { sign: FactorSign::Reversed, ..spec }, &om, h);
            assert!(rev.slack >= 0.0);
            res.push(r.identity_residual);
        }
        for o in fit::observed_orders(&res) {
            assert!(o > 0.9, "{res:?}");
        }
    }

    #[test]
    fn auto_beta_standard_configurations() {
        let g = make_grid(-0.3, 0.3, 601).unwrap();
        let s = BetaSearch::default();
        assert_eq!(select_beta(&model(3.0, 1.0, 0.0), &g, &s).unwrap(), 1.0);
        assert_eq!(select_beta(&model(1.0, 1.0, 0.0), &g, &s).unwrap(), 1.0);
        assert!(!subellipticity_sampled(&model(3.0, 1.0, 0.0), &g, &s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn constraint_exactness(seed in 0u64..1000, tau in 1.0f64..300.0, xi in -300.0f64..300.0) {
            let m = general_model();
            let g = make_grid(-0.3, 0.3, 61).unwrap();
            let fr = freq(tau, xi);
            let v = random_admissible_v(&m, &fr, &g, &TransmissionData::default(), seed, 1).unwrap();
            let emb = assemble_operator(&m, &fr, &g, Mode::Direct).unwrap().embedding;
            let (r1, r2) = emb.constraint_residuals(&v, &TransmissionData::default());
            let (fp, _) = emb.fluxes(&v);
            prop_assert!(r1.norm() <= 1e-14 * (1.0 + v.trace_plus().norm()));
            prop_assert!(r2.norm() <= 1e-12 * (1.0 + fp.norm()));
        }

        #[test]
        fn sigma_phase_invariance(phase in 0.0f64..std::f64::consts::TAU) {
            let m = model(3.0, 1.0, 1.0);
            let g = make_grid(-0.3, 0.3, 61).unwrap();
            let op = assemble_operator(&m, &freq(20.0, 10.0), &g, Mode::Direct).unwrap();
            let d = op.matrix.to_dense();
            let a = linalg::sigma_min_dense(&d);
            let b = linalg::sigma_min_dense(&(d * Complex64::from_polar(1.0, phase)));
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
