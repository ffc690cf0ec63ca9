//! Gauss–Legendre rules, single and composite.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Map onto `[a, b]` and push `(x, w)` pairs.
    pub fn push_mapped(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            out.push((mid + half * x, half * w));
        }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: each interval between consecutive `breaks` is split into
/// `panels_per_interval` equal panels carrying an `order`-point rule.
pub fn composite(breaks: &[f64], panels_per_interval: usize, rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(breaks.len() * panels_per_interval * rule.nodes.len());
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let step = (b - a) / panels_per_interval as f64;
        for p in 0..panels_per_interval {
            let lo = a + step * p as f64;
            rule.push_mapped(lo, lo + step, &mut out);
        }
    }
    out
}

/// Composite rule on `[a, b]` with roughly `nodes_per_scale` nodes per
/// length `scale`, using panels of `rule.nodes.len()` points.
pub fn by_scale(a: f64, b: f64, scale: f64, nodes_per_scale: usize, rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let per_panel = rule.nodes.len().max(1);
    let total = ((b - a) / scale * nodes_per_scale as f64).ceil().max(1.0) as usize;
    let panels = total.div_ceil(per_panel).max(1);
    composite(&[a, b], panels, rule)
}
