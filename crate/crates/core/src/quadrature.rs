//! Gauss–Legendre rules and an adaptive Gauss–Kronrod integrator.

use thiserror::Error;

/// Gauss–Legendre nodes and weights on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule; nodes found by Newton iteration on P_n from the
    /// Chebyshev-like initial guesses.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussRule { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

// Kronrod 15-point extension of Gauss 7; abscissae on [-1, 1], symmetric.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not converge on [{a:e}, {b:e}] (estimate {estimate:e}, error {error:e})")]
    NonConvergence { a: f64, b: f64, estimate: f64, error: f64 },
}

/// Adaptive G7/K15 integration of `f` over [0, 1].
///
/// The interval is first split geometrically toward 0 (break points 2^-k),
/// so integrands whose smoothness degrades at the origin are resolved
/// without exhausting the bisection budget on the first panel.
pub fn integrate_unit(f: impl Fn(f64) -> f64, tol: f64) -> Result<f64, QuadratureError> {
    const LEVELS: i32 = 40;
    let mut panels: Vec<(f64, f64)> = Vec::with_capacity(LEVELS as usize + 1);
    panels.push((0.0, 2f64.powi(-LEVELS)));
    for k in (0..LEVELS).rev() {
        panels.push((2f64.powi(-(k + 1)), 2f64.powi(-k)));
    }
    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut stack: Vec<(f64, f64, usize)> = panels.into_iter().map(|(a, b)| (a, b, 0)).collect();
    let max_depth = 50;
    // per-panel budget proportional to width keeps the global error below tol
    while let Some((a, b, depth)) = stack.pop() {
        let (v, e) = gk15(&f, a, b);
        if e <= tol * (b - a) || e <= 1e-16 * v.abs().max(1.0) {
            total += v;
            err_total += e;
            continue;
        }
        if depth >= max_depth {
            return Err(QuadratureError::NonConvergence {
                a,
                b,
                estimate: v,
                error: e,
            });
        }
        let m = 0.5 * (a + b);
        stack.push((a, m, depth + 1));
        stack.push((m, b, depth + 1));
    }
    if !total.is_finite() {
        return Err(QuadratureError::NonConvergence {
            a: 0.0,
            b: 1.0,
            estimate: total,
            error: err_total,
        });
    }
    Ok(total)
}
