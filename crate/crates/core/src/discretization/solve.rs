//! Shifted (resolvent) and auxiliary elliptic solves on the discrete space.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::Serialize;

use super::{DiscreteOperators, DiscretizationError};
use crate::constants;
use crate::model::BeamProblem;

/// Dense LU of a symmetrically Jacobi-scaled matrix `D A D`, `D = diag(|a_ii|^{-1/2})`.
///
/// The graded mesh spreads the diagonal over many orders of magnitude; the
/// scaling keeps the factorization well conditioned.
#[derive(Debug, Clone)]
pub struct ScaledSolver {
    scale: DVector<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl ScaledSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self, DiscretizationError> {
        let n = a.nrows();
        let scale = DVector::from_fn(n, |i, _| {
            let d = a[(i, i)].abs();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        });
        let scaled = DMatrix::from_fn(n, n, |i, j| scale[i] * a[(i, j)] * scale[j]);
        let lu = scaled.lu();
        if !lu.is_invertible() {
            return Err(DiscretizationError::SingularSystem);
        }
        Ok(ScaledSolver { scale, lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, DiscretizationError> {
        let rhs = b.component_mul(&self.scale);
        let y = self.lu.solve(&rhs).ok_or(DiscretizationError::SingularSystem)?;
        let x = y.component_mul(&self.scale);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(DiscretizationError::SingularSystem)
        }
    }
}

fn relative_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = a * x - b;
    let scale = (a.abs() * x.abs()).norm() + b.norm();
    if scale == 0.0 {
        0.0
    } else {
        r.norm() / scale
    }
}

/// Right-hand side (f, g, h): `f`, `g` are dof vectors, `h` samples the
/// history datum on the uniform s-grid `j/N`, `j = 0..=N`.
#[derive(Debug, Clone)]
pub struct ResolventData {
    pub f: DVector<f64>,
    pub g: DVector<f64>,
    pub h: Vec<f64>,
}

impl ResolventData {
    pub fn zero(dim: usize, n_hist: usize) -> Self {
        ResolventData {
            f: DVector::zeros(dim),
            g: DVector::zeros(dim),
            h: vec![0.0; n_hist + 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    /// w on the same s-grid as the input `h`.
    pub w: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub residual: f64,
}

/// `τ ∫_0^{s_j} e^{-τ(s_j - r)} h(r) dr` at every grid point, exact for
/// piecewise-linear `h`.
pub(crate) fn history_convolution(tau: f64, h: &[f64]) -> Vec<f64> {
    let n = h.len() - 1;
    let ds = 1.0 / n as f64;
    let one_minus_e = -(-tau * ds).exp_m1();
    let e = 1.0 - one_minus_e;
    let mut out = vec![0.0; n + 1];
    for j in 0..n {
        let slope = (h[j + 1] - h[j]) / ds;
        let cell = h[j + 1] * one_minus_e - slope * (one_minus_e / tau - ds * e);
        out[j + 1] = e * out[j] + cell;
    }
    out
}

/// Solves `(I − A_h) Y = F` for the augmented state `Y = (u, v, w)`.
///
/// The (u, v) part reduces to `(M + K + Λ1 e eᵀ) u = M (f + g) + Λ2 e` with
/// `Λ1 = κ1 + κ2 e^{-τ}` and `Λ2 = Λ1 f(1) − κ2 I(1)`; then `v = u − f` and
/// `w(s) = v(1) e^{-τ s} + I(s)`.
pub fn resolvent_solve(
    ops: &DiscreteOperators,
    problem: &BeamProblem,
    data: &ResolventData,
) -> Result<ResolventSolution, DiscretizationError> {
    let dim = ops.dim();
    for len in [data.f.len(), data.g.len()] {
        if len != dim {
            return Err(DiscretizationError::DimensionMismatch { expected: dim, got: len });
        }
    }
    if data.h.len() < 2 {
        return Err(DiscretizationError::DimensionMismatch { expected: 2, got: data.h.len() });
    }
    let (k1, k2, tau) = (problem.kappa1, problem.kappa2, problem.tau);
    let e = &ops.trace_value;
    let lambda1 = k1 + k2 * (-tau).exp();
    let conv = history_convolution(tau, &data.h);
    let f1 = e.dot(&data.f);
    let lambda2 = lambda1 * f1 - k2 * conv[conv.len() - 1];

    let a = &ops.mass + ops.stiffness() + lambda1 * e * e.transpose();
    let b = &ops.mass * (&data.f + &data.g) + lambda2 * e;
    let u = ScaledSolver::new(&a)?.solve(&b)?;
    let residual = relative_residual(&a, &u, &b);
    let v = &u - &data.f;
    let v1 = e.dot(&v);
    let n = data.h.len() - 1;
    let w = (0..=n)
        .map(|j| v1 * (-tau * j as f64 / n as f64).exp() + conv[j])
        .collect();
    Ok(ResolventSolution { u, v, w, lambda1, lambda2, residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct AuxiliarySolution {
    #[serde(skip)]
    pub y: DVector<f64>,
    pub lambda: f64,
    pub mu: f64,
    /// |||y|||²
    pub energy_sq: f64,
    /// ‖y‖²
    pub l2_sq: f64,
    /// C² with C = |λ|/√q0 + √2 |μ| C1.
    pub bound_energy: f64,
    /// C²/q0
    pub bound_l2: f64,
    pub residual: f64,
}

/// Solves `(K_σ + K_q) y = λ e(1) + μ e'(1)` and checks the a-priori bounds.
pub fn auxiliary_solve(
    ops: &DiscreteOperators,
    problem: &BeamProblem,
    lambda: f64,
    mu: f64,
) -> Result<AuxiliarySolution, DiscretizationError> {
    let k = ops.stiffness();
    let b = lambda * &ops.trace_value + mu * &ops.trace_slope;
    let y = ScaledSolver::new(&k)?.solve(&b)?;
    let residual = relative_residual(&k, &y, &b);
    let energy_sq = ops.energy_norm_sq(&y);
    let l2_sq = y.dot(&(&ops.mass * &y));
    let q0 = problem.q0();
    let c1 = constants::c1(problem).map_err(|_| DiscretizationError::NotCoercive)?;
    let c = lambda.abs() / q0.sqrt() + std::f64::consts::SQRT_2 * mu.abs() * c1;
    let bound_energy = c * c;
    let bound_l2 = bound_energy / q0;
    let tol = 1e-8;
    if energy_sq > bound_energy * (1.0 + tol) + f64::MIN_POSITIVE {
        return Err(DiscretizationError::BoundViolation { what: "|||y|||²", value: energy_sq, bound: bound_energy });
    }
    if l2_sq > bound_l2 * (1.0 + tol) + f64::MIN_POSITIVE {
        return Err(DiscretizationError::BoundViolation { what: "‖y‖²", value: l2_sq, bound: bound_l2 });
    }
    Ok(AuxiliarySolution { y, lambda, mu, energy_sq, l2_sq, bound_energy, bound_l2, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, build_mesh, Grading};
    use crate::model::CoefficientFn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(alpha: f64) -> BeamProblem {
        BeamProblem::new(
            CoefficientFn::Power(alpha),
            CoefficientFn::constant(1.0),
            2.0,
            1.0,
            0.5,
            2.0,
        )
        .unwrap()
    }

    fn ops(alpha: f64, n: usize) -> (BeamProblem, DiscreteOperators) {
        let p = problem(alpha);
        let mesh = build_mesh(n, Grading::Geometric(1.3)).unwrap();
        let o = assemble(&p, &mesh, 6).unwrap();
        (p, o)
    }

    #[test]
    fn zero_data_gives_zero() {
        let (p, o) = ops(0.5, 8);
        let s = resolvent_solve(&o, &p, &ResolventData::zero(o.dim(), 4)).unwrap();
        assert_eq!(s.u.norm(), 0.0);
        assert_eq!(s.v.norm(), 0.0);
        assert!(s.w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn convolution_exact_for_linear_data() {
        // h(r) = r: τ∫_0^s e^{-τ(s-r)} r dr = s − (1 − e^{-τs})/τ
        let tau = 0.7;
        let n = 5;
        let h: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
        let c = history_convolution(tau, &h);
        for (j, v) in c.iter().enumerate() {
            let s = j as f64 / n as f64;
            let exact = s - (1.0 - (-tau * s).exp()) / tau;
            assert!((v - exact).abs() < 1e-15, "{v} {exact}");
        }
    }

    #[test]
    fn pure_velocity_load_gives_exponential_history() {
        let (p, o) = ops(0.5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = ResolventData::zero(o.dim(), 10);
        data.g = DVector::from_fn(o.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let s = resolvent_solve(&o, &p, &data).unwrap();
        let u1 = o.trace_value.dot(&s.u);
        for (j, w) in s.w.iter().enumerate() {
            let exact = u1 * (-p.tau * j as f64 / 10.0).exp();
            assert!((w - exact).abs() <= 1e-14 * u1.abs().max(1.0));
        }
        assert!(s.residual < 1e-10);
    }

    /// Dense monolithic solve in (u, v, w_1..w_N) with the exact cell propagator.
    fn block_oracle(o: &DiscreteOperators, p: &BeamProblem, d: &ResolventData) -> (DVector<f64>, DVector<f64>, Vec<f64>) {
        let n = o.dim();
        let nh = d.h.len() - 1;
        let ds = 1.0 / nh as f64;
        let size = 2 * n + nh;
        let mut a = DMatrix::zeros(size, size);
        let mut b = DVector::zeros(size);
        let k = o.stiffness();
        let e = &o.trace_value;
        let iv = n - 2; // value dof at x = 1
        // u − v = f
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(i, n + i)] = -1.0;
            b[i] = d.f[i];
        }
        // M v + K u + (κ1 v(1) + κ2 w_N) e = M g
        let mg = &o.mass * &d.g;
        for i in 0..n {
            for j in 0..n {
                a[(n + i, j)] = k[(i, j)];
                a[(n + i, n + j)] = o.mass[(i, j)];
            }
            b[n + i] = mg[i];
        }
        for i in 0..n {
            a[(n + i, n + iv)] += p.kappa1 * e[i];
            a[(n + i, 2 * n + nh - 1)] += p.kappa2 * e[i];
        }
        // w_j − E w_{j−1} = τ ∫_cell e^{-τ(s_j − r)} h(r) dr, w_0 = v(1); cell integrals by fine Simpson
        let big_e = (-p.tau * ds).exp();
        for j in 1..=nh {
            let row = 2 * n + j - 1;
            a[(row, row)] = 1.0;
            if j == 1 {
                a[(row, n + iv)] = -big_e;
            } else {
                a[(row, row - 1)] = -big_e;
            }
            let m = 2000;
            let hh = ds / m as f64;
            let (s0, sj) = ((j - 1) as f64 * ds, j as f64 * ds);
            let integrand = |r: f64| {
                let hv = d.h[j - 1] + (d.h[j] - d.h[j - 1]) * (r - s0) / ds;
                p.tau * (-p.tau * (sj - r)).exp() * hv
            };
            let mut acc = integrand(s0) + integrand(sj);
            for q in 1..m {
                acc += integrand(s0 + q as f64 * hh) * if q % 2 == 1 { 4.0 } else { 2.0 };
            }
            b[row] = acc * hh / 3.0;
        }
        let x = a.lu().solve(&b).unwrap();
        let u = x.rows(0, n).into_owned();
        let v = x.rows(n, n).into_owned();
        let mut w = vec![x[n + iv]];
        w.extend(x.rows(2 * n, nh).iter().copied());
        (u, v, w)
    }

    #[test]
    fn matches_dense_block_oracle() {
        for alpha in [0.5, 1.5] {
            let p = problem(alpha);
            let mesh = build_mesh(8, Grading::Uniform).unwrap();
            let o = assemble(&p, &mesh, 6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let nh = 6;
            let data = ResolventData {
                f: DVector::from_fn(o.dim(), |_, _| rng.gen_range(-1.0..1.0)),
                g: DVector::from_fn(o.dim(), |_, _| rng.gen_range(-1.0..1.0)),
                h: (0..=nh).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let s = resolvent_solve(&o, &p, &data).unwrap();
            let (u, v, w) = block_oracle(&o, &p, &data);
            let scale = u.norm().max(1.0);
            assert!((&s.u - &u).norm() <= 1e-8 * scale);
            assert!((&s.v - &v).norm() <= 1e-8 * scale);
            for (a, b) in s.w.iter().zip(&w) {
                assert!((a - b).abs() <= 1e-8 * scale, "{a} {b}");
            }
        }
    }

    #[test]
    fn auxiliary_homogeneous_and_identity() {
        let (p, o) = ops(0.5, 16);
        let s = auxiliary_solve(&o, &p, 0.0, 0.0).unwrap();
        assert_eq!(s.y.norm(), 0.0);
        let s = auxiliary_solve(&o, &p, 1.0, 0.0).unwrap();
        let y1 = o.trace_value.dot(&s.y);
        assert!((s.energy_sq - y1).abs() <= 1e-12 * y1.abs());
    }

    #[test]
    fn auxiliary_matches_dense_oracle() {
        let (p, o) = ops(1.5, 8);
        let s = auxiliary_solve(&o, &p, 1.0, 1.0).unwrap();
        let k = o.stiffness();
        let b = &o.trace_value + &o.trace_slope;
        let y = k.lu().solve(&b).unwrap();
        assert!((&s.y - &y).norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn auxiliary_bounds_hold_for_random_loads() {
        for alpha in [0.5, 1.5] {
            let (p, o) = ops(alpha, 16);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..50 {
                let (l, m) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let s = auxiliary_solve(&o, &p, l, m).unwrap();
                assert!(s.energy_sq <= s.bound_energy);
                assert!(s.l2_sq <= s.bound_l2);
            }
        }
    }

    #[test]
    fn auxiliary_energy_monotone_under_refinement() {
        // nested spaces: the energy of the Ritz solution increases toward the limit
        let p = problem(0.5);
        let mut prev = 0.0;
        for n in [4, 8, 16, 32] {
            let o = assemble(&p, &build_mesh(n, Grading::Uniform).unwrap(), 6).unwrap();
            let e = auxiliary_solve(&o, &p, 1.0, 0.5).unwrap().energy_sq;
            assert!(e >= prev - 1e-10, "{n}: {e} < {prev}");
            prev = e;
        }
        let mut prev = 0.0;
        let mut n = 4;
        let mut r: f64 = 1.6;
        for _ in 0..3 {
            let o = assemble(&p, &build_mesh(n, Grading::Geometric(r)).unwrap(), 6).unwrap();
            let e = auxiliary_solve(&o, &p, 1.0, 0.5).unwrap().energy_sq;
            assert!(e >= prev - 1e-10, "{n}: {e} < {prev}");
            prev = e;
            n *= 2;
            r = r.sqrt();
        }
    }

    #[test]
    fn discrete_hardy_and_trace_inequalities() {
        for alpha in [0.5, 1.5] {
            let (p, o) = ops(alpha, 16);
            let q0 = p.q0();
            let sig1 = p.sigma_at_tip();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            // slope-only energy ∫u'² uses the tension matrix with q ≡ 1
            for _ in 0..200 {
                let u = DVector::from_fn(o.dim(), |_, _| rng.gen_range(-1.0..1.0));
                let l2 = u.dot(&(&o.mass * &u));
                let tq = u.dot(&(&o.stiff_q * &u));
                let ts = u.dot(&(&o.stiff_sigma * &u));
                let slope1 = o.trace_slope.dot(&u);
                assert!(l2 <= tq * (1.0 + 1e-12));
                let rhs = 2.0 * (tq / q0 + ts / (sig1 * (2.0 - p.iota_sigma)));
                assert!(slope1 * slope1 <= rhs * (1.0 + 1e-12));
            }
        }
    }
}
