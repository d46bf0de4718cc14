//! Graded meshes and the C¹ cubic Hermite discretization of the weighted
//! fourth-order form.
//!
//! Global dofs are interleaved per node: `2i` is the value and `2i + 1` the
//! slope at node `i`. Essential conditions at the clamp remove dofs from the
//! trial space; all assembled matrices live on the remaining (free) dofs.

pub mod hermite;
mod solve;

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{BeamProblem, Degeneracy};
use crate::quadrature::GaussRule;

pub use solve::{auxiliary_solve, resolvent_solve, AuxiliarySolution, ResolventData, ResolventSolution, ScaledSolver};

/// Default Gauss points per element.
pub const DEFAULT_QUAD_ORDER: usize = 6;
/// Default grading ratio toward the clamp.
pub const DEFAULT_RATIO: f64 = 1.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("bad grading: {0}")]
    BadGrading(String),
    #[error("quadrature order {0} below the minimum of 4")]
    QuadOrderTooLow(usize),
    #[error("quadrature node at the degeneracy x = {0}")]
    QuadratureAtDegeneracy(f64),
    #[error("assembled stiffness is not positive definite on the constrained space")]
    NotCoercive,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("a-priori bound violated: {what} = {value:e} exceeds {bound:e}")]
    BoundViolation { what: &'static str, value: f64, bound: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Grading {
    Uniform,
    Geometric(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub grading: Grading,
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn width(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    /// Element containing `x` (right-closed except for the first element).
    pub fn locate(&self, x: f64) -> usize {
        let n = self.n_elements();
        match self
            .nodes
            .binary_search_by(|p| p.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.saturating_sub(1).min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }
}

/// Builds a mesh of `n ≥ 4` elements on [0, 1]. Geometric widths grow by
/// `ratio ∈ (1, 2]` away from the origin.
pub fn build_mesh(n: usize, grading: Grading) -> Result<Mesh, DiscretizationError> {
    if n < 4 {
        return Err(DiscretizationError::BadGrading(format!("need at least 4 elements, got {n}")));
    }
    let nodes = match grading {
        Grading::Uniform => (0..=n).map(|i| i as f64 / n as f64).collect(),
        Grading::Geometric(r) => {
            if !(r > 1.0 && r <= 2.0) {
                return Err(DiscretizationError::BadGrading(format!("ratio {r} outside (1, 2]")));
            }
            let h0 = (r - 1.0) / (r.powi(n as i32) - 1.0);
            let mut nodes = Vec::with_capacity(n + 1);
            let mut x = 0.0;
            let mut h = h0;
            nodes.push(0.0);
            for _ in 0..n - 1 {
                x += h;
                nodes.push(x);
                h *= r;
            }
            nodes.push(1.0);
            nodes
        }
    };
    Ok(Mesh { nodes, grading })
}

/// Mass, stiffness, and trace data on the free dofs.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub mesh: Mesh,
    pub degeneracy: Degeneracy,
    pub quad_order: usize,
    /// Global dof index of each free dof.
    pub free: Vec<usize>,
    /// ∫ φ_i φ_j
    pub mass: DMatrix<f64>,
    /// ∫ σ φ_i'' φ_j''
    pub stiff_sigma: DMatrix<f64>,
    /// ∫ q φ_i' φ_j'
    pub stiff_q: DMatrix<f64>,
    /// ∫ x φ_i φ_j'  (the multiplier term of the Lyapunov cross functional)
    pub cross: DMatrix<f64>,
    /// Coefficients of u ↦ u(1).
    pub trace_value: DVector<f64>,
    /// Coefficients of u ↦ u'(1).
    pub trace_slope: DVector<f64>,
}

impl DiscreteOperators {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn n_global(&self) -> usize {
        2 * self.mesh.nodes.len()
    }

    pub fn stiffness(&self) -> DMatrix<f64> {
        &self.stiff_sigma + &self.stiff_q
    }

    /// Scatters free dofs into the full interleaved vector (constrained dofs are 0).
    pub fn expand(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut full = vec![0.0; self.n_global()];
        for (k, &g) in self.free.iter().enumerate() {
            full[g] = u[k];
        }
        full
    }

    fn restrict(&self, full: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&g| full[g]))
    }

    /// Hermite interpolant from a value and slope function.
    pub fn interpolate(&self, value: impl Fn(f64) -> f64, slope: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut full = vec![0.0; self.n_global()];
        for (i, &x) in self.mesh.nodes.iter().enumerate() {
            full[2 * i] = value(x);
            full[2 * i + 1] = slope(x);
        }
        self.restrict(&full)
    }

    /// Hermite interpolant from nodal values; slopes from second-order
    /// finite differences (one-sided at the ends).
    pub fn interpolate_nodal(&self, values: &[f64]) -> Result<DVector<f64>, DiscretizationError> {
        let xs = &self.mesh.nodes;
        if values.len() != xs.len() {
            return Err(DiscretizationError::DimensionMismatch {
                expected: xs.len(),
                got: values.len(),
            });
        }
        let n = xs.len();
        let mut full = vec![0.0; self.n_global()];
        for i in 0..n {
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            let (x0, x1, x2, x) = (xs[a], xs[b], xs[c], xs[i]);
            let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
            let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
            let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
            full[2 * i] = values[i];
            full[2 * i + 1] = values[a] * l0 + values[b] * l1 + values[c] * l2;
        }
        Ok(self.restrict(&full))
    }

    /// (u, u', u'') of the discrete function at `x`.
    pub fn evaluate(&self, u: &DVector<f64>, x: f64) -> (f64, f64, f64) {
        let full = self.expand(u);
        let e = self.mesh.locate(x);
        let h = self.mesh.width(e);
        let xi = (x - self.mesh.nodes[e]) / h;
        let loc = [full[2 * e], full[2 * e + 1], full[2 * e + 2], full[2 * e + 3]];
        let (v, d, dd) = (hermite::values(xi, h), hermite::first(xi, h), hermite::second(xi, h));
        let dot = |b: [f64; 4]| (0..4).map(|k| b[k] * loc[k]).sum::<f64>();
        (dot(v), dot(d), dot(dd))
    }

    /// |||y|||² = ∫σ y''² + ∫q y'².
    pub fn energy_norm_sq(&self, y: &DVector<f64>) -> f64 {
        y.dot(&(&self.stiff_sigma * y)) + y.dot(&(&self.stiff_q * y))
    }
}

/// Writes the nonzero entries as `row col value` lines (0-based indices).
pub fn write_coordinate<W: Write>(m: &DMatrix<f64>, mut out: W) -> io::Result<()> {
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
    }
    Ok(())
}

struct ElementMatrices {
    mass: [[f64; 4]; 4],
    sigma: [[f64; 4]; 4],
    q: [[f64; 4]; 4],
    cross: [[f64; 4]; 4],
}

fn element_matrices(
    problem: &BeamProblem,
    a: f64,
    h: f64,
    rule: &GaussRule,
) -> Result<ElementMatrices, DiscretizationError> {
    let mut m = ElementMatrices {
        mass: [[0.0; 4]; 4],
        sigma: [[0.0; 4]; 4],
        q: [[0.0; 4]; 4],
        cross: [[0.0; 4]; 4],
    };
    for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = a + h * xi;
        if x <= 0.0 {
            return Err(DiscretizationError::QuadratureAtDegeneracy(x));
        }
        let s = problem.sigma.eval(x);
        let qv = problem.q.eval(x);
        let n0 = hermite::values(xi, h);
        let n1 = hermite::first(xi, h);
        let n2 = hermite::second(xi, h);
        let wh = w * h;
        for i in 0..4 {
            for j in 0..4 {
                m.mass[i][j] += wh * n0[i] * n0[j];
                m.sigma[i][j] += wh * s * n2[i] * n2[j];
                m.q[i][j] += wh * qv * n1[i] * n1[j];
                m.cross[i][j] += wh * x * n0[i] * n1[j];
            }
        }
    }
    Ok(m)
}

/// Assembles the free-dof operators with `quad_order` Gauss points per element.
///
/// σ and q are sampled only at interior quadrature nodes. WD removes the value
/// and slope dofs at the clamp; SD removes the value only and leaves the
/// moment condition to the variational form.
pub fn assemble(problem: &BeamProblem, mesh: &Mesh, quad_order: usize) -> Result<DiscreteOperators, DiscretizationError> {
    if quad_order < 4 {
        return Err(DiscretizationError::QuadOrderTooLow(quad_order));
    }
    let rule = GaussRule::legendre(quad_order);
    let n_el = mesh.n_elements();
    let n_global = 2 * (n_el + 1);

    let locals: Vec<ElementMatrices> = (0..n_el)
        .into_par_iter()
        .map(|e| element_matrices(problem, mesh.nodes[e], mesh.width(e), &rule))
        .collect::<Result<_, _>>()?;

    let mut mass = DMatrix::zeros(n_global, n_global);
    let mut ks = DMatrix::zeros(n_global, n_global);
    let mut kq = DMatrix::zeros(n_global, n_global);
    let mut cross = DMatrix::zeros(n_global, n_global);
    for (e, loc) in locals.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                let (gi, gj) = (2 * e + i, 2 * e + j);
                mass[(gi, gj)] += loc.mass[i][j];
                ks[(gi, gj)] += loc.sigma[i][j];
                kq[(gi, gj)] += loc.q[i][j];
                cross[(gi, gj)] += loc.cross[i][j];
            }
        }
    }

    let constrained: &[usize] = match problem.degeneracy {
        Degeneracy::WD => &[0, 1],
        Degeneracy::SD => &[0],
    };
    let free: Vec<usize> = (0..n_global).filter(|g| !constrained.contains(g)).collect();
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(free.len(), free.len(), |i, j| m[(free[i], free[j])]);

    let dim = free.len();
    let mut trace_value = DVector::zeros(dim);
    let mut trace_slope = DVector::zeros(dim);
    trace_value[dim - 2] = 1.0;
    trace_slope[dim - 1] = 1.0;

    let ops = DiscreteOperators {
        mesh: mesh.clone(),
        degeneracy: problem.degeneracy,
        quad_order,
        mass: pick(&mass),
        stiff_sigma: pick(&ks),
        stiff_q: pick(&kq),
        cross: pick(&cross),
        free,
        trace_value,
        trace_slope,
    };
    if ops.stiffness().cholesky().is_none() {
        return Err(DiscretizationError::NotCoercive);
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn uniform_and_geometric_meshes() {
        let m = build_mesh(4, Grading::Uniform).unwrap();
        assert_eq!(m.nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let m = build_mesh(4, Grading::Geometric(2.0)).unwrap();
        let expected = [0.0, 1.0 / 15.0, 3.0 / 15.0, 7.0 / 15.0, 1.0];
        for (a, b) in m.nodes.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(build_mesh(2, Grading::Uniform), Err(DiscretizationError::BadGrading(_))));
        assert!(build_mesh(8, Grading::Geometric(2.5)).is_err());
        assert!(build_mesh(8, Grading::Geometric(1.0)).is_err());
    }

    #[test]
    fn geometric_widths_grow_away_from_origin() {
        let m = build_mesh(20, Grading::Geometric(1.3)).unwrap();
        for e in 1..m.n_elements() {
            let ratio = m.width(e) / m.width(e - 1);
            assert!((ratio - 1.3).abs() < 1e-9, "{ratio}");
        }
    }

    /// Closed-form cubic Hermite element matrices.
    fn element_mass(h: f64) -> [[f64; 4]; 4] {
        let c = h / 420.0;
        [
            [156.0 * c, 22.0 * h * c, 54.0 * c, -13.0 * h * c],
            [22.0 * h * c, 4.0 * h * h * c, 13.0 * h * c, -3.0 * h * h * c],
            [54.0 * c, 13.0 * h * c, 156.0 * c, -22.0 * h * c],
            [-13.0 * h * c, -3.0 * h * h * c, -22.0 * h * c, 4.0 * h * h * c],
        ]
    }

    fn element_tension(h: f64) -> [[f64; 4]; 4] {
        let c = 1.0 / (30.0 * h);
        [
            [36.0 * c, 3.0 * h * c, -36.0 * c, 3.0 * h * c],
            [3.0 * h * c, 4.0 * h * h * c, -3.0 * h * c, -h * h * c],
            [-36.0 * c, -3.0 * h * c, 36.0 * c, -3.0 * h * c],
            [3.0 * h * c, -h * h * c, -3.0 * h * c, 4.0 * h * h * c],
        ]
    }

    fn global_from_elements(mesh: &Mesh, f: impl Fn(f64) -> [[f64; 4]; 4]) -> DMatrix<f64> {
        let n = 2 * mesh.nodes.len();
        let mut m = DMatrix::zeros(n, n);
        for e in 0..mesh.n_elements() {
            let k = f(mesh.width(e));
            for i in 0..4 {
                for j in 0..4 {
                    m[(2 * e + i, 2 * e + j)] += k[i][j];
                }
            }
        }
        m
    }

    #[test]
    fn tension_and_mass_match_closed_form() {
        let p = problem(1.0);
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let ops = assemble(&p, &mesh, 6).unwrap();
        let kq = global_from_elements(&mesh, element_tension);
        let mm = global_from_elements(&mesh, element_mass);
        for (a, &ga) in ops.free.iter().enumerate() {
            for (b, &gb) in ops.free.iter().enumerate() {
                assert!((ops.stiff_q[(a, b)] - kq[(ga, gb)]).abs() < 1e-12);
                assert!((ops.mass[(a, b)] - mm[(ga, gb)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constraint_dimension_differs_by_one() {
        let mesh = build_mesh(8, Grading::Uniform).unwrap();
        let wd = assemble(&problem(0.5), &mesh, 6).unwrap();
        let sd = assemble(&problem(1.5), &mesh, 6).unwrap();
        assert_eq!(wd.degeneracy, Degeneracy::WD);
        assert_eq!(sd.degeneracy, Degeneracy::SD);
        assert_eq!(sd.dim(), wd.dim() + 1);
        assert!(!wd.free.contains(&1));
        assert!(sd.free.contains(&1));
    }

    #[test]
    fn quadratic_forms_vanish_on_zero_and_are_symmetric() {
        let mesh = build_mesh(8, Grading::Geometric(1.3)).unwrap();
        let ops = assemble(&problem(0.5), &mesh, 6).unwrap();
        let z = DVector::zeros(ops.dim());
        assert_eq!(ops.energy_norm_sq(&z), 0.0);
        assert_eq!(z.dot(&(&ops.mass * &z)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = DVector::from_fn(ops.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(ops.dim(), |_, _| rng.gen_range(-1.0..1.0));
            for k in [&ops.stiff_sigma, &ops.stiff_q] {
                let ab = a.dot(&(k * &b));
                let ba = b.dot(&(k * &a));
                assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
            }
        }
    }

    #[test]
    fn quad_order_checks() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        assert!(matches!(assemble(&problem(0.5), &mesh, 3), Err(DiscretizationError::QuadOrderTooLow(3))));
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let mesh = build_mesh(6, Grading::Geometric(1.5)).unwrap();
        let ops = assemble(&problem(1.5), &mesh, 6).unwrap();
        let u = ops.interpolate(|x| x * x * (3.0 - 2.0 * x), |x| 6.0 * x - 6.0 * x * x);
        for &x in &[0.01, 0.3, 0.77, 1.0] {
            let (v, d, dd) = ops.evaluate(&u, x);
            assert!((v - x * x * (3.0 - 2.0 * x)).abs() < 1e-13);
            assert!((d - (6.0 * x - 6.0 * x * x)).abs() < 1e-12);
            assert!((dd - (6.0 - 12.0 * x)).abs() < 1e-9);
        }
        // nodal FD slopes are exact for quadratics
        let vals: Vec<f64> = mesh.nodes.iter().map(|x| x * x).collect();
        let u = ops.interpolate_nodal(&vals).unwrap();
        let (_, d, _) = ops.evaluate(&u, 0.5);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinate_export() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.5]);
        let mut buf = Vec::new();
        write_coordinate(&m, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1 1 2.5"));
    }
}
