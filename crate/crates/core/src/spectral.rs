//! The discrete augmented generator on `(u; v; w_1..w_N)` and its spectrum.
//!
//! `u̇ = v`, `M v̇ = −K u − (κ1 v(1) + κ2 w_N) e`, and first-order upwind
//! transport `ẇ_j = −(N/τ)(w_j − w_{j−1})` with inflow `w_0 = v(1)`.
//! The inner product is `blockdiag(K, M, (γτ/N) I)`.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::discretization::DiscreteOperators;
use crate::model::BeamProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigenvalue iteration did not converge")]
    EigSolverFailure,
    #[error("generator needs at least one history cell")]
    EmptyHistory,
    #[error("inner product matrix is not positive definite on the (u, v) block")]
    InnerProductNotDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub a: DMatrix<f64>,
    pub hmat: DMatrix<f64>,
    /// Size of the (u, v) block; the remaining rows are the history grid.
    pub n_uv: usize,
    /// Similar matrix in energy coordinates, built block by block so that its
    /// skew part cancels exactly in the symmetric part.
    structured: Option<DMatrix<f64>>,
}

impl GeneratorMatrix {
    /// Wraps given matrices; the whole of `hmat` is treated as the (u, v) block.
    pub fn from_parts(a: DMatrix<f64>, hmat: DMatrix<f64>) -> Result<Self, SpectralError> {
        if a.nrows() != a.ncols() || hmat.shape() != a.shape() {
            return Err(SpectralError::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), hmat.shape())));
        }
        let n_uv = a.nrows();
        Ok(GeneratorMatrix { a, hmat, n_uv, structured: None })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `Yᵀ H A Y / Yᵀ H Y`.
    pub fn dissipativity_ratio(&self, y: &DVector<f64>) -> f64 {
        let hy = &self.hmat * y;
        let num = hy.dot(&(&self.a * y));
        let den = hy.dot(y);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// `T A T⁻¹` with `T` the transposed Cholesky factor of the (u, v) block of
    /// `H` and the square root of the (diagonal) history block where positive.
    /// The similarity shrinks the norm of the stiff block from `‖M⁻¹K‖` to its
    /// square root without changing the eigenvalues.
    pub fn balanced(&self) -> Result<DMatrix<f64>, SpectralError> {
        if let Some(b) = &self.structured {
            return Ok(b.clone());
        }
        self.balanced_generic()
    }

    fn balanced_generic(&self) -> Result<DMatrix<f64>, SpectralError> {
        let n = self.dim();
        let nuv = self.n_uv;
        let huv = self.hmat.view((0, 0), (nuv, nuv)).into_owned();
        let chol: Cholesky<f64, Dyn> = huv.cholesky().ok_or(SpectralError::InnerProductNotDefinite)?;
        let l = chol.l();
        let mut t = DMatrix::<f64>::identity(n, n);
        t.view_mut((0, 0), (nuv, nuv)).copy_from(&l.transpose());
        for j in nuv..n {
            let d = self.hmat[(j, j)];
            if d > 0.0 {
                t[(j, j)] = d.sqrt();
            }
        }
        // T A T⁻¹ = (T⁻ᵀ (T A)ᵀ)ᵀ; T is upper triangular.
        let ta = &t * &self.a;
        let x = t
            .transpose()
            .solve_lower_triangular(&ta.transpose())
            .ok_or(SpectralError::InnerProductNotDefinite)?;
        Ok(x.transpose())
    }
}

/// Builds the generator and its inner product from assembled operators.
pub fn assemble_generator(
    problem: &BeamProblem,
    ops: &DiscreteOperators,
    n_hist: usize,
) -> Result<GeneratorMatrix, SpectralError> {
    if n_hist < 1 {
        return Err(SpectralError::EmptyHistory);
    }
    let n = ops.dim();
    let size = 2 * n + n_hist;
    let k = ops.stiffness();
    let minv = ops.mass.clone().cholesky().ok_or(SpectralError::InnerProductNotDefinite)?.inverse();
    let e = &ops.trace_value;
    let me = &minv * e;
    let iv = (0..n).find(|&i| e[i] == 1.0).expect("tip value dof");
    let mut a = DMatrix::zeros(size, size);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
    }
    let mk = -&minv * &k;
    a.view_mut((n, 0), (n, n)).copy_from(&mk);
    for i in 0..n {
        a[(n + i, n + iv)] -= problem.kappa1 * me[i];
        a[(n + i, 2 * n + n_hist - 1)] -= problem.kappa2 * me[i];
    }
    let rate = n_hist as f64 / problem.tau;
    for j in 0..n_hist {
        let row = 2 * n + j;
        a[(row, row)] = -rate;
        if j == 0 {
            a[(row, n + iv)] = rate;
        } else {
            a[(row, row - 1)] = rate;
        }
    }
    let mut hmat = DMatrix::zeros(size, size);
    hmat.view_mut((0, 0), (n, n)).copy_from(&k);
    hmat.view_mut((n, n), (n, n)).copy_from(&ops.mass);
    let wh = problem.gamma * problem.tau / n_hist as f64;
    for j in 0..n_hist {
        hmat[(2 * n + j, 2 * n + j)] = wh;
    }

    // z = (Lₖᵀu, Lₘᵀv, s w): ż = [[0, C, 0], [−Cᵀ, −κ1 d dᵀ, −(κ2/s) d e_Nᵀ], [s r d e_1ᵀ, ·, transport]]
    let lk = k.cholesky().ok_or(SpectralError::InnerProductNotDefinite)?.l();
    let lm = ops.mass.clone().cholesky().ok_or(SpectralError::InnerProductNotDefinite)?.l();
    let c = lm
        .solve_lower_triangular(&lk)
        .ok_or(SpectralError::InnerProductNotDefinite)?
        .transpose();
    let d = lm.solve_lower_triangular(e).ok_or(SpectralError::InnerProductNotDefinite)?;
    let sw = if wh > 0.0 { wh.sqrt() } else { 1.0 };
    let mut b = DMatrix::zeros(size, size);
    b.view_mut((0, n), (n, n)).copy_from(&c);
    b.view_mut((n, 0), (n, n)).copy_from(&(-c.transpose()));
    b.view_mut((n, n), (n, n)).copy_from(&(-problem.kappa1 * &d * d.transpose()));
    for i in 0..n {
        b[(n + i, 2 * n + n_hist - 1)] = -problem.kappa2 / sw * d[i];
        b[(2 * n, n + i)] = sw * rate * d[i];
    }
    for j in 0..n_hist {
        let row = 2 * n + j;
        b[(row, row)] = -rate;
        if j > 0 {
            b[(row, row - 1)] = rate;
        }
    }
    Ok(GeneratorMatrix { a, hmat, n_uv: 2 * n, structured: Some(b) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// (Re, Im) pairs sorted by decreasing real part; real parts refined by
    /// [`refine_real_parts`].
    pub eigenvalues: Vec<(f64, f64)>,
    pub abscissa: f64,
    /// Largest real part straight from the Schur form.
    pub abscissa_raw: f64,
    pub n_unstable: usize,
    /// Largest sampled `Yᵀ H A Y / Yᵀ H Y`.
    pub dissipativity_max: f64,
    pub n_probes: usize,
    /// Largest eigenvalue of the symmetric part of the balanced generator
    /// (the exact supremum of the sampled ratio, when H is definite).
    pub numerical_abscissa: Option<f64>,
}

/// Eigenvalues with real part above this are counted as unstable.
pub const UNSTABLE_TOL: f64 = 1e-9;

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>, SpectralError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = m.clone().try_schur(1e-15, 100 * n).ok_or(SpectralError::EigSolverFailure)?;
    let mut ev: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    if ev.iter().any(|z| !z.0.is_finite() || !z.1.is_finite()) {
        return Err(SpectralError::EigSolverFailure);
    }
    ev.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    Ok(ev)
}

/// Recomputes each real part as `x*Sx / x*x`, with `x` an eigenvector from
/// two steps of complex inverse iteration and `S` the symmetric part of `b`.
///
/// For a dissipative `b` the Schur real parts of weakly damped modes are
/// swamped by rounding of order `ε‖b‖`; the quadratic form of `S` involves
/// only the damping entries and keeps its sign. Imaginary parts are kept.
pub fn refine_real_parts(b: &DMatrix<f64>, ev: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = b.nrows();
    let sym = 0.5 * (b + b.transpose());
    let bc: DMatrix<Complex<f64>> = b.map(|x| Complex::new(x, 0.0));
    let symc: DMatrix<Complex<f64>> = sym.map(|x| Complex::new(x, 0.0));
    let scale = b.amax().max(1.0);
    let mut out: Vec<(f64, f64)> = ev
        .iter()
        .map(|&(re, im)| {
            let mu = Complex::new(re, im);
            let mut shifted = bc.clone();
            // offset keeps the shifted matrix numerically nonsingular
            let mu = mu + Complex::new(0.0, 1e-13 * scale);
            for i in 0..n {
                shifted[(i, i)] -= mu;
            }
            let lu = shifted.lu();
            let mut x = DVector::from_fn(n, |i, _| Complex::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1));
            for _ in 0..2 {
                match lu.solve(&x) {
                    Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                        let nrm = y.norm();
                        if nrm == 0.0 {
                            return (re, im);
                        }
                        x = y.unscale(nrm);
                    }
                    _ => return (re, im),
                }
            }
            let xx = x.dotc(&x).re;
            let re_ref = x.dotc(&(&symc * &x)).re / xx;
            (re_ref, im)
        })
        .collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    out
}

/// Dense eigensolve of the balanced generator plus a random probe of the
/// dissipativity form.
pub fn spectrum(gen: &GeneratorMatrix, n_probes: usize, seed: u64) -> Result<SpectrumReport, SpectralError> {
    let balanced = gen.balanced()?;
    let raw = eigenvalues(&balanced)?;
    let abscissa_raw = raw.first().map(|z| z.0).unwrap_or(f64::NEG_INFINITY);
    let ev = refine_real_parts(&balanced, &raw);
    let abscissa = ev.first().map(|z| z.0).unwrap_or(f64::NEG_INFINITY);
    let n_unstable = ev.iter().filter(|z| z.0 > UNSTABLE_TOL).count();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dmax = f64::NEG_INFINITY;
    for _ in 0..n_probes {
        let y = DVector::from_fn(gen.dim(), |_, _| rng.gen_range(-1.0..1.0));
        dmax = dmax.max(gen.dissipativity_ratio(&y));
    }
    let definite = gen.hmat.clone().cholesky().is_some();
    let numerical_abscissa = if definite && gen.dim() > 0 {
        let sym = 0.5 * (&balanced + balanced.transpose());
        Some(sym.symmetric_eigenvalues().max())
    } else {
        None
    };
    Ok(SpectrumReport {
        eigenvalues: ev,
        abscissa,
        abscissa_raw,
        n_unstable,
        dissipativity_max: dmax,
        n_probes,
        numerical_abscissa,
    })
}
