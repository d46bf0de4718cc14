use std::fmt;
use std::path::Path;
use std::sync::Arc;

use super::expr::Expr;
use super::ModelError;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A spatial coefficient on [0, 1] together with its derivative.
#[derive(Clone)]
pub enum CoefficientFn {
    /// `x^alpha`, alpha > 0.
    Power(f64),
    /// Piecewise-linear table with a matching derivative table.
    Tabulated(Table),
    /// Parsed expression with its symbolic derivative.
    Expression { expr: Expr, deriv: Expr, source: String },
    /// Arbitrary closures (value, derivative).
    Callable { value: ScalarFn, deriv: ScalarFn, label: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl Table {
    /// Builds a table; when `derivs` is `None` the derivative is estimated with
    /// second-order finite differences on the (possibly nonuniform) sample grid.
    pub fn new(xs: Vec<f64>, values: Vec<f64>, derivs: Option<Vec<f64>>) -> Result<Self, ModelError> {
        if xs.len() < 3 || xs.len() != values.len() {
            return Err(ModelError::BadTable("need at least 3 (x, value) samples".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::BadTable("abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::BadTable("non-finite sample".into()));
        }
        let derivs = match derivs {
            Some(d) if d.len() == xs.len() => d,
            Some(_) => return Err(ModelError::BadTable("derivative column length mismatch".into())),
            None => fd_slopes(&xs, &values),
        };
        Ok(Table { xs, values, derivs })
    }

    /// Reads whitespace- or comma-separated columns `x value [derivative]`;
    /// lines starting with `#` are ignored.
    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::BadTable(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        let mut ds = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Result<Vec<f64>, _> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            let cols = cols.map_err(|e| ModelError::BadTable(format!("line {}: {e}", lineno + 1)))?;
            match cols.len() {
                2 => {
                    xs.push(cols[0]);
                    vs.push(cols[1]);
                }
                3 => {
                    xs.push(cols[0]);
                    vs.push(cols[1]);
                    ds.push(cols[2]);
                }
                n => return Err(ModelError::BadTable(format!("line {}: expected 2 or 3 columns, got {n}", lineno + 1))),
            }
        }
        let derivs = if ds.is_empty() { None } else { Some(ds) };
        Table::new(xs, vs, derivs)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.xs.len();
        let i = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        (i, t)
    }

    fn interp(&self, ys: &[f64], x: f64) -> f64 {
        let (i, t) = self.locate(x);
        ys[i] + t * (ys[i + 1] - ys[i])
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.values.iter().copied())
    }
}

fn fd_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (a, b, c) = if i == 0 {
            (0, 1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (i - 1, i, i + 1)
        };
        // derivative of the quadratic through (a, b, c) evaluated at xs[i]
        let (x0, x1, x2) = (xs[a], xs[b], xs[c]);
        let x = xs[i];
        let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        d[i] = ys[a] * l0 + ys[b] * l1 + ys[c] * l2;
    }
    d
}

impl CoefficientFn {
    pub fn constant(c: f64) -> Self {
        CoefficientFn::Expression {
            expr: Expr::Const(c),
            deriv: Expr::Const(0.0),
            source: format!("{c}"),
        }
    }

    pub fn expression(src: &str) -> Result<Self, ModelError> {
        let expr = Expr::parse(src).map_err(|e| ModelError::BadExpression {
            source_text: src.to_string(),
            reason: e.to_string(),
        })?;
        let deriv = expr.derivative();
        Ok(CoefficientFn::Expression {
            expr,
            deriv,
            source: src.to_string(),
        })
    }

    pub fn callable(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CoefficientFn::Callable {
            value: Arc::new(value),
            deriv: Arc::new(deriv),
            label: label.into(),
        }
    }

    /// Parses the config syntax: `power:<alpha>`, `table:<path>`, or an expression.
    pub fn from_spec(spec: &str, base_dir: Option<&Path>) -> Result<Self, ModelError> {
        let s = spec.trim();
        if let Some(alpha) = s.strip_prefix("power:") {
            let a: f64 = alpha
                .trim()
                .parse()
                .map_err(|_| ModelError::BadExpression {
                    source_text: s.to_string(),
                    reason: "power exponent is not a number".into(),
                })?;
            if !(a > 0.0) || !a.is_finite() {
                return Err(ModelError::BadExpression {
                    source_text: s.to_string(),
                    reason: "power exponent must be positive".into(),
                });
            }
            return Ok(CoefficientFn::Power(a));
        }
        if let Some(path) = s.strip_prefix("table:") {
            let p = Path::new(path.trim());
            let full = match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            return Ok(CoefficientFn::Tabulated(Table::from_file(&full)?));
        }
        Self::expression(s)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CoefficientFn::Power(a) => x.powf(*a),
            CoefficientFn::Tabulated(t) => t.interp(&t.values, x),
            CoefficientFn::Expression { expr, .. } => expr.eval(x),
            CoefficientFn::Callable { value, .. } => value(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            CoefficientFn::Power(a) => a * x.powf(a - 1.0),
            CoefficientFn::Tabulated(t) => t.interp(&t.derivs, x),
            CoefficientFn::Expression { deriv, .. } => deriv.eval(x),
            CoefficientFn::Callable { deriv, .. } => deriv(x),
        }
    }

    pub fn is_power(&self) -> Option<f64> {
        match self {
            CoefficientFn::Power(a) => Some(*a),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            CoefficientFn::Power(a) => format!("power:{a}"),
            CoefficientFn::Tabulated(t) => format!("table[{} samples]", t.xs.len()),
            CoefficientFn::Expression { source, .. } => source.clone(),
            CoefficientFn::Callable { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientFn({})", self.label())
    }
}
