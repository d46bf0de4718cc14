//! Cubic Hermite shape functions on a single element of width `h`.
//!
//! Local dofs are ordered (u_a, u'_a, u_b, u'_b); `xi` is the unit coordinate.

/// Values of the four shape functions.
pub fn values(xi: f64, h: f64) -> [f64; 4] {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (x3 - x2),
    ]
}

/// First derivatives with respect to x.
pub fn first(xi: f64, h: f64) -> [f64; 4] {
    let x2 = xi * xi;
    [
        (6.0 * x2 - 6.0 * xi) / h,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / h,
        3.0 * x2 - 2.0 * xi,
    ]
}

/// Second derivatives with respect to x.
pub fn second(xi: f64, h: f64) -> [f64; 4] {
    [
        (12.0 * xi - 6.0) / (h * h),
        (6.0 * xi - 4.0) / h,
        (6.0 - 12.0 * xi) / (h * h),
        (6.0 * xi - 2.0) / h,
    ]
}
