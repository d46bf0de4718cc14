//! Simulation and verification of a degenerate Euler–Bernoulli beam with
//! axial load and delayed tip feedback.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod delay;
pub mod diagnostics;
pub mod discretization;
pub mod inequalities;
pub mod integrator;
pub mod model;
pub mod quadrature;
pub mod spectral;
