//! Grids and dense assembly of the Schrödinger operators `L+`, `L-`, `L0`
//! and of the coupled stability matrix.

use std::f64::consts::PI;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible number of grid nodes.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FourierCollocation,
    FiniteDifference4,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FourierCollocation => "fourier",
            Scheme::FiniteDifference4 => "fd4",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fourier" | "fourier_collocation" => Ok(Scheme::FourierCollocation),
            "fd4" | "finite_difference_4" => Ok(Scheme::FiniteDifference4),
            other => Err(OperatorError::InvalidArgument(format!(
                "unknown scheme `{other}` (expected fourier or fd4)"
            ))),
        }
    }
}

/// Uniform grid on `[-L, L)`.
///
/// For finite differences the node `x = -L` is a Dirichlet boundary node:
/// it is decoupled from the interior so that the interior nodes are
/// symmetric about the origin and the parity map `j -> (N - j) mod N`
/// is shared by both schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub half_length: f64,
    pub n_points: usize,
    pub nodes: Vec<f64>,
    pub spacing: f64,
    pub scheme: Scheme,
}

pub fn build_grid(half_length: f64, n_points: usize, scheme: Scheme) -> Result<Grid, OperatorError> {
    if !(half_length.is_finite() && half_length > 0.0) {
        return Err(OperatorError::InvalidGrid(format!(
            "half_length must be positive and finite, got {half_length}"
        )));
    }
    if n_points < MIN_POINTS {
        return Err(OperatorError::InvalidGrid(format!(
            "n_points must be at least {MIN_POINTS}, got {n_points}"
        )));
    }
    if n_points % 2 != 0 {
        return Err(OperatorError::InvalidGrid(format!("n_points must be even, got {n_points}")));
    }
    let spacing = 2.0 * half_length / n_points as f64;
    let nodes = (0..n_points).map(|j| -half_length + j as f64 * spacing).collect();
    Ok(Grid { half_length, n_points, nodes, spacing, scheme })
}

impl Grid {
    /// Index of the mirror node `-x_j`.
    pub fn mirror(&self, j: usize) -> usize {
        (self.n_points - j) % self.n_points
    }

    /// Trapezoid (equivalently, periodic rectangle) inner product weight.
    pub fn weight(&self) -> f64 {
        self.spacing
    }

    /// Grid wavenumbers `|k_m| = π m / L`, `m = 0..=N/2`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..=self.n_points / 2).map(|m| PI * m as f64 / self.half_length).collect()
    }
}

/// Complex-scaled exterior `x -> x + i∫σ` with
/// `σ(x) = strength · (1 + tanh((|x| - onset)/width)) / 2`.
///
/// Outgoing tails are damped inside the layer, so resonances embedded in the
/// continuum become isolated eigenvalues of the scaled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingLayer {
    pub onset: f64,
    pub strength: f64,
    pub width: f64,
}

impl AbsorbingLayer {
    /// Layer starting at `0.6 L` with unit strength and width 2.
    pub fn default_for(grid: &Grid) -> Self {
        AbsorbingLayer { onset: 0.6 * grid.half_length, strength: 1.0, width: 2.0 }
    }

    fn validate(&self, grid: &Grid) -> Result<(), OperatorError> {
        let ok = self.onset > 0.0
            && self.onset < grid.half_length
            && self.strength > 0.0
            && self.width > 0.0
            && self.strength.is_finite()
            && self.width.is_finite();
        if ok {
            Ok(())
        } else {
            Err(OperatorError::InvalidArgument(format!(
                "absorbing layer {self:?} incompatible with half_length {}",
                grid.half_length
            )))
        }
    }

    /// `(z', z'')` of the scaled coordinate at `x`.
    fn metric(&self, x: f64) -> (c64, c64) {
        let t = ((x.abs() - self.onset) / self.width).tanh();
        let sigma = self.strength * 0.5 * (1.0 + t);
        let dsigma = x.signum() * self.strength * 0.5 * (1.0 - t * t) / self.width;
        (c64::new(1.0, sigma), c64::new(0.0, dsigma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorLabel {
    Lplus,
    Lminus,
    L0,
    Coupled,
    Custom,
}

#[derive(Debug, Clone)]
pub enum Entries {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: Entries,
    pub grid: Grid,
    pub label: OperatorLabel,
    pub absorbing: Option<AbsorbingLayer>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        match &self.entries {
            Entries::Real(m) => m.nrows(),
            Entries::Complex(m) => m.nrows(),
        }
    }

    pub fn real(&self) -> Option<&Mat<f64>> {
        match &self.entries {
            Entries::Real(m) => Some(m),
            Entries::Complex(_) => None,
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match &self.entries {
            Entries::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0)),
            Entries::Complex(m) => m.clone(),
        }
    }

    /// Wraps a user-supplied real matrix, mainly for solver tests.
    pub fn custom(entries: Mat<f64>, grid: Grid) -> Self {
        OperatorMatrix { entries: Entries::Real(entries), grid, label: OperatorLabel::Custom, absorbing: None }
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let m = self.to_complex();
        let n = m.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).norm());
            }
        }
        worst
    }
}

/// Periodic spectral second-derivative matrix on period `2L`.
fn fourier_second_derivative(n: usize, half_length: f64) -> Mat<f64> {
    let scale = PI / half_length;
    let h_angle = PI / n as f64; // half the angular spacing, h·π/(2L)
    let mut col = vec![0.0; n];
    col[0] = -scale * scale * ((n * n) as f64 / 12.0 + 1.0 / 6.0);
    for (m, c) in col.iter_mut().enumerate().skip(1) {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let s = (m as f64 * h_angle).sin();
        *c = -0.5 * sign / (s * s) * scale * scale;
    }
    Mat::from_fn(n, n, |i, j| col[(j + n - i) % n])
}

/// Periodic spectral first-derivative matrix on period `2L`.
fn fourier_first_derivative(n: usize, half_length: f64) -> Mat<f64> {
    let scale = PI / half_length;
    let h_angle = PI / n as f64;
    let mut col = vec![0.0; n];
    for (m, c) in col.iter_mut().enumerate().skip(1) {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let t = (m as f64 * h_angle).tan();
        *c = -0.5 * sign / t * scale;
    }
    Mat::from_fn(n, n, |i, j| col[(j + n - i) % n])
}

fn stencil_matrix(n: usize, stencil: &[(isize, f64)], center: f64) -> Mat<f64> {
    // Node 0 is the decoupled boundary node; interior nodes see zero beyond the ends.
    let mut m = Mat::<f64>::zeros(n, n);
    m[(0, 0)] = center;
    for i in 1..n {
        for &(offset, c) in stencil {
            let j = i as isize + offset;
            if j >= 1 && (j as usize) < n {
                m[(i, j as usize)] = c;
            }
        }
    }
    m
}

fn fd4_second_derivative(n: usize, h: f64) -> Mat<f64> {
    let s = 1.0 / (h * h);
    let stencil = [
        (-2, -s / 12.0),
        (-1, 4.0 * s / 3.0),
        (0, -2.5 * s),
        (1, 4.0 * s / 3.0),
        (2, -s / 12.0),
    ];
    stencil_matrix(n, &stencil, -2.5 * s)
}

fn fd4_first_derivative(n: usize, h: f64) -> Mat<f64> {
    let s = 1.0 / h;
    let stencil = [(-2, s / 12.0), (-1, -2.0 * s / 3.0), (1, 2.0 * s / 3.0), (2, -s / 12.0)];
    stencil_matrix(n, &stencil, 0.0)
}

/// Second-derivative matrix of the grid's scheme.
pub fn second_derivative(grid: &Grid) -> Mat<f64> {
    match grid.scheme {
        Scheme::FourierCollocation => fourier_second_derivative(grid.n_points, grid.half_length),
        Scheme::FiniteDifference4 => fd4_second_derivative(grid.n_points, grid.spacing),
    }
}

/// First-derivative matrix of the grid's scheme.
pub fn first_derivative(grid: &Grid) -> Mat<f64> {
    match grid.scheme {
        Scheme::FourierCollocation => fourier_first_derivative(grid.n_points, grid.half_length),
        Scheme::FiniteDifference4 => fd4_first_derivative(grid.n_points, grid.spacing),
    }
}

pub fn sech_sq(x: f64) -> f64 {
    let s = 1.0 / x.cosh();
    s * s
}

/// Dense `-∂² + shift - well_depth·sech²(x)`.
pub fn assemble_schrodinger(grid: &Grid, well_depth: f64, shift: f64) -> OperatorMatrix {
    let d2 = second_derivative(grid);
    let n = grid.n_points;
    let mut m = Mat::from_fn(n, n, |i, j| -d2[(i, j)]);
    for (j, &x) in grid.nodes.iter().enumerate() {
        m[(j, j)] += shift - well_depth * sech_sq(x);
    }
    let label = match (well_depth, shift) {
        (c, s) if c == 6.0 && s == 1.0 => OperatorLabel::Lplus,
        (c, s) if c == 2.0 && s == 1.0 => OperatorLabel::Lminus,
        (c, s) if c == 4.0 && s == 0.0 => OperatorLabel::L0,
        _ => OperatorLabel::Custom,
    };
    OperatorMatrix { entries: Entries::Real(m), grid: grid.clone(), label, absorbing: None }
}

/// Options for [`assemble_coupled_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledOptions {
    /// Multiplies both `sech²` wells; `0` gives the free problem.
    pub potential_scale: f64,
    pub absorbing: Option<AbsorbingLayer>,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions { potential_scale: 1.0, absorbing: None }
    }
}

/// `M = [[0, L- - ρ²], [-(L+ - ρ²), 0]]` on the plain grid.
pub fn assemble_coupled(grid: &Grid, rho: f64) -> Result<OperatorMatrix, OperatorError> {
    assemble_coupled_with(grid, rho, &CoupledOptions::default())
}

pub fn assemble_coupled_with(
    grid: &Grid,
    rho: f64,
    options: &CoupledOptions,
) -> Result<OperatorMatrix, OperatorError> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(OperatorError::InvalidArgument(format!("rho must be finite and >= 0, got {rho}")));
    }
    let n = grid.n_points;
    let r2 = rho * rho;
    let c = options.potential_scale;
    let minus_pot: Vec<f64> = grid.nodes.iter().map(|&x| 1.0 - 2.0 * c * sech_sq(x) - r2).collect();
    let plus_pot: Vec<f64> = grid.nodes.iter().map(|&x| 1.0 - 6.0 * c * sech_sq(x) - r2).collect();
    let d2 = second_derivative(grid);

    match options.absorbing {
        None => {
            let mut m = Mat::<f64>::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, n + j)] = -d2[(i, j)];
                    m[(n + i, j)] = d2[(i, j)];
                }
                m[(i, n + i)] += minus_pot[i];
                m[(n + i, i)] -= plus_pot[i];
            }
            Ok(OperatorMatrix {
                entries: Entries::Real(m),
                grid: grid.clone(),
                label: OperatorLabel::Coupled,
                absorbing: None,
            })
        }
        Some(layer) => {
            layer.validate(grid)?;
            let d1 = first_derivative(grid);
            let metric: Vec<(c64, c64)> = grid.nodes.iter().map(|&x| layer.metric(x)).collect();
            let mut m = Mat::<c64>::zeros(2 * n, 2 * n);
            for i in 0..n {
                let (zp, zpp) = metric[i];
                let a = zp.powi(-2);
                let b = zpp / zp.powi(3);
                for j in 0..n {
                    // scaled Laplacian: a·D2 - b·D1
                    let lap = a * d2[(i, j)] - b * d1[(i, j)];
                    m[(i, n + j)] = -lap;
                    m[(n + i, j)] = lap;
                }
                m[(i, n + i)] += minus_pot[i];
                m[(n + i, i)] -= plus_pot[i];
            }
            Ok(OperatorMatrix {
                entries: Entries::Complex(m),
                grid: grid.clone(),
                label: OperatorLabel::Coupled,
                absorbing: Some(layer),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Side;

    fn sym_eigs(m: &OperatorMatrix) -> (Vec<f64>, Mat<f64>) {
        let a = m.real().unwrap();
        let evd = a.self_adjoint_eigen(Side::Lower).unwrap();
        let vals = (0..a.nrows()).map(|i| evd.S()[i]).collect();
        (vals, evd.U().to_owned())
    }

    #[test]
    fn grid_nodes_and_spacing() {
        let g = build_grid(10.0, 4, Scheme::FiniteDifference4).unwrap();
        assert_eq!(g.nodes, vec![-10.0, -5.0, 0.0, 5.0]);
        let g = build_grid(40.0, 1024, Scheme::FourierCollocation).unwrap();
        assert_eq!(g.spacing, 0.078125);
        assert!(build_grid(10.0, 17, Scheme::FourierCollocation).is_err());
        assert!(build_grid(10.0, 2, Scheme::FourierCollocation).is_err());
        assert!(build_grid(-1.0, 16, Scheme::FourierCollocation).is_err());
        for j in 1..g.n_points {
            assert_eq!(g.nodes[g.mirror(j)], -g.nodes[j]);
        }
    }

    #[test]
    fn fourier_second_derivative_of_sine() {
        let g = build_grid(20.0, 512, Scheme::FourierCollocation).unwrap();
        let d2 = second_derivative(&g);
        let w = PI / 20.0;
        for i in 0..g.n_points {
            let mut acc = 0.0;
            for j in 0..g.n_points {
                acc += d2[(i, j)] * (w * g.nodes[j]).sin();
            }
            assert!((acc + w * w * (w * g.nodes[i]).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn first_derivative_of_periodic_function() {
        for (scheme, tol) in [(Scheme::FourierCollocation, 1e-10), (Scheme::FiniteDifference4, 1e-5)] {
            let g = build_grid(20.0, 512, scheme).unwrap();
            let d1 = first_derivative(&g);
            let f = |x: f64| (-x * x / 4.0).exp();
            let df = |x: f64| -x / 2.0 * (-x * x / 4.0).exp();
            for i in 1..g.n_points {
                let acc: f64 = (0..g.n_points).map(|j| d1[(i, j)] * f(g.nodes[j])).sum();
                assert!((acc - df(g.nodes[i])).abs() < tol, "{scheme:?} node {i}");
            }
        }
    }

    #[test]
    fn free_laplacian_spectrum() {
        let g = build_grid(10.0, 64, Scheme::FourierCollocation).unwrap();
        let (vals, _) = sym_eigs(&assemble_schrodinger(&g, 0.0, 0.0));
        assert!(vals.iter().all(|&v| v > -1e-10));
        for &v in &vals {
            let m = (v.max(0.0)).sqrt() * g.half_length / PI;
            assert!((m - m.round()).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn bound_states_of_l0() {
        let g = build_grid(40.0, 1024, Scheme::FourierCollocation).unwrap();
        let (vals, _) = sym_eigs(&assemble_schrodinger(&g, 4.0, 0.0));
        let e0 = ((17f64.sqrt() - 1.0) / 2.0).powi(2);
        let e1 = ((17f64.sqrt() - 3.0) / 2.0).powi(2);
        assert!((vals[0] + e0).abs() < 1e-6);
        assert!((vals[1] + e1).abs() < 1e-6);
        assert!(vals[2] > 0.0);
    }

    fn check_mode(op: &OperatorMatrix, index: usize, shape: impl Fn(f64) -> f64) {
        let (vals, vecs) = sym_eigs(op);
        let g = &op.grid;
        assert!(vals[index].abs() < 1e-8, "eigenvalue {}", vals[index]);
        let exact: Vec<f64> = g.nodes.iter().map(|&x| shape(x)).collect();
        let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        let overlap: f64 = (0..g.n_points).map(|j| vecs[(j, index)] * exact[j]).sum::<f64>() / norm;
        assert!((overlap.abs() - 1.0).abs() < 1e-10, "overlap {overlap}");
    }

    #[test]
    fn zero_modes_of_l_plus_and_l_minus() {
        let g = build_grid(40.0, 1024, Scheme::FourierCollocation).unwrap();
        check_mode(&assemble_schrodinger(&g, 2.0, 1.0), 0, |x| 1.0 / x.cosh());
        check_mode(&assemble_schrodinger(&g, 6.0, 1.0), 1, |x| x.tanh() / x.cosh());
    }

    #[test]
    fn bound_states_converge_with_resolution() {
        let e = |n| {
            let g = build_grid(40.0, n, Scheme::FourierCollocation).unwrap();
            let (vals, _) = sym_eigs(&assemble_schrodinger(&g, 4.0, 0.0));
            (vals[0], vals[1])
        };
        let (a0, a1) = e(512);
        let (b0, b1) = e(1024);
        assert!((a0 - b0).abs() < 1e-8 && (a1 - b1).abs() < 1e-8);
    }

    #[test]
    fn operators_are_symmetric_and_parity_invariant() {
        for scheme in [Scheme::FourierCollocation, Scheme::FiniteDifference4] {
            let g = build_grid(20.0, 128, scheme).unwrap();
            for (c, s) in [(6.0, 1.0), (2.0, 1.0), (4.0, 0.0)] {
                let op = assemble_schrodinger(&g, c, s);
                assert!(op.asymmetry() < 1e-12);
                let m = op.real().unwrap();
                for i in 0..g.n_points {
                    for j in 0..g.n_points {
                        let mirrored = m[(g.mirror(i), g.mirror(j))];
                        assert!((m[(i, j)] - mirrored).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn coupled_blocks_equal_shifted_operators() {
        let g = build_grid(15.0, 64, Scheme::FourierCollocation).unwrap();
        let rho = 0.7;
        let m = assemble_coupled(&g, rho).unwrap();
        let m = m.real().unwrap();
        let lp = assemble_schrodinger(&g, 6.0, 1.0);
        let lm = assemble_schrodinger(&g, 2.0, 1.0);
        let (lp, lm) = (lp.real().unwrap(), lm.real().unwrap());
        let n = g.n_points;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { rho * rho } else { 0.0 };
                assert_eq!(m[(i, j)], 0.0);
                assert_eq!(m[(n + i, n + j)], 0.0);
                assert!((m[(i, n + j)] - (lm[(i, j)] - id)).abs() < 1e-13);
                assert!((m[(n + i, j)] + (lp[(i, j)] - id)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn soliton_kernel_vectors_at_zero_rho() {
        // M(0, sech) = 0, M(sech·tanh, 0) = 0
        let g = build_grid(40.0, 512, Scheme::FourierCollocation).unwrap();
        let m = assemble_coupled(&g, 0.0).unwrap();
        let m = m.real().unwrap();
        let n = g.n_points;
        let mut v1 = vec![0.0; 2 * n];
        let mut v2 = vec![0.0; 2 * n];
        for (j, &x) in g.nodes.iter().enumerate() {
            v1[n + j] = 1.0 / x.cosh();
            v2[j] = x.tanh() / x.cosh();
        }
        for v in [&v1, &v2] {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for i in 0..2 * n {
                let r: f64 = (0..2 * n).map(|j| m[(i, j)] * v[j]).sum();
                assert!(r.abs() < 1e-9 * norm);
            }
        }
    }

    #[test]
    fn absorbing_layer_leaves_interior_untouched() {
        let g = build_grid(40.0, 128, Scheme::FourierCollocation).unwrap();
        let plain = assemble_coupled(&g, 2.0).unwrap().to_complex();
        let layer = AbsorbingLayer::default_for(&g);
        let scaled = assemble_coupled_with(&g, 2.0, &CoupledOptions { potential_scale: 1.0, absorbing: Some(layer) })
            .unwrap()
            .to_complex();
        let n = g.n_points;
        let centre = g.n_points / 2;
        for j in 0..2 * n {
            assert!((plain[(centre, j)] - scaled[(centre, j)]).norm() < 1e-9);
        }
        let bad = AbsorbingLayer { onset: 50.0, ..layer };
        assert!(assemble_coupled_with(&g, 2.0, &CoupledOptions { potential_scale: 1.0, absorbing: Some(bad) }).is_err());
        assert!(assemble_coupled(&g, -0.1).is_err());
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("fourier".parse::<Scheme>().unwrap(), Scheme::FourierCollocation);
        assert_eq!("FD4".parse::<Scheme>().unwrap(), Scheme::FiniteDifference4);
        assert!("spline".parse::<Scheme>().is_err());
    }
}
