//! Dense nonsymmetric eigendecomposition and classification of the coupled
//! spectrum into continuum-like and localized eigenvalues.

use faer::{c64, Mat};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::{
    assemble_coupled_with, AbsorbingLayer, CoupledOptions, Entries, Grid, OperatorError, OperatorMatrix,
};
use crate::specfun::ComplexValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("eigensolver did not converge ({unconverged} of {dim} eigenvalues unconverged)")]
    Convergence { unconverged: usize, dim: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    ContinuumLike,
    Localized,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::ContinuumLike => "continuum_like",
            Label::Localized => "localized",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<ComplexValue>,
    /// Columns are unit-norm eigenvectors.
    pub eigenvectors: Mat<c64>,
    /// `‖Mv - λv‖₂ / ‖v‖₂` per pair.
    pub residuals: Vec<f64>,
    pub absorbing: Option<AbsorbingLayer>,
    /// Number of numerically defective clusters replaced by their centroid.
    pub defective_clusters: usize,
}

/// Eigenvalues closer than this are candidates for a defective cluster.
const CLUSTER_RADIUS: f64 = 1e-3;
/// Eigenvectors with `|<u, v>| >= 1 - PARALLEL_TOLERANCE` are treated as one direction.
const PARALLEL_TOLERANCE: f64 = 1e-8;

/// A perturbed Jordan block of size m splits its eigenvalue by O(δ^{1/m})
/// while all its computed eigenvectors stay nearly parallel. The centroid of
/// such a cluster is accurate to O(δ), so it replaces the members.
fn merge_defective_clusters(values: &mut [c64], vectors: &Mat<c64>) -> usize {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if values[j].re - values[i].re > CLUSTER_RADIUS {
                break;
            }
            if (values[i] - values[j]).norm() >= CLUSTER_RADIUS {
                continue;
            }
            let overlap: c64 = (0..n).map(|r| vectors[(r, i)].conj() * vectors[(r, j)]).sum();
            if overlap.norm() >= 1.0 - PARALLEL_TOLERANCE {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut merged = 0;
    for members in groups.values().filter(|m| m.len() > 1) {
        let centroid = members.iter().map(|&i| values[i]).sum::<c64>() / members.len() as f64;
        for &i in members {
            values[i] = centroid;
        }
        merged += 1;
    }
    merged
}

/// Full eigendecomposition with per-pair residuals.
pub fn eigen_decompose(matrix: &OperatorMatrix) -> Result<EigenDecomposition, EigenError> {
    let (rows, cols) = match &matrix.entries {
        Entries::Real(m) => (m.nrows(), m.ncols()),
        Entries::Complex(m) => (m.nrows(), m.ncols()),
    };
    if rows != cols {
        return Err(EigenError::NotSquare { rows, cols });
    }
    let finite = match &matrix.entries {
        Entries::Real(m) => (0..rows).all(|i| (0..cols).all(|j| m[(i, j)].is_finite())),
        Entries::Complex(m) => (0..rows).all(|i| (0..cols).all(|j| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite())),
    };
    if !finite {
        return Err(EigenError::NonFinite);
    }
    let n = rows;
    let evd = match &matrix.entries {
        Entries::Real(m) => m.eigen(),
        Entries::Complex(m) => m.eigen(),
    }
    // faer does not report how many eigenvalues failed; count them all as unconverged.
    .map_err(|_| EigenError::Convergence { unconverged: n, dim: n })?;

    let mut eigenvalues: Vec<c64> = (0..n).map(|i| evd.S()[i]).collect();
    let mut vectors = evd.U().to_owned();
    for j in 0..n {
        let norm = (0..n).map(|i| vectors[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vectors[(i, j)] /= norm;
            }
        }
    }
    if eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        let bad = eigenvalues.iter().filter(|z| !z.re.is_finite() || !z.im.is_finite()).count();
        return Err(EigenError::Convergence { unconverged: bad, dim: n });
    }

    let image = match &matrix.entries {
        Entries::Real(m) => {
            let re = Mat::from_fn(n, n, |i, j| vectors[(i, j)].re);
            let im = Mat::from_fn(n, n, |i, j| vectors[(i, j)].im);
            let (a, b) = (m * &re, m * &im);
            Mat::from_fn(n, n, |i, j| c64::new(a[(i, j)], b[(i, j)]))
        }
        Entries::Complex(m) => m * &vectors,
    };
    let residuals = (0..n)
        .map(|j| {
            let lambda = eigenvalues[j];
            (0..n).map(|i| (image[(i, j)] - lambda * vectors[(i, j)]).norm_sqr()).sum::<f64>().sqrt()
        })
        .collect();
    // Residuals above belong to the computed pairs; only the reported values move.
    let defective_clusters = merge_defective_clusters(&mut eigenvalues, &vectors);

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
        residuals,
        absorbing: matrix.absorbing,
        defective_clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Minimum fraction of `|U|² + |V|²` inside `|x| < L/2`.
    pub localization_threshold: f64,
    /// Largest admissible fraction of eigenvector energy in the top third of
    /// the resolved Fourier band; rejects grid-scale (Nyquist) modes.
    pub max_high_frequency_fraction: f64,
    /// Multiplies the local continuum level spacing; `0` disables the margin test.
    pub continuum_margin_factor: f64,
    pub residual_tolerance: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            localization_threshold: 0.9,
            max_high_frequency_fraction: 1e-2,
            continuum_margin_factor: 0.0,
            residual_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exterior {
    Periodic,
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub rho: f64,
    pub eigenvalues: Vec<ComplexValue>,
    pub residuals: Vec<f64>,
    pub localization: Vec<f64>,
    pub labels: Vec<Label>,
    pub high_frequency: Vec<f64>,
    pub continuum_distance: Vec<f64>,
    pub exterior: Exterior,
    /// Trailing entries that were added as complex conjugates of localized
    /// eigenvalues of a complex-scaled matrix.
    pub conjugate_completed: usize,
}

impl SpectrumSlice {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn localized(&self) -> impl Iterator<Item = ComplexValue> + '_ {
        self.eigenvalues
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == Label::Localized)
            .map(|(z, _)| *z)
    }

    /// Localized eigenvalues with `Re λ > re_threshold`, by descending real part.
    pub fn unstable(&self, re_threshold: f64) -> Vec<ComplexValue> {
        let mut out: Vec<_> = self.localized().filter(|z| z.re > re_threshold).collect();
        out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        out
    }
}

fn localization(grid: &Grid, v: &[c64]) -> f64 {
    let n = grid.n_points;
    let mut inner = 0.0;
    let mut total = 0.0;
    for j in 0..n {
        let w = v[j].norm_sqr() + v[n + j].norm_sqr();
        total += w;
        if grid.nodes[j].abs() < 0.5 * grid.half_length {
            inner += w;
        }
    }
    if total > 0.0 {
        inner / total
    } else {
        0.0
    }
}

struct SpectralProbe {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    n: usize,
}

impl SpectralProbe {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        SpectralProbe { fft: planner.plan_fft_forward(n), n }
    }

    /// Energy fraction at `|m| > (2/3)(N/2)` summed over both components.
    fn high_fraction(&self, v: &[c64]) -> f64 {
        let n = self.n;
        let cutoff = n / 3;
        let mut high = 0.0;
        let mut total = 0.0;
        for part in [&v[..n], &v[n..2 * n]] {
            let mut buf: Vec<c64> = part.to_vec();
            self.fft.process(&mut buf);
            for (m, z) in buf.iter().enumerate() {
                let freq = m.min(n - m);
                let e = z.norm_sqr();
                total += e;
                if freq > cutoff {
                    high += e;
                }
            }
        }
        if total > 0.0 {
            high / total
        } else {
            0.0
        }
    }
}

/// Distance to the discrete continuum `{±i(k² + 1 - ρ²)}` and the level spacing there.
fn continuum_distance(grid: &Grid, rho: f64, lambda: c64) -> (f64, f64) {
    let ks = grid.wavenumbers();
    let shift = 1.0 - rho * rho;
    let mut best = (f64::INFINITY, 0.0);
    for (m, k) in ks.iter().enumerate() {
        let level = k * k + shift;
        let spacing = if m + 1 < ks.len() { ks[m + 1].powi(2) - k * k } else { k * k - ks[m - 1].powi(2) };
        for sign in [1.0, -1.0] {
            let d = (lambda - c64::new(0.0, sign * level)).norm();
            if d < best.0 {
                best = (d, spacing);
            }
        }
    }
    best
}

/// Labels each eigenpair; for a complex-scaled decomposition the localized
/// set is closed under conjugation by appending the missing partners.
pub fn classify_spectrum(
    decomposition: &EigenDecomposition,
    grid: &Grid,
    rho: f64,
    config: &ClassifyConfig,
) -> SpectrumSlice {
    let dim = decomposition.eigenvalues.len();
    assert_eq!(dim, 2 * grid.n_points, "eigenvector length does not match the grid");
    let probe = SpectralProbe::new(grid.n_points);
    let mut slice = SpectrumSlice {
        rho,
        eigenvalues: Vec::with_capacity(dim),
        residuals: Vec::with_capacity(dim),
        localization: Vec::with_capacity(dim),
        labels: Vec::with_capacity(dim),
        high_frequency: Vec::with_capacity(dim),
        continuum_distance: Vec::with_capacity(dim),
        exterior: if decomposition.absorbing.is_some() { Exterior::Absorbing } else { Exterior::Periodic },
        conjugate_completed: 0,
    };
    let mut column = vec![c64::new(0.0, 0.0); dim];
    for j in 0..dim {
        for (i, c) in column.iter_mut().enumerate() {
            *c = decomposition.eigenvectors[(i, j)];
        }
        let lambda = decomposition.eigenvalues[j];
        let loc = localization(grid, &column);
        let high = probe.high_fraction(&column);
        let (dist, spacing) = continuum_distance(grid, rho, lambda);
        let residual = decomposition.residuals[j];
        let margin_ok = config.continuum_margin_factor <= 0.0 || dist > config.continuum_margin_factor * spacing;
        let localized = loc > config.localization_threshold
            && high <= config.max_high_frequency_fraction
            && residual <= config.residual_tolerance
            && margin_ok;
        slice.eigenvalues.push(lambda);
        slice.residuals.push(residual);
        slice.localization.push(loc);
        slice.labels.push(if localized { Label::Localized } else { Label::ContinuumLike });
        slice.high_frequency.push(high);
        slice.continuum_distance.push(dist);
    }

    if decomposition.absorbing.is_some() {
        let localized: Vec<usize> = (0..dim).filter(|&j| slice.labels[j] == Label::Localized).collect();
        for j in localized {
            let partner = slice.eigenvalues[j].conj();
            if slice.eigenvalues[j].im.abs() <= 1e-6 {
                continue;
            }
            let present = slice
                .eigenvalues
                .iter()
                .zip(&slice.labels)
                .any(|(z, l)| *l == Label::Localized && (z - partner).norm() < 1e-6);
            if !present {
                slice.eigenvalues.push(partner);
                slice.residuals.push(slice.residuals[j]);
                slice.localization.push(slice.localization[j]);
                slice.labels.push(Label::Localized);
                slice.high_frequency.push(slice.high_frequency[j]);
                slice.continuum_distance.push(continuum_distance(grid, rho, partner).0);
                slice.conjugate_completed += 1;
            }
        }
    }
    slice
}

/// Which exterior to use for the coupled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExteriorPolicy {
    Periodic,
    Absorbing,
    /// Periodic up to and including `absorbing_from_rho`, absorbing above.
    Auto { absorbing_from_rho: f64 },
}

impl ExteriorPolicy {
    pub fn uses_absorbing(&self, rho: f64) -> bool {
        match *self {
            ExteriorPolicy::Periodic => false,
            ExteriorPolicy::Absorbing => true,
            ExteriorPolicy::Auto { absorbing_from_rho } => rho > absorbing_from_rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub classify: ClassifyConfig,
    pub exterior: ExteriorPolicy,
    /// `None` selects [`AbsorbingLayer::default_for`].
    pub layer: Option<AbsorbingLayer>,
    pub re_threshold: f64,
    pub collapse_quartets: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            classify: ClassifyConfig::default(),
            exterior: ExteriorPolicy::Auto { absorbing_from_rho: 1.25 },
            layer: None,
            re_threshold: 1e-6,
            collapse_quartets: false,
        }
    }
}

/// Assemble, decompose and classify the coupled problem at one `ρ`.
pub fn spectrum_slice(grid: &Grid, rho: f64, config: &SpectrumConfig) -> Result<SpectrumSlice, EigenError> {
    let absorbing = config
        .exterior
        .uses_absorbing(rho)
        .then(|| config.layer.unwrap_or_else(|| AbsorbingLayer::default_for(grid)));
    let matrix = assemble_coupled_with(grid, rho, &CoupledOptions { potential_scale: 1.0, absorbing })?;
    let decomposition = eigen_decompose(&matrix)?;
    Ok(classify_spectrum(&decomposition, grid, rho, &config.classify))
}

/// Map to the closed first quadrant, the quartet representative.
pub fn quartet_representative(z: ComplexValue) -> ComplexValue {
    ComplexValue::new(z.re.abs(), z.im.abs())
}

/// Drops all but one representative per quartet orbit.
pub fn collapse_quartets(values: &[ComplexValue], tol: f64) -> Vec<ComplexValue> {
    let mut out: Vec<ComplexValue> = Vec::new();
    for z in values.iter().map(|z| quartet_representative(*z)) {
        if !out.iter().any(|w| (w - z).norm() < tol) {
            out.push(z);
        }
    }
    out
}

/// Localized eigenvalues with `Re λ > re_threshold`, by descending real part.
pub fn unstable_eigenvalues(grid: &Grid, rho: f64, config: &SpectrumConfig) -> Result<Vec<ComplexValue>, EigenError> {
    let slice = spectrum_slice(grid, rho, config)?;
    let unstable = slice.unstable(config.re_threshold);
    Ok(if config.collapse_quartets { collapse_quartets(&unstable, 1e-6) } else { unstable })
}
