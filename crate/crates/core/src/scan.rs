//! ρ sweeps, branch continuation and bifurcation detection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::{quartet_representative, spectrum_slice, EigenError, SpectrumConfig, SpectrumSlice};
use crate::operators::Grid;
use crate::specfun::ComplexValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("invalid scan range: {0}")]
    InvalidRange(String),
    #[error("solver failed at rho = {rho}: {source}")]
    Solver { rho: f64, source: EigenError },
    #[error("no localized eigenvalue within {tolerance} of seed {seed} at rho = {rho}")]
    SeedNotFound { seed: ComplexValue, rho: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub spectrum: SpectrumConfig,
    pub continuation_jump_bound: f64,
    /// Distance within which a user-supplied seed must match a localized eigenvalue.
    pub seed_tolerance: f64,
    /// Values with `|Im|` (or `|Re|`) below this lie on the real (imaginary) axis.
    pub axis_tolerance: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            spectrum: SpectrumConfig::default(),
            continuation_jump_bound: 0.05,
            seed_tolerance: 1e-4,
            axis_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    OnsetFromZero,
    HopfCollision,
    EdgeEmergence,
    SecondCollision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub rho_estimate: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPath {
    pub rho_values: Vec<f64>,
    pub lambda_values: Vec<ComplexValue>,
    pub birth_event: Option<BifurcationEvent>,
    pub death_event: Option<BifurcationEvent>,
}

impl BranchPath {
    pub fn len(&self) -> usize {
        self.rho_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho_values.is_empty()
    }
}

/// Nodes `start + j·step` for `j = 0..=floor((end - start)/step)`.
pub fn scan_nodes(rho_start: f64, rho_end: f64, step: f64) -> Result<Vec<f64>, ScanError> {
    let finite = rho_start.is_finite() && rho_end.is_finite() && step.is_finite();
    if !finite || rho_start < 0.0 || rho_start >= rho_end || step <= 0.0 {
        return Err(ScanError::InvalidRange(format!(
            "need 0 <= rho_start < rho_end and step > 0, got [{rho_start}, {rho_end}] step {step}"
        )));
    }
    let count = ((rho_end - rho_start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|j| rho_start + j as f64 * step).collect())
}

/// One result per node, in node order; failures are annotated with their ρ.
pub fn rho_scan_each(grid: &Grid, nodes: &[f64], config: &ScanConfig) -> Vec<Result<SpectrumSlice, ScanError>> {
    nodes
        .par_iter()
        .map(|&rho| {
            spectrum_slice(grid, rho, &config.spectrum).map_err(|source| ScanError::Solver { rho, source })
        })
        .collect()
}

pub fn rho_scan(
    grid: &Grid,
    rho_start: f64,
    rho_end: f64,
    step: f64,
    config: &ScanConfig,
) -> Result<Vec<SpectrumSlice>, ScanError> {
    let nodes = scan_nodes(rho_start, rho_end, step)?;
    rho_scan_each(grid, &nodes, config).into_iter().collect()
}

/// Localized eigenvalues mapped to the closed first quadrant, one per orbit.
pub fn candidates(slice: &SpectrumSlice) -> Vec<ComplexValue> {
    let mut out: Vec<ComplexValue> = Vec::new();
    for z in slice.localized().map(quartet_representative) {
        if !out.iter().any(|w| (w - z).norm() < 1e-6) {
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

fn nearest(values: &[ComplexValue], target: ComplexValue) -> Option<(usize, f64)> {
    values
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - target).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Greedy nearest-neighbour continuation of one eigenvalue in both directions.
pub fn track_branch(
    slices: &[SpectrumSlice],
    seed: ComplexValue,
    seed_rho: f64,
    config: &ScanConfig,
) -> Result<BranchPath, ScanError> {
    let seed_rep = quartet_representative(seed);
    let not_found = ScanError::SeedNotFound { seed, rho: seed_rho, tolerance: config.seed_tolerance };
    let start = slices.iter().position(|s| (s.rho - seed_rho).abs() < 1e-9).ok_or(not_found.clone())?;
    let cands: Vec<Vec<ComplexValue>> = slices.iter().map(candidates).collect();
    let (idx, dist) = nearest(&cands[start], seed_rep).ok_or(not_found.clone())?;
    if dist > config.seed_tolerance {
        return Err(not_found);
    }
    let bound = config.continuation_jump_bound;
    let follow = |range: &mut dyn Iterator<Item = usize>| {
        let mut current = cands[start][idx];
        let mut out = Vec::new();
        for j in range {
            match nearest(&cands[j], current) {
                Some((i, d)) if d <= bound => {
                    current = cands[j][i];
                    out.push((slices[j].rho, current));
                }
                _ => break,
            }
        }
        out
    };
    let mut backward = follow(&mut (0..start).rev());
    let forward = follow(&mut (start + 1..slices.len()));
    backward.reverse();
    let points: Vec<(f64, ComplexValue)> = backward
        .into_iter()
        .chain(std::iter::once((slices[start].rho, cands[start][idx])))
        .chain(forward)
        .collect();
    Ok(BranchPath {
        rho_values: points.iter().map(|p| p.0).collect(),
        lambda_values: points.iter().map(|p| p.1).collect(),
        birth_event: None,
        death_event: None,
    })
}

/// Assignment of active branch heads to candidates: globally greedy by
/// distance, then improved by pairwise swaps (joint matching of pairs).
fn assign(heads: &[ComplexValue], cands: &[ComplexValue], bound: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (h, z) in heads.iter().enumerate() {
        for (c, w) in cands.iter().enumerate() {
            let d = (z - w).norm();
            if d <= bound {
                pairs.push((d, h, c));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut head_to: Vec<Option<usize>> = vec![None; heads.len()];
    let mut taken = vec![false; cands.len()];
    for (_, h, c) in pairs {
        if head_to[h].is_none() && !taken[c] {
            head_to[h] = Some(c);
            taken[c] = true;
        }
    }
    let dist = |h: usize, c: usize| (heads[h] - cands[c]).norm();
    let mut improved = true;
    while improved {
        improved = false;
        for a in 0..heads.len() {
            for b in a + 1..heads.len() {
                if let (Some(ca), Some(cb)) = (head_to[a], head_to[b]) {
                    let before = dist(a, ca) + dist(b, cb);
                    let after = dist(a, cb) + dist(b, ca);
                    if after + 1e-15 < before && dist(a, cb) <= bound && dist(b, ca) <= bound {
                        head_to[a] = Some(cb);
                        head_to[b] = Some(ca);
                        improved = true;
                    }
                }
            }
        }
    }
    head_to
}

/// Every localized orbit of every slice, organized into branches.
pub fn track_all(slices: &[SpectrumSlice], config: &ScanConfig) -> Vec<BranchPath> {
    let mut done: Vec<BranchPath> = Vec::new();
    let mut active: Vec<BranchPath> = Vec::new();
    for slice in slices {
        let cands = candidates(slice);
        let heads: Vec<ComplexValue> = active.iter().map(|b| *b.lambda_values.last().unwrap()).collect();
        let mapping = assign(&heads, &cands, config.continuation_jump_bound);
        let mut used = vec![false; cands.len()];
        let mut next_active = Vec::new();
        for (mut branch, target) in active.into_iter().zip(mapping) {
            match target {
                Some(c) => {
                    used[c] = true;
                    branch.rho_values.push(slice.rho);
                    branch.lambda_values.push(cands[c]);
                    next_active.push(branch);
                }
                None => done.push(branch),
            }
        }
        for (c, z) in cands.iter().enumerate() {
            if !used[c] {
                next_active.push(BranchPath {
                    rho_values: vec![slice.rho],
                    lambda_values: vec![*z],
                    birth_event: None,
                    death_event: None,
                });
            }
        }
        active = next_active;
    }
    done.extend(active);
    done.sort_by(|a, b| {
        a.rho_values[0]
            .total_cmp(&b.rho_values[0])
            .then(a.lambda_values[0].re.total_cmp(&b.lambda_values[0].re))
            .then(a.lambda_values[0].im.total_cmp(&b.lambda_values[0].im))
    });
    done
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Real,
    Imaginary,
}

fn axis_of(z: ComplexValue, tol: f64) -> Option<Axis> {
    if z.norm() <= tol {
        None
    } else if z.im.abs() <= tol {
        Some(Axis::Real)
    } else if z.re.abs() <= tol {
        Some(Axis::Imaginary)
    } else {
        None
    }
}

fn off_axis_distance(z: ComplexValue, axis: Axis) -> f64 {
    match axis {
        Axis::Real => z.im.abs(),
        Axis::Imaginary => z.re.abs(),
    }
}

/// Value of a cubic through four points, evaluated at `t`.
fn lagrange(points: &[(f64, f64)], t: f64) -> f64 {
    let mut acc = 0.0;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut w = yi;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                w *= (t - xj) / (xi - xj);
            }
        }
        acc += w;
    }
    acc
}

struct Point {
    branch: usize,
    value: ComplexValue,
}

/// Events along a set of branches from one scan, sorted by `rho_estimate`.
///
/// A collision is recognized from the discriminant proxy
/// `D = |λ₁ - λ₂|²` for two distinct on-axis eigenvalues and
/// `D = -(2·dist(λ, axis))²` once they have merged into an off-axis orbit;
/// the root of `D` is interpolated linearly across the sign change.
pub fn detect_bifurcations(branches: &[BranchPath], config: &ScanConfig) -> Vec<BifurcationEvent> {
    let tol = config.axis_tolerance;
    let bound = config.continuation_jump_bound;
    let mut rhos: Vec<f64> = branches.iter().flat_map(|b| b.rho_values.iter().copied()).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let node = |rho: f64| rhos.binary_search_by(|r| r.total_cmp(&rho)).unwrap();

    // per node: (branch index, value)
    let mut at: Vec<Vec<Point>> = (0..rhos.len()).map(|_| Vec::new()).collect();
    for (b, branch) in branches.iter().enumerate() {
        for (r, z) in branch.rho_values.iter().zip(&branch.lambda_values) {
            at[node(*r)].push(Point { branch: b, value: *z });
        }
    }
    let value_of = |b: usize, j: usize| at[j].iter().find(|p| p.branch == b).map(|p| p.value);

    let mut events = Vec::new();
    for j in 0..rhos.len().saturating_sub(1) {
        for forward in [true, false] {
            // `near`: on-axis side of the transition, `far`: off-axis side
            let (near, far) = if forward { (j, j + 1) } else { (j + 1, j) };
            let leaving: Vec<(usize, ComplexValue, Axis)> = at[near]
                .iter()
                .filter_map(|p| {
                    let axis = axis_of(p.value, tol)?;
                    let stays = value_of(p.branch, far).is_some_and(|w| axis_of(w, tol) == Some(axis));
                    (!stays).then_some((p.branch, p.value, axis))
                })
                .collect();
            let arriving: Vec<ComplexValue> = at[far]
                .iter()
                .filter(|p| axis_of(p.value, tol).is_none() && p.value.norm() > tol)
                .filter(|p| value_of(p.branch, near).is_none_or(|w| axis_of(w, tol).is_some()))
                .map(|p| p.value)
                .collect();
            let mut used_leaving = vec![false; leaving.len()];
            for c in arriving {
                let mut best: Option<(f64, usize, usize)> = None;
                for a in 0..leaving.len() {
                    for b in a + 1..leaving.len() {
                        if used_leaving[a] || used_leaving[b] || leaving[a].2 != leaving[b].2 {
                            continue;
                        }
                        let (za, zb) = (leaving[a].1, leaving[b].1);
                        let mid = (za + zb) / 2.0;
                        let slack = (c - mid).norm() - (za - zb).norm() / 2.0;
                        if slack <= bound && best.is_none_or(|x| slack < x.0) {
                            best = Some((slack, a, b));
                        }
                    }
                }
                if let Some((_, a, b)) = best {
                    used_leaving[a] = true;
                    used_leaving[b] = true;
                    let axis = leaving[a].2;
                    let d_on = (leaving[a].1 - leaving[b].1).norm_sqr();
                    let d_off = -(2.0 * off_axis_distance(c, axis)).powi(2);
                    let (r_on, r_off) = (rhos[near], rhos[far]);
                    let estimate = r_on + (r_off - r_on) * d_on / (d_on - d_off);
                    events.push(BifurcationEvent {
                        kind: match axis {
                            Axis::Imaginary => EventKind::HopfCollision,
                            Axis::Real => EventKind::SecondCollision,
                        },
                        rho_estimate: estimate,
                        bracket: (rhos[j], rhos[j + 1]),
                    });
                }
            }
        }
    }

    let threshold = config.spectrum.re_threshold;
    for branch in branches {
        let first = branch.lambda_values[0];
        if axis_of(first, tol) != Some(Axis::Real) || first.re <= threshold {
            continue;
        }
        let j = node(branch.rho_values[0]);
        if j == 0 {
            if branch.len() >= 4 {
                let pts: Vec<(f64, f64)> =
                    (0..4).map(|i| (branch.rho_values[i], branch.lambda_values[i].re)).collect();
                if lagrange(&pts, 0.0).abs() <= 10.0 * threshold {
                    // root of the cubic nearest to zero, by Newton from 0
                    let mut t = 0.0;
                    for _ in 0..50 {
                        let f = lagrange(&pts, t);
                        let df = (lagrange(&pts, t + 1e-6) - lagrange(&pts, t - 1e-6)) / 2e-6;
                        if df == 0.0 {
                            break;
                        }
                        t -= f / df;
                    }
                    let step = branch.rho_values[1] - branch.rho_values[0];
                    let upper = step.min(branch.rho_values[0]);
                    let estimate = t.clamp(0.0, upper);
                    events.push(BifurcationEvent {
                        kind: EventKind::OnsetFromZero,
                        rho_estimate: estimate,
                        bracket: (0.0, upper),
                    });
                }
            }
            continue;
        }
        let (lo, hi) = (rhos[j - 1], rhos[j]);
        let estimate = if branch.len() >= 2 {
            let (r0, r1) = (branch.rho_values[0], branch.rho_values[1]);
            let (l0, l1) = (branch.lambda_values[0].re, branch.lambda_values[1].re);
            if l1 > l0 {
                r0 - l0 * (r1 - r0) / (l1 - l0)
            } else {
                hi
            }
        } else {
            hi
        };
        events.push(BifurcationEvent { kind: EventKind::EdgeEmergence, rho_estimate: estimate.clamp(lo, hi), bracket: (lo, hi) });
    }

    events.sort_by(|a, b| a.rho_estimate.total_cmp(&b.rho_estimate));
    events
}

/// Copies events onto the branches they start or end. An onset is attached
/// to real branches that begin at `scan_start`.
pub fn annotate_branches(branches: &mut [BranchPath], events: &[BifurcationEvent], scan_start: f64) {
    for branch in branches.iter_mut() {
        let first = branch.rho_values[0];
        let last = *branch.rho_values.last().unwrap();
        let starts_real = branch.lambda_values[0].im.abs() <= 1e-6;
        branch.birth_event = events
            .iter()
            .find(|e| match e.kind {
                EventKind::OnsetFromZero => starts_real && (first - scan_start).abs() < 1e-12,
                _ => (e.bracket.1 - first).abs() < 1e-12,
            })
            .copied();
        branch.death_event = events
            .iter()
            .find(|e| e.kind != EventKind::OnsetFromZero && (e.bracket.0 - last).abs() < 1e-12)
            .copied();
    }
}
