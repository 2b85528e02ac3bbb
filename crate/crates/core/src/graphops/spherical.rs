use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::{Graphop, GraphopMetadata, NetworkSpace, SpaceKind};
use crate::error::{invalid, Result};

/// Row-compressed sparse matrix with sorted, deduplicated columns per row.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Sums duplicate entries.
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut offsets = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self { offsets, cols, vals }
    }

    fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let vals = self.triplets().map(|(i, j, v)| f(i, j, v)).collect();
        Self {
            offsets: self.offsets.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }
}

/// How the equator averages are turned into a matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SphericalDiscretization {
    /// Bilinear interpolation only. Markov, but self-adjoint only up to
    /// interpolation error.
    Raw,
    /// The interpolation matrix symmetrized in `L²(μ)` and rescaled by
    /// symmetric Sinkhorn balancing, so that it is exactly self-adjoint and
    /// Markov.
    #[default]
    Balanced,
}

/// Diagnostics of the balancing step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BalancingReport {
    pub iterations: usize,
    /// Final `max_k |d_k (S d)_k - μ_k| / max μ`.
    pub residual: f64,
    /// Largest relative `L²(μ)` change `‖(P - P^raw) f‖ / ‖f‖` over the
    /// spherical harmonics of degree 1 and 2.
    pub harmonic_correction: f64,
    /// Largest entry of `|M P^raw - (M P^raw)^T| / max μ`.
    pub raw_asymmetry: f64,
}

/// Great-circle averaging operator on `𝕊²`.
#[derive(Clone, Debug)]
pub struct SphericalGraphop {
    space: NetworkSpace,
    matrix: Csr,
    n_sphere: usize,
    m_equator: usize,
    discretization: SphericalDiscretization,
    balancing: Option<BalancingReport>,
}

pub fn spherical_graphop(n_sphere: usize, m_equator: usize) -> Result<SphericalGraphop> {
    SphericalGraphop::new(n_sphere, m_equator, SphericalDiscretization::Balanced)
}

const SINKHORN_TOLERANCE: f64 = 1e-14;
const SINKHORN_MAX_ITERATIONS: usize = 10_000;

impl SphericalGraphop {
    /// Nodes are `θ_j = (j + 1/2) π / n` (`j < n`) and `φ_i = 2π i / (2n)`
    /// (`i < 2n`), stored at flat index `j * 2n + i`, with weights
    /// proportional to `sin θ_j`.
    pub fn new(n_sphere: usize, m_equator: usize, discretization: SphericalDiscretization) -> Result<Self> {
        if n_sphere < 8 {
            return Err(invalid("n_sphere", format!("must be at least 8, got {n_sphere}")));
        }
        if m_equator < 16 {
            return Err(invalid("m_equator", format!("must be at least 16, got {m_equator}")));
        }
        let n_theta = n_sphere;
        let n_phi = 2 * n_sphere;
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut coords = Vec::with_capacity(n_theta * n_phi);
        for j in 0..n_theta {
            let theta = (j as f64 + 0.5) * PI / n_theta as f64;
            for i in 0..n_phi {
                let phi = 2.0 * PI * i as f64 / n_phi as f64;
                weights.push(theta.sin());
                coords.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let space = NetworkSpace::new(SpaceKind::Sphere, weights, coords)?;
        let raw = interpolation_matrix(&space, n_theta, n_phi, m_equator);
        let (matrix, balancing) = match discretization {
            SphericalDiscretization::Raw => (raw, None),
            SphericalDiscretization::Balanced => {
                let (balanced, report) = balance(&raw, space.coords().expect("sphere coordinates"), space.weights());
                (balanced, Some(report))
            }
        };
        Ok(Self {
            space,
            matrix,
            n_sphere,
            m_equator,
            discretization,
            balancing,
        })
    }

    pub fn n_sphere(&self) -> usize {
        self.n_sphere
    }

    pub fn m_equator(&self) -> usize {
        self.m_equator
    }

    pub fn discretization(&self) -> SphericalDiscretization {
        self.discretization
    }

    pub fn balancing(&self) -> Option<BalancingReport> {
        self.balancing
    }

    pub fn nnz(&self) -> usize {
        self.matrix.vals.len()
    }
}

/// Orthonormal frame `{ξ, v1, v2}` with `v1 ∝ e_z × ξ`, or `e_x × ξ` near the poles.
pub(crate) fn equator_frame(xi: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut v1 = cross([0.0, 0.0, 1.0], xi);
    if norm(v1) < 1e-8 {
        v1 = cross([1.0, 0.0, 0.0], xi);
    }
    let n1 = norm(v1);
    v1.iter_mut().for_each(|c| *c /= n1);
    let v2 = cross(xi, v1);
    (v1, v2)
}

fn interpolation_matrix(space: &NetworkSpace, n_theta: usize, n_phi: usize, m_equator: usize) -> Csr {
    let coords = space.coords().expect("sphere nodes carry coordinates");
    let mut triplets = Vec::with_capacity(coords.len() * m_equator * 4);
    let share = 1.0 / m_equator as f64;
    for (row, &xi) in coords.iter().enumerate() {
        let (v1, v2) = equator_frame(xi);
        for t in 0..m_equator {
            let tau = 2.0 * PI * t as f64 / m_equator as f64;
            let (s, c) = tau.sin_cos();
            let p = [0, 1, 2].map(|k| c * v1[k] + s * v2[k]);
            let theta = p[2].clamp(-1.0, 1.0).acos();
            let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
            let u = theta * n_theta as f64 / PI - 0.5;
            let j0 = u.floor();
            let fj = u - j0;
            let v = phi * n_phi as f64 / (2.0 * PI);
            let i0 = v.floor();
            let fi = v - i0;
            for (dj, wj) in [(0i64, 1.0 - fj), (1, fj)] {
                for (di, wi) in [(0i64, 1.0 - fi), (1, fi)] {
                    let mut j = j0 as i64 + dj;
                    let mut i = i0 as i64 + di;
                    // reflect across the poles: the neighbor lies half a turn away in φ
                    if j < 0 {
                        j = -j - 1;
                        i += n_phi as i64 / 2;
                    } else if j >= n_theta as i64 {
                        j = 2 * n_theta as i64 - j - 1;
                        i += n_phi as i64 / 2;
                    }
                    let i = i.rem_euclid(n_phi as i64) as usize;
                    let col = j as usize * n_phi + i;
                    let weight = wj * wi * share;
                    if weight != 0.0 {
                        triplets.push((row, col, weight));
                    }
                }
            }
        }
    }
    Csr::from_triplets(coords.len(), triplets)
}

fn harmonic_change(balanced: &Csr, raw: &Csr, coords: &[[f64; 3]], weights: &[f64]) -> f64 {
    let harmonics: [fn([f64; 3]) -> f64; 8] = [
        |p| p[0],
        |p| p[1],
        |p| p[2],
        |p| p[0] * p[1],
        |p| p[0] * p[2],
        |p| p[1] * p[2],
        |p| p[0] * p[0] - p[1] * p[1],
        |p| 3.0 * p[2] * p[2] - 1.0,
    ];
    let norm = |v: &[f64]| v.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
    harmonics
        .iter()
        .map(|h| {
            let f: Vec<f64> = coords.iter().map(|&p| h(p)).collect();
            let diff: Vec<f64> = balanced.matvec(&f).iter().zip(raw.matvec(&f)).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(&f)
        })
        .fold(0.0, f64::max)
}

fn balance(raw: &Csr, coords: &[[f64; 3]], weights: &[f64]) -> (Csr, BalancingReport) {
    let n = raw.rows();
    let w_max = weights.iter().fold(0.0f64, |m, w| m.max(*w));
    let mut sym = Vec::with_capacity(2 * raw.vals.len());
    for (i, j, v) in raw.triplets() {
        let flux = 0.5 * weights[i] * v;
        sym.push((i, j, flux));
        sym.push((j, i, flux));
    }
    let sym = Csr::from_triplets(n, sym);
    let raw_asymmetry = {
        let mut skew: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * raw.vals.len());
        for (i, j, v) in raw.triplets() {
            skew.push((i, j, weights[i] * v));
            skew.push((j, i, -weights[i] * v));
        }
        Csr::from_triplets(n, skew).vals.iter().fold(0.0f64, |m, v| m.max(v.abs())) / w_max
    };

    let mut d = vec![1.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < SINKHORN_MAX_ITERATIONS {
        let sd = sym.matvec(&d);
        residual = d
            .iter()
            .zip(&sd)
            .zip(weights)
            .map(|((di, si), wi)| (di * si - wi).abs())
            .fold(0.0, f64::max)
            / w_max;
        if residual < SINKHORN_TOLERANCE {
            break;
        }
        for ((di, si), wi) in d.iter_mut().zip(&sd).zip(weights) {
            *di = (*di * wi / si).sqrt();
        }
        iterations += 1;
    }
    if residual >= SINKHORN_TOLERANCE {
        log::warn!("spherical balancing stopped at residual {residual:.3e}");
    }
    let balanced = sym.map_values(|i, j, v| d[i] * v * d[j] / weights[i]);
    let harmonic_correction = harmonic_change(&balanced, raw, coords, weights);
    (
        balanced,
        BalancingReport {
            iterations,
            residual,
            harmonic_correction,
            raw_asymmetry,
        },
    )
}

impl Graphop for SphericalGraphop {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, mut output: ArrayViewMut2<'_, f64>) {
        for (i, mut out) in output.rows_mut().into_iter().enumerate() {
            out.fill(0.0);
            for (j, v) in self.matrix.row(i) {
                out.scaled_add(v, &input.row(j));
            }
        }
    }

    fn label(&self) -> String {
        format!(
            "spherical(n_sphere = {}, m_equator = {}, {:?})",
            self.n_sphere, self.m_equator, self.discretization
        )
    }

    fn metadata(&self) -> GraphopMetadata {
        GraphopMetadata {
            regularity: Some(1.0),
            norm_bound: Some(1.0),
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        let n = self.space.len();
        let mut out = Array2::zeros((n, n));
        for (i, j, v) in self.matrix.triplets() {
            out[[i, j]] = v;
        }
        out
    }
}
