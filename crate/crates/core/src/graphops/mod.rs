//! Graphops: positivity-preserving, self-adjoint operators acting on functions
//! of the network variable, discretized on a finite quadrature of `(Ω, μ)`.
//!
//! Every operator exposes [`Graphop::apply_rows`], which applies the operator
//! along axis 0 of a `nodes × batch` array. The solver uses the batch axis for
//! spatial grid points, so one call covers a whole density field.

mod combined;
mod empirical;
mod graphon;
mod spherical;

use std::fmt;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};

pub use combined::{combined_apply, CombinedGraphop};
pub(crate) use combined::apply_product;
pub use empirical::{empirical_graphop, read_edge_list, write_edge_list, Adjacency, EmpiricalGraphop};
pub use graphon::{
    constant_graphon, graphon_norm, graphon_operator, power_law_graphon, GraphonKernel, GraphonOperator,
    PowerLawParams,
};
pub use spherical::{spherical_graphop, BalancingReport, SphericalDiscretization, SphericalGraphop};

/// What the nodes of a [`NetworkSpace`] discretize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Interval,
    Sphere,
    FiniteGraph,
    Frequency,
    Product,
    Custom,
}

/// Finite quadrature of a probability space: nodes with positive weights
/// summing to one, and optional coordinates for geometric spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpace {
    kind: SpaceKind,
    weights: Vec<f64>,
    coords: Vec<[f64; 3]>,
}

impl NetworkSpace {
    pub fn new(kind: SpaceKind, weights: Vec<f64>, coords: Vec<[f64; 3]>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weights", "network space needs at least one node"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid("weights", format!("all weights must be positive, found {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("must sum to 1, sum is {total:.15}")));
        }
        if !coords.is_empty() {
            check_len("NetworkSpace coordinates", weights.len(), coords.len())?;
        }
        Ok(Self {
            kind,
            weights,
            coords,
        })
    }

    /// `n` nodes of equal weight.
    pub fn uniform(kind: SpaceKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("nodes", "must be positive"));
        }
        Self::new(kind, vec![1.0 / n as f64; n], Vec::new())
    }

    /// Midpoint quadrature of `(0, 1]` with Lebesgue measure: `ξ_k = (k - 1/2)/m`.
    pub fn interval_midpoints(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("nodes", "must be positive"));
        }
        let coords = (0..m).map(|k| [(k as f64 + 0.5) / m as f64, 0.0, 0.0]).collect();
        Self::new(SpaceKind::Interval, vec![1.0 / m as f64; m], coords)
    }

    /// Product space with row-major node order `(i1, i2) -> i1 * n2 + i2`.
    pub fn product(first: &NetworkSpace, second: &NetworkSpace) -> Result<Self> {
        let mut weights = Vec::with_capacity(first.len() * second.len());
        for a in &first.weights {
            for b in &second.weights {
                weights.push(a * b);
            }
        }
        // renormalize away round-off so the sum check is exact
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(SpaceKind::Product, weights, Vec::new())
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> Option<&[[f64; 3]]> {
        (!self.coords.is_empty()).then_some(self.coords.as_slice())
    }

    /// `⟨f, g⟩_μ`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm2(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub fn norm1(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v.abs()).sum()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// Optional facts a construction knows about itself.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GraphopMetadata {
    /// Claimed `c` with `A 1 = c 1`.
    pub regularity: Option<f64>,
    /// Analytic upper bound on `‖A‖_{2→2}`.
    pub norm_bound: Option<f64>,
}

/// A discretized graphop on a [`NetworkSpace`].
pub trait Graphop: Send + Sync + fmt::Debug {
    fn space(&self) -> &NetworkSpace;

    /// Writes `A` applied along axis 0 of `input` into `output`. Both arrays
    /// have one row per network node; columns are independent.
    fn apply_rows(&self, input: ArrayView2<'_, f64>, output: ArrayViewMut2<'_, f64>);

    fn label(&self) -> String;

    fn metadata(&self) -> GraphopMetadata {
        GraphopMetadata::default()
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.space().len();
        assert_eq!(f.len(), n, "field length must match the node count");
        let input = ArrayView2::from_shape((n, 1), f).expect("contiguous column");
        let mut out = Array2::zeros((n, 1));
        self.apply_rows(input, out.view_mut());
        out.into_raw_vec_and_offset().0
    }

    /// Matrix of the map `f ↦ A f` in node coordinates.
    fn to_dense(&self) -> Array2<f64> {
        let n = self.space().len();
        let mut out = Array2::zeros((n, n));
        self.apply_rows(Array2::eye(n).view(), out.view_mut());
        out
    }
}

/// The identity operator `A ρ = ρ` (homogeneous all-to-all coupling).
#[derive(Clone, Debug)]
pub struct IdentityGraphop {
    space: NetworkSpace,
}

impl IdentityGraphop {
    pub fn new(space: NetworkSpace) -> Self {
        Self { space }
    }

    /// Identity on a single-node space, the degenerate network of the
    /// homogeneous equation.
    pub fn single_node() -> Self {
        Self::new(NetworkSpace::uniform(SpaceKind::Custom, 1).expect("one node"))
    }
}

impl Graphop for IdentityGraphop {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, mut output: ArrayViewMut2<'_, f64>) {
        output.assign(&input);
    }

    fn label(&self) -> String {
        "identity".into()
    }

    fn metadata(&self) -> GraphopMetadata {
        GraphopMetadata {
            regularity: Some(1.0),
            norm_bound: Some(1.0),
        }
    }
}

const PROBES: usize = 8;

fn random_probes(n: usize, count: usize, seed: u64, nonnegative: bool) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, count), |_| {
        let u: f64 = rng.random();
        if nonnegative {
            u
        } else {
            2.0 * u - 1.0
        }
    })
}

fn apply_batch(a: &dyn Graphop, input: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(input.raw_dim());
    a.apply_rows(input.view(), out.view_mut());
    out
}

/// Largest relative defect of `A(a f + b g) = a A f + b A g` over random probes.
pub fn linearity_defect(a: &dyn Graphop, seed: u64) -> f64 {
    let n = a.space().len();
    let f = random_probes(n, PROBES, seed, false);
    let g = random_probes(n, PROBES, seed.wrapping_add(1), false);
    let (s, t) = (0.7, -1.3);
    let combo = &f * s + &g * t;
    let lhs = apply_batch(a, &combo);
    let rhs = apply_batch(a, &f) * s + apply_batch(a, &g) * t;
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (&lhs - &rhs).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

/// Minimum entry of `A f` over nonnegative random and indicator probes,
/// relative to the largest output entry.
pub fn positivity_defect(a: &dyn Graphop, seed: u64) -> f64 {
    let n = a.space().len();
    let mut probes = random_probes(n, PROBES, seed, true);
    let indicators = n.min(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut ind = Array2::zeros((n, indicators));
    for c in 0..indicators {
        ind[[rng.random_range(0..n), c]] = 1.0;
    }
    probes.append(ndarray::Axis(1), ind.view()).expect("same row count");
    let out = apply_batch(a, &probes);
    let scale = out.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    out.iter().fold(0.0f64, |m, v| m.min(*v)) / scale
}

/// Fails when a nonnegative probe is mapped to a field with entries below
/// `-tol` (relative).
pub fn check_positivity(a: &dyn Graphop, tol: f64) -> Result<()> {
    let defect = positivity_defect(a, 17);
    if defect < -tol {
        Err(Error::NotPositivityPreserving { min: defect })
    } else {
        Ok(())
    }
}

/// `max |⟨Af, g⟩_μ - ⟨f, Ag⟩_μ| / (‖f‖ ‖g‖)` over random probe pairs.
pub fn self_adjoint_defect(a: &dyn Graphop, seed: u64) -> f64 {
    let space = a.space();
    let n = space.len();
    let f = random_probes(n, PROBES, seed, false);
    let g = random_probes(n, PROBES, seed.wrapping_add(7), false);
    let af = apply_batch(a, &f);
    let ag = apply_batch(a, &g);
    let mut worst: f64 = 0.0;
    for c in 0..PROBES {
        let fc = f.column(c).to_vec();
        let gc = g.column(c).to_vec();
        let lhs = space.inner(&af.column(c).to_vec(), &gc);
        let rhs = space.inner(&fc, &ag.column(c).to_vec());
        let denom = space.norm2(&fc) * space.norm2(&gc);
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    worst
}

pub fn check_self_adjoint(a: &dyn Graphop, tol: f64) -> Result<()> {
    let defect = self_adjoint_defect(a, 3);
    if defect > tol {
        Err(Error::NotSelfAdjoint {
            defect,
            tolerance: tol,
        })
    } else {
        Ok(())
    }
}

/// Outcome of a power iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusEstimate {
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration cap was hit before the tolerance was met.
    pub converged: bool,
}

const MAX_POWER_ITERATIONS: usize = 20_000;
const SELF_ADJOINT_TOLERANCE: f64 = 1e-8;

/// Positive, non-constant start vector so that no eigen-direction of a
/// positivity-preserving operator is missed.
fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..n).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Numerical radius `n(A) = sup{(Af, f) : ‖f‖_{L²(μ)} = 1}` for self-adjoint
/// `A`, by power iteration on `S = M^{1/2} A M^{-1/2}` (unitarily equivalent
/// to `A` on `L²(μ)`). Returns the dominant eigenvalue magnitude `‖S v‖`,
/// which equals `n(A)` for positivity-preserving operators.
pub fn numerical_radius(a: &dyn Graphop, tol: f64) -> Result<RadiusEstimate> {
    check_self_adjoint(a, SELF_ADJOINT_TOLERANCE)?;
    let space = a.space();
    let sqrt_w: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let mut v = start_vector(space.len());
    normalize(&mut v);
    let mut previous = f64::NAN;
    for iteration in 1..=MAX_POWER_ITERATIONS {
        let u: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect();
        let mut w: Vec<f64> = a.apply(&u).iter().zip(&sqrt_w).map(|(x, s)| x * s).collect();
        let value = normalize(&mut w);
        if value == 0.0 {
            return Ok(RadiusEstimate {
                value: 0.0,
                iterations: iteration,
                converged: true,
            });
        }
        v = w;
        if (value - previous).abs() < tol * value.max(1.0) {
            return Ok(RadiusEstimate {
                value,
                iterations: iteration,
                converged: true,
            });
        }
        previous = value;
    }
    log::warn!("numerical_radius: no convergence after {MAX_POWER_ITERATIONS} iterations");
    Ok(RadiusEstimate {
        value: previous,
        iterations: MAX_POWER_ITERATIONS,
        converged: false,
    })
}

/// `‖A‖_{2→2}` on `L²(μ)` by power iteration on `S^T S`, with `S` the
/// weighted dense matrix. Does not assume self-adjointness and shares no
/// code path with [`numerical_radius`].
pub fn operator_norm(a: &dyn Graphop, tol: f64) -> RadiusEstimate {
    let space = a.space();
    let n = space.len();
    let sqrt_w: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let mut s = a.to_dense();
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] *= sqrt_w[i] / sqrt_w[j];
        }
    }
    let st = s.t().to_owned();
    let mut v = ndarray::Array1::from(start_vector(n));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut previous = f64::NAN;
    for iteration in 1..=MAX_POWER_ITERATIONS {
        let sv = s.dot(&v);
        let value = sv.dot(&sv).sqrt();
        if value == 0.0 {
            return RadiusEstimate {
                value: 0.0,
                iterations: iteration,
                converged: true,
            };
        }
        let mut next = st.dot(&sv);
        let nn = next.dot(&next).sqrt();
        next /= nn;
        v = next;
        if (value - previous).abs() < tol * value.max(1.0) {
            return RadiusEstimate {
                value,
                iterations: iteration,
                converged: true,
            };
        }
        previous = value;
    }
    RadiusEstimate {
        value: previous,
        iterations: MAX_POWER_ITERATIONS,
        converged: false,
    }
}

/// Returns `c` when `‖A1 - c 1‖∞ <= tol`, with `c` the μ-mean of `A1`.
pub fn check_c_regular(a: &dyn Graphop, tol: f64) -> Option<f64> {
    let space = a.space();
    let a1 = a.apply(&vec![1.0; space.len()]);
    let c = space.mean(&a1);
    let deviation = a1.iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
    (deviation <= tol).then_some(c)
}

/// `‖A‖_{∞→1}`. For positivity-preserving operators the supremum is attained
/// at `f = 1`, so this is `‖A1‖_{L¹(μ)}`; the shortcut is refused otherwise.
pub fn norm_infty_to_1(a: &dyn Graphop) -> Result<f64> {
    check_positivity(a, 1e-12)?;
    let space = a.space();
    Ok(space.norm1(&a.apply(&vec![1.0; space.len()])))
}
