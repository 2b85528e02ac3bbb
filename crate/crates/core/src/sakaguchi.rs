//! The Sakaguchi–Kuramoto mean-field model: oscillators with intrinsic
//! frequencies drawn from `g`, inverse temperature `β`, and graphop coupling.
//!
//! The frequency variable is discretized by quadrature atoms and treated as a
//! second network factor. The density lives on `Ω × {ω_m}` with node
//! `(ξ_k, ω_m)` stored at `k * M + m`, and the Vlasov field uses the combined
//! operator `A ⊗ A_g`, where `A_g` averages over frequencies with weights `g`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{check_len, invalid, Result};
use crate::graphops::{apply_product, Graphop, GraphopMetadata, NetworkSpace, SpaceKind};
use crate::solver::{vlasov_field, DensityField, Solver, SolverConfig, Trajectory};
use crate::torus::InteractionPotential;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrequencyKind {
    Dirac,
    Gaussian,
    Uniform,
    Custom,
}

/// Quadrature atoms `(ω_m, g_m)` of a frequency distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyDistribution {
    kind: FrequencyKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Golub–Welsch: eigenvalues of the Jacobi matrix are the nodes, squared
/// first eigenvector components are the probability weights.
fn golub_welsch(off_diagonal: impl Fn(usize) -> f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(count, count, |i, j| {
        if i + 1 == j {
            off_diagonal(j)
        } else if j + 1 == i {
            off_diagonal(i)
        } else {
            0.0
        }
    });
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..count)
        .map(|k| (eigen.eigenvalues[k], eigen.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

impl FrequencyDistribution {
    /// All mass at `omega`.
    pub fn dirac(omega: f64) -> Self {
        Self {
            kind: FrequencyKind::Dirac,
            nodes: vec![omega],
            weights: vec![1.0],
        }
    }

    /// `N(mean, σ²)` by `count`-point Gauss–Hermite quadrature.
    pub fn gaussian(mean: f64, sigma: f64, count: usize) -> Result<Self> {
        if !(sigma > 0.0) || count == 0 {
            return Err(invalid("gaussian", "needs sigma > 0 and at least one node"));
        }
        let (x, weights) = golub_welsch(|k| (k as f64 / 2.0).sqrt(), count);
        let nodes = x.iter().map(|x| mean + sigma * 2f64.sqrt() * x).collect();
        Ok(Self {
            kind: FrequencyKind::Gaussian,
            nodes,
            weights,
        })
    }

    /// Uniform law on `[a, b]` by `count`-point Gauss–Legendre quadrature.
    pub fn uniform(a: f64, b: f64, count: usize) -> Result<Self> {
        if !(b > a) || count == 0 {
            return Err(invalid("uniform", "needs a < b and at least one node"));
        }
        let (x, weights) = golub_welsch(
            |k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            count,
        );
        let nodes = x.iter().map(|x| 0.5 * (a + b) + 0.5 * (b - a) * x).collect();
        Ok(Self {
            kind: FrequencyKind::Uniform,
            nodes,
            weights,
        })
    }

    /// User atoms; zero-weight atoms are dropped.
    pub fn custom(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.iter().any(|(w, g)| !w.is_finite() || !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid("atoms", "frequencies must be finite and weights nonnegative"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("atoms", format!("weights must sum to 1, sum is {total}")));
        }
        let (nodes, weights) = atoms.iter().filter(|a| a.1 > 0.0).copied().unzip();
        Ok(Self {
            kind: FrequencyKind::Custom,
            nodes,
            weights,
        })
    }

    pub fn kind(&self) -> FrequencyKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_m g_m f(ω_m)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(w, g)| g * f(*w)).sum()
    }

    pub fn space(&self) -> Result<NetworkSpace> {
        let total: f64 = self.weights.iter().sum();
        let weights = self.weights.iter().map(|w| w / total).collect();
        NetworkSpace::new(SpaceKind::Frequency, weights, Vec::new())
    }
}

/// `(A_g f)(ω) = Σ_m g_m f(ω_m)`: the all-to-all frequency graphop.
#[derive(Clone, Debug)]
pub struct FrequencyAveraging {
    space: NetworkSpace,
}

impl FrequencyAveraging {
    pub fn new(g: &FrequencyDistribution) -> Result<Self> {
        Ok(Self { space: g.space()? })
    }
}

impl Graphop for FrequencyAveraging {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, mut output: ArrayViewMut2<'_, f64>) {
        let mean = self.space.weights().iter().zip(input.rows()).fold(
            ndarray::Array1::zeros(input.ncols()),
            |acc, (w, row)| acc + &(&row * *w),
        );
        for mut row in output.rows_mut() {
            row.assign(&mean);
        }
    }

    fn label(&self) -> String {
        format!("frequency-average({} atoms)", self.space.len())
    }

    fn metadata(&self) -> GraphopMetadata {
        GraphopMetadata {
            regularity: Some(1.0),
            norm_bound: Some(1.0),
        }
    }
}

/// `A ⊗ A_g` with `A` borrowed.
#[derive(Debug)]
pub struct FrequencyCoupling<'a> {
    graphop: &'a dyn Graphop,
    averaging: FrequencyAveraging,
    space: NetworkSpace,
}

impl<'a> FrequencyCoupling<'a> {
    pub fn new(graphop: &'a dyn Graphop, g: &FrequencyDistribution) -> Result<Self> {
        let averaging = FrequencyAveraging::new(g)?;
        let space = NetworkSpace::product(graphop.space(), averaging.space())?;
        Ok(Self {
            graphop,
            averaging,
            space,
        })
    }
}

impl Graphop for FrequencyCoupling<'_> {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, output: ArrayViewMut2<'_, f64>) {
        apply_product(self.graphop, &self.averaging, input, output);
    }

    fn label(&self) -> String {
        format!("{} x {}", self.graphop.label(), self.averaging.label())
    }
}

/// `V[A, g](ρ) = ∫ (∇D ⋆ Aρ) g dω` on the product node set.
pub fn freq_vlasov(
    field: &DensityField,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
    g: &FrequencyDistribution,
) -> Result<Vec<Array2<f64>>> {
    let coupling = FrequencyCoupling::new(graphop, g)?;
    vlasov_field(field, &coupling, potential)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SakaguchiConfig {
    /// Inverse temperature `β`; the diffusion coefficient is `1/β`.
    pub beta_temp: f64,
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
    pub cadence: f64,
    /// Turning this off removes diffusion entirely (a test mode isolating
    /// the transport term).
    pub diffusion: bool,
}

impl SakaguchiConfig {
    pub fn new(beta_temp: f64, kappa: f64, dt: f64, t_final: f64) -> Self {
        Self {
            beta_temp,
            kappa,
            dt,
            t_final,
            cadence: dt,
            diffusion: true,
        }
    }

    pub fn with_cadence(mut self, cadence: f64) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_temp.is_finite() && self.beta_temp > 0.0) {
            return Err(invalid("beta_temp", format!("must be positive, got {}", self.beta_temp)));
        }
        Ok(())
    }
}

/// Integrates `∂t ρ = ∂x(-ω ρ + κ ρ V[A, g](ρ)) + β⁻¹ ∂xx ρ` in one dimension.
/// `initial` lives on the product of `A`'s space and the frequency atoms.
pub fn sakaguchi_run(
    initial: &DensityField,
    config: &SakaguchiConfig,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
    g: &FrequencyDistribution,
) -> Result<Trajectory> {
    config.validate()?;
    if initial.grid().dim() != 1 {
        return Err(invalid("grid", "the Sakaguchi model is one-dimensional"));
    }
    let coupling = FrequencyCoupling::new(graphop, g)?;
    check_len("sakaguchi_run nodes", coupling.space().len(), initial.nodes())?;
    let speeds: Vec<f64> = (0..graphop.space().len()).flat_map(|_| g.nodes().iter().copied()).collect();
    let solver_config = SolverConfig::new(config.kappa, config.dt, config.t_final).with_cadence(config.cadence);
    let diffusivity = if config.diffusion { 1.0 / config.beta_temp } else { 0.0 };
    Solver::new(initial.grid(), &coupling, potential, solver_config)?
        .with_diffusivity(diffusivity)?
        .with_transport(speeds)?
        .run(initial)
}

/// `κ₀(β) = 2π² / (L² β ‖∂xx D‖∞)`.
pub fn kappa_zero(beta_temp: f64, length: f64, potential: &InteractionPotential) -> Result<f64> {
    let sup = potential.sup_laplacian();
    if !(beta_temp > 0.0 && length > 0.0 && sup > 0.0) {
        return Err(invalid("kappa_zero", "needs positive β, L and ‖∂xx D‖∞"));
    }
    Ok(2.0 * PI * PI / (length * length * beta_temp * sup))
}

/// `κ_c(β) = 2 [∫ β⁻¹/(β⁻² + ω²) g(ω) dω]⁻¹` by quadrature over the atoms.
pub fn critical_coupling(beta_temp: f64, g: &FrequencyDistribution) -> Result<f64> {
    if !(beta_temp > 0.0) {
        return Err(invalid("beta_temp", "must be positive"));
    }
    let d = 1.0 / beta_temp;
    let integral = g.expect(|w| d / (d * d + w * w));
    if !(integral > 0.0) {
        return Err(invalid("g", "the coupling integral vanishes"));
    }
    Ok(2.0 / integral)
}

/// `4π²/(L² β) - 2κ ‖∂xx D‖∞ n(A)`, the `g`-independent decay rate.
pub fn sakaguchi_rate(
    beta_temp: f64,
    kappa: f64,
    numerical_radius: f64,
    length: f64,
    potential: &InteractionPotential,
) -> f64 {
    4.0 * PI * PI / (length * length * beta_temp) - 2.0 * kappa * potential.sup_laplacian() * numerical_radius
}
