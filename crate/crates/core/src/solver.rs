//! Time integration of `∂t ρ = κ div(ρ V[A](ρ)) + σ Δρ` on the torus grid
//! times a network space, by Strang splitting with exact spectral diffusion.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use ndarray::parallel::prelude::*;

use crate::entropy::{fit_decay_rate, write_diagnostics_csv, DiagnosticRecord, RateFit};
use crate::error::{check_len, invalid, Error, Result};
use crate::graphops::{Graphop, NetworkSpace};
use crate::torus::{circular_convolve, kernel_spectrum, InteractionPotential, TorusGrid};

/// `ρ(x, ξ_k)` sampled on a torus grid: one row per network node, one column
/// per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: TorusGrid,
    space: NetworkSpace,
    values: Array2<f64>,
    time: f64,
}

impl DensityField {
    pub fn new(grid: TorusGrid, space: NetworkSpace, values: Array2<f64>) -> Result<Self> {
        check_len("DensityField rows", space.len(), values.nrows())?;
        check_len("DensityField columns", grid.len(), values.ncols())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "density must be finite"));
        }
        let values = values.as_standard_layout().into_owned();
        Ok(Self {
            grid,
            space,
            values,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn space(&self) -> &NetworkSpace {
        &self.space
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn slice(&self, node: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values.as_slice().expect("standard layout")[node * n..(node + 1) * n]
    }

    /// `∫_U ρ(x, ξ_k) dx` per node.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.grid.integrate(self.slice(k))).collect()
    }

    /// `∫_Ω ∫_U ρ dx dμ`.
    pub fn joint_mass(&self) -> f64 {
        self.space.mean(&self.masses())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Writes the snapshot format: four little-endian `f64` header values
    /// `(d, n, node count, t)` followed by the values, node-major.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let header = [
            self.grid.dim() as f64,
            self.grid.points() as f64,
            self.nodes() as f64,
            self.time,
        ];
        for v in header.iter().chain(self.values.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`DensityField::write_snapshot`]; the grid
    /// and space must match its header.
    pub fn read_snapshot<R: Read>(mut input: R, grid: TorusGrid, space: NetworkSpace) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 || bytes.len() < 32 {
            return Err(invalid("snapshot", format!("{} bytes is not a valid snapshot", bytes.len())));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        check_len("snapshot dimension", grid.dim(), floats[0] as usize)?;
        check_len("snapshot points", grid.points(), floats[1] as usize)?;
        check_len("snapshot nodes", space.len(), floats[2] as usize)?;
        check_len("snapshot values", space.len() * grid.len(), floats.len() - 4)?;
        let values = Array2::from_shape_vec((space.len(), grid.len()), floats[4..].to_vec()).expect("checked shape");
        Ok(Self::new(grid, space, values)?.with_time(floats[3]))
    }
}

/// The splay state `ρ∞ = 1/L^d` on every node.
pub fn steady_state(grid: &TorusGrid, space: &NetworkSpace) -> DensityField {
    let values = Array2::from_elem((space.len(), grid.len()), 1.0 / grid.volume());
    DensityField::new(grid.clone(), space.clone(), values).expect("shapes agree by construction")
}

/// Family of initial densities.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `(1 + ε cos(q·x + φ)) / L^d`.
    PerturbedUniform { epsilon: f64, wave: [i64; 2], phase: f64 },
    /// Normalized `Σ_c w_c exp(κ_c Σ_i cos(2π (x_i - c_i)/L))`.
    VonMisesMixture(Vec<VonMises>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VonMises {
    pub center: [f64; 2],
    pub concentration: f64,
    pub weight: f64,
}

/// Per-node scaling of the perturbation (`ε` or the concentrations) and
/// phase shift along the first axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulation {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Modulation {
    pub fn from_fn(space: &NetworkSpace, f: impl Fn(usize) -> (f64, f64)) -> Self {
        let (amplitude, phase) = (0..space.len()).map(f).unzip();
        Self { amplitude, phase }
    }
}

pub fn make_initial_condition(
    kind: &InitialCondition,
    grid: &TorusGrid,
    space: &NetworkSpace,
    modulation: Option<&Modulation>,
) -> Result<DensityField> {
    if let Some(m) = modulation {
        check_len("modulation amplitude", space.len(), m.amplitude.len())?;
        check_len("modulation phase", space.len(), m.phase.len())?;
    }
    let scale = |k: usize| modulation.map_or((1.0, 0.0), |m| (m.amplitude[k], m.phase[k]));
    let l = grid.length();
    let unit = grid.wavenumber_unit();
    let mut values = Array2::zeros((space.len(), grid.len()));
    match kind {
        InitialCondition::PerturbedUniform { epsilon, wave, phase } => {
            if grid.dim() == 1 && wave[1] != 0 {
                return Err(invalid("wave", "second component must be 0 in one dimension"));
            }
            if *epsilon != 0.0 && wave.iter().all(|w| *w == 0) {
                return Err(invalid("wave", "the perturbation needs a nonzero wave vector"));
            }
            if wave.iter().any(|w| w.unsigned_abs() as usize >= grid.points() / 2) {
                return Err(invalid("wave", format!("{wave:?} is not resolved by {} points", grid.points())));
            }
            for k in 0..space.len() {
                let (s, shift) = scale(k);
                let eps = epsilon * s;
                if eps.abs() >= 1.0 {
                    return Err(Error::NonPositiveDensity("a perturbed-uniform state with |ε| >= 1"));
                }
                for j in 0..grid.len() {
                    let x = grid.coords(j);
                    let arg = unit * (wave[0] as f64 * x[0] + wave[1] as f64 * x[1]) + phase + shift;
                    values[[k, j]] = (1.0 + eps * arg.cos()) / grid.volume();
                }
            }
        }
        InitialCondition::VonMisesMixture(components) => {
            if components.is_empty() {
                return Err(invalid("components", "von Mises mixture needs at least one component"));
            }
            for c in components {
                if !(c.weight > 0.0 && c.concentration.is_finite() && c.concentration >= 0.0) {
                    return Err(invalid("components", format!("invalid component {c:?}")));
                }
            }
            for k in 0..space.len() {
                let (s, shift) = scale(k);
                if s < 0.0 {
                    return Err(invalid("modulation", "von Mises amplitudes must be nonnegative"));
                }
                let offset = shift * l / (2.0 * PI);
                let mut row: Vec<f64> = (0..grid.len())
                    .map(|j| {
                        let x = grid.coords(j);
                        components
                            .iter()
                            .map(|c| {
                                let e: f64 = (0..grid.dim())
                                    .map(|i| {
                                        let centre = c.center[i] + if i == 0 { offset } else { 0.0 };
                                        (unit * (x[i] - centre)).cos()
                                    })
                                    .sum();
                                // shifted by the maximum for overflow safety
                                c.weight * (s * c.concentration * (e - grid.dim() as f64)).exp()
                            })
                            .sum()
                    })
                    .collect();
                let mass = grid.integrate(&row);
                if !(mass > 0.0) || row.iter().any(|v| *v <= 0.0) {
                    return Err(Error::NonPositiveDensity("the von Mises mixture (underflow)"));
                }
                row.iter_mut().for_each(|v| *v /= mass);
                values.row_mut(k).assign(&ndarray::Array1::from(row));
            }
        }
    }
    DensityField::new(grid.clone(), space.clone(), values)
}

/// Splitting of the linear (diffusion and transport) and nonlinear
/// (interaction) parts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Splitting {
    /// Half linear step, full advection step, half linear step.
    #[default]
    Strang,
    /// Full linear step followed by a full advection step.
    Lie,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
    pub splitting: Splitting,
    /// Floor inside logarithms of the entropy diagnostics.
    pub positivity_floor: f64,
    /// Time between diagnostic records.
    pub cadence: f64,
    /// Time between stored snapshots; `None` keeps only the final state.
    pub snapshot_cadence: Option<f64>,
}

/// Advective CFL bound `κ max|V| dt / dx`.
pub const CFL_LIMIT: f64 = 0.5;
/// Minimum density below which a step is rejected.
pub const POSITIVITY_ABORT: f64 = -1e-8;

impl SolverConfig {
    pub fn new(kappa: f64, dt: f64, t_final: f64) -> Self {
        Self {
            kappa,
            dt,
            t_final,
            splitting: Splitting::Strang,
            positivity_floor: crate::entropy::POSITIVITY_FLOOR,
            cadence: dt,
            snapshot_cadence: None,
        }
    }

    pub fn with_cadence(mut self, cadence: f64) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(invalid("kappa", format!("must be nonnegative, got {}", self.kappa)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(invalid("t_final", format!("must be nonnegative, got {}", self.t_final)));
        }
        if !(self.cadence > 0.0) {
            return Err(invalid("cadence", format!("must be positive, got {}", self.cadence)));
        }
        if matches!(self.snapshot_cadence, Some(c) if !(c > 0.0)) {
            return Err(invalid("snapshot_cadence", "must be positive"));
        }
        Ok(())
    }

    /// Number of steps and the step actually used: `dt` is shrunk so that an
    /// integer number of steps lands on `t_final`.
    pub fn schedule(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, self.dt);
        }
        let steps = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_final / steps as f64)
    }
}

/// Convolution of `∇D` restricted to the Fourier modes of `D`.
#[derive(Clone, Debug)]
struct SpectralKernel {
    /// Flat spectral indices where `∇D` has nonzero coefficients.
    active: Vec<usize>,
    /// `(L/n)^d · DFT(∂_i D)` at the active indices, per axis.
    symbols: Vec<Vec<Complex64>>,
}

impl SpectralKernel {
    fn new(grid: &TorusGrid, potential: &InteractionPotential) -> Result<Self> {
        if potential.dim() != grid.dim() {
            return Err(invalid("potential", "dimension differs from the grid"));
        }
        if (potential.length() - grid.length()).abs() > 1e-12 * grid.length() {
            return Err(invalid("potential", "period differs from the grid length"));
        }
        let n = grid.points() as i64;
        if potential.max_wave() >= n / 2 {
            return Err(invalid(
                "potential",
                format!("mode {} is not resolved by {n} points per axis", potential.max_wave()),
            ));
        }
        let flat = |w: [i64; 2]| -> usize {
            let a = w[0].rem_euclid(n) as usize;
            if grid.dim() == 1 {
                a
            } else {
                a * n as usize + w[1].rem_euclid(n) as usize
            }
        };
        let mut active: Vec<usize> = potential
            .modes()
            .iter()
            .filter(|m| (m.cos != 0.0 || m.sin != 0.0) && m.wave != [0, 0])
            .flat_map(|m| [flat(m.wave), flat([-m.wave[0], -m.wave[1]])])
            .collect();
        active.sort_unstable();
        active.dedup();
        let symbols = potential
            .gradient_samples(grid)
            .iter()
            .map(|g| {
                let full = kernel_spectrum(grid, g);
                active.iter().map(|&i| full[i]).collect()
            })
            .collect();
        Ok(Self { active, symbols })
    }
}

/// Integrator for one graphop, potential, and configuration.
#[derive(Debug)]
pub struct Solver<'a> {
    grid: TorusGrid,
    graphop: &'a dyn Graphop,
    config: SolverConfig,
    diffusivity: f64,
    transport: Option<Vec<f64>>,
    kernel: SpectralKernel,
    potential: &'a InteractionPotential,
}

impl<'a> Solver<'a> {
    pub fn new(
        grid: &TorusGrid,
        graphop: &'a dyn Graphop,
        potential: &'a InteractionPotential,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kernel: SpectralKernel::new(grid, potential)?,
            grid: grid.clone(),
            graphop,
            config,
            diffusivity: 1.0,
            transport: None,
            potential,
        })
    }

    /// Replaces the unit diffusion coefficient.
    pub fn with_diffusivity(mut self, diffusivity: f64) -> Result<Self> {
        if !(diffusivity.is_finite() && diffusivity >= 0.0) {
            return Err(invalid("diffusivity", format!("must be nonnegative, got {diffusivity}")));
        }
        self.diffusivity = diffusivity;
        Ok(self)
    }

    /// Adds `-ω_k ∂_1 ρ` with one speed per network node.
    pub fn with_transport(mut self, speeds: Vec<f64>) -> Result<Self> {
        check_len("transport speeds", self.graphop.space().len(), speeds.len())?;
        self.transport = Some(speeds);
        Ok(self)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn check_field(&self, field: &DensityField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(invalid("field", "grid differs from the solver grid"));
        }
        check_len("field nodes", self.graphop.space().len(), field.nodes())
    }

    /// `V[A](ρ)` per axis through the mode-restricted spectral path.
    fn velocity(&self, values: &Array2<f64>) -> Vec<Array2<f64>> {
        let n = self.grid.len();
        let active = &self.kernel.active;
        let na = active.len();
        let nodes = values.nrows();
        // DFT coefficients of every slice at the active modes, split into
        // real and imaginary columns so that the real operator A applies
        let mut coeffs = Array2::zeros((nodes, 2 * na));
        coeffs
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(values.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut out, row)| {
                let spectrum = self.grid.forward(row.as_slice().expect("standard layout"));
                for (j, &idx) in active.iter().enumerate() {
                    out[2 * j] = spectrum[idx].re;
                    out[2 * j + 1] = spectrum[idx].im;
                }
            });
        let mut mixed = Array2::zeros((nodes, 2 * na));
        self.graphop.apply_rows(coeffs.view(), mixed.view_mut());
        (0..self.grid.dim())
            .map(|axis| {
                let symbols = &self.kernel.symbols[axis];
                let mut v = Array2::zeros((nodes, n));
                v.axis_iter_mut(Axis(0))
                    .into_par_iter()
                    .zip(mixed.axis_iter(Axis(0)).into_par_iter())
                    .for_each(|(mut out, c)| {
                        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
                        for (j, &idx) in active.iter().enumerate() {
                            spectrum[idx] = symbols[j] * Complex64::new(c[2 * j], c[2 * j + 1]);
                        }
                        self.grid
                            .inverse_into(&mut spectrum, out.as_slice_mut().expect("standard layout"));
                    });
                v
            })
            .collect()
    }

    /// `κ div(ρ V)` with the 2/3-rule applied to the result, and `max |V|`.
    fn advection(&self, values: &Array2<f64>) -> (Array2<f64>, f64) {
        let velocity = self.velocity(values);
        let n = self.grid.len();
        let kappa = self.config.kappa;
        let mask = self.grid.dealias_mask();
        let mut out = Array2::zeros(values.raw_dim());
        let vmax = out
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .map(|(k, mut row)| {
                let rho = values.row(k);
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                let mut vmax: f64 = 0.0;
                for (axis, v) in velocity.iter().enumerate() {
                    let v = v.row(k);
                    let flux: Vec<f64> = rho
                        .iter()
                        .zip(v.iter())
                        .map(|(r, v)| {
                            vmax = vmax.max(v.abs());
                            r * v
                        })
                        .collect();
                    let spectrum = self.grid.forward(&flux);
                    for ((a, s), &q) in acc.iter_mut().zip(&spectrum).zip(self.grid.gradient_symbol(axis)) {
                        *a += s * Complex64::new(0.0, q);
                    }
                }
                for (a, keep) in acc.iter_mut().zip(mask) {
                    if !keep {
                        *a = Complex64::new(0.0, 0.0);
                    }
                }
                let out = row.as_slice_mut().expect("standard layout");
                self.grid.inverse_into(&mut acc, out);
                out.iter_mut().for_each(|v| *v *= kappa);
                vmax
            })
            .reduce(|| 0.0, f64::max);
        (out, vmax)
    }

    /// Exact flow of `σ Δ - ω_k ∂_1` over time `h`.
    fn linear_step(&self, values: &mut Array2<f64>, h: f64) {
        let lap = self.grid.laplacian_symbol();
        let k1 = self.grid.gradient_symbol(0);
        let decay: Vec<f64> = lap.iter().map(|s| (self.diffusivity * s * h).exp()).collect();
        values
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(node, mut row)| {
                let row = row.as_slice_mut().expect("standard layout");
                let mut spectrum = self.grid.forward(row);
                let speed = self.transport.as_ref().map_or(0.0, |s| s[node]);
                for ((c, d), q) in spectrum.iter_mut().zip(&decay).zip(k1) {
                    *c *= *d * Complex64::from_polar(1.0, -speed * q * h);
                }
                self.grid.inverse_into(&mut spectrum, row);
            });
    }

    /// SSP-RK2 step of the advection part with `V` re-evaluated per stage.
    fn advection_step(&self, values: &mut Array2<f64>, dt: f64) -> Result<()> {
        let (f0, vmax) = self.advection(values);
        if self.config.kappa > 0.0 && vmax > 0.0 {
            let limit = CFL_LIMIT * self.grid.spacing() / (self.config.kappa * vmax);
            if dt > limit {
                return Err(Error::Cfl { dt, limit });
            }
        }
        let stage = &*values + &(f0 * dt);
        let (f1, _) = self.advection(&stage);
        let next = (&*values + &stage + &(f1 * dt)) * 0.5;
        *values = next;
        Ok(())
    }

    /// Advances `field` by one step of length `dt`.
    pub fn step_by(&self, field: &mut DensityField, dt: f64) -> Result<()> {
        self.check_field(field)?;
        let values = &mut field.values;
        match self.config.splitting {
            Splitting::Strang => {
                self.linear_step(values, 0.5 * dt);
                self.advection_step(values, dt)?;
                self.linear_step(values, 0.5 * dt);
            }
            Splitting::Lie => {
                self.linear_step(values, dt);
                self.advection_step(values, dt)?;
            }
        }
        field.time += dt;
        let min = field.min();
        if min < POSITIVITY_ABORT {
            return Err(Error::Positivity {
                time: field.time,
                min,
                suggested_dt: 0.5 * dt,
            });
        }
        Ok(())
    }

    /// Advances `field` by the configured `dt`.
    pub fn step(&self, field: &mut DensityField) -> Result<()> {
        self.step_by(field, self.config.dt)
    }

    /// `V[A](ρ)` as used by the time stepper.
    pub fn velocity_field(&self, field: &DensityField) -> Result<Vec<Array2<f64>>> {
        self.check_field(field)?;
        Ok(self.velocity(field.values()))
    }

    /// Sup norm of the right-hand side at `field`.
    pub fn residual(&self, field: &DensityField) -> Result<f64> {
        self.check_field(field)?;
        let (advection, _) = self.advection(field.values());
        let lap = self.grid.laplacian_symbol();
        let k1 = self.grid.gradient_symbol(0);
        let mut worst: f64 = 0.0;
        for k in 0..field.nodes() {
            let speed = self.transport.as_ref().map_or(0.0, |s| s[k]);
            let spectrum: Vec<Complex64> = self
                .grid
                .forward(field.slice(k))
                .iter()
                .zip(lap)
                .zip(k1)
                .map(|((c, l), q)| c * Complex64::new(self.diffusivity * l, -speed * q))
                .collect();
            let linear = self.grid.inverse(spectrum);
            for (a, b) in advection.row(k).iter().zip(&linear) {
                worst = worst.max((a + b).abs());
            }
        }
        Ok(worst)
    }

    /// Integrates from `initial` to `t_final`, recording diagnostics at the
    /// configured cadence (always including the first and last state).
    pub fn run(&self, initial: &DensityField) -> Result<Trajectory> {
        self.check_field(initial)?;
        let (steps, dt) = self.config.schedule();
        let every = ((self.config.cadence / dt).round() as usize).max(1);
        let snapshot_every = self
            .config
            .snapshot_cadence
            .map(|c| ((c / dt).round() as usize).max(1));
        let initial_masses = initial.masses();

        let reference = vlasov_field(initial, self.graphop, self.potential)?;
        let fast = self.velocity(initial.values());
        let scale = reference.iter().flat_map(|v| v.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        let commutation_defect = reference
            .iter()
            .zip(&fast)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
            / scale;
        if commutation_defect > 1e-10 {
            log::warn!("spectral and direct Vlasov fields differ by {commutation_defect:.3e}");
        }

        let mut field = initial.clone();
        let mut records = vec![DiagnosticRecord::evaluate(&field, &initial_masses)?];
        let mut snapshots = Vec::new();
        if snapshot_every.is_some() {
            snapshots.push(field.clone());
        }
        for s in 1..=steps {
            self.step_by(&mut field, dt)?;
            // pin the clock to the schedule to avoid accumulated round-off
            field.time = s as f64 * dt;
            if s % every == 0 || s == steps {
                records.push(DiagnosticRecord::evaluate(&field, &initial_masses)?);
            }
            if snapshot_every.is_some_and(|e| s % e == 0 || s == steps) {
                snapshots.push(field.clone());
            }
        }
        Ok(Trajectory {
            records,
            snapshots,
            final_field: field,
            steps,
            dt,
            commutation_defect,
        })
    }
}

/// `V[A](ρ)`: `A` across nodes at every grid point, then convolution of each
/// slice with `∇D`. One array per axis, shaped like the density.
pub fn vlasov_field(
    field: &DensityField,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
) -> Result<Vec<Array2<f64>>> {
    check_len("vlasov_field nodes", graphop.space().len(), field.nodes())?;
    let mut mixed = Array2::zeros(field.values().raw_dim());
    graphop.apply_rows(field.values().view(), mixed.view_mut());
    let grid = field.grid();
    potential
        .gradient_samples(grid)
        .iter()
        .map(|g| {
            let mut out = Array2::zeros(mixed.raw_dim());
            for (k, row) in mixed.axis_iter(Axis(0)).enumerate() {
                let conv = circular_convolve(grid, g, row.as_slice().expect("standard layout"))?;
                out.row_mut(k).assign(&ndarray::Array1::from(conv));
            }
            Ok(out)
        })
        .collect()
}

/// [`vlasov_field`] with the two operations in the opposite order.
pub fn vlasov_field_commuted(
    field: &DensityField,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
) -> Result<Vec<Array2<f64>>> {
    check_len("vlasov_field nodes", graphop.space().len(), field.nodes())?;
    let grid = field.grid();
    potential
        .gradient_samples(grid)
        .iter()
        .map(|g| {
            let mut conv = Array2::zeros(field.values().raw_dim());
            for k in 0..field.nodes() {
                let c = circular_convolve(grid, g, field.slice(k))?;
                conv.row_mut(k).assign(&ndarray::Array1::from(c));
            }
            let mut out = Array2::zeros(conv.raw_dim());
            graphop.apply_rows(conv.view(), out.view_mut());
            Ok(out)
        })
        .collect()
}

/// One step of the configured scheme.
pub fn step(
    field: &DensityField,
    config: &SolverConfig,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
) -> Result<DensityField> {
    let solver = Solver::new(field.grid(), graphop, potential, config.clone())?;
    let mut next = field.clone();
    solver.step(&mut next)?;
    Ok(next)
}

/// Integrates to `config.t_final`.
pub fn run(
    initial: &DensityField,
    config: &SolverConfig,
    graphop: &dyn Graphop,
    potential: &InteractionPotential,
) -> Result<Trajectory> {
    Solver::new(initial.grid(), graphop, potential, config.clone())?.run(initial)
}

/// Hard tolerances applied to every diagnostic record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantTolerances {
    pub inequality_margin: f64,
    pub mass_drift: f64,
    pub rho_min: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self {
            inequality_margin: -1e-8,
            mass_drift: 1e-9,
            rho_min: -1e-10,
        }
    }
}

/// Extremes of the invariant diagnostics over a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantSummary {
    pub ckp_margin_min: f64,
    pub logsob_margin_min: f64,
    pub mass_drift_max: f64,
    pub rho_min: f64,
}

impl InvariantSummary {
    /// Descriptions of the violated tolerances; empty when all hold.
    pub fn violations(&self, tol: &InvariantTolerances) -> Vec<String> {
        let mut out = Vec::new();
        if self.ckp_margin_min < tol.inequality_margin {
            out.push(format!("CKP margin {:.3e}", self.ckp_margin_min));
        }
        if self.logsob_margin_min < tol.inequality_margin {
            out.push(format!("log-Sobolev margin {:.3e}", self.logsob_margin_min));
        }
        if self.mass_drift_max > tol.mass_drift {
            out.push(format!("mass drift {:.3e}", self.mass_drift_max));
        }
        if self.rho_min < tol.rho_min {
            out.push(format!("min density {:.3e}", self.rho_min));
        }
        out
    }
}

/// Output of a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticRecord>,
    pub snapshots: Vec<DensityField>,
    pub final_field: DensityField,
    pub steps: usize,
    /// Step actually used.
    pub dt: f64,
    /// Relative sup difference at `t = 0` between the stepping code's Vlasov
    /// field and [`vlasov_field`].
    pub commutation_defect: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn h_hat(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h_hat).collect()
    }

    pub fn fit_rate(&self, window: Option<(f64, f64)>) -> Result<RateFit> {
        fit_decay_rate(&self.times(), &self.h_hat(), window)
    }

    /// `max_t Ĥ(t) / (Ĥ(0) e^{-rate t})`; at most the slack factor when the
    /// exponential bound holds.
    pub fn decay_bound_ratio(&self, rate: f64) -> f64 {
        let h0 = self.records[0].h_hat;
        if h0 == 0.0 {
            return if self.records.iter().all(|r| r.h_hat == 0.0) { 0.0 } else { f64::INFINITY };
        }
        self.records
            .iter()
            .map(|r| r.h_hat / (h0 * (-rate * r.t).exp()))
            .fold(0.0, f64::max)
    }

    /// Largest `Ĥ(t) - max{Ĥ(0), bound}`; nonpositive when bounded.
    pub fn boundedness_excess(&self, bound: f64) -> f64 {
        let cap = self.records[0].h_hat.max(bound);
        self.records.iter().map(|r| r.h_hat - cap).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether `Ĥ` never increases by more than `tol` between records.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records.windows(2).all(|w| w[1].h_hat <= w[0].h_hat + tol)
    }

    pub fn invariants(&self) -> InvariantSummary {
        let mut s = InvariantSummary {
            ckp_margin_min: f64::INFINITY,
            logsob_margin_min: f64::INFINITY,
            mass_drift_max: 0.0,
            rho_min: f64::INFINITY,
        };
        for r in &self.records {
            s.ckp_margin_min = s.ckp_margin_min.min(r.ckp_margin_min);
            s.logsob_margin_min = s.logsob_margin_min.min(r.logsob_margin_min);
            s.mass_drift_max = s.mass_drift_max.max(r.mass_drift_max);
            s.rho_min = s.rho_min.min(r.rho_min);
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_diagnostics_csv(out, &self.records)
    }
}
