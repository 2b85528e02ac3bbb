//! The flat torus `U = [-L/2, L/2]^d`, its uniform collocation grid, DFT-based
//! calculus, periodic convolution, and interaction potentials.
//!
//! Fields on the grid are flat `Vec<f64>` of length `n^d`, row-major for
//! `d = 2` (the first coordinate is the slow index).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, invalid, Result};

struct SpectralTables {
    /// Angular wavenumber along each axis for every flat spectral index;
    /// zero at the Nyquist index (odd derivatives of real fields).
    gradient: Vec<Vec<f64>>,
    /// `-|k|^2` for every flat spectral index, Nyquist included.
    laplacian: Vec<f64>,
    /// 2/3-rule mask: `true` for modes kept by the dealiasing filter.
    dealias: Vec<bool>,
}

/// Uniform grid on the flat torus of side `L` in dimension 1 or 2.
#[derive(Clone)]
pub struct TorusGrid {
    length: f64,
    dim: usize,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
    tables: Arc<SpectralTables>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("length", &self.length)
            .field("dim", &self.dim)
            .field("points", &self.points)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.length == other.length && self.dim == other.dim && self.points == other.points
    }
}

impl TorusGrid {
    pub fn new(length: f64, dim: usize, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", format!("must be positive, got {length}")));
        }
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(invalid(
                "points",
                format!("must be a power of two >= 8, got {points}"),
            ));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let backward = planner.plan_fft_inverse(points);

        let unit = 2.0 * PI / length;
        let total = points.pow(dim as u32);
        let cutoff = (points / 3) as i64;
        let mut gradient = vec![vec![0.0; total]; dim];
        let mut laplacian = vec![0.0; total];
        let mut dealias = vec![true; total];
        for flat in 0..total {
            let idx = multi_index(flat, points, dim);
            let mut k2 = 0.0;
            for axis in 0..dim {
                let m = signed_mode(idx[axis], points);
                let k = unit * m as f64;
                k2 += k * k;
                if idx[axis] != points / 2 {
                    gradient[axis][flat] = k;
                }
                if m.abs() > cutoff {
                    dealias[flat] = false;
                }
            }
            laplacian[flat] = -k2;
        }

        Ok(Self {
            length,
            dim,
            points,
            forward,
            backward,
            tables: Arc::new(SpectralTables {
                gradient,
                laplacian,
                dealias,
            }),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of grid nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// `(L/n)^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// 1D node coordinate `x_k = -L/2 + k L / n`.
    pub fn node(&self, k: usize) -> f64 {
        -0.5 * self.length + k as f64 * self.spacing()
    }

    /// Coordinates of a flat node index; unused trailing entries are zero.
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let idx = multi_index(flat, self.points, self.dim);
        let mut x = [0.0; 2];
        for axis in 0..self.dim {
            x[axis] = self.node(idx[axis]);
        }
        x
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|flat| f(&self.coords(flat)[..self.dim]))
            .collect()
    }

    /// Rectangle-rule integral over `U` (spectrally accurate for smooth periodic fields).
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume()
    }

    /// `2π / L`.
    pub fn wavenumber_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Forward DFT (unnormalized).
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &*self.forward);
        buf
    }

    /// Inverse DFT normalized by `1/n^d`, returning the real part. The
    /// spectrum buffer is consumed as scratch.
    pub fn inverse_into(&self, spectrum: &mut [Complex64], out: &mut [f64]) {
        self.transform(spectrum, &*self.backward);
        let scale = 1.0 / self.len() as f64;
        for (o, c) in out.iter_mut().zip(spectrum.iter()) {
            *o = c.re * scale;
        }
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        let mut out = vec![0.0; spectrum.len()];
        self.inverse_into(&mut spectrum, &mut out);
        out
    }

    pub(crate) fn gradient_symbol(&self, axis: usize) -> &[f64] {
        &self.tables.gradient[axis]
    }

    pub(crate) fn laplacian_symbol(&self) -> &[f64] {
        &self.tables.laplacian
    }

    pub(crate) fn dealias_mask(&self) -> &[bool] {
        &self.tables.dealias
    }

    /// Signed mode numbers of a flat spectral index.
    pub fn modes(&self, flat: usize) -> [i64; 2] {
        let idx = multi_index(flat, self.points, self.dim);
        let mut m = [0i64; 2];
        for axis in 0..self.dim {
            m[axis] = signed_mode(idx[axis], self.points);
        }
        m
    }

    fn transform(&self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.points;
        // rustfft processes every consecutive chunk of length n
        fft.process(buf);
        if self.dim == 2 {
            transpose_square(buf, n);
            fft.process(buf);
            transpose_square(buf, n);
        }
    }

    fn check_field(&self, context: &'static str, field: &[f64]) -> Result<()> {
        check_len(context, self.len(), field.len())
    }
}

fn multi_index(flat: usize, n: usize, dim: usize) -> [usize; 2] {
    if dim == 1 {
        [flat, 0]
    } else {
        [flat / n, flat % n]
    }
}

fn signed_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Spectral gradient: one field per coordinate direction.
pub fn spectral_gradient(grid: &TorusGrid, field: &[f64]) -> Result<Vec<Vec<f64>>> {
    grid.check_field("spectral_gradient", field)?;
    let spectrum = grid.forward(field);
    let mut out = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(grid.gradient_symbol(axis))
            .map(|(c, &k)| c * Complex64::new(0.0, k))
            .collect();
        let mut component = vec![0.0; grid.len()];
        grid.inverse_into(&mut buf, &mut component);
        out.push(component);
    }
    Ok(out)
}

/// Spectral Laplacian.
pub fn spectral_laplacian(grid: &TorusGrid, field: &[f64]) -> Result<Vec<f64>> {
    grid.check_field("spectral_laplacian", field)?;
    let mut spectrum = grid.forward(field);
    for (c, &s) in spectrum.iter_mut().zip(grid.laplacian_symbol()) {
        *c *= s;
    }
    Ok(grid.inverse(spectrum))
}

/// Spectral divergence of a vector field given as one component per axis.
pub fn spectral_divergence(grid: &TorusGrid, components: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_len("spectral_divergence", grid.dim(), components.len())?;
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (axis, comp) in components.iter().enumerate() {
        grid.check_field("spectral_divergence", comp)?;
        let spectrum = grid.forward(comp);
        for ((a, c), &k) in acc.iter_mut().zip(&spectrum).zip(grid.gradient_symbol(axis)) {
            *a += c * Complex64::new(0.0, k);
        }
    }
    Ok(grid.inverse(acc))
}

/// Rearranges node samples of a kernel `f(x_k)` into samples at grid offsets
/// `f(m L / n)`, the layout used by cyclic convolution.
pub(crate) fn nodes_to_offsets(grid: &TorusGrid, kernel: &[f64]) -> Vec<f64> {
    let n = grid.points();
    let half = n / 2;
    match grid.dim() {
        1 => (0..n).map(|m| kernel[(m + half) % n]).collect(),
        _ => {
            let mut out = vec![0.0; grid.len()];
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] = kernel[((a + half) % n) * n + (b + half) % n];
                }
            }
            out
        }
    }
}

/// DFT of a kernel (given at grid nodes) scaled by the cell volume, so that
/// multiplying by a field's DFT yields the DFT of the periodic convolution.
pub(crate) fn kernel_spectrum(grid: &TorusGrid, kernel: &[f64]) -> Vec<Complex64> {
    let offsets = nodes_to_offsets(grid, kernel);
    let h = grid.cell_volume();
    grid.forward(&offsets).into_iter().map(|c| c * h).collect()
}

/// Periodic convolution `(f ⋆ g)(x_j) = (L/n)^d Σ_k f(x_j - x_k) g(x_k)`
/// with both inputs sampled at the grid nodes, computed by DFT.
pub fn circular_convolve(grid: &TorusGrid, kernel: &[f64], density: &[f64]) -> Result<Vec<f64>> {
    grid.check_field("circular_convolve kernel", kernel)?;
    grid.check_field("circular_convolve density", density)?;
    let k_hat = kernel_spectrum(grid, kernel);
    let mut spectrum = grid.forward(density);
    for (c, k) in spectrum.iter_mut().zip(&k_hat) {
        *c *= k;
    }
    Ok(grid.inverse(spectrum))
}

/// One term `a cos(q·x) + b sin(q·x)` of a potential, `q = 2π/L · wave`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierMode {
    pub wave: [i64; 2],
    pub cos: f64,
    pub sin: f64,
}

/// A periodic interaction potential represented by a trigonometric series.
///
/// `D`, `∇D`, and `ΔD` are evaluated analytically from the series, so
/// thresholds that depend on `‖ΔD‖∞` carry no discretization error when the
/// supremum is attained in closed form.
#[derive(Clone, Debug)]
pub struct InteractionPotential {
    length: f64,
    dim: usize,
    modes: Vec<FourierMode>,
    sup_laplacian: f64,
    sup_is_exact: bool,
}

/// The noisy Kuramoto potential `D(x) = -cos(2πx/L)` on the 1D torus.
pub fn make_kuramoto_potential(length: f64) -> Result<InteractionPotential> {
    InteractionPotential::from_modes(
        length,
        1,
        vec![FourierMode {
            wave: [1, 0],
            cos: -1.0,
            sin: 0.0,
        }],
    )
}

impl InteractionPotential {
    pub fn from_modes(length: f64, dim: usize, modes: Vec<FourierMode>) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", format!("must be positive, got {length}")));
        }
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if dim == 1 && modes.iter().any(|m| m.wave[1] != 0) {
            return Err(invalid("modes", "second wave component must be 0 in 1D"));
        }
        let mut potential = Self {
            length,
            dim,
            modes,
            sup_laplacian: 0.0,
            sup_is_exact: true,
        };
        potential.compute_sup_laplacian();
        Ok(potential)
    }

    /// Builds a potential from grid samples via the DFT (spectral fallback for
    /// potentials without a closed form). Coefficients below `1e-14` relative
    /// to the largest are dropped.
    pub fn from_samples(grid: &TorusGrid, samples: &[f64]) -> Result<Self> {
        grid.check_field("InteractionPotential::from_samples", samples)?;
        let spectrum = grid.forward(samples);
        let total = grid.len() as f64;
        let n = grid.points() as i64;
        let largest = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut modes = Vec::new();
        for (flat, c) in spectrum.iter().enumerate() {
            let m = grid.modes(flat);
            // keep one representative of each ±m pair
            let canonical = m[0] > 0 || (m[0] == 0 && m[1] >= 0);
            if !canonical || c.norm() <= 1e-14 * largest.max(f64::MIN_POSITIVE) {
                continue;
            }
            // samples sit at x_k = -L/2 + kL/n, hence the (-1)^{m1+m2} phase
            let sign = if (m[0] + m[1]).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let a = c * (sign / total);
            let self_conjugate = m.iter().take(grid.dim()).all(|&v| v == 0 || v == n / 2);
            let mode = if self_conjugate {
                FourierMode {
                    wave: m,
                    cos: a.re,
                    sin: 0.0,
                }
            } else {
                FourierMode {
                    wave: m,
                    cos: 2.0 * a.re,
                    sin: -2.0 * a.im,
                }
            };
            modes.push(mode);
        }
        Self::from_modes(grid.length(), grid.dim(), modes)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    /// `‖ΔD‖_{L∞(U)}`.
    pub fn sup_laplacian(&self) -> f64 {
        self.sup_laplacian
    }

    /// Whether [`Self::sup_laplacian`] was obtained in closed form rather than
    /// by dense sampling.
    pub fn sup_laplacian_is_exact(&self) -> bool {
        self.sup_is_exact
    }

    /// Largest absolute wave number along any axis.
    pub fn max_wave(&self) -> i64 {
        self.modes
            .iter()
            .flat_map(|m| m.wave.iter().map(|w| w.abs()))
            .max()
            .unwrap_or(0)
    }

    fn wavevector(&self, mode: &FourierMode) -> [f64; 2] {
        let unit = 2.0 * PI / self.length;
        [unit * mode.wave[0] as f64, unit * mode.wave[1] as f64]
    }

    fn phase(&self, mode: &FourierMode, x: &[f64]) -> f64 {
        let q = self.wavevector(mode);
        x.iter().zip(q.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let p = self.phase(m, x);
                m.cos * p.cos() + m.sin * p.sin()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for m in &self.modes {
            let q = self.wavevector(m);
            let p = self.phase(m, x);
            let s = -m.cos * p.sin() + m.sin * p.cos();
            g[0] += q[0] * s;
            g[1] += q[1] * s;
        }
        g
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let q = self.wavevector(m);
                let p = self.phase(m, x);
                -(q[0] * q[0] + q[1] * q[1]) * (m.cos * p.cos() + m.sin * p.sin())
            })
            .sum()
    }

    /// Samples `∂_axis D` at the grid nodes.
    pub fn gradient_samples(&self, grid: &TorusGrid) -> Vec<Vec<f64>> {
        (0..grid.dim())
            .map(|axis| grid.sample(|x| self.gradient(x)[axis]))
            .collect()
    }

    fn compute_sup_laplacian(&mut self) {
        // For cosine series whose terms -|q|^2 a cos(q·x) all share a sign,
        // the supremum is attained at x = 0.
        let mut signs = self
            .modes
            .iter()
            .filter(|m| m.cos != 0.0 || m.sin != 0.0)
            .map(|m| (m.sin == 0.0).then(|| m.cos.signum()));
        let first = signs.next();
        let same_sign = match first {
            None => true,
            Some(None) => false,
            Some(Some(s)) => signs.all(|t| t == Some(s)),
        };
        if same_sign {
            self.sup_laplacian = self
                .modes
                .iter()
                .map(|m| {
                    let q = self.wavevector(m);
                    (q[0] * q[0] + q[1] * q[1]) * m.cos.abs()
                })
                .sum();
            self.sup_is_exact = true;
            return;
        }
        let per_axis = if self.dim == 1 {
            (16 * self.max_wave() as usize).max(4096)
        } else {
            (8 * self.max_wave() as usize).max(256)
        };
        let h = self.length / per_axis as f64;
        let mut sup: f64 = 0.0;
        if self.dim == 1 {
            for i in 0..per_axis {
                sup = sup.max(self.laplacian(&[i as f64 * h]).abs());
            }
        } else {
            for i in 0..per_axis {
                for j in 0..per_axis {
                    sup = sup.max(self.laplacian(&[i as f64 * h, j as f64 * h]).abs());
                }
            }
        }
        self.sup_laplacian = sup;
        self.sup_is_exact = false;
    }

    /// Max over grid nodes and axes of `|D(x) - D(x + L e_i)|`.
    pub fn periodicity_defect(&self, grid: &TorusGrid) -> f64 {
        let mut worst: f64 = 0.0;
        for flat in 0..grid.len() {
            let x = grid.coords(flat);
            for axis in 0..self.dim {
                let mut y = x;
                y[axis] += self.length;
                worst = worst.max((self.value(&x[..self.dim]) - self.value(&y[..self.dim])).abs());
            }
        }
        worst
    }

    /// Quadrature of `∫_U ΔD dx`.
    pub fn laplacian_integral(&self, grid: &TorusGrid) -> f64 {
        grid.integrate(&grid.sample(|x| self.laplacian(x)))
    }

    /// Sup-norm mismatch between spectral derivatives of the sampled potential
    /// and the analytic `∇D`, `ΔD` on the grid.
    pub fn derivative_consistency(&self, grid: &TorusGrid) -> Result<f64> {
        let samples = grid.sample(|x| self.value(x));
        let grad = spectral_gradient(grid, &samples)?;
        let lap = spectral_laplacian(grid, &samples)?;
        let mut worst: f64 = 0.0;
        for flat in 0..grid.len() {
            let x = grid.coords(flat);
            let g = self.gradient(&x[..self.dim]);
            for axis in 0..self.dim {
                worst = worst.max((grad[axis][flat] - g[axis]).abs());
            }
            worst = worst.max((lap[flat] - self.laplacian(&x[..self.dim])).abs());
        }
        Ok(worst)
    }
}
