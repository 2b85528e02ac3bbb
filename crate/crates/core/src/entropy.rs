//! Relative entropy, the CKP and log-Sobolev inequalities, stability
//! thresholds, theoretical decay rates, and empirical rate fitting.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{check_len, invalid, Error, Result};
use crate::solver::DensityField;
use crate::torus::{spectral_gradient, InteractionPotential, TorusGrid};

/// Floor applied to densities inside logarithms.
pub const POSITIVITY_FLOOR: f64 = 1e-14;

/// Largest tolerated deviation of a slice's mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

fn check_mass(grid: &TorusGrid, slice: &[f64], node: usize) -> Result<()> {
    let mass = grid.integrate(slice);
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::Mass { node, mass });
    }
    Ok(())
}

fn entropy_unchecked(grid: &TorusGrid, slice: &[f64]) -> f64 {
    let rho_inf = 1.0 / grid.volume();
    // ρ log(ρ/ρ∞) - (ρ - ρ∞) = ρ∞ [(1+δ) ln(1+δ) - δ] is nonnegative pointwise
    // and integrates to H when the mass is 1; this form avoids cancellation
    // near the steady state.
    let sum: f64 = slice
        .iter()
        .map(|&rho| {
            let delta = rho.max(POSITIVITY_FLOOR) / rho_inf - 1.0;
            rho_inf * ((1.0 + delta) * delta.ln_1p() - delta)
        })
        .sum();
    sum * grid.cell_volume()
}

/// `H(ρ | ρ∞) = ∫ ρ log(ρ/ρ∞) dx` for one density slice.
pub fn relative_entropy(grid: &TorusGrid, slice: &[f64]) -> Result<f64> {
    check_len("relative_entropy", grid.len(), slice.len())?;
    check_mass(grid, slice, 0)?;
    Ok(entropy_unchecked(grid, slice))
}

/// `H(ρ(·, ξ_k) | ρ∞)` for every node.
pub fn entropy_per_node(field: &DensityField) -> Result<Vec<f64>> {
    let grid = field.grid();
    (0..field.nodes())
        .map(|k| {
            let slice = field.slice(k);
            check_mass(grid, slice, k)?;
            Ok(entropy_unchecked(grid, slice))
        })
        .collect()
}

/// `Σ_k w_k H(ρ_k | ρ∞)` with `w = μ` by default.
pub fn averaged_entropy(field: &DensityField, weights: Option<&[f64]>) -> Result<f64> {
    let weights = match weights {
        Some(w) => {
            check_len("averaged_entropy weights", field.nodes(), w.len())?;
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| *x < 0.0) || (total - 1.0).abs() > 1e-12 {
                return Err(invalid("weights", format!("must be nonnegative and sum to 1, sum is {total}")));
            }
            w
        }
        None => field.space().weights(),
    };
    let h = entropy_per_node(field)?;
    Ok(h.iter().zip(weights).map(|(h, w)| h * w).sum())
}

/// `‖ρ - ρ∞‖_{L¹(U)}` for one slice.
pub fn l1_distance(grid: &TorusGrid, slice: &[f64]) -> f64 {
    let rho_inf = 1.0 / grid.volume();
    slice.iter().map(|r| (r - rho_inf).abs()).sum::<f64>() * grid.cell_volume()
}

/// `√(2H) - ‖ρ - ρ∞‖₁` per node and on `U × Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct CkpMargins {
    pub per_node: Vec<f64>,
    pub joint: f64,
}

impl CkpMargins {
    pub fn min(&self) -> f64 {
        self.per_node.iter().fold(self.joint, |m, v| m.min(*v))
    }
}

pub fn check_ckp(field: &DensityField) -> Result<CkpMargins> {
    let h = entropy_per_node(field)?;
    let grid = field.grid();
    let l1: Vec<f64> = (0..field.nodes()).map(|k| l1_distance(grid, field.slice(k))).collect();
    Ok(ckp_from_parts(&h, &l1, field.space().weights()))
}

fn ckp_from_parts(h: &[f64], l1: &[f64], weights: &[f64]) -> CkpMargins {
    let per_node = h.iter().zip(l1).map(|(h, l)| (2.0 * h).sqrt() - l).collect();
    let h_hat: f64 = h.iter().zip(weights).map(|(h, w)| h * w).sum();
    let l1_joint: f64 = l1.iter().zip(weights).map(|(l, w)| l * w).sum();
    CkpMargins {
        per_node,
        joint: (2.0 * h_hat).sqrt() - l1_joint,
    }
}

/// `∫ |∇ log ρ|² ρ dx = ∫ |∇ρ|²/ρ dx`, with `∇ρ` computed spectrally.
pub fn fisher_information(grid: &TorusGrid, slice: &[f64]) -> Result<f64> {
    if slice.iter().any(|r| *r <= 0.0) {
        return Err(Error::NonPositiveDensity("the Fisher information"));
    }
    let gradient = spectral_gradient(grid, slice)?;
    let mut sum = 0.0;
    for (k, rho) in slice.iter().enumerate() {
        let g2: f64 = gradient.iter().map(|g| g[k] * g[k]).sum();
        sum += g2 / rho;
    }
    Ok(sum * grid.cell_volume())
}

/// `(L²/4π²) ∫ |∇ log ρ|² ρ dx - H(ρ | ρ∞)`.
pub fn check_log_sobolev(grid: &TorusGrid, slice: &[f64]) -> Result<f64> {
    let fisher = fisher_information(grid, slice)?;
    let h = relative_entropy(grid, slice)?;
    let l = grid.length();
    Ok(l * l / (4.0 * PI * PI) * fisher - h)
}

/// `2π² / (L² ‖ΔD‖∞ n(A))`.
pub fn kappa_threshold(numerical_radius: f64, length: f64, potential: &InteractionPotential) -> Result<f64> {
    let sup = potential.sup_laplacian();
    if !(numerical_radius > 0.0) || !(sup > 0.0) || !(length > 0.0) {
        return Err(invalid(
            "kappa_threshold",
            format!("needs positive inputs, got n(A) = {numerical_radius}, ‖ΔD‖∞ = {sup}, L = {length}"),
        ));
    }
    Ok(2.0 * PI * PI / (length * length * sup * numerical_radius))
}

/// `α̂ = 4π²/L² - 2κ ‖ΔD‖∞ n(A)`; nonpositive values carry no guarantee.
pub fn theoretical_rate(kappa: f64, numerical_radius: f64, length: f64, potential: &InteractionPotential) -> f64 {
    4.0 * PI * PI / (length * length) - 2.0 * kappa * potential.sup_laplacian() * numerical_radius
}

/// `(2b/a)²` with `a = 4π²/L²` and `b = √8 κ ‖ΔD‖∞ ‖A‖_{∞→1}`: the
/// time-uniform component of the entropy bound `Ĥ(t) ≤ max{Ĥ(0), (2b/a)²}`.
pub fn boundedness_constant(kappa: f64, potential: &InteractionPotential, norm_infty_to_1: f64, length: f64) -> f64 {
    let a = 4.0 * PI * PI / (length * length);
    let b = 8f64.sqrt() * kappa * potential.sup_laplacian() * norm_infty_to_1;
    (2.0 * b / a).powi(2)
}

/// Least-squares fit of `-log Ĥ` against `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    /// Fitted `log Ĥ` at `t = 0`.
    pub intercept: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Whether the window was cut short because `Ĥ` underflowed.
    pub shrunk: bool,
}

/// Values below this are treated as underflowed when fitting.
pub const FIT_UNDERFLOW: f64 = 1e-20;
const MIN_FIT_SAMPLES: usize = 10;

/// Slope of `-log Ĥ(t)` on `window`, defaulting to the second half of the
/// series. Samples with `Ĥ < 1e-20` truncate the window at the first such
/// sample, with a warning.
pub fn fit_decay_rate(times: &[f64], values: &[f64], window: Option<(f64, f64)>) -> Result<RateFit> {
    check_len("fit_decay_rate", times.len(), values.len())?;
    if times.is_empty() {
        return Err(Error::Fit("empty series".into()));
    }
    let (t0, t1) = window.unwrap_or_else(|| {
        let (first, last) = (times[0], times[times.len() - 1]);
        (0.5 * (first + last), last)
    });
    let mut shrunk = false;
    let mut points = Vec::new();
    for (&t, &h) in times.iter().zip(values) {
        if t < t0 || t > t1 {
            continue;
        }
        if !(h >= FIT_UNDERFLOW) {
            shrunk = true;
            break;
        }
        points.push((t, -h.ln()));
    }
    if shrunk {
        log::warn!(
            "fit_decay_rate: entropy underflows inside [{t0}, {t1}]; fitting {} samples only",
            points.len()
        );
    }
    if points.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_SAMPLES} positive samples in [{t0}, {t1}], found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("window contains a single time".into()));
    }
    let rate = sxy / sxx;
    let window = (points[0].0, points[points.len() - 1].0);
    Ok(RateFit {
        rate,
        intercept: -(mean_y - rate * mean_t),
        window,
        samples: points.len(),
        shrunk,
    })
}

/// Entropy diagnostics of a density field at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub t: f64,
    pub entropy: Vec<f64>,
    pub h_hat: f64,
    /// `Σ μ̃_k H_k` for caller-supplied weights.
    pub h_custom: Option<f64>,
    pub l1: Vec<f64>,
    pub l1_joint: f64,
    pub ckp: CkpMargins,
    pub log_sobolev: Vec<f64>,
}

impl EntropyReport {
    pub fn evaluate(field: &DensityField, custom_weights: Option<&[f64]>) -> Result<Self> {
        let grid = field.grid();
        let weights = field.space().weights();
        let entropy = entropy_per_node(field)?;
        let l1: Vec<f64> = (0..field.nodes()).map(|k| l1_distance(grid, field.slice(k))).collect();
        let log_sobolev = (0..field.nodes())
            .map(|k| {
                let fisher = fisher_information(grid, field.slice(k))?;
                let l = grid.length();
                Ok(l * l / (4.0 * PI * PI) * fisher - entropy[k])
            })
            .collect::<Result<Vec<f64>>>()?;
        let h_custom = custom_weights.map(|w| averaged_entropy(field, Some(w))).transpose()?;
        Ok(Self {
            t: field.time(),
            h_hat: entropy.iter().zip(weights).map(|(h, w)| h * w).sum(),
            l1_joint: l1.iter().zip(weights).map(|(l, w)| l * w).sum(),
            ckp: ckp_from_parts(&entropy, &l1, weights),
            entropy,
            h_custom,
            l1,
            log_sobolev,
        })
    }

    pub fn log_sobolev_min(&self) -> f64 {
        self.log_sobolev.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }
}

/// One row of the diagnostics CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h_hat: f64,
    pub l1_joint: f64,
    pub ckp_margin_min: f64,
    pub logsob_margin_min: f64,
    pub mass_drift_max: f64,
    pub rho_min: f64,
}

pub const CSV_HEADER: &str =
    "t,H_min,H_max,H_hat,L1_joint,ckp_margin_min,logsob_margin_min,mass_drift_max,rho_min";

impl DiagnosticRecord {
    /// Summarizes `field`; `initial_masses` are the per-node masses at `t = 0`.
    pub fn evaluate(field: &DensityField, initial_masses: &[f64]) -> Result<Self> {
        let report = EntropyReport::evaluate(field, None)?;
        let masses = field.masses();
        let mass_drift_max = masses
            .iter()
            .zip(initial_masses)
            .map(|(m, m0)| (m - m0).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            t: report.t,
            h_min: report.entropy.iter().fold(f64::INFINITY, |m, v| m.min(*v)),
            h_max: report.entropy.iter().fold(0.0, |m: f64, v| m.max(*v)),
            h_hat: report.h_hat,
            l1_joint: report.l1_joint,
            ckp_margin_min: report.ckp.min(),
            logsob_margin_min: report.log_sobolev_min(),
            mass_drift_max,
            rho_min: field.min(),
        })
    }

    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.h_min,
            self.h_max,
            self.h_hat,
            self.l1_joint,
            self.ckp_margin_min,
            self.logsob_margin_min,
            self.mass_drift_max,
            self.rho_min,
        ]
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn write_diagnostics_csv<W: Write>(mut out: W, records: &[DiagnosticRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphops::{NetworkSpace, SpaceKind};
    use crate::torus::make_kuramoto_potential;
    use approx::assert_abs_diff_eq;

    fn cosine_slice(grid: &TorusGrid, eps: f64) -> Vec<f64> {
        let l = grid.length();
        grid.sample(|x| (1.0 + eps * (2.0 * PI * x[0] / l).cos()) / l)
    }

    /// Midpoint quadrature of `∫ ρ log(ρ L) dx` on a much finer grid.
    fn fine_entropy(l: f64, eps: f64) -> f64 {
        let n = 1 << 16;
        let h = l / n as f64;
        (0..n)
            .map(|k| {
                let x = -l / 2.0 + (k as f64 + 0.5) * h;
                let rho = (1.0 + eps * (2.0 * PI * x / l).cos()) / l;
                rho * (rho * l).ln() * h
            })
            .sum()
    }

    #[test]
    fn entropy_of_cosine_perturbation() {
        let grid = TorusGrid::new(2.0 * PI, 1, 128).unwrap();
        let h = relative_entropy(&grid, &cosine_slice(&grid, 0.1)).unwrap();
        assert_abs_diff_eq!(h, 2.5e-3, epsilon = 5e-5);
        assert_abs_diff_eq!(h, fine_entropy(2.0 * PI, 0.1), epsilon = 1e-12);
        assert_eq!(relative_entropy(&grid, &vec![1.0 / (2.0 * PI); 128]).unwrap(), 0.0);
    }

    #[test]
    fn mass_errors() {
        let grid = TorusGrid::new(1.0, 1, 16).unwrap();
        assert!(matches!(relative_entropy(&grid, &[2.0; 16]), Err(Error::Mass { .. })));
    }

    #[test]
    fn log_sobolev_small_eps() {
        let grid = TorusGrid::new(2.0 * PI, 1, 128).unwrap();
        let slice = cosine_slice(&grid, 0.1);
        let fisher = fisher_information(&grid, &slice).unwrap();
        // ∫ (ε sin x)² / (2π(1 + ε cos x)) dx = (1 - sqrt(1 - ε²)) ... expanded: ε²/2 + O(ε⁴)
        let exact = 1.0 - (1.0 - 0.01f64).sqrt();
        assert_abs_diff_eq!(fisher, exact, epsilon = 1e-12);
        let margin = check_log_sobolev(&grid, &slice).unwrap();
        assert_abs_diff_eq!(margin, 0.0025, epsilon = 1e-4);
        assert!(check_log_sobolev(&grid, &vec![1.0 / (2.0 * PI); 128]).unwrap().abs() < 1e-15);
        let mut bad = slice.clone();
        bad[3] = 0.0;
        assert!(matches!(fisher_information(&grid, &bad), Err(Error::NonPositiveDensity(_))));
    }

    #[test]
    fn thresholds_and_rates() {
        let l = 2.0 * PI;
        let d = make_kuramoto_potential(l).unwrap();
        assert_abs_diff_eq!(kappa_threshold(1.0, l, &d).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(kappa_threshold(0.3, l, &d).unwrap(), 0.5 / 0.3, epsilon = 1e-14);
        assert!(kappa_threshold(0.0, l, &d).is_err());
        assert_abs_diff_eq!(theoretical_rate(0.2, 1.0, l, &d), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(theoretical_rate(0.0, 1.0, 1.0, &make_kuramoto_potential(1.0).unwrap()), 4.0 * PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(theoretical_rate(0.5, 1.0, l, &d), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(boundedness_constant(1.0, &d, 1.0, l), 32.0, epsilon = 1e-12);
        assert_eq!(boundedness_constant(0.0, &d, 1.0, l), 0.0);
    }

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let h: Vec<f64> = t.iter().map(|t| (-0.6 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &h, None).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.window.0, 5.0, epsilon = 1e-12);
        assert!(!fit.shrunk);
        let full = fit_decay_rate(&t, &h, Some((0.0, 10.0))).unwrap();
        assert_eq!(full.samples, 101);
        assert_abs_diff_eq!(full.intercept, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn fit_shrinks_on_underflow() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let h: Vec<f64> = t.iter().map(|t| (-0.9 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &h, Some((0.0, 100.0))).unwrap();
        assert!(fit.shrunk);
        assert!(fit.window.1 < 52.0);
        assert_abs_diff_eq!(fit.rate, 0.9, epsilon = 1e-9);
        assert!(fit_decay_rate(&t[..5], &h[..5], None).is_err());
    }

    #[test]
    fn averaged_entropy_weights() {
        let grid = TorusGrid::new(2.0 * PI, 1, 64).unwrap();
        let space = NetworkSpace::uniform(SpaceKind::Custom, 2).unwrap();
        let mut values = ndarray::Array2::zeros((2, 64));
        let flat = vec![1.0 / (2.0 * PI); 64];
        let bumped = cosine_slice(&grid, 0.2);
        values.row_mut(0).assign(&ndarray::Array1::from(flat));
        values.row_mut(1).assign(&ndarray::Array1::from(bumped.clone()));
        let field = DensityField::new(grid.clone(), space, values).unwrap();
        let h1 = relative_entropy(&grid, &bumped).unwrap();
        assert_abs_diff_eq!(averaged_entropy(&field, None).unwrap(), 0.5 * h1, epsilon = 1e-15);
        assert_abs_diff_eq!(averaged_entropy(&field, Some(&[0.0, 1.0])).unwrap(), h1, epsilon = 1e-15);
        assert!(averaged_entropy(&field, Some(&[0.5, 0.6])).is_err());
        assert!(averaged_entropy(&field, Some(&[1.0])).is_err());
        let ckp = check_ckp(&field).unwrap();
        assert_eq!(ckp.per_node[0], 0.0);
        assert!(ckp.per_node[1] > 0.0 && ckp.joint > 0.0);
    }

    #[test]
    fn csv_header_matches_row_width() {
        let record = DiagnosticRecord {
            t: 0.0,
            h_min: 0.0,
            h_max: 0.0,
            h_hat: 0.0,
            l1_joint: 0.0,
            ckp_margin_min: 0.0,
            logsob_margin_min: 0.0,
            mass_drift_max: 0.0,
            rho_min: 0.0,
        };
        assert_eq!(record.csv_row().split(',').count(), CSV_HEADER.split(',').count());
    }
}
