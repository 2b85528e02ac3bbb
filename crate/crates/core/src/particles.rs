//! The finite-N interacting SDE system on a graph, random-graph generators,
//! and kernel density estimates for comparison with the mean-field PDE.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_len, invalid, Result};
use crate::graphops::{Adjacency, PowerLawParams};
use crate::torus::{InteractionPotential, TorusGrid};

fn sample_pairs(n: usize, seed: u64, p: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p(i, j) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// `G(N, p)`: every pair is joined independently with probability `p`.
pub fn generate_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Adjacency> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1], got {p}")));
    }
    if p == 1.0 {
        return Ok(Adjacency::complete(n));
    }
    Adjacency::from_edges(n, &sample_pairs(n, seed, |_, _| p))
}

/// `p(i, j) = min{1, N^β (i j)^{-α}}` with 1-based indices.
pub fn power_law_probability(n: usize, params: PowerLawParams, i: usize, j: usize) -> f64 {
    let scale = (n as f64).powf(params.beta_edge());
    (scale * ((i + 1) as f64 * (j + 1) as f64).powf(-params.alpha())).min(1.0)
}

/// Power-law random graph and its rescaling `r_N = N^{β - 2α}`.
pub fn generate_power_law_graph(n: usize, params: PowerLawParams, seed: u64) -> Result<(Adjacency, f64)> {
    if n < 2 {
        return Err(invalid("N", "needs at least 2 vertices"));
    }
    let edges = sample_pairs(n, seed, |i, j| power_law_probability(n, params, i, j));
    let r_n = (n as f64).powf(params.beta_edge() - 2.0 * params.alpha());
    Ok((Adjacency::from_edges(n, &edges)?, r_n))
}

fn wrap(x: f64, length: f64) -> f64 {
    let half = 0.5 * length;
    let y = (x + half).rem_euclid(length) - half;
    if y >= half {
        y - length
    } else {
        y
    }
}

/// `N` particles on the torus coupled through a graph.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    length: f64,
    dim: usize,
    positions: Vec<[f64; 2]>,
    displacement: Vec<[f64; 2]>,
    adjacency: Adjacency,
    r_n: f64,
    kappa: f64,
    seed: u64,
    rngs: Vec<ChaCha8Rng>,
    time: f64,
}

impl ParticleEnsemble {
    /// Particle `i` draws its noise from stream `i` of a ChaCha8 generator
    /// seeded with `seed`, so results do not depend on thread scheduling.
    pub fn new(
        length: f64,
        dim: usize,
        positions: Vec<[f64; 2]>,
        adjacency: Adjacency,
        r_n: f64,
        kappa: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(length > 0.0) {
            return Err(invalid("length", "must be positive"));
        }
        if dim != 1 && dim != 2 {
            return Err(invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        check_len("particle positions", adjacency.nodes(), positions.len())?;
        if !(r_n > 0.0 && r_n <= 1.0) {
            return Err(invalid("r_N", format!("must lie in (0, 1], got {r_n}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(invalid("kappa", format!("must be nonnegative, got {kappa}")));
        }
        let positions = positions
            .into_iter()
            .map(|p| {
                let mut q = [0.0; 2];
                for a in 0..dim {
                    q[a] = wrap(p[a], length);
                }
                q
            })
            .collect::<Vec<_>>();
        let rngs = (0..positions.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Ok(Self {
            length,
            dim,
            displacement: vec![[0.0; 2]; positions.len()],
            positions,
            adjacency,
            r_n,
            kappa,
            seed,
            rngs,
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Accumulated displacement before wrapping.
    pub fn displacement(&self) -> &[[f64; 2]] {
        &self.displacement
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `Σ_j A^{ij} ∇D(X^i - X^j)` for every particle.
    ///
    /// Each Fourier mode of `D` factorizes over pairs, so the sum costs two
    /// adjacency products per mode instead of `O(N²)` kernel evaluations.
    pub fn interaction_sums(&self, potential: &InteractionPotential) -> Vec<[f64; 2]> {
        let n = self.len();
        let unit = 2.0 * PI / self.length;
        let modes: Vec<_> = potential
            .modes()
            .iter()
            .filter(|m| m.wave != [0, 0] && (m.cos != 0.0 || m.sin != 0.0))
            .collect();
        let mut trig = Array2::zeros((n, 2 * modes.len()));
        for (i, p) in self.positions.iter().enumerate() {
            for (m, mode) in modes.iter().enumerate() {
                let phase = unit * (mode.wave[0] as f64 * p[0] + mode.wave[1] as f64 * p[1]);
                let (s, c) = phase.sin_cos();
                trig[[i, 2 * m]] = c;
                trig[[i, 2 * m + 1]] = s;
            }
        }
        let mut summed = Array2::zeros(trig.raw_dim());
        self.adjacency.matmul_rows(1.0, trig.view(), summed.view_mut());
        let mut out = vec![[0.0; 2]; n];
        for (i, o) in out.iter_mut().enumerate() {
            for (m, mode) in modes.iter().enumerate() {
                let (c, s) = (trig[[i, 2 * m]], trig[[i, 2 * m + 1]]);
                let (cc, ss) = (summed[[i, 2 * m]], summed[[i, 2 * m + 1]]);
                // Σ_j A_ij sin(q·(X_i - X_j)) and the cosine analogue
                let sin_sum = s * cc - c * ss;
                let cos_sum = c * cc + s * ss;
                // ∇[a cos(q·x) + b sin(q·x)] = q (-a sin + b cos)
                let scalar = -mode.cos * sin_sum + mode.sin * cos_sum;
                for a in 0..self.dim {
                    o[a] += unit * mode.wave[a] as f64 * scalar;
                }
            }
        }
        out
    }

    /// Drift `-(κ/(N r_N)) Σ_j A^{ij} ∇D(X^i - X^j)`.
    pub fn drift(&self, potential: &InteractionPotential) -> Vec<[f64; 2]> {
        let scale = -self.kappa / (self.len() as f64 * self.r_n);
        self.interaction_sums(potential)
            .into_iter()
            .map(|v| [scale * v[0], scale * v[1]])
            .collect()
    }

    /// `1 / (κ ‖ΔD‖∞ max_i deg_i / (N r_N))`, the time scale of the drift's
    /// Lipschitz constant; infinite without interaction.
    pub fn drift_time_scale(&self, potential: &InteractionPotential) -> f64 {
        let max_degree = (0..self.len()).map(|i| self.adjacency.degree(i)).max().unwrap_or(0);
        let lipschitz = self.kappa * potential.sup_laplacian() * max_degree as f64 / (self.len() as f64 * self.r_n);
        if lipschitz > 0.0 {
            1.0 / lipschitz
        } else {
            f64::INFINITY
        }
    }

    /// One Euler–Maruyama step.
    pub fn step(&mut self, potential: &InteractionPotential, dt: f64) {
        let drift = self.drift(potential);
        let noise = (2.0 * dt).sqrt();
        let (length, dim) = (self.length, self.dim);
        self.positions
            .par_iter_mut()
            .zip(self.displacement.par_iter_mut())
            .zip(self.rngs.par_iter_mut())
            .zip(drift.par_iter())
            .for_each(|(((x, disp), rng), b)| {
                for a in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    let dx = b[a] * dt + noise * z;
                    disp[a] += dx;
                    x[a] = wrap(x[a] + dx, length);
                }
            });
        self.time += dt;
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.dim == 1 {
            writeln!(out, "index,x")?;
        } else {
            writeln!(out, "index,x,y")?;
        }
        for (i, p) in self.positions.iter().enumerate() {
            if self.dim == 1 {
                writeln!(out, "{i},{:.17e}", p[0])?;
            } else {
                writeln!(out, "{i},{:.17e},{:.17e}", p[0], p[1])?;
            }
        }
        Ok(())
    }
}

/// Positions recorded along an Euler–Maruyama run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<[f64; 2]>>,
}

/// Largest admissible `dt` relative to [`ParticleEnsemble::drift_time_scale`].
pub const DRIFT_STEP_FRACTION: f64 = 0.1;

/// Advances `ensemble` to `t_final` with fixed steps, recording positions at
/// the start, every `cadence` units of time, and at the end.
pub fn euler_maruyama_run(
    ensemble: &mut ParticleEnsemble,
    potential: &InteractionPotential,
    dt: f64,
    t_final: f64,
    cadence: f64,
) -> Result<ParticleTrajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) || !(cadence > 0.0) {
        return Err(invalid("euler_maruyama_run", "dt and cadence must be positive, t_final nonnegative"));
    }
    if potential.dim() != ensemble.dim || (potential.length() - ensemble.length).abs() > 1e-12 * ensemble.length {
        return Err(invalid("potential", "does not live on the ensemble's torus"));
    }
    let limit = DRIFT_STEP_FRACTION * ensemble.drift_time_scale(potential);
    if dt > limit {
        return Err(invalid("dt", format!("{dt} exceeds the drift stability limit {limit:.3e}")));
    }
    let steps = if t_final == 0.0 {
        0
    } else {
        (t_final / dt - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps > 0 { t_final / steps as f64 } else { dt };
    let every = ((cadence / dt).round() as usize).max(1);
    let start = ensemble.time;
    let mut out = ParticleTrajectory {
        times: vec![start],
        positions: vec![ensemble.positions.clone()],
    };
    for s in 1..=steps {
        ensemble.step(potential, dt);
        ensemble.time = start + s as f64 * dt;
        if s % every == 0 || s == steps {
            out.times.push(ensemble.time);
            out.positions.push(ensemble.positions.clone());
        }
    }
    Ok(out)
}

/// Wrapped-Gaussian kernel density estimate on the grid, normalized to unit
/// mass.
pub fn empirical_density(positions: &[[f64; 2]], grid: &TorusGrid, bandwidth: f64) -> Result<Vec<f64>> {
    if positions.is_empty() {
        return Err(invalid("positions", "need at least one particle"));
    }
    if !(bandwidth > grid.spacing()) {
        return Err(invalid(
            "bandwidth",
            format!("must exceed the grid spacing {}, got {bandwidth}", grid.spacing()),
        ));
    }
    let l = grid.length();
    let n = grid.points();
    let images = (6.0 * bandwidth / l).ceil() as i64 + 1;
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    // wrapped Gaussian profile along one axis, for a particle at `p`
    let profile = |p: f64| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let x = grid.node(k) - p;
                (-images..=images)
                    .map(|m| {
                        let y = x + m as f64 * l;
                        (-y * y * inv).exp()
                    })
                    .sum()
            })
            .collect()
    };
    let mut density = vec![0.0; grid.len()];
    for p in positions {
        let px = profile(p[0]);
        if grid.dim() == 1 {
            density.iter_mut().zip(&px).for_each(|(d, v)| *d += v);
        } else {
            let py = profile(p[1]);
            for a in 0..n {
                for b in 0..n {
                    density[a * n + b] += px[a] * py[b];
                }
            }
        }
    }
    let mass = grid.integrate(&density);
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(density)
}

/// Draws `count` i.i.d. points from `density` (bounded above by `bound`) by
/// rejection from the uniform law on the torus.
pub fn sample_positions(
    length: f64,
    dim: usize,
    count: usize,
    density: impl Fn(&[f64]) -> f64,
    bound: f64,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if !(bound > 0.0) {
        return Err(invalid("bound", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(invalid("bound", "rejection sampling accepts too rarely"));
        }
        let mut x = [0.0; 2];
        for a in x.iter_mut().take(dim) {
            *a = length * (rng.random::<f64>() - 0.5);
        }
        let value = density(&x[..dim]);
        if value > bound * (1.0 + 1e-12) {
            return Err(invalid("bound", format!("density {value} exceeds the bound {bound}")));
        }
        if rng.random::<f64>() * bound < value {
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::make_kuramoto_potential;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrapping_stays_in_half_open_box() {
        let l = 2.0;
        for x in [-1.0, 1.0, 3.0, -3.0000001, -1e-17, 0.999999999, 7.5] {
            let y = wrap(x, l);
            assert!((-1.0..1.0).contains(&y), "{x} -> {y}");
            assert_abs_diff_eq!(((x - y) / l).round() * l, x - y, epsilon = 1e-12);
        }
    }

    #[test]
    fn erdos_renyi_basic() {
        assert_eq!(generate_erdos_renyi(5, 1.0, 1).unwrap().edge_count(), 10);
        assert!(generate_erdos_renyi(5, 0.0, 1).is_err());
        let a = generate_erdos_renyi(200, 0.3, 9).unwrap();
        let b = generate_erdos_renyi(200, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_erdos_renyi(200, 0.3, 10).unwrap());
    }

    #[test]
    fn drift_matches_pairwise_sum() {
        let l = 2.0 * PI;
        let d = make_kuramoto_potential(l).unwrap();
        let adj = generate_erdos_renyi(40, 0.4, 2).unwrap();
        let positions = sample_positions(l, 1, 40, |_| 1.0, 1.0, 3).unwrap();
        let ens = ParticleEnsemble::new(l, 1, positions.clone(), adj.clone(), 1.0, 1.0, 0).unwrap();
        let sums = ens.interaction_sums(&d);
        for i in 0..40 {
            let mut direct = 0.0;
            for j in 0..40 {
                if adj.has_edge(i, j) {
                    direct += d.gradient(&[positions[i][0] - positions[j][0]])[0];
                }
            }
            assert_abs_diff_eq!(sums[i][0], direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn complete_graph_drift_cancels() {
        let l = 2.0 * PI;
        let d = make_kuramoto_potential(l).unwrap();
        let positions = sample_positions(l, 1, 300, |_| 1.0, 1.0, 5).unwrap();
        let ens = ParticleEnsemble::new(l, 1, positions, Adjacency::complete(300), 1.0, 2.0, 0).unwrap();
        let total: f64 = ens.drift(&d).iter().map(|v| v[0]).sum();
        assert!(total.abs() < 1e-12, "{total}");
    }

    #[test]
    fn brownian_variance() {
        let l = 2.0 * PI;
        let d = make_kuramoto_potential(l).unwrap();
        let n = 4000;
        let mut ens = ParticleEnsemble::new(l, 1, vec![[0.0; 2]; n], Adjacency::empty(n), 1.0, 0.0, 11).unwrap();
        euler_maruyama_run(&mut ens, &d, 0.01, 1.0, 1.0).unwrap();
        let var = ens.displacement().iter().map(|v| v[0] * v[0]).sum::<f64>() / n as f64;
        // sample variance of 2t has relative standard error sqrt(2/n)
        assert!((var - 2.0).abs() < 4.0 * 2.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn runs_are_reproducible() {
        let l = 2.0 * PI;
        let d = make_kuramoto_potential(l).unwrap();
        let make = || {
            let positions = sample_positions(l, 1, 100, |_| 1.0, 1.0, 1).unwrap();
            ParticleEnsemble::new(l, 1, positions, generate_erdos_renyi(100, 0.5, 4).unwrap(), 1.0, 1.0, 42).unwrap()
        };
        let (mut a, mut b) = (make(), make());
        let ta = euler_maruyama_run(&mut a, &d, 0.01, 0.5, 0.1).unwrap();
        let tb = euler_maruyama_run(&mut b, &d, 0.01, 0.5, 0.1).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(ta.times.len(), 6);
    }

    #[test]
    fn kde_properties() {
        let l = 2.0 * PI;
        let grid = TorusGrid::new(l, 1, 128).unwrap();
        let single = empirical_density(&[[0.0, 0.0]], &grid, 0.3).unwrap();
        assert_abs_diff_eq!(grid.integrate(&single), 1.0, epsilon = 1e-12);
        let peak = single.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(single[64], peak);
        assert_abs_diff_eq!(peak, 1.0 / (0.3 * (2.0 * PI).sqrt()), epsilon = 1e-6);
        let wide = empirical_density(&[[0.0, 0.0]], &grid, 20.0).unwrap();
        assert!(wide.iter().all(|v| (v - 1.0 / l).abs() < 1e-6));
        assert!(empirical_density(&[[0.0, 0.0]], &grid, 0.01).is_err());
        let grid2 = TorusGrid::new(1.0, 2, 16).unwrap();
        let two = empirical_density(&[[0.1, -0.2], [0.3, 0.3]], &grid2, 0.1).unwrap();
        assert_abs_diff_eq!(grid2.integrate(&two), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejection_sampler_checks_bound() {
        assert!(sample_positions(1.0, 1, 10, |_| 2.0, 1.0, 0).is_err());
        let xs = sample_positions(1.0, 2, 50, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos(), 1.5, 0).unwrap();
        assert!(xs.iter().all(|p| p.iter().all(|c| (-0.5..0.5).contains(c))));
    }

    #[test]
    fn particle_csv() {
        let ens = ParticleEnsemble::new(1.0, 2, vec![[0.25, -0.125]], Adjacency::empty(1), 1.0, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,x,y"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 0.25, -0.125]);
    }
}
