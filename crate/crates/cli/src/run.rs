use std::f64::consts::PI;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graphop_core::entropy::{boundedness_constant, kappa_threshold, DiagnosticRecord};
use graphop_core::graphops::{
    check_c_regular, constant_graphon, empirical_graphop, graphon_norm, graphon_operator, norm_infty_to_1,
    numerical_radius, operator_norm, power_law_graphon, read_edge_list, Adjacency, Graphop, GraphonKernel,
    IdentityGraphop, NetworkSpace, PowerLawParams, SpaceKind, SphericalDiscretization, SphericalGraphop,
};
use graphop_core::particles::{
    empirical_density, euler_maruyama_run, generate_erdos_renyi, generate_power_law_graph, sample_positions,
    ParticleEnsemble,
};
use graphop_core::sakaguchi::{
    critical_coupling, kappa_zero, sakaguchi_rate, sakaguchi_run, FrequencyCoupling, FrequencyDistribution,
    SakaguchiConfig,
};
use graphop_core::solver::{
    make_initial_condition, DensityField, InitialCondition, InvariantTolerances, Modulation, Solver, SolverConfig,
    Splitting, Trajectory, VonMises,
};
use graphop_core::torus::{make_kuramoto_potential, FourierMode, InteractionPotential, TorusGrid};
use serde::Serialize;

use crate::config::{
    DistributionSpec, GraphopSpec, InitialSpec, Model, ModulationSpec, PotentialSpec, RunConfig, SplittingSpec,
};

/// Dense `‖A‖_{2→2}` estimates are skipped above this many nodes.
const DENSE_NORM_LIMIT: usize = 4096;
const REGULARITY_TOL: f64 = 1e-3;

/// A graphop together with whatever concrete structure the reports need.
pub struct BuiltGraphop {
    pub op: Box<dyn Graphop>,
    pub kernel: Option<GraphonKernel>,
    pub adjacency: Option<(Adjacency, f64)>,
}

pub fn build_graphop(spec: &GraphopSpec, seed: u64) -> Result<BuiltGraphop> {
    let plain = |op: Box<dyn Graphop>| BuiltGraphop {
        op,
        kernel: None,
        adjacency: None,
    };
    let graph = |adjacency: Adjacency, r_n: f64| -> Result<BuiltGraphop> {
        Ok(BuiltGraphop {
            op: Box::new(empirical_graphop(adjacency.clone(), r_n)?),
            kernel: None,
            adjacency: Some((adjacency, r_n)),
        })
    };
    Ok(match spec {
        GraphopSpec::Identity => plain(Box::new(IdentityGraphop::single_node())),
        GraphopSpec::Constant { nodes, p } => {
            let space = NetworkSpace::uniform(SpaceKind::Custom, *nodes)?;
            let kernel = constant_graphon(&space, *p)?;
            BuiltGraphop {
                op: Box::new(graphon_operator(kernel.clone(), space)?),
                kernel: Some(kernel),
                adjacency: None,
            }
        }
        GraphopSpec::PowerLaw { alpha, m, .. } => power_law_operator(*alpha, *m)?,
        GraphopSpec::Spherical {
            n_sphere,
            m_equator,
            raw,
        } => {
            let disc = if *raw {
                SphericalDiscretization::Raw
            } else {
                SphericalDiscretization::Balanced
            };
            plain(Box::new(SphericalGraphop::new(*n_sphere, *m_equator, disc)?))
        }
        GraphopSpec::ErdosRenyi { nodes, p } => graph(generate_erdos_renyi(*nodes, *p, seed)?, 1.0)?,
        GraphopSpec::PowerLawGraph {
            nodes,
            alpha,
            beta_edge,
        } => {
            let params = match beta_edge {
                Some(b) => PowerLawParams::new(*alpha, *b)?,
                None => PowerLawParams::graphon(*alpha)?,
            };
            let (adjacency, r_n) = generate_power_law_graph(*nodes, params, seed)?;
            graph(adjacency, r_n)?
        }
        GraphopSpec::EdgeList { path, nodes, r_n } => {
            let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let adjacency =
                read_edge_list(BufReader::new(file), *nodes).with_context(|| format!("reading {}", path.display()))?;
            graph(adjacency, *r_n)?
        }
    })
}

pub(crate) fn power_law_operator(alpha: f64, m: usize) -> Result<BuiltGraphop> {
    let (space, kernel) = power_law_graphon(PowerLawParams::graphon(alpha)?, m)?;
    Ok(BuiltGraphop {
        op: Box::new(graphon_operator(kernel.clone(), space)?),
        kernel: Some(kernel),
        adjacency: None,
    })
}

/// Spectral and structural facts about a graphop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorFacts {
    pub label: String,
    pub nodes: usize,
    pub numerical_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator_norm: Option<f64>,
    pub norm_infty_to_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_regularity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_norms: Option<[f64; 3]>,
}

pub fn operator_facts(built: &BuiltGraphop) -> Result<OperatorFacts> {
    let op = built.op.as_ref();
    let radius = numerical_radius(op, 1e-12)?;
    if !radius.converged {
        log::warn!("power iteration for {} stopped after {} iterations", op.label(), radius.iterations);
    }
    let nodes = op.space().len();
    let norm = (nodes <= DENSE_NORM_LIMIT).then(|| operator_norm(op, 1e-12).value);
    let space = op.space();
    let w_norms = match &built.kernel {
        Some(k) => Some([
            graphon_norm(k, space, 1.0)?,
            graphon_norm(k, space, 2.0)?,
            graphon_norm(k, space, f64::INFINITY)?,
        ]),
        None => None,
    };
    Ok(OperatorFacts {
        label: op.label(),
        nodes,
        numerical_radius: radius.value,
        operator_norm: norm,
        norm_infty_to_1: norm_infty_to_1(op)?,
        c_regularity: check_c_regular(op, REGULARITY_TOL),
        w_norms,
    })
}

/// Everything a run reports, serialized to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub model: Model,
    pub seed: u64,
    pub graphop: OperatorFacts,
    pub grid_points: usize,
    pub dim: usize,
    pub length: f64,
    pub kappa: f64,
    pub kappa_threshold: f64,
    pub regime: &'static str,
    pub theoretical_rate: f64,
    pub boundedness_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_critical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    pub decay_bound_ratio: f64,
    pub h_hat_initial: f64,
    pub h_hat_final: f64,
    pub ckp_margin_min: f64,
    pub logsob_margin_min: f64,
    pub mass_drift_max: f64,
    pub rho_min: f64,
    pub steps: usize,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutation_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde_l1_to_pde: Option<f64>,
    pub violations: Vec<String>,
    pub passed: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

fn grid_of(config: &RunConfig) -> Result<TorusGrid> {
    Ok(TorusGrid::new(config.grid.length, config.grid.dim, config.grid.points)?)
}

fn potential_of(config: &RunConfig) -> Result<InteractionPotential> {
    let g = &config.grid;
    Ok(match &config.potential {
        PotentialSpec::Kuramoto if g.dim == 1 => make_kuramoto_potential(g.length)?,
        PotentialSpec::Kuramoto => InteractionPotential::from_modes(
            g.length,
            2,
            [[1, 0], [0, 1]]
                .into_iter()
                .map(|wave| FourierMode {
                    wave,
                    cos: -1.0,
                    sin: 0.0,
                })
                .collect(),
        )?,
        PotentialSpec::Modes { modes } => InteractionPotential::from_modes(
            g.length,
            g.dim,
            modes
                .iter()
                .map(|m| FourierMode {
                    wave: m.wave,
                    cos: m.cos,
                    sin: m.sin,
                })
                .collect(),
        )?,
    })
}

fn initial_kind(spec: &InitialSpec) -> InitialCondition {
    match spec {
        InitialSpec::Cosine { epsilon, wave, phase, .. } => InitialCondition::PerturbedUniform {
            epsilon: *epsilon,
            wave: *wave,
            phase: *phase,
        },
        InitialSpec::VonMises {
            concentration, center, ..
        } => InitialCondition::VonMisesMixture(vec![VonMises {
            center: *center,
            concentration: *concentration,
            weight: 1.0,
        }]),
    }
}

fn modulation_of(spec: ModulationSpec, space: &NetworkSpace) -> Result<Option<Modulation>> {
    Ok(match spec {
        ModulationSpec::None => None,
        ModulationSpec::Ramp => {
            let last = (space.len().max(2) - 1) as f64;
            Some(Modulation::from_fn(space, |k| {
                let s = k as f64 / last;
                (0.4 + 0.5 * s, 2.0 * PI * s)
            }))
        }
        ModulationSpec::Sphere => {
            let coords = match (space.kind(), space.coords()) {
                (SpaceKind::Sphere, Some(c)) => c.to_vec(),
                _ => bail!("the sphere modulation needs a spherical graphop"),
            };
            Some(Modulation::from_fn(space, |k| {
                let [x, y, z] = coords[k];
                (0.6 + 0.3 * z, y.atan2(x))
            }))
        }
    })
}

fn initial_field(config: &RunConfig, grid: &TorusGrid, space: &NetworkSpace) -> Result<DensityField> {
    let modulation = modulation_of(config.initial.modulation(), space)?;
    make_initial_condition(&initial_kind(&config.initial), grid, space, modulation.as_ref())
        .context("building the initial condition")
}

fn solver_config(config: &RunConfig, kappa: f64) -> SolverConfig {
    let d = &config.dynamics;
    let mut sc = SolverConfig::new(kappa, d.dt, d.t_final).with_cadence(d.cadence.unwrap_or(d.dt));
    sc.snapshot_cadence = d.snapshot_cadence;
    sc.splitting = match d.splitting {
        SplittingSpec::Strang => Splitting::Strang,
        SplittingSpec::Lie => Splitting::Lie,
    };
    sc
}

fn frequencies_of(config: &RunConfig) -> Result<(f64, bool, FrequencyDistribution)> {
    let f = config.frequencies.as_ref().context("missing [frequencies]")?;
    let g = match &f.distribution {
        DistributionSpec::Dirac { omega } => FrequencyDistribution::dirac(*omega),
        DistributionSpec::Gaussian { mean, sigma, nodes } => FrequencyDistribution::gaussian(*mean, *sigma, *nodes)?,
        DistributionSpec::Uniform { a, b, nodes } => FrequencyDistribution::uniform(*a, *b, *nodes)?,
        DistributionSpec::Atoms { atoms } => {
            FrequencyDistribution::custom(&atoms.iter().map(|a| (a[0], a[1])).collect::<Vec<_>>())?
        }
    };
    Ok((f.beta, f.diffusion, g))
}

/// In-memory artifacts, written only once the whole run has succeeded.
struct Artifacts(Vec<(PathBuf, Vec<u8>)>);

impl Artifacts {
    fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.0.push((name.into(), bytes));
    }

    fn write(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (name, bytes) in self.0 {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

struct Thresholds {
    kappa: f64,
    threshold: f64,
    rate: f64,
    bound: f64,
}

fn thresholds(
    config: &RunConfig,
    facts: &OperatorFacts,
    potential: &InteractionPotential,
    inverse_temperature: f64,
) -> Result<Thresholds> {
    let l = config.grid.length;
    let threshold = kappa_threshold(facts.numerical_radius, l, potential)? / inverse_temperature;
    let kappa = match (config.dynamics.kappa, config.dynamics.kappa_factor) {
        (Some(k), _) => k,
        (None, Some(f)) => f * threshold,
        (None, None) => bail!("no coupling strength given"),
    };
    let rate = sakaguchi_rate(inverse_temperature, kappa, facts.numerical_radius, l, potential);
    // with diffusion 1/β the dissipation constant a carries a factor 1/β
    let bound = boundedness_constant(kappa, potential, facts.norm_infty_to_1, l) * inverse_temperature.powi(2);
    Ok(Thresholds {
        kappa,
        threshold,
        rate,
        bound,
    })
}

fn regime(kappa: f64, threshold: f64) -> &'static str {
    if kappa < threshold {
        "sub-threshold"
    } else {
        "above-threshold"
    }
}

fn summarize(
    config: &RunConfig,
    facts: OperatorFacts,
    t: &Thresholds,
    trajectory: &Trajectory,
    commutation_defect: Option<f64>,
) -> Summary {
    let fit = trajectory.fit_rate(None);
    if let Err(e) = &fit {
        log::warn!("no decay rate fitted: {e}");
    }
    let fit = fit.ok();
    let invariants = trajectory.invariants();
    let violations = invariants.violations(&InvariantTolerances::default());
    let records = &trajectory.records;
    Summary {
        model: config.model,
        seed: config.seed,
        graphop: facts,
        grid_points: config.grid.points,
        dim: config.grid.dim,
        length: config.grid.length,
        kappa: t.kappa,
        kappa_threshold: t.threshold,
        regime: regime(t.kappa, t.threshold),
        theoretical_rate: t.rate,
        boundedness_constant: t.bound,
        kappa_zero: None,
        kappa_critical: None,
        fitted_rate: fit.map(|f| f.rate),
        fit_window: fit.map(|f| f.window),
        decay_bound_ratio: trajectory.decay_bound_ratio(t.rate),
        h_hat_initial: records[0].h_hat,
        h_hat_final: records[records.len() - 1].h_hat,
        ckp_margin_min: invariants.ckp_margin_min,
        logsob_margin_min: invariants.logsob_margin_min,
        mass_drift_max: invariants.mass_drift_max,
        rho_min: invariants.rho_min,
        steps: trajectory.steps,
        dt: trajectory.dt,
        commutation_defect,
        kde_l1_to_pde: None,
        passed: violations.is_empty(),
        violations,
    }
}

fn trajectory_artifacts(artifacts: &mut Artifacts, trajectory: &Trajectory) -> Result<()> {
    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv)?;
    artifacts.add("diagnostics.csv", csv);
    for (k, snap) in trajectory.snapshots.iter().enumerate() {
        let mut bytes = Vec::new();
        snap.write_snapshot(&mut bytes)?;
        artifacts.add(format!("snapshots/snapshot_{k:04}.bin"), bytes);
    }
    Ok(())
}

fn finish(config: &RunConfig, summary: Summary, mut artifacts: Artifacts, out: &Path) -> Result<RunOutcome> {
    artifacts.add("summary.json", {
        let mut s = serde_json::to_vec_pretty(&summary)?;
        s.push(b'\n');
        s
    });
    artifacts.add("config.toml", config.to_toml().into_bytes());
    let files = artifacts.write(out)?;
    Ok(RunOutcome { summary, files })
}

/// Validates `config`, runs it, and writes `diagnostics.csv`,
/// `summary.json`, `config.toml` and any snapshots into `out`. Nothing is
/// written when validation or the run itself fails.
pub fn run_experiment(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let grid = grid_of(config)?;
    let potential = potential_of(config)?;
    match config.model {
        Model::Homogeneous | Model::Graphop => run_graphop(config, &grid, &potential, out),
        Model::Sakaguchi => run_sakaguchi(config, &grid, &potential, out),
        Model::Particles => run_particles(config, &grid, &potential, out),
    }
}

fn run_graphop(config: &RunConfig, grid: &TorusGrid, potential: &InteractionPotential, out: &Path) -> Result<RunOutcome> {
    let built = build_graphop(&config.graphop, config.seed)?;
    let facts = operator_facts(&built)?;
    let t = thresholds(config, &facts, potential, 1.0)?;
    let rho = initial_field(config, grid, built.op.space())?;
    let solver = Solver::new(grid, built.op.as_ref(), potential, solver_config(config, t.kappa))?;
    let trajectory = solver.run(&rho).context("integrating the mean-field equation")?;
    let summary = summarize(config, facts, &t, &trajectory, Some(trajectory.commutation_defect));
    let mut artifacts = Artifacts(Vec::new());
    trajectory_artifacts(&mut artifacts, &trajectory)?;
    finish(config, summary, artifacts, out)
}

fn run_sakaguchi(
    config: &RunConfig,
    grid: &TorusGrid,
    potential: &InteractionPotential,
    out: &Path,
) -> Result<RunOutcome> {
    let (beta, diffusion, g) = frequencies_of(config)?;
    let built = build_graphop(&config.graphop, config.seed)?;
    let facts = operator_facts(&built)?;
    let t = thresholds(config, &facts, potential, beta)?;
    let coupling = FrequencyCoupling::new(built.op.as_ref(), &g)?;
    let rho = initial_field(config, grid, coupling.space())?;
    let d = &config.dynamics;
    let mut sc = SakaguchiConfig::new(beta, t.kappa, d.dt, d.t_final).with_cadence(d.cadence.unwrap_or(d.dt));
    sc.diffusion = diffusion;
    let trajectory = sakaguchi_run(&rho, &sc, built.op.as_ref(), potential, &g).context("integrating the model")?;
    let mut summary = summarize(config, facts, &t, &trajectory, Some(trajectory.commutation_defect));
    summary.kappa_zero = Some(kappa_zero(beta, config.grid.length, potential)?);
    summary.kappa_critical = Some(critical_coupling(beta, &g)?);
    let mut artifacts = Artifacts(Vec::new());
    trajectory_artifacts(&mut artifacts, &trajectory)?;
    finish(config, summary, artifacts, out)
}

fn particle_graph(config: &RunConfig) -> Result<(Adjacency, f64)> {
    let built = match &config.graphop {
        GraphopSpec::Identity => {
            let count = config.particles.as_ref().and_then(|p| p.count).context("particles.count")?;
            return Ok((Adjacency::complete(count), 1.0));
        }
        spec => build_graphop(spec, config.seed)?,
    };
    built.adjacency.context("the particles model needs a finite graph")
}

fn single_node_field(grid: &TorusGrid, density: &[f64], time: f64) -> Result<DensityField> {
    let values = ndarray::Array2::from_shape_vec((1, grid.len()), density.to_vec())?;
    let space = IdentityGraphop::single_node().space().clone();
    Ok(DensityField::new(grid.clone(), space, values)?.with_time(time))
}

fn run_particles(
    config: &RunConfig,
    grid: &TorusGrid,
    potential: &InteractionPotential,
    out: &Path,
) -> Result<RunOutcome> {
    let spec = config.particles.as_ref().context("missing [particles]")?;
    let (adjacency, r_n) = particle_graph(config)?;
    let complete = matches!(adjacency, Adjacency::Complete { .. });
    let built = BuiltGraphop {
        op: Box::new(empirical_graphop(adjacency.clone(), r_n)?),
        kernel: None,
        adjacency: None,
    };
    let facts = operator_facts(&built)?;
    let t = thresholds(config, &facts, potential, 1.0)?;
    let (l, dim) = (config.grid.length, config.grid.dim);

    let single = IdentityGraphop::single_node();
    let rho0 = make_initial_condition(&initial_kind(&config.initial), grid, single.space(), None)?;
    let unit = 2.0 * PI / l;
    // rejection sampling only needs an upper bound, so the von Mises profile
    // stays unnormalized
    let (profile, bound): (Box<dyn Fn(&[f64]) -> f64>, f64) = match initial_kind(&config.initial) {
        InitialCondition::PerturbedUniform { epsilon, wave, phase } => {
            let volume = l.powi(dim as i32);
            (
                Box::new(move |x: &[f64]| {
                    let y = x.get(1).copied().unwrap_or(0.0);
                    let arg = unit * (wave[0] as f64 * x[0] + wave[1] as f64 * y) + phase;
                    (1.0 + epsilon * arg.cos()) / volume
                }),
                (1.0 + epsilon.abs()) / volume,
            )
        }
        InitialCondition::VonMisesMixture(components) => {
            let c = components[0];
            (
                Box::new(move |x: &[f64]| {
                    let e: f64 = (0..dim).map(|i| (unit * (x[i] - c.center[i])).cos() - 1.0).sum();
                    (c.concentration * e).exp()
                }),
                1.0,
            )
        }
    };
    let positions = sample_positions(l, dim, adjacency.nodes(), |x| profile(x), bound, config.seed)?;
    let mut ensemble = ParticleEnsemble::new(l, dim, positions, adjacency, r_n, t.kappa, config.seed)?;
    let d = &config.dynamics;
    let cadence = d.cadence.unwrap_or(d.dt);
    let traj = euler_maruyama_run(&mut ensemble, potential, d.dt, d.t_final, cadence)?;

    let mut records = Vec::new();
    let mut last_kde = Vec::new();
    for (time, positions) in traj.times.iter().zip(&traj.positions) {
        let kde = empirical_density(positions, grid, spec.bandwidth)?;
        records.push(DiagnosticRecord::evaluate(&single_node_field(grid, &kde, *time)?, &[1.0])?);
        last_kde = kde;
    }
    let mut reference = None;
    if spec.reference && complete {
        let sc = SolverConfig::new(t.kappa, d.dt.min(1e-3), d.t_final);
        let pde = Solver::new(grid, &single, potential, sc)?.run(&rho0)?;
        reference = Some(pde.final_field.slice(0).to_vec());
    }
    let trajectory = Trajectory {
        final_field: single_node_field(grid, &last_kde, ensemble.time())?,
        records,
        snapshots: Vec::new(),
        steps: (d.t_final / d.dt - 1e-9).ceil().max(0.0) as usize,
        dt: d.dt,
        commutation_defect: 0.0,
    };
    let mut summary = summarize(config, facts, &t, &trajectory, None);
    summary.kde_l1_to_pde = reference.as_ref().map(|r| {
        let diff: Vec<f64> = last_kde.iter().zip(r).map(|(a, b)| (a - b).abs()).collect();
        grid.integrate(&diff)
    });

    let mut artifacts = Artifacts(Vec::new());
    trajectory_artifacts(&mut artifacts, &trajectory)?;
    let mut positions = Vec::new();
    ensemble.write_csv(&mut positions)?;
    artifacts.add("particles.csv", positions);
    let mut density = String::from(if dim == 1 { "x,kde" } else { "x,y,kde" });
    if reference.is_some() {
        density.push_str(",pde");
    }
    density.push('\n');
    for (j, v) in last_kde.iter().enumerate() {
        let x = grid.coords(j);
        let mut row: Vec<String> = x[..dim].iter().map(|c| format!("{c:.17e}")).collect();
        row.push(format!("{v:.17e}"));
        if let Some(r) = &reference {
            row.push(format!("{:.17e}", r[j]));
        }
        density.push_str(&row.join(","));
        density.push('\n');
    }
    artifacts.add("density.csv", density.into_bytes());
    finish(config, summary, artifacts, out)
}
