use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Homogeneous,
    Graphop,
    Sakaguchi,
    Particles,
}

/// One experiment, as read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub graphop: GraphopSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub frequencies: Option<FrequencySpec>,
    #[serde(default)]
    pub particles: Option<ParticleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "two_pi")]
    pub length: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn two_pi() -> f64 {
    2.0 * PI
}

fn one() -> usize {
    1
}

fn default_points() -> usize {
    64
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            length: two_pi(),
            dim: 1,
            points: default_points(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphopSpec {
    /// A single node, i.e. all-to-all coupling.
    #[default]
    Identity,
    Constant {
        nodes: usize,
        p: f64,
    },
    /// A sampled `G(N, p)` graph.
    ErdosRenyi {
        nodes: usize,
        p: f64,
    },
    /// The midpoint discretization of `W_α`; `refine` lists extra resolutions
    /// for `estimate`.
    PowerLaw {
        alpha: f64,
        m: usize,
        #[serde(default)]
        refine: Vec<usize>,
    },
    /// A sampled power-law random graph with edge exponent `beta_edge`
    /// (default `2α - 1/2`).
    PowerLawGraph {
        nodes: usize,
        alpha: f64,
        #[serde(default)]
        beta_edge: Option<f64>,
    },
    Spherical {
        n_sphere: usize,
        m_equator: usize,
        #[serde(default)]
        raw: bool,
    },
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        nodes: Option<usize>,
        #[serde(default = "unit")]
        r_n: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `D(x) = -cos(2π x / L)`.
    #[default]
    Kuramoto,
    Modes {
        modes: Vec<ModeSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub wave: [i64; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(default)]
    pub kappa: Option<f64>,
    /// `κ` as a multiple of the measured threshold.
    #[serde(default)]
    pub kappa_factor: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub cadence: Option<f64>,
    #[serde(default)]
    pub snapshot_cadence: Option<f64>,
    #[serde(default)]
    pub splitting: SplittingSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingSpec {
    #[default]
    Strang,
    Lie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Cosine {
        epsilon: f64,
        #[serde(default = "first_mode")]
        wave: [i64; 2],
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        modulation: ModulationSpec,
    },
    VonMises {
        concentration: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        modulation: ModulationSpec,
    },
}

fn first_mode() -> [i64; 2] {
    [1, 0]
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Cosine {
            epsilon: 0.5,
            wave: first_mode(),
            phase: 0.0,
            modulation: ModulationSpec::None,
        }
    }
}

impl InitialSpec {
    pub fn modulation(&self) -> ModulationSpec {
        match self {
            InitialSpec::Cosine { modulation, .. } | InitialSpec::VonMises { modulation, .. } => *modulation,
        }
    }
}

/// How the initial perturbation varies across network nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationSpec {
    #[default]
    None,
    /// Amplitude rising from 0.4 to 0.9 and phase winding once over the
    /// node index.
    Ramp,
    /// Amplitude following the height and phase the longitude of spherical
    /// nodes.
    Sphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    #[serde(default = "unit")]
    pub beta: f64,
    #[serde(default = "yes")]
    pub diffusion: bool,
    pub distribution: DistributionSpec,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    Dirac {
        omega: f64,
    },
    Gaussian {
        #[serde(default)]
        mean: f64,
        sigma: f64,
        nodes: usize,
    },
    Uniform {
        a: f64,
        b: f64,
        nodes: usize,
    },
    Atoms {
        atoms: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    /// Particle count for the complete graph; graph specs fix it otherwise.
    #[serde(default)]
    pub count: Option<usize>,
    pub bandwidth: f64,
    /// Whether to integrate the mean-field PDE alongside for comparison
    /// (complete graph only).
    #[serde(default = "yes")]
    pub reference: bool,
}

impl RunConfig {
    /// Parses TOML; errors carry the offending line and key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        Ok(config)
    }

    /// Reads a config file; relative edge-list paths are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if let GraphopSpec::EdgeList { path: edges, .. } = &mut config.graphop {
            if edges.is_relative() {
                if let Some(dir) = path.parent() {
                    *edges = dir.join(&*edges);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Checks everything that can be checked without building operators.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        ensure!(g.length.is_finite() && g.length > 0.0, "grid.length must be positive, got {}", g.length);
        ensure!(g.dim == 1 || g.dim == 2, "grid.dim must be 1 or 2, got {}", g.dim);
        ensure!(g.points >= 8 && g.points.is_power_of_two(), "grid.points must be a power of two >= 8, got {}", g.points);
        let d = &self.dynamics;
        match (d.kappa, d.kappa_factor) {
            (Some(k), None) => ensure!(k.is_finite() && k >= 0.0, "dynamics.kappa must be nonnegative, got {k}"),
            (None, Some(f)) => ensure!(f.is_finite() && f >= 0.0, "dynamics.kappa_factor must be nonnegative, got {f}"),
            _ => bail!("exactly one of dynamics.kappa and dynamics.kappa_factor must be given"),
        }
        ensure!(d.dt.is_finite() && d.dt > 0.0, "dynamics.dt must be positive, got {}", d.dt);
        ensure!(d.t_final.is_finite() && d.t_final >= 0.0, "dynamics.t_final must be nonnegative, got {}", d.t_final);
        if let Some(c) = d.cadence {
            ensure!(c > 0.0, "dynamics.cadence must be positive, got {c}");
        }
        if let Some(c) = d.snapshot_cadence {
            ensure!(c > 0.0, "dynamics.snapshot_cadence must be positive, got {c}");
        }
        if let GraphopSpec::EdgeList { path, .. } = &self.graphop {
            ensure!(path.is_file(), "graphop.path {} does not exist", path.display());
        }
        match self.model {
            Model::Homogeneous => ensure!(
                self.graphop == GraphopSpec::Identity,
                "the homogeneous model takes no graphop section"
            ),
            Model::Graphop => {}
            Model::Sakaguchi => {
                ensure!(self.grid.dim == 1, "the sakaguchi model is one-dimensional");
                let f = self.frequencies.as_ref().context("the sakaguchi model needs a [frequencies] section")?;
                ensure!(f.beta.is_finite() && f.beta > 0.0, "frequencies.beta must be positive, got {}", f.beta);
            }
            Model::Particles => {
                let p = self.particles.as_ref().context("the particles model needs a [particles] section")?;
                ensure!(p.bandwidth > 0.0, "particles.bandwidth must be positive");
                ensure!(
                    self.initial.modulation() == ModulationSpec::None,
                    "particle initial data cannot be modulated across nodes"
                );
                match &self.graphop {
                    GraphopSpec::Identity => {
                        ensure!(p.count.is_some_and(|n| n > 0), "particles.count is required for the complete graph")
                    }
                    GraphopSpec::ErdosRenyi { .. } | GraphopSpec::PowerLawGraph { .. } | GraphopSpec::EdgeList { .. } => {
                        ensure!(p.count.is_none(), "particles.count is fixed by the graph")
                    }
                    other => bail!("the particles model needs a finite graph, not {}", other.kind_name()),
                }
            }
        }
        if self.model != Model::Sakaguchi {
            ensure!(self.frequencies.is_none(), "[frequencies] only applies to the sakaguchi model");
        }
        if self.model != Model::Particles {
            ensure!(self.particles.is_none(), "[particles] only applies to the particles model");
        }
        Ok(())
    }
}

impl GraphopSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GraphopSpec::Identity => "identity",
            GraphopSpec::Constant { .. } => "constant",
            GraphopSpec::ErdosRenyi { .. } => "erdos-renyi",
            GraphopSpec::PowerLaw { .. } => "power-law",
            GraphopSpec::PowerLawGraph { .. } => "power-law-graph",
            GraphopSpec::Spherical { .. } => "spherical",
            GraphopSpec::EdgeList { .. } => "edge-list",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model = \"homogeneous\"\n[dynamics]\nkappa = 0.25\ndt = 0.01\nt_final = 1.0\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSpec::default());
        assert_eq!(c.graphop, GraphopSpec::Identity);
        assert_eq!(c.potential, PotentialSpec::Kuramoto);
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let err = RunConfig::from_toml("model = \"homogeneous\"\n[dynamics]\nkappa = \"big\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3") && err.contains("kappa"), "{err}");
        let err = RunConfig::from_toml("model = \"quantum\"\n").unwrap_err().to_string();
        assert!(err.contains("quantum"), "{err}");
    }

    #[test]
    fn validation_catches_inconsistent_sections() {
        let base = RunConfig::from_toml(MINIMAL).unwrap();
        let mut c = base.clone();
        c.dynamics.kappa_factor = Some(0.5);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.grid.dim = 3;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.graphop = GraphopSpec::Constant { nodes: 4, p: 0.5 };
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model = Model::Sakaguchi;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model = Model::Graphop;
        c.graphop = GraphopSpec::EdgeList {
            path: PathBuf::from("/definitely/not/here.txt"),
            nodes: None,
            r_n: 1.0,
        };
        assert!(c.validate().unwrap_err().to_string().contains("does not exist"));
        let mut c = base;
        c.model = Model::Particles;
        c.particles = Some(ParticleSpec {
            count: None,
            bandwidth: 0.3,
            reference: true,
        });
        assert!(c.validate().is_err());
    }
}
