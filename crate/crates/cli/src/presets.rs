use anyhow::{bail, Result};

use crate::config::RunConfig;

pub const PRESETS: &[&str] = &[
    "kuramoto-homogeneous",
    "erdos-renyi",
    "power-law-subcritical",
    "power-law-supercritical",
    "spherical",
    "sakaguchi-gaussian",
    "particles-homogeneous",
];

const KURAMOTO_HOMOGENEOUS: &str = r#"
model = "homogeneous"

[grid]
points = 128

[dynamics]
kappa = 0.25
dt = 1e-3
t_final = 10.0
cadence = 0.05

[initial]
kind = "cosine"
epsilon = 0.5
"#;

const ERDOS_RENYI: &str = r#"
model = "graphop"

[graphop]
kind = "erdos-renyi"
nodes = 64
p = 0.3

[dynamics]
kappa = 1.0
dt = 2e-3
t_final = 10.0
cadence = 0.05

[initial]
kind = "cosine"
epsilon = 1.0
modulation = "ramp"
"#;

const POWER_LAW_SUBCRITICAL: &str = r#"
model = "graphop"

[graphop]
kind = "power-law"
alpha = 0.25
m = 128
refine = [64, 128, 256, 512]

[dynamics]
kappa_factor = 0.8
dt = 2e-3
t_final = 20.0
cadence = 0.1

[initial]
kind = "cosine"
epsilon = 0.9
modulation = "ramp"
"#;

const POWER_LAW_SUPERCRITICAL: &str = r#"
model = "graphop"

[graphop]
kind = "power-law"
alpha = 0.75
m = 64
refine = [32, 64, 128, 256]

[dynamics]
kappa = 0.3
dt = 2e-3
t_final = 20.0
cadence = 0.1

[initial]
kind = "cosine"
epsilon = 0.9
"#;

const SPHERICAL: &str = r#"
model = "graphop"

[grid]
points = 32

[graphop]
kind = "spherical"
n_sphere = 32
m_equator = 64

[dynamics]
kappa = 0.25
dt = 0.02
t_final = 5.0
cadence = 0.1

[initial]
kind = "cosine"
epsilon = 1.0
modulation = "sphere"
"#;

const SAKAGUCHI_GAUSSIAN: &str = r#"
model = "sakaguchi"

[dynamics]
kappa = 0.2
dt = 5e-3
t_final = 10.0
cadence = 0.05

[initial]
kind = "cosine"
epsilon = 0.5
modulation = "ramp"

[frequencies]
beta = 1.0

[frequencies.distribution]
kind = "gaussian"
sigma = 1.0
nodes = 16
"#;

const PARTICLES_HOMOGENEOUS: &str = r#"
model = "particles"

[grid]
points = 128

[dynamics]
kappa = 0.25
dt = 0.01
t_final = 5.0
cadence = 0.25

[initial]
kind = "cosine"
epsilon = 0.5

[particles]
count = 2000
bandwidth = 0.3
"#;

pub fn preset(name: &str) -> Result<RunConfig> {
    let text = match name {
        "kuramoto-homogeneous" => KURAMOTO_HOMOGENEOUS,
        "erdos-renyi" => ERDOS_RENYI,
        "power-law-subcritical" => POWER_LAW_SUBCRITICAL,
        "power-law-supercritical" => POWER_LAW_SUPERCRITICAL,
        "spherical" => SPHERICAL,
        "sakaguchi-gaussian" => SAKAGUCHI_GAUSSIAN,
        "particles-homogeneous" => PARTICLES_HOMOGENEOUS,
        other => bail!("unknown preset `{other}`; available: {}", PRESETS.join(", ")),
    };
    RunConfig::from_toml(text)
}
