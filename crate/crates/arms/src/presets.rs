//! Named experiment presets matching the published configuration table.

use crate::config::ExperimentSpec;

pub const EXAMPLE1: &str = r#"
name = "example1"
replicates = 100
seed = 1

[problem]
kind = "toy1d"

[arms]
n_particles = 1000
kill_fraction = 0.3
c_multiplier = 28.0
t_mutations = 100
snapshot_budget = 300
j0 = 5
gain = 0.04

[sweep]
n_particles = [200, 1000, 4000, 20000, 80000]
"#;

pub const EXAMPLE2A: &str = r#"
name = "example2a"
replicates = 50
seed = 2

[problem]
kind = "thermal_block"
d = 2
n = 32
l_max = 0.236
initial_basis = 5

[arms]
n_particles = 250
kill_fraction = 0.1
c_threshold = 3.0
t_mutations = 30
snapshot_budget = 300
j0 = 2
gain = 0.02
use_bridge = true

[sweep]
n_particles = [250, 400]
"#;

pub const EXAMPLE2C_MINI: &str = r#"
name = "example2c-mini"
replicates = 50
seed = 3

[problem]
kind = "thermal_block"
d = 5
n = 30
l_max = 0.0234
initial_basis = 5

[arms]
n_particles = 100
kill_fraction = 0.1
c_threshold = 3.0
t_mutations = 30
snapshot_budget = 300
j0 = 2
gain = 0.02
use_bridge = true

[sweep]
n_particles = [100, 200]
"#;

pub const NAMES: [&str; 3] = ["example1", "example2a", "example2c-mini"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(EXAMPLE1),
        "example2a" => Some(EXAMPLE2A),
        "example2c-mini" => Some(EXAMPLE2C_MINI),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    preset_text(name).map(|t| ExperimentSpec::from_toml_str(t).expect("embedded preset parses"))
}
