//! Shared problem builders for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use mfopt::fem::{assemble, triangulate, AffineForms, AssemblyOptions, Geometry};
use mfopt::fom::{FomModel, ParameterBox, SolverOptions, TimeGrid};
use mfopt::harness::{ExperimentConfig, Scale};
use mfopt::tr_opt::Problem;

/// Two conductivity groups (left and right half), a heater in the middle.
pub const TWO_HALVES: &str = r#"
[domain]
width = 2.0
height = 1.0
air_conductivity = 0.5
heater_power = 80.0

[parameters]
groups = ["left", "right"]

[[box]]
type = "wall"
x0 = 0.0
y0 = 0.0
x1 = 1.0
y1 = 1.0
group = "left"

[[box]]
type = "wall"
x0 = 1.0
y0 = 0.0
x1 = 2.0
y1 = 1.0
group = "right"

[[box]]
type = "heater"
x0 = 0.5
y0 = 0.25
x1 = 1.5
y1 = 0.75
"#;

pub fn forms(geometry: &Geometry, nx: usize, ny: usize) -> AffineForms {
    let mesh = triangulate(nx, ny, geometry.width, geometry.height);
    let options = AssemblyOptions { reference_parameter: vec![0.05, 0.05], output_weight: 5000.0 };
    assemble(geometry, &mesh, &options).unwrap()
}

pub fn unit_box() -> ParameterBox {
    ParameterBox::new(vec![0.01, 0.01], vec![0.1, 0.1]).unwrap()
}

/// FOM on the two-halves layout.
pub fn halves_fom(nx: usize, ny: usize, steps: usize) -> FomModel {
    let g = Geometry::from_toml(TWO_HALVES).unwrap();
    FomModel::new(
        forms(&g, nx, ny),
        TimeGrid::new(steps, 0.1).unwrap(),
        vec![0.05, 0.05],
        0.5e-3,
        unit_box(),
        SolverOptions::default(),
    )
    .unwrap()
}

/// The shipped building at a reduced size (fast enough for every test).
pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml("[problem]\nnx = 32\nny = 16\nsteps = 40\n", Scale::Desk).unwrap()
}

pub fn small_problem() -> Problem {
    small_config().build_problem().unwrap()
}

pub fn desk_problem() -> (ExperimentConfig, Problem) {
    let config = ExperimentConfig::preset(Scale::Desk);
    let problem = config.build_problem().unwrap();
    (config, problem)
}

pub fn shared(fom: FomModel) -> Arc<FomModel> {
    Arc::new(fom)
}
