//! Fixtures shared by the criterion benchmarks in `benches/`.

use std::f64::consts::PI;

use radkit::dataset::{generate_scene, SceneGenConfig};
use radkit::encoder::EncoderParams;
use radkit::simulator::synthesize_tensor;
use radkit::trainer::{encoder_input, init_params};
use radkit::{ArrayGeometry, PolarGrid, RngStream, RotatedBox, Scene, SimConfig, TrainConfig, VirtualArrayTensor};

pub fn scene(index: usize) -> Scene {
    let config = SceneGenConfig {
        scatterers_min: 3,
        scatterers_max: 3,
        ..SceneGenConfig::default()
    };
    generate_scene(index, &config, &PolarGrid::default())
}

/// Tensor of a three-scatterer scene on the default array and grid.
pub fn tensor() -> VirtualArrayTensor {
    synthesize_tensor(
        &scene(0),
        &ArrayGeometry::default(),
        &PolarGrid::default(),
        &SimConfig::default(),
        &RngStream::new(0, 0),
    )
    .expect("default scene simulates")
}

/// Default-width encoder and one input heatmap for it.
pub fn encoder() -> (EncoderParams<f64>, Vec<f64>) {
    let input = encoder_input(&radkit::simulator::integrate_heatmap(&tensor()));
    let params = init_params(&TrainConfig::default(), input.len()).expect("default shape is valid");
    (params, input)
}

/// Pairs of overlapping boxes at random yaws.
pub fn box_pairs(n: usize) -> Vec<(RotatedBox, RotatedBox)> {
    let mut rng = RngStream::new(0xB0C5, 0);
    (0..n)
        .map(|_| {
            let a = RotatedBox::new(0.0, 10.0, 4.5, 1.8, rng.uniform(-PI, PI));
            let b = RotatedBox::new(
                rng.uniform(-2.0, 2.0),
                10.0 + rng.uniform(-2.0, 2.0),
                4.5,
                1.8,
                rng.uniform(-PI, PI),
            );
            (a, b)
        })
        .collect()
}
