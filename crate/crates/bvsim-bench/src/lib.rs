//! Shared fixtures for the criterion benches.

use bvsim_core::config::parse_config;
use bvsim_core::config::RunConfig;
use bvsim_core::scene::SceneModel;

pub fn bench_config() -> RunConfig {
    let text = r#"
        seed = 99
        [scene]
        pattern = "checker_grid"
        width = 96
        height = 96
        lux = [1000.0]
        [[sensors]]
        id = "evs"
        kind = "evs"
        [sweep]
        rpm = [300.0]
    "#;
    parse_config(text, false, &[]).expect("bench config parses").0
}

pub fn bench_scene() -> SceneModel {
    bench_config().scene.scene_model(300.0, 1000.0).expect("bench scene builds")
}
