use cellfree::{ExperimentConfig, NetworkConfig};

fn preset(name: &str) -> ExperimentConfig {
    let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
    ExperimentConfig::load(path).unwrap()
}

#[test]
fn shipped_presets_match_builtin_values() {
    assert_eq!(preset("full_scale.toml"), ExperimentConfig::new(NetworkConfig::full_scale()));
    assert_eq!(preset("desk.toml"), ExperimentConfig::desk());
}
