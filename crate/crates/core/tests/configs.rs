//! The shipped configs describe exactly the reference setups used by the
//! acceptance checks.

use std::path::PathBuf;

use edgemarket::experiment::{ExperimentConfig, ExperimentId, Study, SweepVariable};
use edgemarket::verify::reference_experiment;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn preset_configs_match_reference_setups() {
    for id in [
        ExperimentId::Fig3a,
        ExperimentId::Fig3b,
        ExperimentId::Fig3c,
        ExperimentId::Fig4,
        ExperimentId::Fig5,
        ExperimentId::Fig6,
    ] {
        let path = config_dir().join(format!("{}.toml", id.as_str()));
        let exp = ExperimentConfig::from_path(&path)
            .and_then(|c| c.resolve(None))
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let reference = reference_experiment(id, 100).unwrap();
        assert_eq!(exp.study, reference.study, "{}", id.as_str());
        assert_eq!(exp.variable, reference.variable, "{}", id.as_str());
        assert_eq!(exp.values, reference.values, "{}", id.as_str());
        assert_eq!(exp.seeds, reference.seeds, "{}", id.as_str());
        assert_eq!(exp.base, reference.base, "{}", id.as_str());
        assert_eq!(exp.edge_price, reference.edge_price, "{}", id.as_str());
        assert_eq!(exp.pricing, reference.pricing, "{}", id.as_str());
    }
}

#[test]
fn custom_config_resolves_and_runs_one_seed() {
    let path = config_dir().join("custom_tariff.toml");
    let exp = ExperimentConfig::from_path(&path)
        .unwrap()
        .resolve(Some(7))
        .unwrap();
    assert_eq!(exp.study, Study::Ecosystem);
    assert_eq!(exp.variable, SweepVariable::Q);
    assert_eq!(exp.seeds, vec![7]);
    assert_eq!(exp.base.plan_for(0).cap, 10.0);
    let mut small = exp.clone();
    small.base.n_users = 10;
    let cells = small.run(1).unwrap();
    assert_eq!(cells.len(), exp.values.len());
}

#[test]
fn missing_config_is_a_config_error() {
    let err = ExperimentConfig::from_path(&config_dir().join("nope.toml")).unwrap_err();
    assert!(matches!(err, edgemarket::Error::Config(_)));
}
