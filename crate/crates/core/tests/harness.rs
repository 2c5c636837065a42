use std::path::PathBuf;

use pnc_core::harness::{
    emit_report, load_scenario, read_report, render_json, render_tabular, run_experiment,
    scenario::ModeKind, Audit, OutputFormat, Overrides,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn hand_example_runs_clean() {
    let config = load_scenario(fixture("hand2.toml")).unwrap();
    let report = run_experiment(&config).unwrap();
    assert!(report.passed(), "{:?}", report.failures());
    assert_eq!(report.grid.points, 3);
    // the neutral agent carries the loss at the welfare optimum
    assert_eq!(report.welfare.point, Some(0));
    assert_eq!(report.transcript.chosen, 0);
    assert!((report.agents[1].g - (-0.25)).abs() < 1e-12);
    assert!(report.auction.is_some());
    assert_eq!(report.audits.len(), 3);
}

#[test]
fn example_one_recovers_proportional_weights() {
    let config = load_scenario(fixture("example1.toml")).unwrap();
    let report = run_experiment(&config).unwrap();
    assert!(report.passed(), "{:?}", report.failures());
    let shares = report.welfare_shares.as_ref().unwrap();
    let q = shares.state(1).unwrap();
    for (got, want) in q.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
        assert!((got - want).abs() < 1e-2, "{q:?}");
    }
    let cf = report.closed_form.as_ref().unwrap();
    assert!((report.welfare.value - cf.value).abs() < 1e-3);
    assert_eq!(render_tabular(&report).unwrap().lines().count(), 4);
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let config = load_scenario(fixture("ambiguity3.toml")).unwrap();
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    let text = render_json(&a).unwrap();
    assert_eq!(text, render_json(&b).unwrap());
    assert!(a.passed(), "{:?}", a.failures());
    assert!(a.transcript.perturbation.is_some());

    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&a, dir.path(), OutputFormat::Both).unwrap();
    assert_eq!(files.len(), 2);
    let back = read_report(&files[0]).unwrap();
    assert_eq!(render_json(&back).unwrap(), text);
    assert_eq!(back, a);
}

#[test]
fn audit_only_omits_auction_and_audits_can_be_empty() {
    let mut config = load_scenario(fixture("hand2.toml")).unwrap();
    Overrides {
        audit_only: true,
        mode: Some(ModeKind::Perturbed),
        ..Default::default()
    }
    .apply(&mut config);
    config.audit.regularity = false;
    config.audit.deviations = 0;
    let report = run_experiment(&config).unwrap();
    assert!(report.auction.is_none());
    assert!(report.audits.is_empty());
    let text = render_json(&report).unwrap();
    assert!(!text.contains("\"auction\""));
    assert!(text.contains("\"audits\": []"));
    assert!(report.agents.iter().all(|a| a.final_payoff.is_none()));
    assert!(report.passed(), "{:?}", report.failures());
}

#[test]
fn overrides_change_resolution() {
    let mut config = load_scenario(fixture("hand2.toml")).unwrap();
    Overrides {
        resolution: Some(5),
        seed: Some(9),
        ..Default::default()
    }
    .apply(&mut config);
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.grid.points, 6);
    assert_eq!(report.scenario.seed, 9);
    assert!(report
        .audits
        .iter()
        .any(|a| matches!(a, Audit::FirstMover(_))));
}
