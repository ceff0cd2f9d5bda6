use std::time::Instant;

use dialogbench_collect::sim::{simulate, SimConfig};

#[test]
fn ten_thousand_sessions_keep_every_invariant() {
    let cfg = SimConfig { seed: 7, workers: 60, target_sessions: 10_000, images: 10_000, ..SimConfig::default() };
    let start = Instant::now();
    let report = simulate(&cfg);
    assert!(report.violations.is_empty(), "{:#?}", &report.violations[..report.violations.len().min(20)]);
    assert!(report.sessions >= 10_000);
    assert_eq!(report.completed + report.discarded, report.sessions);
    assert!(report.completed > 0 && report.discarded > 0, "{report:?}");
    let images = report.status.images;
    assert_eq!(images.unserved + images.served, 10_000);
    assert_eq!(images.served, report.completed);
    eprintln!("{} sessions in {:?}: {report:?}", report.sessions, start.elapsed());
}

#[test]
fn hostile_settings_stay_safe() {
    for seed in 0..4 {
        let cfg = SimConfig {
            seed,
            workers: 9,
            target_sessions: 300,
            images: 40,
            disconnect_prob: 0.05,
            misbehave_prob: 0.3,
            silence_prob: 0.01,
        };
        let report = simulate(&cfg);
        assert!(report.violations.is_empty(), "seed {seed}: {:#?}", report.violations);
    }
}

#[test]
fn image_scarcity_never_double_serves() {
    let cfg = SimConfig { seed: 3, workers: 20, target_sessions: 500, images: 5, ..SimConfig::default() };
    let report = simulate(&cfg);
    assert!(report.violations.is_empty(), "{:#?}", report.violations);
    assert!(report.completed <= 5);
}
