use std::fs;

use hrsi_causal::causalgraph::{expected_hrsi_graph, read_graph, shd};
use hrsi_causal::citest::CiTestKind;
use hrsi_causal::features::simulate_features;
use hrsi_causal::hrsim::WorldConfig;
use hrsi_causal::pipeline::{list_batches, run_pipeline, PipelineConfig, Source};
use hrsi_causal::timeseries::{read_csv, write_csv};
use hrsi_causal::{run_discovery, DiscoveryConfig, Method};

fn config(source: Source, pool: std::path::PathBuf) -> PipelineConfig {
    PipelineConfig {
        source,
        rate_hz: 10.0,
        batch_len: 1500,
        pool_dir: pool,
        discovery: DiscoveryConfig::new(Method::Pcmci, CiTestKind::ParCorr),
        max_batches: None,
        realtime: false,
    }
}

#[test]
fn simulated_pipeline_matches_direct_discovery() {
    let dir = tempfile::tempdir().unwrap();
    let world = WorldConfig::default().with_seed(3);
    let cfg = config(
        Source::Simulate {
            world: world.clone(),
            duration_s: 300.0,
        },
        dir.path().join("pool"),
    );
    let summary = run_pipeline(&cfg).unwrap();
    assert_eq!(summary.batches_produced, 2);
    assert_eq!(summary.batches_processed, 2);
    assert_eq!(summary.rows_collected, 3000);

    let batches = list_batches(&cfg.pool_dir).unwrap();
    let (_, first) = &batches[0];
    let stored = read_graph(first.with_extension("graph")).unwrap();
    let direct = run_discovery(&read_csv(first).unwrap(), &cfg.discovery).unwrap().graph;
    assert_eq!(shd(&stored, &direct, true).unwrap(), 0);
    assert_eq!(summary.results[0].shd, Some(shd(&stored, &expected_hrsi_graph(), false).unwrap()));
    assert!(first.with_extension("dot").exists());
    assert!(first.with_extension("timing").exists());
}

#[test]
fn replay_reproduces_simulated_batch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, batch) = simulate_features(&WorldConfig::default().with_seed(5), 150.0, 10.0).unwrap();
    let src = dir.path().join("session.csv");
    write_csv(&batch, &src).unwrap();

    let cfg = config(Source::Replay { path: src }, dir.path().join("pool"));
    let summary = run_pipeline(&cfg).unwrap();
    assert_eq!(summary.batches_processed, 1);
    let (_, path) = &list_batches(&cfg.pool_dir).unwrap()[0];
    let pooled = read_csv(path).unwrap();
    assert_eq!(pooled.len(), 1500);
    assert_eq!(pooled.variables(), batch.variables());

    // Nothing but finished artefacts is left in the pool.
    for entry in fs::read_dir(&cfg.pool_dir).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(!name.starts_with('.'), "leftover temp file {name}");
    }
}
