use groupsbl::channel::{draw_scenario, simulate_observations, synthesize_channels, AngleLayout, GainModel, GroupScenario};
use groupsbl::harness::{
    aggregate, emit_csv, grouping_accuracy, nmse, read_aggregate, read_raw, run_monte_carlo, ExperimentConfig, Method,
};
use groupsbl::steering::ArrayGeometry;
use groupsbl::vbi::{run_inference, Hyperparams, Mode};

const SMALL: &str = "
# desk-sized smoke run
geometry = ula 8
users = 4
subpaths = 4
pilots = 6
max_iters = 20
sweep = pilots
values = 4, 6
methods = proposed, group_only, common, individual_sbl, joint_omp, genie
trials = 3
seed = 11
";

#[test]
fn config_to_csv_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.cfg");
    std::fs::write(&path, SMALL).unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.values, vec![4.0, 6.0]);
    assert_eq!(cfg.methods.len(), Method::ALL.len());

    let records = run_monte_carlo(&cfg).unwrap();
    assert_eq!(records.len(), 2 * 3 * Method::ALL.len());
    assert!(records.iter().all(|r| !r.failed()), "{:?}", records.iter().find(|r| r.failed()));
    assert!(records.iter().all(|r| r.nmse.is_some_and(f64::is_finite)));
    for r in &records {
        let same_trial = records.iter().filter(|o| o.value == r.value && o.trial == r.trial);
        assert!(same_trial.clone().all(|o| o.checksum == r.checksum && o.seed == r.seed));
        let has_acc = matches!(r.method, Method::Proposed | Method::GroupOnly | Method::Common);
        assert_eq!(r.accuracy.is_some(), has_acc, "{:?}", r.method);
    }

    let files = emit_csv(&records, cfg.sweep.name(), dir.path().join("out")).unwrap();
    let back = read_raw(&files.raw).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!((a.method, a.trial, a.seed, a.checksum), (b.method, b.trial, b.seed, b.checksum));
        assert_eq!(a.nmse, b.nmse);
    }
    assert_eq!(read_aggregate(&files.aggregate).unwrap(), aggregate(&records));
}

#[test]
fn on_grid_scenario_end_to_end() {
    let geometry = ArrayGeometry::ula(16, 0.5).unwrap();
    let scenario = GroupScenario {
        n_groups: 2,
        n_users: 6,
        shared_clusters: 2,
        subpaths_per_cluster: 1,
        layout: AngleLayout::OnGrid { grid_points: 16 },
        gains: GainModel::UnitModulus,
        seed: 21,
        ..GroupScenario::default()
    };
    let real = draw_scenario(&scenario, &geometry).unwrap();
    let h = synthesize_channels(&real, &geometry);
    let obs = simulate_observations(&h, 16, 30.0, 1.0, 5).unwrap();
    let hyper = Hyperparams {
        mode: Mode::GroupOnly,
        init_seed: 2,
        ..Hyperparams::default()
    };
    let out = run_inference(&hyper, &obs, &geometry).unwrap();
    let err = nmse(&out.summary.channels, &h).unwrap();
    assert!(err < 1e-2, "nmse {err}");
    let acc = grouping_accuracy(&out.summary.assignments, &real.group_labels());
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn planar_array_with_refinement_runs_clean() {
    let text = "
geometry = rect 3 3
users = 4
subpaths = 2
shared_clusters = 2
pilots = 8
offgrid = on
max_iters = 10
sweep = snr_db
values = 5
methods = proposed, individual_sbl, genie
trials = 2
";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let records = run_monte_carlo(&cfg).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| !r.failed() && r.nmse.is_some_and(f64::is_finite)));
}
