use std::time::Duration;

use northrt::harness::{
    generate_preset, read_records, run_experiment, run_to_csv, solve, write_records, ExperimentConfig, Method,
    MethodSettings, Preset, PresetParams, CSV_HEADER,
};
use northrt::oracle::{build_oracle, OracleKind, SchedulabilityOracle};
use northrt::problem::Problem;

fn energy_config(n: usize, seeds: u64, methods: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{ "preset": "energy-rm", "oracle": "rta", "n": {n}, "utilization": 0.6,
             "seeds": {{ "from": 0, "to": {} }}, "methods": {methods}, "sa_iterations": 5000 }}"#,
        seeds - 1
    ))
    .unwrap()
}

#[test]
fn ten_seeds_two_methods_give_twenty_rows() {
    let rows = run_experiment(&energy_config(5, 10, r#"["north", "sa"]"#)).unwrap();
    assert_eq!(rows.len(), 20);
    for seed in 0..10 {
        let names: Vec<&str> = rows.iter().filter(|r| r.seed == seed).map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["north", "sa"]);
    }
    assert!(rows.iter().filter(|r| r.method == "north").all(|r| r.feasible && !r.timeout));
    assert!(rows.iter().all(|r| r.obj_final <= r.obj_init));
    assert!(rows.iter().all(|r| r.gap_pct.is_some_and(|g| g >= 0.0)));
}

#[test]
fn repeated_runs_agree_apart_from_wall_time() {
    let cfg = energy_config(3, 3, r#"["north", "northplus", "sa", "brute"]"#);
    let mut a = run_experiment(&cfg).unwrap();
    let mut b = run_experiment(&ExperimentConfig { threads: Some(1), ..cfg }).unwrap();
    for r in a.iter_mut().chain(b.iter_mut()) {
        r.wall_ms = 0.0;
    }
    assert_eq!(a, b);
}

#[test]
fn csv_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let rows = run_to_csv(&energy_config(5, 2, r#"["north"]"#), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 3);
    assert_eq!(read_records(text.as_bytes()).unwrap(), rows);

    let mut buf = Vec::new();
    write_records(&mut buf, &rows).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
}

#[test]
fn timeout_keeps_the_initial_solution() {
    let ts = generate_preset(Preset::EnergyRm, &PresetParams::new(8, 0.7), 4).unwrap();
    let p = Problem::from_taskset(&ts).unwrap();
    let mut settings = MethodSettings::for_taskset(&ts, 4);
    settings.time_limit = Some(Duration::from_nanos(1));
    for method in [Method::North, Method::NorthPlus, Method::Sa] {
        let mut o = build_oracle(&OracleKind::Rta, &p).unwrap();
        let out = solve(&p, method, &mut o, &settings).unwrap();
        assert!(out.timeout, "{method}");
        assert_eq!(out.obj_final, out.obj_init);
        assert_eq!(out.x, p.upper());
        assert!(out.feasible);
    }
}

#[test]
fn reported_queries_match_the_oracle_counter() {
    for (preset, method) in [
        (Preset::EnergyRm, Method::North),
        (Preset::EnergyRm, Method::Sa),
        (Preset::EnergyRm, Method::Brute),
        (Preset::ControlDag, Method::North),
        (Preset::ControlDag, Method::NorthPlus),
    ] {
        let params = PresetParams { n: 3, utilization: 0.5, nodes_per_dag: (1, 4) };
        let ts = generate_preset(preset, &params, 12).unwrap();
        let p = Problem::from_taskset(&ts).unwrap();
        let mut settings = MethodSettings::for_preset(preset, 12);
        settings.sa.iterations = 3000;
        settings.brute_resolution = 30;
        let mut o = build_oracle(&preset.default_oracle(), &p).unwrap();
        let out = solve(&p, method, &mut o, &settings).unwrap();
        assert_eq!(out.oracle_calls, o.query_count(), "{preset} {method}");
        assert!(out.oracle_calls > 0);
    }
}

#[test]
fn north_rows_are_feasible_on_every_preset() {
    for preset in Preset::ALL {
        let cfg = ExperimentConfig::from_json(&format!(
            r#"{{ "preset": "{preset}", "n": 3, "utilization": {}, "nodes_per_dag": [1, 5],
                 "seeds": {{ "from": 1, "to": 3 }}, "methods": ["north", "northplus"] }}"#,
            0.25 * preset.cores() as f64
        ))
        .unwrap();
        for row in run_experiment(&cfg).unwrap() {
            assert!(row.feasible, "{preset} {row:?}");
            assert!(row.elim_rounds <= row.n.max(1) * 20, "{row:?}");
        }
    }
}

#[test]
fn bad_configs_are_rejected_with_the_field_name() {
    let err = ExperimentConfig::from_json(
        r#"{ "preset": "energy-rm", "n": 5, "utilization": 0.5, "seeds": { "from": 3, "to": 1 }, "methods": ["sa"] }"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("seeds"), "{err}");
    let err = ExperimentConfig::from_json(
        r#"{ "preset": "energy-rm", "n": 5, "utilization": 0.5, "seeds": { "from": 0, "to": 1 }, "methods": ["anneal"] }"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("anneal"), "{err}");
}
