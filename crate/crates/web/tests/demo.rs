use northrt_web::{control_priorities, energy_compare, example_north, example_region};

#[test]
fn region_marks_the_deadline_of_the_first_task() {
    let v = example_region(7, 2).unwrap();
    let cells: Vec<bool> = v["feasible"].as_array().unwrap().iter().map(|c| c.as_bool().unwrap()).collect();
    // c1 = 4, 5, 6 meet D1 = 6; 7..10 do not. Bottom row has c2 = 1.
    assert_eq!(&cells[..7], &[true, true, true, false, false, false, false]);
    // Top row has c2 = 40, never schedulable next to c1 ≥ 4.
    assert!(cells[7..].iter().all(|c| !c));
    assert!(example_region(1, 5).is_err());
}

#[test]
fn example_path_ends_near_the_corner() {
    let v = example_north(4.0, 1.0).unwrap();
    let path = v["path"].as_array().unwrap();
    let last: Vec<f64> = path.last().unwrap()["x"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((last[0] - 6.0).abs() < 0.02 && (last[1] - 15.9).abs() < 0.1, "{last:?}");
    let objectives: Vec<f64> = path.iter().map(|p| p["objective"].as_f64().unwrap()).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(v["rounds"][0]["eliminated"], serde_json::json!([0]));
    assert!(example_north(9.0, 1.0).is_err());
}

#[test]
fn energy_comparison_reports_both_methods() {
    let v = energy_compare(4, 0.6, 3, 2000).unwrap();
    let north = v["north"]["objective"].as_f64().unwrap();
    let sa = v["sa"]["objective"].as_f64().unwrap();
    let start = v["north"]["trace"][0].as_f64().unwrap();
    assert!(north <= start && sa <= start);
    assert_eq!(v["periods"].as_array().unwrap().len(), 4);
    assert!(energy_compare(0, 0.6, 3, 10).is_err());
}

#[test]
fn priority_demo_never_loses_to_fixed_priorities() {
    let v = control_priorities(3, 11).unwrap();
    let north = v["north"]["objective"].as_f64().unwrap();
    let plus = v["northplus"]["objective"].as_f64().unwrap();
    assert!(plus <= north * (1.0 + 1e-12), "{plus} vs {north}");
    let mut order: Vec<u64> = v["northplus"]["priorities"].as_array().unwrap().iter().map(|p| p.as_u64().unwrap()).collect();
    order.sort();
    assert_eq!(order, (0..v["tasks"].as_u64().unwrap()).collect::<Vec<_>>());
}
