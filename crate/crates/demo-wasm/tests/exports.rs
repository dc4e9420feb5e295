use p2p_shapley_demo::{error_curve_json, payoffs_json, schedule_json, CURVE_SAMPLES};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn exact_payoffs_add_up() {
    let v = parse(payoffs_json(6, 0.5, 0.5, 3, 100).unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let total: f64 = rows.iter().map(|r| r["payoff"].as_f64().unwrap()).sum();
    assert!((total - v["summary"]["grand_value"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(v["summary"]["mode"], "exact");
}

#[test]
fn large_communities_are_estimated() {
    let v = parse(payoffs_json(14, 0.4, 0.4, 1, 60).unwrap());
    assert_eq!(v["summary"]["mode"], "coalitional-stratified");
    assert!(payoffs_json(0, 0.5, 0.5, 1, 100).is_err());
    assert!(payoffs_json(41, 0.5, 0.5, 1, 100).is_err());
    assert!(payoffs_json(5, 1.5, 0.5, 1, 100).is_err());
}

#[test]
fn error_curve_shape() {
    let v = parse(error_curve_json(5, 0.6, 0.6, 2, 2).unwrap());
    let series = v["series"].as_array().unwrap();
    assert_eq!(series.len(), 3);
    for s in series {
        let mae = s["relative_mae"].as_array().unwrap();
        assert_eq!(mae.len(), CURVE_SAMPLES.len());
        assert!(mae.iter().all(|x| x.as_f64().unwrap() >= 0.0));
    }
    // At 400 samples per player every stratum of a 5-player game is enumerated.
    assert!(series[2]["relative_mae"][4].as_f64().unwrap() < 1e-12);
    assert!(error_curve_json(11, 0.5, 0.5, 1, 1).is_err());
}

#[test]
fn pooling_never_costs_more() {
    let v = parse(schedule_json(8, 0.5, 0.5, 4).unwrap());
    assert_eq!(v["hour"].as_array().unwrap().len(), 24);
    assert!(v["pooled_cost"].as_f64().unwrap() <= v["standalone_cost"].as_f64().unwrap() + 1e-9);
    let idle = v["idle_net_kwh"].as_array().unwrap();
    let pooled = v["pooled_net_kwh"].as_array().unwrap();
    let battery = v["battery_kwh"].as_array().unwrap();
    for t in 0..24 {
        let want = idle[t].as_f64().unwrap() + battery[t].as_f64().unwrap();
        assert!((pooled[t].as_f64().unwrap() - want).abs() < 1e-6);
    }
}
