use std::collections::BTreeSet;

use astra_core::experiments::{astra_sweep, AstraSweepConfig};
use astra_core::market_data::{run_backtest, synth_caps, BacktestConfig, SynthConfig};
use serde_json::Value;

fn schema(name: &str) -> Value {
    let path = format!("{}/../../docs/schemas/{name}.schema.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn astra_report_matches_schema() {
    let cfg = AstraSweepConfig {
        n_grid: vec![10],
        paths_per_n: 2,
        ..Default::default()
    };
    let report = serde_json::to_value(astra_sweep(&cfg).unwrap()).unwrap();
    let s = schema("astra-report");
    assert_eq!(keys(&report), keys(&s["properties"]));
    assert_eq!(report["schema_version"], s["properties"]["schema_version"]["const"]);
    assert_eq!(
        keys(&report["records"][0]),
        keys(&s["properties"]["records"]["items"]["properties"])
    );
    assert_eq!(keys(&report["config"]), keys(&schema("astra-config")["properties"]));
}

#[test]
fn defaults_match_schema() {
    let cfg = serde_json::to_value(AstraSweepConfig::default()).unwrap();
    for (k, p) in schema("astra-config")["properties"].as_object().unwrap() {
        assert_eq!(&cfg[k], &p["default"], "{k}");
    }
}

#[test]
fn backtest_summary_matches_schema() {
    let table = synth_caps(&SynthConfig {
        n: 20,
        days: 22,
        ..Default::default()
    })
    .unwrap();
    let summary = serde_json::to_value(run_backtest(&table, &BacktestConfig::default()).unwrap().summary).unwrap();
    let s = schema("backtest-summary");
    assert_eq!(keys(&summary), keys(&s["properties"]));
    assert_eq!(keys(&summary["config"]), keys(&s["properties"]["config"]["properties"]));
    assert_eq!(
        keys(&summary["periods"][0]),
        keys(&s["properties"]["periods"]["items"]["properties"])
    );
    assert_eq!(keys(&summary["cosine"]), keys(&s["properties"]["cosine"]["properties"]));
}
