use std::path::{Path, PathBuf};

use streammon::config::{load_config, RunConfig};
use streammon::model::MetricKind;
use streammon::runner::{run_replay, run_stats, ChainPaths};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn config(out: &Path) -> RunConfig {
    let mut c = load_config(&fixture("replay.toml")).unwrap();
    c.output_dir = out.into();
    c
}

#[test]
fn arbitrum_fixture_has_constant_price() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_replay(&fixture("arbitrum_1000.jsonl"), &config(dir.path())).unwrap();
    let arb = report.chain("arbitrum").unwrap();
    assert_eq!(arb.normalized_records, 1_000);
    let gas = arb.summary(MetricKind::GasPriceGwei).unwrap();
    assert_eq!((gas.median, gas.iqr), (0.01, 0.0));
    // chains without input still get empty outputs
    assert_eq!(report.chain("ethereum").unwrap().raw_records, 0);

    let series = ChainPaths::new(dir.path(), "arbitrum").series(MetricKind::GasPriceGwei);
    let stats = run_stats(&series, &dir.path().join("stats.json")).unwrap();
    assert_eq!(stats.stats, *gas);
}

#[test]
fn four_chain_fixture_keeps_the_volatility_structure() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_replay(&fixture("four_chains.jsonl"), &config(dir.path())).unwrap();
    let iqr = |chain: &str, kind| report.chain(chain).unwrap().summary(kind).unwrap().iqr;
    for kind in MetricKind::ALL {
        for rollup in ["arbitrum", "op-mainnet", "linea"] {
            assert!(iqr("ethereum", kind) > iqr(rollup, kind), "{kind} {rollup}");
        }
    }
    assert_eq!(iqr("arbitrum", MetricKind::GasPriceGwei), 0.0);
}
