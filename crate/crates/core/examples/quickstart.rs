//! Small ASTRA sweep and a synthetic backtest.
//!
//! ```text
//! cargo run --release --example quickstart
//! ```

use astra_core::experiments::{astra_sweep, AstraSweepConfig};
use astra_core::market_data::{run_backtest, synth_caps, BacktestConfig, SynthConfig};

fn main() -> astra_core::Result<()> {
    let cfg = AstraSweepConfig {
        n_grid: vec![50, 200],
        paths_per_n: 20,
        seed: 1,
        ..Default::default()
    };
    for r in astra_sweep(&cfg)?.records {
        println!(
            "n={:<4} horizon={:.3} c={:.3} median log V={:>8.3} q_hat={:.3} floor violations={}",
            r.n, r.delta_n, r.c, r.median_log_v, r.q_hat, r.floor_violations
        );
    }

    let table = synth_caps(&SynthConfig {
        n: 200,
        seed: 1,
        ..Default::default()
    })?;
    let s = run_backtest(&table, &BacktestConfig::default())?.summary;
    println!(
        "backtest over {} days: cosine {:.4}, equal {:.4}, diversity {:.4}, market {:.1e}",
        s.dates, s.cosine.end_log_v, s.equal.end_log_v, s.diversity.end_log_v, s.market.end_log_v
    );
    Ok(())
}
