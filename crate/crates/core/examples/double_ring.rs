//! Run the double-ring comparison and print the report.
//!
//! Arguments are `key=value` config assignments; `seeds=0,1,2` runs several seeds.
//!
//! `cargo run --release -p confens --example double_ring -- data-seed=0 seeds=0,1,2`

use confens::config::RunConfig;
use confens::experiment::run_experiment;

fn main() -> Result<(), confens::Error> {
    let mut config = RunConfig::default();
    let mut seeds = vec![0u64];
    for arg in std::env::args().skip(1) {
        let (key, value) = arg.split_once('=').unwrap_or((arg.as_str(), ""));
        if key == "seeds" {
            seeds = value.split(',').filter_map(|s| s.parse().ok()).collect();
        } else {
            config.set(key, value)?;
        }
    }
    for seed in seeds {
        config.seed = seed;
        let outcome = run_experiment(&config)?;
        println!("== seed {seed}\n{}", outcome.report.to_text());
    }
    Ok(())
}
