//! Grouping quality and run time on a 300-endpoint, 100-group synthetic
//! scenario, under both unknown-traffic policies.
//!
//! cargo run --release --example synthetic_benchmark [seed]

use microseg::ingest::{filter_flows, UnknownPolicy};
use microseg::metrics::{evaluate, EVAL_REPORT_HEADER};
use microseg::pipeline::{group_flows, GroupingParams};
use microseg::synth::{generate, ScenarioSpec};

fn main() -> microseg::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let params = GroupingParams {
        seed,
        ..GroupingParams::default()
    };
    println!("{EVAL_REPORT_HEADER}");
    for (name, object_share, policy) in [
        ("members_only", 0.0, UnknownPolicy::DropUnknown),
        ("objects_dropped", 0.1, UnknownPolicy::DropUnknown),
        ("objects_mapped", 0.1, UnknownPolicy::MapToObjects),
    ] {
        let spec = ScenarioSpec::distinct_profiles(100, 3, 24, 20, 0.05, object_share, seed);
        let data = generate(&spec)?;
        let (flows, _) = filter_flows(data.records, &data.scope, policy);
        let outcome = group_flows(&flows, &params)?;
        let report = evaluate(&outcome.groups, &data.ground_truth.labels, outcome.run_time_seconds)?;
        println!("{}", report.csv_row(name));
    }
    Ok(())
}
