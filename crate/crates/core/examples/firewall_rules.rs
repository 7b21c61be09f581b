//! Learn groups on a synthetic log, then derive and audit the allow list.

use microseg::grouping::KSpec;
use microseg::ingest::{filter_flows, FlowRecord, Protocol, UnknownPolicy};
use microseg::pipeline::{group_flows, synthesize_rules, GroupingParams};
use microseg::rules::match_flow;
use microseg::synth::{generate, ScenarioSpec};

fn main() -> microseg::Result<()> {
    let data = generate(&ScenarioSpec::distinct_profiles(3, 2, 4, 10, 0.0, 0.15, 5))?;
    let (flows, _) = filter_flows(data.records, &data.scope, UnknownPolicy::MapToObjects);
    let params = GroupingParams {
        k: KSpec::Absolute(3),
        ..GroupingParams::default()
    };
    let outcome = group_flows(&flows, &params)?;
    let (ruleset, hygiene) = synthesize_rules(&flows, &outcome.groups, &data.scope)?;
    print!("{}", ruleset.to_csv());
    print!("{}", hygiene.render(&ruleset));

    let unseen = FlowRecord::new(0, flows[0].record.src_addr, flows[0].record.dst_addr, Protocol::new("TCP"), 3389, 1, 60);
    println!("unseen RDP flow: {}", match_flow(&ruleset, &outcome.groups, &data.scope, &unseen));
    Ok(())
}
