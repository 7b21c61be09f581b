//! Add a new endpoint that behaves like an existing one and retrain.

use microseg::ingest::{filter_flows, UnknownPolicy};
use microseg::pipeline::{retrain_with_new_endpoints, GroupingParams};
use microseg::synth::{generate, ScenarioSpec};

fn main() -> microseg::Result<()> {
    let data = generate(&ScenarioSpec::disjoint_profiles(3, 3, 6, 8, 2))?;
    let (flows, _) = filter_flows(data.records, &data.scope, UnknownPolicy::DropUnknown);
    let original = "10.0.0.4".parse().unwrap();
    let newcomer = "10.0.2.1".parse().unwrap();
    let copies: Vec<_> = flows
        .iter()
        .filter(|f| f.record.src_addr == original || f.record.dst_addr == original)
        .map(|f| {
            let mut r = f.record.clone();
            for addr in [&mut r.src_addr, &mut r.dst_addr] {
                if *addr == original {
                    *addr = newcomer;
                }
            }
            r
        })
        .collect();
    let (added, _) = filter_flows(copies, &data.scope, UnknownPolicy::DropUnknown);

    let r = retrain_with_new_endpoints(&flows, &added, &GroupingParams::default())?;
    println!("groups before {}, after {}", r.before.groups.suggested_qty, r.after.groups.suggested_qty);
    println!("added {:?}, co-membership changed for {:?}", r.diff.added, r.diff.changed);
    println!(
        "{newcomer} joined group {:?} with {original} (group {:?})",
        r.after.groups.group_of(newcomer),
        r.after.groups.group_of(original)
    );
    Ok(())
}
