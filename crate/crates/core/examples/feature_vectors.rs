//! Window a synthetic log and print the encoded sample of one endpoint.

use microseg::features::{build_schema, encode_all, standardize, windowize};
use microseg::ingest::{filter_flows, UnknownPolicy};
use microseg::synth::{generate, ScenarioSpec};

fn main() -> microseg::Result<()> {
    let data = generate(&ScenarioSpec::distinct_profiles(4, 2, 3, 10, 0.0, 0.2, 1))?;
    let (flows, _) = filter_flows(data.records, &data.scope, UnknownPolicy::MapToObjects);
    let schema = build_schema(&flows, 16)?;
    println!(
        "protocols {:?}\nports {:?}\nobjects {:?}\ndimension {}",
        schema.protocol_vocab, schema.port_vocab, schema.peer_vocab, schema.dimension
    );
    let raw = encode_all(&windowize(&flows, 3600)?, &schema);
    let first = &raw.rows[0];
    println!("{} window {}: {:?}", first.endpoint, first.window_index, first.values);
    let z = standardize(&raw)?;
    println!("standardized: {:?}", z.rows[0].values.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    Ok(())
}
