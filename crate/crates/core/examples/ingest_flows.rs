//! Parse a small flow log and compare the two unknown-traffic policies.

use std::io::Cursor;

use microseg::ingest::{filter_flows, parse_flow_log, MemberScope, ParseOptions, UnknownPolicy};

const LOG: &str = "\
timestamp,src_addr,dst_addr,protocol,dst_port,packets,bytes
1700000000,10.0.0.5,10.0.0.9,TCP,443,12,9000
1700000010,10.0.0.5,192.0.2.53,UDP,53,1,80
1700000020,10.0.0.9,8.8.8.8,UDP,53,1,80
1700000030,10.0.0.9,10.0.0.5,ICMP,0,4,240
garbage line
";

const SCOPE: &str = "\
member 10.0.0.0/24
object 192.0.2.0/24 dns-resolvers
";

fn main() -> microseg::Result<()> {
    let parsed = parse_flow_log(Cursor::new(LOG), ParseOptions::default())?;
    println!("{} records, {} malformed lines", parsed.records.len(), parsed.malformed_lines.len());
    let scope = MemberScope::parse(SCOPE)?;
    for policy in [UnknownPolicy::DropUnknown, UnknownPolicy::MapToObjects] {
        let (kept, report) = filter_flows(parsed.records.clone(), &scope, policy);
        println!("{policy}: {report:?}");
        for flow in kept {
            println!("  {:?} -> {:?} {}", flow.src, flow.dst, flow.record.protocol);
        }
    }
    Ok(())
}
