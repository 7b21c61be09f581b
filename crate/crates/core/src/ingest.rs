//! Flow log parsing, peer classification and the unknown-traffic policy.
//!
//! A flow log is comma-separated text with the columns
//! `timestamp,src_addr,dst_addr,protocol,dst_port,packets,bytes`. A header line
//! is optional and is recognised by a non-numeric first field.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FLOW_LOG_HEADER: &str = "timestamp,src_addr,dst_addr,protocol,dst_port,packets,bytes";

/// Upper-cased protocol token. Only TCP and UDP carry destination ports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Protocol(String);

impl Protocol {
    pub fn new(token: &str) -> Self {
        Protocol(token.trim().to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn has_ports(&self) -> bool {
        matches!(self.0.as_str(), "TCP" | "UDP")
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One observed communication event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRecord {
    pub timestamp: i64,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub protocol: Protocol,
    pub dst_port: u16,
    pub packet_count: u64,
    pub byte_count: u64,
}

impl FlowRecord {
    pub fn new(
        timestamp: i64,
        src_addr: Ipv4Addr,
        dst_addr: Ipv4Addr,
        protocol: Protocol,
        dst_port: u16,
        packet_count: u64,
        byte_count: u64,
    ) -> Self {
        let dst_port = if protocol.has_ports() { dst_port } else { 0 };
        FlowRecord {
            timestamp,
            src_addr,
            dst_addr,
            protocol,
            dst_port,
            packet_count,
            byte_count,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.timestamp,
            self.src_addr,
            self.dst_addr,
            self.protocol,
            self.dst_port,
            self.packet_count,
            self.byte_count
        )
    }
}

impl FromStr for FlowRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(format!("expected 7 fields, found {}", fields.len()));
        }
        let timestamp = fields[0]
            .parse::<i64>()
            .map_err(|e| format!("timestamp {:?}: {e}", fields[0]))?;
        let src_addr = fields[1]
            .parse::<Ipv4Addr>()
            .map_err(|e| format!("src_addr {:?}: {e}", fields[1]))?;
        let dst_addr = fields[2]
            .parse::<Ipv4Addr>()
            .map_err(|e| format!("dst_addr {:?}: {e}", fields[2]))?;
        if fields[3].is_empty() || fields[3].contains(char::is_whitespace) {
            return Err(format!("protocol {:?}", fields[3]));
        }
        let protocol = Protocol::new(fields[3]);
        let dst_port = fields[4]
            .parse::<u16>()
            .map_err(|e| format!("dst_port {:?}: {e}", fields[4]))?;
        let packet_count = fields[5]
            .parse::<u64>()
            .map_err(|e| format!("packets {:?}: {e}", fields[5]))?;
        if packet_count == 0 {
            return Err("packets must be at least 1".to_string());
        }
        let byte_count = fields[6]
            .parse::<u64>()
            .map_err(|e| format!("bytes {:?}: {e}", fields[6]))?;
        // Portless protocols (ICMP and friends) often log type/code in the
        // port column; the record keeps 0.
        Ok(FlowRecord::new(
            timestamp,
            src_addr,
            dst_addr,
            protocol,
            dst_port,
            packet_count,
            byte_count,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Any malformed line is fatal.
    pub strict: bool,
    /// Fraction of malformed data lines above which the input is rejected.
    pub max_malformed_fraction: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            strict: false,
            max_malformed_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<FlowRecord>,
    /// Data lines seen (header and blank lines excluded).
    pub lines_read: usize,
    /// 1-based line numbers of malformed lines.
    pub malformed_lines: Vec<usize>,
}

/// Parse a flow log, one record per well-formed line in input order.
pub fn parse_flow_log<R: BufRead>(input: R, options: ParseOptions) -> Result<ParsedLog> {
    let mut parsed = ParsedLog::default();
    let mut seen_content = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<flow log>", e))?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            let first = trimmed.split(',').next().unwrap_or("").trim();
            if first.parse::<i64>().is_err() {
                continue;
            }
        }
        parsed.lines_read += 1;
        match trimmed.parse::<FlowRecord>() {
            Ok(record) => parsed.records.push(record),
            Err(reason) => {
                if options.strict {
                    return Err(Error::Ingest(format!("line {line_no}: {reason}")));
                }
                parsed.malformed_lines.push(line_no);
            }
        }
    }
    let malformed = parsed.malformed_lines.len();
    if parsed.lines_read > 0
        && malformed as f64 > options.max_malformed_fraction * parsed.lines_read as f64
    {
        return Err(Error::CorruptInput {
            malformed,
            lines: parsed.lines_read,
        });
    }
    Ok(parsed)
}

/// Member network definition plus the ordered table of named external objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberScope {
    member_cidrs: Vec<Ipv4Net>,
    object_table: Vec<(Ipv4Net, String)>,
}

impl MemberScope {
    pub fn new(member_cidrs: Vec<Ipv4Net>, object_table: Vec<(Ipv4Net, String)>) -> Result<Self> {
        if member_cidrs.is_empty() {
            return Err(Error::Ingest("scope has no member CIDRs".into()));
        }
        let member_cidrs: Vec<Ipv4Net> = member_cidrs.iter().map(Ipv4Net::trunc).collect();
        let object_table: Vec<(Ipv4Net, String)> = object_table
            .into_iter()
            .map(|(net, name)| (net.trunc(), name))
            .collect();
        for (i, (earlier, earlier_name)) in object_table.iter().enumerate() {
            if earlier_name.is_empty() || earlier_name.contains(char::is_whitespace) {
                return Err(Error::Ingest(format!("invalid object name {earlier_name:?}")));
            }
            for (later, later_name) in &object_table[i + 1..] {
                if earlier != later && earlier.contains(later) {
                    return Err(Error::Ingest(format!(
                        "object {earlier} ({earlier_name}) shadows later, narrower {later} ({later_name})"
                    )));
                }
            }
        }
        Ok(MemberScope {
            member_cidrs,
            object_table,
        })
    }

    /// Parse the line-oriented scope format (`member <CIDR>`, `object <CIDR> <name>`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut members = Vec::new();
        let mut objects = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Ingest(format!("scope line {}: {raw:?}", idx + 1));
            match parts.as_slice() {
                ["member", cidr] => members.push(cidr.parse::<Ipv4Net>().map_err(|_| bad())?),
                ["object", cidr, name] => objects.push((
                    cidr.parse::<Ipv4Net>().map_err(|_| bad())?,
                    (*name).to_string(),
                )),
                _ => return Err(bad()),
            }
        }
        MemberScope::new(members, objects)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for net in &self.member_cidrs {
            out.push_str(&format!("member {net}\n"));
        }
        for (net, name) in &self.object_table {
            out.push_str(&format!("object {net} {name}\n"));
        }
        out
    }

    pub fn member_cidrs(&self) -> &[Ipv4Net] {
        &self.member_cidrs
    }

    pub fn object_table(&self) -> &[(Ipv4Net, String)] {
        &self.object_table
    }

    pub fn is_member(&self, addr: Ipv4Addr) -> bool {
        self.member_cidrs.iter().any(|net| net.contains(&addr))
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.object_table.iter().any(|(_, n)| n == name)
    }

    /// All CIDR blocks registered under an object name.
    pub fn object_cidrs(&self, name: &str) -> Vec<Ipv4Net> {
        self.object_table
            .iter()
            .filter(|(_, n)| n == name)
            .map(|(net, _)| *net)
            .collect()
    }

    pub fn classify(&self, addr: Ipv4Addr) -> PeerClass {
        classify_peer(addr, self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PeerClass {
    Member(Ipv4Addr),
    NetworkObject(String),
    Unknown,
}

impl PeerClass {
    pub fn is_member(&self) -> bool {
        matches!(self, PeerClass::Member(_))
    }
}

/// Member CIDRs are consulted first, then the object table in order.
pub fn classify_peer(addr: Ipv4Addr, scope: &MemberScope) -> PeerClass {
    if scope.is_member(addr) {
        return PeerClass::Member(addr);
    }
    scope
        .object_table
        .iter()
        .find(|(net, _)| net.contains(&addr))
        .map(|(_, name)| PeerClass::NetworkObject(name.clone()))
        .unwrap_or(PeerClass::Unknown)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Keep only member-to-member traffic.
    DropUnknown,
    /// Also keep member traffic whose other side is a named network object.
    MapToObjects,
}

impl fmt::Display for UnknownPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnknownPolicy::DropUnknown => "drop_unknown",
            UnknownPolicy::MapToObjects => "map_to_objects",
        })
    }
}

impl FromStr for UnknownPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "drop_unknown" => Ok(UnknownPolicy::DropUnknown),
            "map_to_objects" => Ok(UnknownPolicy::MapToObjects),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// A kept record with the classification of both peers attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedFlow {
    pub record: FlowRecord,
    pub src: PeerClass,
    pub dst: PeerClass,
}

impl ClassifiedFlow {
    pub fn classify(record: FlowRecord, scope: &MemberScope) -> Self {
        let src = classify_peer(record.src_addr, scope);
        let dst = classify_peer(record.dst_addr, scope);
        ClassifiedFlow { record, src, dst }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub records_kept: usize,
    pub records_dropped_unknown: usize,
    pub records_mapped_to_objects: usize,
    pub distinct_endpoints: usize,
}

/// Apply the unknown-traffic policy, preserving input order.
pub fn filter_flows(
    records: Vec<FlowRecord>,
    scope: &MemberScope,
    policy: UnknownPolicy,
) -> (Vec<ClassifiedFlow>, IngestReport) {
    let mut report = IngestReport {
        records_read: records.len(),
        ..IngestReport::default()
    };
    let mut endpoints = BTreeSet::new();
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        let flow = ClassifiedFlow::classify(record, scope);
        let keep = match policy {
            UnknownPolicy::DropUnknown => flow.src.is_member() && flow.dst.is_member(),
            UnknownPolicy::MapToObjects => {
                let side_ok = |c: &PeerClass| !matches!(c, PeerClass::Unknown);
                (flow.src.is_member() || flow.dst.is_member())
                    && side_ok(&flow.src)
                    && side_ok(&flow.dst)
            }
        };
        if !keep {
            report.records_dropped_unknown += 1;
            continue;
        }
        for class in [&flow.src, &flow.dst] {
            if let PeerClass::Member(addr) = class {
                endpoints.insert(*addr);
            }
        }
        if matches!(flow.src, PeerClass::NetworkObject(_))
            || matches!(flow.dst, PeerClass::NetworkObject(_))
        {
            report.records_mapped_to_objects += 1;
        }
        kept.push(flow);
    }
    report.records_kept = kept.len();
    report.distinct_endpoints = endpoints.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn scope(members: &[&str], objects: &[(&str, &str)]) -> MemberScope {
        MemberScope::new(
            members.iter().map(|m| m.parse().unwrap()).collect(),
            objects
                .iter()
                .map(|(c, n)| (c.parse().unwrap(), n.to_string()))
                .collect(),
        )
        .unwrap()
    }

    fn flow(src: &str, dst: &str) -> FlowRecord {
        FlowRecord::new(0, addr(src), addr(dst), Protocol::new("tcp"), 443, 1, 100)
    }

    #[test]
    fn parses_direct_field_mapping() {
        let log = "1700000000,10.0.0.1,10.0.0.2,TCP,443,12,9000\n";
        let parsed = parse_flow_log(log.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(
            parsed.records,
            vec![FlowRecord::new(
                1_700_000_000,
                addr("10.0.0.1"),
                addr("10.0.0.2"),
                Protocol::new("TCP"),
                443,
                12,
                9000
            )]
        );
    }

    #[test]
    fn icmp_is_portless() {
        let parsed = parse_flow_log(
            "5,10.0.0.1,10.0.0.2,icmp,0,1,64\n6,10.0.0.1,10.0.0.2,ICMP,8,1,64".as_bytes(),
            ParseOptions::default(),
        )
        .unwrap();
        assert!(parsed.records.iter().all(|r| r.dst_port == 0));
        assert_eq!(parsed.records[0].protocol.as_str(), "ICMP");
    }

    #[test]
    fn empty_stream_is_empty() {
        let parsed = parse_flow_log("".as_bytes(), ParseOptions::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.lines_read, 0);
    }

    #[test]
    fn header_is_skipped_and_malformed_counted() {
        let log = format!(
            "{FLOW_LOG_HEADER}\n1,10.0.0.1,10.0.0.2,UDP,53,1,80\nbogus,line\n2,10.0.0.1,10.0.0.2,UDP,53,1,80\n"
        );
        let parsed = parse_flow_log(log.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.lines_read, 3);
        assert_eq!(parsed.malformed_lines, vec![3]);
    }

    #[test]
    fn strict_mode_rejects_any_malformed_line() {
        let log = "1,10.0.0.1,10.0.0.2,UDP,53,1,80\n2,10.0.0.1,10.0.0.2,UDP,99999,1,80\n";
        let err = parse_flow_log(
            log.as_bytes(),
            ParseOptions {
                strict: true,
                ..ParseOptions::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn mostly_malformed_input_is_corrupt() {
        let log = "1,10.0.0.1,10.0.0.2,UDP,53,1,80\nx\ny\n";
        let err = parse_flow_log(log.as_bytes(), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::CorruptInput { malformed: 2, lines: 3 }));
        // exactly half is tolerated
        let log = "1,10.0.0.1,10.0.0.2,UDP,53,1,80\n1,10.0.0.1,10.0.0.2,UDP,53,0,80\n";
        assert!(parse_flow_log(log.as_bytes(), ParseOptions::default()).is_ok());
    }

    #[test]
    fn classify_examples() {
        let s = scope(&["10.0.0.0/24"], &[]);
        assert_eq!(classify_peer(addr("10.0.0.5"), &s), PeerClass::Member(addr("10.0.0.5")));
        assert_eq!(classify_peer(addr("192.168.1.1"), &s), PeerClass::Unknown);
        let s = scope(&["10.0.0.0/24"], &[("0.0.0.0/0", "internet")]);
        assert_eq!(
            classify_peer(addr("8.8.8.8"), &s),
            PeerClass::NetworkObject("internet".into())
        );
        // membership wins over a matching object
        assert!(classify_peer(addr("10.0.0.9"), &s).is_member());
    }

    #[test]
    fn scope_validation() {
        assert!(MemberScope::new(vec![], vec![]).is_err());
        let shadowing = MemberScope::new(
            vec!["10.0.0.0/8".parse().unwrap()],
            vec![
                ("0.0.0.0/0".parse().unwrap(), "internet".into()),
                ("8.8.8.0/24".parse().unwrap(), "dns".into()),
            ],
        );
        assert!(shadowing.is_err());
        let ordered = MemberScope::parse(
            "# site\nmember 10.0.0.0/16\nobject 8.8.8.0/24 dns # google\nobject 0.0.0.0/0 internet\n",
        )
        .unwrap();
        assert_eq!(ordered.object_table().len(), 2);
        assert_eq!(MemberScope::parse(&ordered.to_text()).unwrap(), ordered);
        assert!(MemberScope::parse("member nope").is_err());
    }

    #[test]
    fn drop_unknown_keeps_member_pairs() {
        let s = scope(&["10.0.0.0/24"], &[]);
        let (kept, report) = filter_flows(
            vec![flow("10.0.0.1", "10.0.0.2"), flow("10.0.0.1", "9.9.9.9")],
            &s,
            UnknownPolicy::DropUnknown,
        );
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].record, flow("10.0.0.1", "10.0.0.2"));
        assert_eq!(report.records_dropped_unknown, 1);
        assert_eq!(report.records_read, report.records_kept + report.records_dropped_unknown);
        assert_eq!(report.distinct_endpoints, 2);
    }

    #[test]
    fn map_to_objects_attaches_object_class() {
        let s = scope(&["10.0.0.0/24"], &[("0.0.0.0/0", "internet")]);
        let (kept, report) = filter_flows(
            vec![flow("10.0.0.1", "8.8.8.8")],
            &s,
            UnknownPolicy::MapToObjects,
        );
        assert_eq!(kept[0].dst, PeerClass::NetworkObject("internet".into()));
        assert_eq!(report.records_mapped_to_objects, 1);
    }

    #[test]
    fn neither_side_member_is_always_dropped() {
        let s = scope(&["10.0.0.0/24"], &[("0.0.0.0/0", "internet")]);
        for policy in [UnknownPolicy::DropUnknown, UnknownPolicy::MapToObjects] {
            let (kept, report) = filter_flows(vec![flow("1.1.1.1", "2.2.2.2")], &s, policy);
            assert!(kept.is_empty());
            assert_eq!(report.records_dropped_unknown, 1);
        }
        let s = scope(&["10.0.0.0/24"], &[]);
        let (kept, _) = filter_flows(
            vec![flow("10.0.0.1", "2.2.2.2")],
            &s,
            UnknownPolicy::MapToObjects,
        );
        assert!(kept.is_empty());
    }

    #[test]
    fn policy_round_trips_through_text() {
        for p in [UnknownPolicy::DropUnknown, UnknownPolicy::MapToObjects] {
            assert_eq!(p.to_string().parse::<UnknownPolicy>().unwrap(), p);
        }
        assert!("both".parse::<UnknownPolicy>().is_err());
    }
}
