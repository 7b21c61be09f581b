//! Group-level allow rules synthesized from observed traffic.
//!
//! Endpoint addresses are swapped for their security group (or, for
//! non-members, their network object) while extracting service tuples, so
//! generalization reduces to deduplication plus canonical ordering.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::SecurityGroups;
use crate::ingest::{classify_peer, ClassifiedFlow, FlowRecord, MemberScope, PeerClass, Protocol};

pub const RULESET_HEADER: &str = "src_ref,dst_ref,protocol,dst_port,action,evidence_count";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityRef {
    Group(usize),
    Object(String),
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRef::Group(g) => write!(f, "group:{g}"),
            EntityRef::Object(name) => write!(f, "object:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceTuple {
    pub protocol: Protocol,
    pub dst_port: u16,
}

impl ServiceTuple {
    pub fn of(record: &FlowRecord) -> Self {
        ServiceTuple {
            protocol: record.protocol.clone(),
            dst_port: record.dst_port,
        }
    }
}

impl fmt::Display for ServiceTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.protocol, self.dst_port)
    }
}

pub type RuleKey = (EntityRef, EntityRef, ServiceTuple);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Allow,
    Deny,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Allow => "allow",
            Action::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirewallRule {
    pub src: EntityRef,
    pub dst: EntityRef,
    pub service: ServiceTuple,
    pub action: Action,
    pub evidence_count: usize,
}

impl FirewallRule {
    pub fn key(&self) -> RuleKey {
        (self.src.clone(), self.dst.clone(), self.service.clone())
    }
}

/// Allow rules in canonical order behind an implicit default deny.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<FirewallRule>,
    pub default_action: Action,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn find(&self, src: &EntityRef, dst: &EntityRef, service: &ServiceTuple) -> Option<&FirewallRule> {
        self.rules
            .binary_search_by(|r| (&r.src, &r.dst, &r.service).cmp(&(src, dst, service)))
            .ok()
            .map(|i| &self.rules[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{RULESET_HEADER}\n");
        for r in &self.rules {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.src, r.dst, r.service.protocol, r.service.dst_port, r.action, r.evidence_count
            );
        }
        out
    }
}

fn entity_for(
    class: &PeerClass,
    membership: &BTreeMap<Ipv4Addr, usize>,
    scope: &MemberScope,
) -> Result<EntityRef> {
    match class {
        PeerClass::Member(addr) => membership
            .get(addr)
            .map(|g| EntityRef::Group(*g))
            .ok_or_else(|| Error::Rules(format!("member {addr} has no security group"))),
        PeerClass::NetworkObject(name) if scope.has_object(name) => Ok(EntityRef::Object(name.clone())),
        PeerClass::NetworkObject(name) => {
            Err(Error::Rules(format!("object {name:?} is not in the scope")))
        }
        PeerClass::Unknown => Err(Error::Rules("unknown peer reached rule extraction".into())),
    }
}

/// Map every record to (src ref, dst ref, service) and count the evidence.
pub fn extract_service_flows(
    records: &[ClassifiedFlow],
    groups: &SecurityGroups,
    scope: &MemberScope,
) -> Result<BTreeMap<RuleKey, usize>> {
    let membership = groups.membership();
    let mut tuples = BTreeMap::new();
    for flow in records {
        let src = entity_for(&flow.src, &membership, scope)?;
        let dst = entity_for(&flow.dst, &membership, scope)?;
        *tuples
            .entry((src, dst, ServiceTuple::of(&flow.record)))
            .or_insert(0) += 1;
    }
    Ok(tuples)
}

/// One allow rule per distinct tuple.
pub fn generalize<I>(tuples: I) -> RuleSet
where
    I: IntoIterator<Item = (RuleKey, usize)>,
{
    let mut merged: BTreeMap<RuleKey, usize> = BTreeMap::new();
    for (key, count) in tuples {
        *merged.entry(key).or_insert(0) += count;
    }
    let rules = merged
        .into_iter()
        .map(|((src, dst, service), evidence_count)| FirewallRule {
            src,
            dst,
            service,
            action: Action::Allow,
            evidence_count,
        })
        .collect();
    RuleSet {
        rules,
        default_action: Action::Deny,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HygieneReport {
    /// Rules whose source and destination both cover every address.
    pub any_to_any: Vec<usize>,
    pub duplicate_keys: Vec<usize>,
    pub empty_group_refs: Vec<usize>,
    /// `(narrower, wider)` rule index pairs.
    pub redundant: Vec<(usize, usize)>,
}

impl HygieneReport {
    pub fn is_clean(&self) -> bool {
        self.any_to_any.is_empty()
            && self.duplicate_keys.is_empty()
            && self.empty_group_refs.is_empty()
            && self.redundant.is_empty()
    }

    pub fn render(&self, ruleset: &RuleSet) -> String {
        let describe = |i: usize| {
            let r = &ruleset.rules[i];
            format!("{} -> {} {}", r.src, r.dst, r.service)
        };
        let mut out = String::new();
        let _ = writeln!(out, "rules: {}", ruleset.len());
        let _ = writeln!(out, "default action: {}", ruleset.default_action);
        let _ = writeln!(out, "any-to-any: {}", self.any_to_any.len());
        for &i in &self.any_to_any {
            let _ = writeln!(out, "  {}", describe(i));
        }
        let _ = writeln!(out, "duplicate keys: {}", self.duplicate_keys.len());
        for &i in &self.duplicate_keys {
            let _ = writeln!(out, "  {}", describe(i));
        }
        let _ = writeln!(out, "empty group references: {}", self.empty_group_refs.len());
        for &i in &self.empty_group_refs {
            let _ = writeln!(out, "  {}", describe(i));
        }
        let _ = writeln!(out, "redundant: {}", self.redundant.len());
        for &(narrow, wide) in &self.redundant {
            let _ = writeln!(out, "  {} covered by {}", describe(narrow), describe(wide));
        }
        out
    }
}

fn covers(outer: &[Ipv4Net], inner: &[Ipv4Net]) -> bool {
    !inner.is_empty() && inner.iter().all(|i| outer.iter().any(|o| o.contains(i)))
}

fn is_universal(entity: &EntityRef, scope: &MemberScope) -> bool {
    match entity {
        EntityRef::Group(_) => false,
        EntityRef::Object(name) => scope.object_cidrs(name).iter().any(|n| n.prefix_len() == 0),
    }
}

/// Whether every address `inner` stands for is also covered by `outer`.
fn entity_within(inner: &EntityRef, outer: &EntityRef, scope: &MemberScope) -> bool {
    match (inner, outer) {
        (a, b) if a == b => true,
        (EntityRef::Object(a), EntityRef::Object(b)) => {
            covers(&scope.object_cidrs(b), &scope.object_cidrs(a))
        }
        _ => false,
    }
}

pub fn check_ruleset(ruleset: &RuleSet, groups: &SecurityGroups, scope: &MemberScope) -> HygieneReport {
    let mut report = HygieneReport::default();
    let mut seen: BTreeMap<RuleKey, usize> = BTreeMap::new();
    for (i, rule) in ruleset.rules.iter().enumerate() {
        if is_universal(&rule.src, scope) && is_universal(&rule.dst, scope) {
            report.any_to_any.push(i);
        }
        if seen.insert(rule.key(), i).is_some() {
            report.duplicate_keys.push(i);
        }
        let empty = [&rule.src, &rule.dst]
            .iter()
            .any(|e| matches!(e, EntityRef::Group(g) if groups.is_empty_group(*g)));
        if empty {
            report.empty_group_refs.push(i);
        }
    }

    // Distinct groups never contain one another, so only rules with an
    // object on some side can be covered by a different rule.
    let mut by_service: BTreeMap<&ServiceTuple, Vec<usize>> = BTreeMap::new();
    for (i, rule) in ruleset.rules.iter().enumerate() {
        let has_object = [&rule.src, &rule.dst]
            .iter()
            .any(|e| matches!(e, EntityRef::Object(_)));
        if has_object {
            by_service.entry(&rule.service).or_default().push(i);
        }
    }
    for indices in by_service.values() {
        for &narrow in indices {
            for &wide in indices {
                let (a, b) = (&ruleset.rules[narrow], &ruleset.rules[wide]);
                if narrow == wide || (a.src == b.src && a.dst == b.dst) {
                    continue;
                }
                if entity_within(&a.src, &b.src, scope) && entity_within(&a.dst, &b.dst, scope) {
                    report.redundant.push((narrow, wide));
                }
            }
        }
    }
    report
}

/// Decide a flow against the ruleset; anything without a matching rule is denied.
pub fn match_flow(
    ruleset: &RuleSet,
    groups: &SecurityGroups,
    scope: &MemberScope,
    flow: &FlowRecord,
) -> Action {
    let membership = groups.membership();
    match_flow_with(ruleset, &membership, scope, flow)
}

/// As [`match_flow`] with a prebuilt endpoint to group lookup.
pub fn match_flow_with(
    ruleset: &RuleSet,
    membership: &BTreeMap<Ipv4Addr, usize>,
    scope: &MemberScope,
    flow: &FlowRecord,
) -> Action {
    let src = entity_for(&classify_peer(flow.src_addr, scope), membership, scope);
    let dst = entity_for(&classify_peer(flow.dst_addr, scope), membership, scope);
    match (src, dst) {
        (Ok(src), Ok(dst)) if ruleset.find(&src, &dst, &ServiceTuple::of(flow)).is_some() => {
            Action::Allow
        }
        _ => ruleset.default_action,
    }
}
