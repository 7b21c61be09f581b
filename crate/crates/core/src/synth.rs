//! Synthetic flow logs with planted security groups.
//!
//! Every endpoint of a group draws its flows from the group's behaviour
//! profile, a weighted set of (peer, protocol, port) templates. A `noise_rate`
//! share of flows is replaced by uniformly random draws. Output is fully
//! determined by the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FlowRecord, MemberScope, Protocol, FLOW_LOG_HEADER};

pub const MEMBER_NETWORK: &str = "10.0.0.0/16";
pub const GROUND_TRUTH_HEADER: &str = "endpoint,true_group";
const START_TIMESTAMP: i64 = 1_700_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PeerTarget {
    Group(usize),
    Object(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub peer: PeerTarget,
    pub protocol: Protocol,
    pub port: u16,
    pub weight: f64,
}

impl TemplateEntry {
    fn service_key(&self) -> (&PeerTarget, &Protocol, u16) {
        (&self.peer, &self.protocol, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EndpointsPerGroup {
    Uniform(usize),
    PerGroup(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub group_count: usize,
    pub endpoints_per_group: EndpointsPerGroup,
    pub windows: usize,
    pub flows_per_endpoint_window: usize,
    pub window_seconds: u64,
    /// One profile per group.
    pub behavior_profiles: Vec<Vec<TemplateEntry>>,
    /// External network objects, by name.
    pub objects: Vec<(Ipv4Net, String)>,
    pub noise_rate: f64,
    pub seed: u64,
}

/// Documentation ranges used as external network objects.
pub fn default_objects() -> Vec<(Ipv4Net, String)> {
    [
        ("192.0.2.0/24", "dns-resolvers"),
        ("198.51.100.0/24", "partner-net"),
        ("203.0.113.0/24", "saas"),
    ]
    .iter()
    .map(|(net, name)| (net.parse().expect("static CIDR"), name.to_string()))
    .collect()
}

fn smallest_prime_at_least(n: usize) -> usize {
    (n.max(2)..)
        .find(|&c| (2..c).take_while(|d| d * d <= c).all(|d| c % d != 0))
        .expect("primes are unbounded")
}

impl ScenarioSpec {
    /// Five-service profiles where any two groups share at most one template
    /// entry (at most 20% overlap).
    ///
    /// Group `g` is a line `(a, b)` over a prime field of size `q`; entry `i`
    /// uses port slot `i * q + (a + b * i) mod q`, so two distinct lines meet in
    /// at most one slot. With `object_share > 0` each profile also sends that
    /// share of its flows to one network object.
    pub fn distinct_profiles(
        group_count: usize,
        endpoints_per_group: usize,
        windows: usize,
        flows_per_endpoint_window: usize,
        noise_rate: f64,
        object_share: f64,
        seed: u64,
    ) -> Self {
        const ENTRIES: usize = 5;
        const WEIGHTS: [f64; ENTRIES] = [5.0, 4.0, 3.0, 2.0, 1.0];
        const OBJECT_PORTS: u16 = 7;
        let mut q = ENTRIES;
        while q * q < group_count {
            q += 1;
        }
        let q = smallest_prime_at_least(q);
        let objects = default_objects();
        let profiles = (0..group_count)
            .map(|g| {
                let (a, b) = (g % q, g / q);
                let mut entries: Vec<TemplateEntry> = (0..ENTRIES)
                    .map(|i| TemplateEntry {
                        peer: PeerTarget::Group((g + 1 + i) % group_count),
                        protocol: Protocol::new(if i % 2 == 0 { "TCP" } else { "UDP" }),
                        port: 2000 + (i * q + (a + b * i) % q) as u16,
                        weight: WEIGHTS[i],
                    })
                    .collect();
                if object_share > 0.0 {
                    let total: f64 = WEIGHTS.iter().sum();
                    entries.push(TemplateEntry {
                        peer: PeerTarget::Object(objects[g % objects.len()].1.clone()),
                        protocol: Protocol::new("TCP"),
                        port: 8000 + (g as u16 % OBJECT_PORTS),
                        weight: total * object_share / (1.0 - object_share),
                    });
                }
                entries
            })
            .collect();
        ScenarioSpec {
            group_count,
            endpoints_per_group: EndpointsPerGroup::Uniform(endpoints_per_group),
            windows,
            flows_per_endpoint_window,
            window_seconds: crate::features::DEFAULT_WINDOW_SECONDS,
            behavior_profiles: profiles,
            objects,
            noise_rate,
            seed,
        }
    }

    /// One private service per group, talking only within the group. No noise.
    pub fn disjoint_profiles(
        group_count: usize,
        endpoints_per_group: usize,
        windows: usize,
        flows_per_endpoint_window: usize,
        seed: u64,
    ) -> Self {
        let profiles = (0..group_count)
            .map(|g| {
                vec![TemplateEntry {
                    peer: PeerTarget::Group(g),
                    protocol: Protocol::new("TCP"),
                    port: 3000 + g as u16,
                    weight: 1.0,
                }]
            })
            .collect();
        ScenarioSpec {
            group_count,
            endpoints_per_group: EndpointsPerGroup::Uniform(endpoints_per_group),
            windows,
            flows_per_endpoint_window,
            window_seconds: crate::features::DEFAULT_WINDOW_SECONDS,
            behavior_profiles: profiles,
            objects: default_objects(),
            noise_rate: 0.0,
            seed,
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        match &self.endpoints_per_group {
            EndpointsPerGroup::Uniform(n) => vec![*n; self.group_count],
            EndpointsPerGroup::PerGroup(sizes) => sizes.clone(),
        }
    }

    /// Shared template entries over the larger profile size.
    pub fn template_overlap(&self, a: usize, b: usize) -> f64 {
        let pa: BTreeSet<_> = self.behavior_profiles[a].iter().map(TemplateEntry::service_key).collect();
        let pb: BTreeSet<_> = self.behavior_profiles[b].iter().map(TemplateEntry::service_key).collect();
        let larger = pa.len().max(pb.len());
        if larger == 0 {
            return 0.0;
        }
        pa.intersection(&pb).count() as f64 / larger as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.group_count == 0 {
            return bad("group_count must be at least 1".into());
        }
        let sizes = self.group_sizes();
        if sizes.len() != self.group_count {
            return bad(format!(
                "{} group sizes given for {} groups",
                sizes.len(),
                self.group_count
            ));
        }
        if sizes.contains(&0) {
            return bad("every group needs at least one endpoint".into());
        }
        if sizes.iter().sum::<usize>() > 65_534 {
            return bad("too many endpoints for the member network".into());
        }
        if self.window_seconds == 0 {
            return bad("window_seconds must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1)", self.noise_rate));
        }
        if self.behavior_profiles.len() != self.group_count {
            return bad(format!(
                "{} profiles given for {} groups",
                self.behavior_profiles.len(),
                self.group_count
            ));
        }
        for (g, profile) in self.behavior_profiles.iter().enumerate() {
            if profile.is_empty() {
                return bad(format!("group {g} has an empty profile"));
            }
            for entry in profile {
                if !(entry.weight > 0.0 && entry.weight.is_finite()) {
                    return bad(format!("group {g}: weight {} is not positive", entry.weight));
                }
                match &entry.peer {
                    PeerTarget::Group(p) if *p >= self.group_count => {
                        return bad(format!("group {g} references nonexistent group {p}"))
                    }
                    PeerTarget::Object(name) if !self.objects.iter().any(|(_, n)| n == name) => {
                        return bad(format!("group {g} references unknown object {name:?}"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: BTreeMap<Ipv4Addr, String>,
}

impl GroundTruth {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{GROUND_TRUTH_HEADER}\n");
        for (endpoint, label) in &self.labels {
            let _ = writeln!(out, "{endpoint},{label}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (idx == 0 && line == GROUND_TRUTH_HEADER) {
                continue;
            }
            let bad = || Error::Eval(format!("ground truth line {}: {line:?}", idx + 1));
            let (endpoint, label) = line.split_once(',').ok_or_else(bad)?;
            let endpoint: Ipv4Addr = endpoint.trim().parse().map_err(|_| bad())?;
            let label = label.trim();
            if label.is_empty() {
                return Err(bad());
            }
            if labels.insert(endpoint, label.to_string()).is_some() {
                return Err(Error::Eval(format!("ground truth lists {endpoint} twice")));
            }
        }
        Ok(GroundTruth { labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<FlowRecord>,
    pub ground_truth: GroundTruth,
    pub scope: MemberScope,
    /// Flows replaced by uniform noise draws.
    pub noise_flows: usize,
}

impl SyntheticDataset {
    /// Flow log text, header included.
    pub fn log_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        out.push_str(FLOW_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }
}

fn random_host(net: &Ipv4Net, rng: &mut ChaCha8Rng) -> Ipv4Addr {
    let size = 1u64 << (32 - net.prefix_len());
    let base = u32::from(net.network()) as u64;
    let offset = if size > 2 { rng.gen_range(1..size - 1) } else { 0 };
    Ipv4Addr::from((base + offset) as u32)
}

/// Draw the scenario's flows, ground truth and scope.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let member_net: Ipv4Net = MEMBER_NETWORK.parse().expect("static CIDR");
    let scope = MemberScope::new(vec![member_net], spec.objects.clone())
        .map_err(|e| Error::Synth(e.to_string()))?;

    let mut members: Vec<Vec<Ipv4Addr>> = Vec::with_capacity(spec.group_count);
    let mut ground_truth = GroundTruth::default();
    let mut next = u32::from(member_net.network()) + 1;
    for (g, size) in spec.group_sizes().into_iter().enumerate() {
        let addrs: Vec<Ipv4Addr> = (0..size).map(|i| Ipv4Addr::from(next + i as u32)).collect();
        next += size as u32;
        for a in &addrs {
            ground_truth.labels.insert(*a, g.to_string());
        }
        members.push(addrs);
    }
    let endpoints: Vec<(usize, Ipv4Addr)> = members
        .iter()
        .enumerate()
        .flat_map(|(g, addrs)| addrs.iter().map(move |a| (g, *a)))
        .collect();

    let pickers: Vec<WeightedIndex<f64>> = spec
        .behavior_profiles
        .iter()
        .map(|p| WeightedIndex::new(p.iter().map(|e| e.weight)).expect("validated weights"))
        .collect();
    let mut port_pool: Vec<u16> = spec
        .behavior_profiles
        .iter()
        .flatten()
        .map(|e| e.port)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if port_pool.is_empty() {
        port_pool.push(443);
    }
    let protocols = [Protocol::new("TCP"), Protocol::new("UDP")];
    let object_net = |name: &str| -> Ipv4Net {
        spec.objects
            .iter()
            .find(|(_, n)| n == name)
            .map(|(net, _)| *net)
            .expect("validated object")
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pick_member = |group: usize, exclude: Ipv4Addr, rng: &mut ChaCha8Rng| -> Ipv4Addr {
        let pool = &members[group];
        if pool.len() == 1 {
            return pool[0];
        }
        loop {
            let candidate = pool[rng.gen_range(0..pool.len())];
            if candidate != exclude {
                return candidate;
            }
        }
    };

    let flows = spec.flows_per_endpoint_window;
    let mut records = Vec::with_capacity(spec.windows * flows * endpoints.len());
    let mut noise_flows = 0;
    for w in 0..spec.windows {
        for i in 0..flows {
            let timestamp = START_TIMESTAMP
                + (w as u64 * spec.window_seconds + i as u64 * spec.window_seconds / flows as u64)
                    as i64;
            for &(group, src) in &endpoints {
                let (dst, protocol, port) = if rng.gen::<f64>() < spec.noise_rate {
                    noise_flows += 1;
                    let targets = spec.group_count + spec.objects.len();
                    let t = rng.gen_range(0..targets);
                    let dst = if t < spec.group_count {
                        pick_member(t, src, &mut rng)
                    } else {
                        random_host(&spec.objects[t - spec.group_count].0, &mut rng)
                    };
                    let protocol = protocols[rng.gen_range(0..protocols.len())].clone();
                    (dst, protocol, port_pool[rng.gen_range(0..port_pool.len())])
                } else {
                    let entry = &spec.behavior_profiles[group][pickers[group].sample(&mut rng)];
                    let dst = match &entry.peer {
                        PeerTarget::Group(p) => pick_member(*p, src, &mut rng),
                        PeerTarget::Object(name) => random_host(&object_net(name), &mut rng),
                    };
                    (dst, entry.protocol.clone(), entry.port)
                };
                let packets = rng.gen_range(1..=20u64);
                let bytes = packets * rng.gen_range(60..=1500u64);
                records.push(FlowRecord::new(timestamp, src, dst, protocol, port, packets, bytes));
            }
        }
    }

    Ok(SyntheticDataset {
        records,
        ground_truth,
        scope,
        noise_flows,
    })
}
