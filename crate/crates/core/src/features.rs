//! Per-endpoint, per-window behaviour vectors.
//!
//! Raw vector layout for a schema with `P` protocols, `Q` tracked ports and
//! `R` network objects:
//!
//! | block                   | width   |
//! |-------------------------|---------|
//! | outbound protocol count | `P + 1` |
//! | inbound protocol count  | `P + 1` |
//! | outbound port count     | `Q + 1` |
//! | inbound port count      | `Q + 1` |
//! | peer class count        | `R + 1` |
//! | unique service tuples   | 1       |
//! | flow count              | 1       |
//! | `ln(1 + bytes)`         | 1       |
//!
//! The trailing slot of each categorical block is the overflow bucket; for the
//! peer block it is the member bucket.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{ClassifiedFlow, PeerClass};

pub const DEFAULT_TOP_K_PORTS: usize = 64;
pub const DEFAULT_WINDOW_SECONDS: u64 = 3600;

/// Columns with a population standard deviation below this are left unscaled.
const CONSTANT_COLUMN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub protocol_vocab: Vec<String>,
    pub port_vocab: Vec<u16>,
    pub peer_vocab: Vec<String>,
    pub dimension: usize,
}

impl FeatureSchema {
    pub fn new(
        mut protocol_vocab: Vec<String>,
        mut port_vocab: Vec<u16>,
        mut peer_vocab: Vec<String>,
    ) -> Self {
        protocol_vocab.sort();
        protocol_vocab.dedup();
        port_vocab.sort_unstable();
        port_vocab.dedup();
        peer_vocab.sort();
        peer_vocab.dedup();
        let dimension = 2 * (protocol_vocab.len() + 1)
            + 2 * (port_vocab.len() + 1)
            + (peer_vocab.len() + 1)
            + 3;
        FeatureSchema {
            protocol_vocab,
            port_vocab,
            peer_vocab,
            dimension,
        }
    }

    fn offsets(&self) -> Offsets {
        let p = self.protocol_vocab.len() + 1;
        let q = self.port_vocab.len() + 1;
        let r = self.peer_vocab.len() + 1;
        Offsets {
            out_proto: 0,
            in_proto: p,
            out_port: 2 * p,
            in_port: 2 * p + q,
            peer: 2 * p + 2 * q,
            numeric: 2 * p + 2 * q + r,
        }
    }

    /// Stable hash identifying this schema in persisted models.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

struct Offsets {
    out_proto: usize,
    in_proto: usize,
    out_port: usize,
    in_port: usize,
    peer: usize,
    numeric: usize,
}

/// Discover vocabularies from classified records.
///
/// Ports are ranked by frequency with ties going to the lower port number;
/// the `top_k_ports` winners are kept in ascending order.
pub fn build_schema(records: &[ClassifiedFlow], top_k_ports: usize) -> Result<FeatureSchema> {
    if records.is_empty() {
        return Err(Error::Features("cannot build a schema from zero records".into()));
    }
    let mut protocols = Vec::new();
    let mut port_freq: HashMap<u16, usize> = HashMap::new();
    let mut peers = Vec::new();
    for flow in records {
        protocols.push(flow.record.protocol.as_str().to_string());
        *port_freq.entry(flow.record.dst_port).or_default() += 1;
        for class in [&flow.src, &flow.dst] {
            if let PeerClass::NetworkObject(name) = class {
                peers.push(name.clone());
            }
        }
    }
    let mut ranked: Vec<(u16, usize)> = port_freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let ports = ranked.into_iter().take(top_k_ports).map(|(p, _)| p).collect();
    Ok(FeatureSchema::new(protocols, ports, peers))
}

/// Slot of `value` in `vocab`; out-of-vocabulary values take the final slot.
pub fn one_hot_index<T: PartialEq>(value: &T, vocab: &[T]) -> usize {
    vocab.iter().position(|v| v == value).unwrap_or(vocab.len())
}

pub fn one_hot<T: PartialEq>(value: &T, vocab: &[T]) -> Vec<f64> {
    let mut out = vec![0.0; vocab.len() + 1];
    out[one_hot_index(value, vocab)] = 1.0;
    out
}

pub type WindowKey = (Ipv4Addr, u64);

/// Bucket records by (member endpoint, window index).
///
/// Windows are counted from the earliest timestamp in `records`. A record is
/// attributed to its source and to its destination when each is a member.
pub fn windowize(
    records: &[ClassifiedFlow],
    window_seconds: u64,
) -> Result<BTreeMap<WindowKey, Vec<&ClassifiedFlow>>> {
    if window_seconds == 0 {
        return Err(Error::Features("window_seconds must be at least 1".into()));
    }
    let mut out: BTreeMap<WindowKey, Vec<&ClassifiedFlow>> = BTreeMap::new();
    let Some(origin) = records.iter().map(|f| f.record.timestamp).min() else {
        return Ok(out);
    };
    for flow in records {
        let window = ((flow.record.timestamp - origin) as u64) / window_seconds;
        if let PeerClass::Member(src) = flow.src {
            out.entry((src, window)).or_default().push(flow);
        }
        if let PeerClass::Member(dst) = flow.dst {
            if flow.src != flow.dst {
                out.entry((dst, window)).or_default().push(flow);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVector {
    pub endpoint: Ipv4Addr,
    pub window_index: u64,
    pub values: Vec<f64>,
}

fn peer_slot(class: &PeerClass, schema: &FeatureSchema) -> usize {
    match class {
        PeerClass::NetworkObject(name) => one_hot_index(name, &schema.peer_vocab),
        PeerClass::Member(_) | PeerClass::Unknown => schema.peer_vocab.len(),
    }
}

/// Encode one (endpoint, window) bucket. Order of `records` does not matter.
pub fn encode<'a, I>(
    endpoint: Ipv4Addr,
    window_index: u64,
    records: I,
    schema: &FeatureSchema,
) -> SampleVector
where
    I: IntoIterator<Item = &'a ClassifiedFlow>,
{
    let off = schema.offsets();
    let mut values = vec![0.0; schema.dimension];
    let mut tuples: HashSet<(bool, &str, u16, Option<&str>)> = HashSet::new();
    let mut flows = 0u64;
    let mut bytes = 0u64;
    for flow in records {
        let rec = &flow.record;
        let proto = schema
            .protocol_vocab
            .iter()
            .position(|p| p == rec.protocol.as_str())
            .unwrap_or(schema.protocol_vocab.len());
        let port = one_hot_index(&rec.dst_port, &schema.port_vocab);
        flows += 1;
        bytes = bytes.saturating_add(rec.byte_count);
        let directions = [
            (true, flow.src == PeerClass::Member(endpoint), &flow.dst),
            (false, flow.dst == PeerClass::Member(endpoint), &flow.src),
        ];
        for (outbound, applies, peer) in directions {
            if !applies {
                continue;
            }
            let (proto_base, port_base) = if outbound {
                (off.out_proto, off.out_port)
            } else {
                (off.in_proto, off.in_port)
            };
            values[proto_base + proto] += 1.0;
            values[port_base + port] += 1.0;
            values[off.peer + peer_slot(peer, schema)] += 1.0;
            let peer_key = match peer {
                PeerClass::NetworkObject(name) => Some(name.as_str()),
                _ => None,
            };
            tuples.insert((outbound, rec.protocol.as_str(), rec.dst_port, peer_key));
        }
    }
    values[off.numeric] = tuples.len() as f64;
    values[off.numeric + 1] = flows as f64;
    values[off.numeric + 2] = (bytes as f64).ln_1p();
    SampleVector {
        endpoint,
        window_index,
        values,
    }
}

/// Encode every bucket in key order.
pub fn encode_all(
    windows: &BTreeMap<WindowKey, Vec<&ClassifiedFlow>>,
    schema: &FeatureSchema,
) -> SampleMatrix {
    let keyed: Vec<(&WindowKey, &Vec<&ClassifiedFlow>)> = windows.iter().collect();
    let rows = keyed
        .par_iter()
        .map(|((endpoint, window), flows)| {
            encode(*endpoint, *window, flows.iter().copied(), schema)
        })
        .collect();
    SampleMatrix::new(rows)
}

/// Per-column affine transform `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub rows: Vec<SampleVector>,
    pub standardization: Option<Standardization>,
}

impl SampleMatrix {
    pub fn new(rows: Vec<SampleVector>) -> Self {
        SampleMatrix {
            rows,
            standardization: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// Raw values, undoing any standardization.
    pub fn raw_values(&self) -> Vec<Vec<f64>> {
        match &self.standardization {
            Some(st) => self.rows.iter().map(|r| st.invert(&r.values)).collect(),
            None => self.values(),
        }
    }

    /// Comma-separated export with header `endpoint,window,f0..f{d-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("endpoint,window");
        for i in 0..self.dimension() {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.endpoint, row.window_index);
            for v in &row.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Column-wise standardization with population standard deviation.
///
/// Re-standardizing a standardized matrix composes the transforms so the
/// stored statistics always map back to the raw values.
pub fn standardize(matrix: &SampleMatrix) -> Result<SampleMatrix> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::Features(format!(
            "standardization needs at least 2 rows, got {n}"
        )));
    }
    let d = matrix.dimension();
    if matrix.rows.iter().any(|r| r.values.len() != d) {
        return Err(Error::Features("rows disagree on dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for row in &matrix.rows {
        for (m, v) in mean.iter_mut().zip(&row.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in &matrix.rows {
        for ((acc, v), m) in var.iter_mut().zip(&row.values).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let std = (v / n as f64).sqrt();
            if std < CONSTANT_COLUMN_STD {
                1.0
            } else {
                std
            }
        })
        .collect();
    let step = Standardization { mean, scale };
    let rows = matrix
        .rows
        .iter()
        .map(|r| SampleVector {
            endpoint: r.endpoint,
            window_index: r.window_index,
            values: step.apply(&r.values),
        })
        .collect();
    let standardization = match &matrix.standardization {
        None => step,
        Some(prev) => Standardization {
            mean: prev
                .mean
                .iter()
                .zip(prev.scale.iter().zip(&step.mean))
                .map(|(m0, (s0, m1))| m0 + s0 * m1)
                .collect(),
            scale: prev.scale.iter().zip(&step.scale).map(|(a, b)| a * b).collect(),
        },
    };
    Ok(SampleMatrix {
        rows,
        standardization: Some(standardization),
    })
}
