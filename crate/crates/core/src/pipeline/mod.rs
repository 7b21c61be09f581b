//! End-to-end stages: flows to groups, groups to rules, and the file-backed
//! commands behind the CLI.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{fit_pca, PcaModel, PcaTarget};
use crate::error::{Error, Result};
use crate::features::{build_schema, encode_all, standardize, windowize, FeatureSchema, SampleMatrix};
use crate::grouping::{
    assign_endpoint, derive_groups, kmeans_fit, membership_diff, ClusterModel, GroupAssignment,
    KMeansParams, KSpec, MembershipDiff, SecurityGroups,
};
use crate::ingest::{ClassifiedFlow, MemberScope};
use crate::rules::{check_ruleset, extract_service_flows, generalize, HygieneReport, RuleSet};

pub use commands::{
    fingerprint, parse_grid, run_command, run_eval, run_group, run_rules, run_synth, run_tune, Command,
    ClusterArtifact, GroupArtifacts, RunOptions, ARTIFACT_FILES,
};
pub use config::{PipelineConfig, ProfileStyle, SynthSettings, DEFAULT_HOMOGENEITY_FLOOR};

/// Everything that shapes a grouping run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingParams {
    pub window_seconds: u64,
    pub top_k_ports: usize,
    pub pca_target: PcaTarget,
    pub k: KSpec,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        PipelineConfig::default().grouping_params()
    }
}

#[derive(Debug, Clone)]
pub struct GroupingOutcome {
    pub schema: FeatureSchema,
    /// Standardized samples, one per (endpoint, window).
    pub samples: SampleMatrix,
    pub pca: PcaModel,
    pub cluster: ClusterModel,
    pub assignments: Vec<GroupAssignment>,
    pub groups: SecurityGroups,
    pub run_time_seconds: f64,
}

/// Signatures of each endpoint's window samples.
pub fn endpoint_signatures(
    samples: &SampleMatrix,
    pca: &PcaModel,
) -> Result<BTreeMap<Ipv4Addr, Vec<Vec<f64>>>> {
    let projected = samples
        .rows
        .par_iter()
        .map(|row| pca.project(&row.values))
        .collect::<Result<Vec<_>>>()?;
    let mut by_endpoint: BTreeMap<Ipv4Addr, Vec<Vec<f64>>> = BTreeMap::new();
    for (row, sig) in samples.rows.iter().zip(projected) {
        by_endpoint.entry(row.endpoint).or_default().push(sig);
    }
    Ok(by_endpoint)
}

/// Window, encode, standardize, embed, cluster and assign.
pub fn group_flows(flows: &[ClassifiedFlow], params: &GroupingParams) -> Result<GroupingOutcome> {
    let started = Instant::now();
    let schema = build_schema(flows, params.top_k_ports)?;
    let windows = windowize(flows, params.window_seconds)?;
    let raw = encode_all(&windows, &schema);
    let samples = standardize(&raw)?;
    let mut pca = fit_pca(&samples, params.pca_target)?;
    pca.schema_fingerprint = Some(schema.fingerprint());

    let by_endpoint = endpoint_signatures(&samples, &pca)?;
    let signatures: Vec<Vec<f64>> = by_endpoint.values().flatten().cloned().collect();
    let k = params.k.resolve(by_endpoint.len())?;
    let cluster = kmeans_fit(
        &signatures,
        &KMeansParams {
            k,
            seed: params.seed,
            tol: params.tol,
            max_iter: params.max_iter,
            restarts: params.restarts,
        },
    )?;
    let endpoints: Vec<(&Ipv4Addr, &Vec<Vec<f64>>)> = by_endpoint.iter().collect();
    let assignments = endpoints
        .par_iter()
        .map(|(e, sigs)| assign_endpoint(**e, sigs, &cluster))
        .collect::<Result<Vec<_>>>()?;
    let groups = derive_groups(&assignments)?;
    Ok(GroupingOutcome {
        schema,
        samples,
        pca,
        cluster,
        assignments,
        groups,
        run_time_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct Retrained {
    pub before: GroupingOutcome,
    pub after: GroupingOutcome,
    pub diff: MembershipDiff,
}

/// Refit on the existing records plus records for new endpoints and report
/// how membership moved.
pub fn retrain_with_new_endpoints(
    existing: &[ClassifiedFlow],
    added: &[ClassifiedFlow],
    params: &GroupingParams,
) -> Result<Retrained> {
    let before = group_flows(existing, params)?;
    let combined: Vec<ClassifiedFlow> = existing.iter().chain(added).cloned().collect();
    let after = group_flows(&combined, params)?;
    let diff = membership_diff(&before.groups, &after.groups);
    Ok(Retrained { before, after, diff })
}

/// Extract, generalize and check a ruleset for the given groups.
pub fn synthesize_rules(
    flows: &[ClassifiedFlow],
    groups: &SecurityGroups,
    scope: &MemberScope,
) -> Result<(RuleSet, HygieneReport)> {
    let tuples = extract_service_flows(flows, groups, scope)?;
    let ruleset = generalize(tuples);
    let report = check_ruleset(&ruleset, groups, scope);
    Ok((ruleset, report))
}

pub(crate) fn internal(msg: impl Into<String>) -> Error {
    Error::Internal(msg.into())
}
