use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::{group_flows, internal, synthesize_rules, GroupingParams};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Standardization};
use crate::grouping::{tune, ClusterModel, SecurityGroups};
use crate::ingest::{filter_flows, parse_flow_log, ClassifiedFlow, IngestReport, MemberScope, ParseOptions};
use crate::metrics::{evaluate, EVAL_REPORT_HEADER};
use crate::rules::{match_flow_with, Action};
use crate::synth::{generate, GroundTruth};

pub const SCHEMA_FILE: &str = "feature_schema.json";
pub const STANDARDIZATION_FILE: &str = "standardization.json";
pub const PCA_FILE: &str = "pca_model.json";
pub const CLUSTER_FILE: &str = "cluster_model.json";
pub const GROUPS_FILE: &str = "groups.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const DISTANCES_FILE: &str = "mean_distances.csv";
pub const INGEST_FILE: &str = "ingest_report.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RULES_FILE: &str = "rules.csv";
pub const RULES_REPORT_FILE: &str = "rules_report.txt";
pub const EVAL_FILE: &str = "eval_report.csv";
pub const TUNE_FILE: &str = "tune_report.csv";
pub const BEST_CONFIG_FILE: &str = "best_config.txt";

/// Files written by `group` whose bytes depend only on inputs and settings.
pub const ARTIFACT_FILES: [&str; 8] = [
    SCHEMA_FILE,
    STANDARDIZATION_FILE,
    PCA_FILE,
    CLUSTER_FILE,
    GROUPS_FILE,
    ASSIGNMENTS_FILE,
    DISTANCES_FILE,
    INGEST_FILE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Group,
    Rules,
    Eval,
    Tune,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub strict: bool,
}

/// Load the config, apply flag overrides and run one command on a pool of
/// `workers` threads. Returns the text to print on success.
pub fn run_command(command: Command, options: &RunOptions) -> Result<String> {
    let mut config = PipelineConfig::load(&options.config)?;
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let run = || match command {
        Command::Synth => run_synth(&config),
        Command::Group => run_group(&config, options.strict),
        Command::Rules => run_rules(&config, options.strict),
        Command::Eval => run_eval(&config, options.strict),
        Command::Tune => run_tune(&config, options.strict),
    };
    match options.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| internal(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    fingerprint: String,
    payload: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub params: GroupingParams,
    pub model: ClusterModel,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Timing {
    grouping_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    fingerprint: String,
    files: BTreeMap<String, String>,
}

fn log_path(config: &PipelineConfig) -> PathBuf {
    config.log.clone().unwrap_or_else(|| config.out_dir.join("flows.csv"))
}

fn scope_path(config: &PipelineConfig) -> PathBuf {
    config.scope.clone().unwrap_or_else(|| config.out_dir.join("scope.txt"))
}

fn truth_path(config: &PipelineConfig) -> PathBuf {
    config
        .ground_truth
        .clone()
        .unwrap_or_else(|| config.out_dir.join("ground_truth.csv"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identity of a grouping run: input bytes plus grouping settings. Paths and
/// worker count are deliberately left out.
pub fn fingerprint(log: &[u8], scope: &[u8], config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"log\0");
    h.update(Sha256::digest(log));
    h.update(b"scope\0");
    h.update(Sha256::digest(scope));
    h.update(b"config\0");
    h.update(config.grouping_key_text().as_bytes());
    hex::encode(h.finalize())
}

struct Inputs {
    fingerprint: String,
    scope: MemberScope,
    flows: Vec<ClassifiedFlow>,
    report: IngestReport,
}

fn load_inputs(config: &PipelineConfig, strict: bool) -> Result<Inputs> {
    let log_bytes = read_bytes(&log_path(config))?;
    let scope_bytes = read_bytes(&scope_path(config))?;
    let scope_text = String::from_utf8(scope_bytes.clone())
        .map_err(|_| Error::Ingest("scope file is not UTF-8".into()))?;
    let scope = MemberScope::parse(&scope_text)?;
    let parsed = parse_flow_log(
        BufReader::new(log_bytes.as_slice()),
        ParseOptions {
            strict,
            ..ParseOptions::default()
        },
    )?;
    let (flows, report) = filter_flows(parsed.records, &scope, config.unknown_policy);
    Ok(Inputs {
        fingerprint: fingerprint(&log_bytes, &scope_bytes, config),
        scope,
        flows,
        report,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| internal(format!("serialize: {e}")))
}

fn envelope<T: Serialize>(kind: &str, fingerprint: &str, payload: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Borrowed<'a, T> {
        kind: &'a str,
        fingerprint: &'a str,
        payload: &'a T,
    }
    to_json(&Borrowed {
        kind,
        fingerprint,
        payload,
    })
}

fn open_envelope<T: DeserializeOwned>(path: &Path, kind: &str, fingerprint: &str) -> Result<T> {
    let text = read_text(path)?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    if env.kind != kind {
        return Err(Error::Artifact(format!(
            "{}: expected a {kind} artifact, found {}",
            path.display(),
            env.kind
        )));
    }
    if env.fingerprint != fingerprint {
        return Err(Error::Artifact(format!(
            "{} is stale: built for fingerprint {}, inputs now give {}; rerun `group`",
            path.display(),
            short(&env.fingerprint),
            short(fingerprint)
        )));
    }
    Ok(env.payload)
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

/// Artifacts of a finished `group` run, checked against the current inputs.
#[derive(Debug, Clone)]
pub struct GroupArtifacts {
    pub fingerprint: String,
    pub schema: FeatureSchema,
    pub cluster: ClusterArtifact,
    pub groups: SecurityGroups,
    pub grouping_seconds: f64,
}

impl GroupArtifacts {
    pub fn load(out_dir: &Path, fingerprint: &str) -> Result<Self> {
        let groups = open_envelope(&out_dir.join(GROUPS_FILE), "groups", fingerprint)?;
        let schema = open_envelope(&out_dir.join(SCHEMA_FILE), "feature_schema", fingerprint)?;
        let cluster = open_envelope(&out_dir.join(CLUSTER_FILE), "cluster_model", fingerprint)?;
        let timing: Timing = open_envelope(&out_dir.join(TIMING_FILE), "timing", fingerprint)?;
        Ok(GroupArtifacts {
            fingerprint: fingerprint.to_string(),
            schema,
            cluster,
            groups,
            grouping_seconds: timing.grouping_seconds,
        })
    }
}

pub fn run_synth(config: &PipelineConfig) -> Result<String> {
    let spec = config.scenario();
    let data = generate(&spec)?;
    let (log, scope, truth) = (log_path(config), scope_path(config), truth_path(config));
    write_file(&log, data.log_text())?;
    write_file(&scope, data.scope.to_text())?;
    write_file(&truth, data.ground_truth.to_csv())?;
    Ok(format!(
        "synth: {} records, {} endpoints in {} groups ({} noise flows)\n  log: {}\n  scope: {}\n  ground truth: {}\n",
        data.records.len(),
        data.ground_truth.labels.len(),
        spec.group_count,
        data.noise_flows,
        log.display(),
        scope.display(),
        truth.display()
    ))
}

pub fn run_group(config: &PipelineConfig, strict: bool) -> Result<String> {
    let inputs = load_inputs(config, strict)?;
    let fp = &inputs.fingerprint;
    let params = config.grouping_params();
    let outcome = group_flows(&inputs.flows, &params)?;
    let out = &config.out_dir;

    let mut files: BTreeMap<&str, String> = BTreeMap::new();
    files.insert(SCHEMA_FILE, envelope("feature_schema", fp, &outcome.schema)?);
    let standardization: &Standardization = outcome
        .samples
        .standardization
        .as_ref()
        .ok_or_else(|| internal("standardized samples carry no transform"))?;
    files.insert(STANDARDIZATION_FILE, envelope("standardization", fp, standardization)?);
    files.insert(PCA_FILE, envelope("pca_model", fp, &outcome.pca)?);
    files.insert(
        CLUSTER_FILE,
        envelope(
            "cluster_model",
            fp,
            &ClusterArtifact {
                params,
                model: outcome.cluster.clone(),
            },
        )?,
    );
    files.insert(GROUPS_FILE, envelope("groups", fp, &outcome.groups)?);
    files.insert(INGEST_FILE, envelope("ingest_report", fp, &inputs.report)?);

    let mut assignments = String::from("endpoint,group_id\n");
    let mut distances = String::from("endpoint");
    for j in 0..outcome.cluster.k {
        let _ = write!(distances, ",d{j}");
    }
    distances.push('\n');
    for a in &outcome.assignments {
        let _ = writeln!(assignments, "{},{}", a.endpoint, a.group_id);
        let _ = write!(distances, "{}", a.endpoint);
        for d in &a.mean_distances {
            let _ = write!(distances, ",{d:?}");
        }
        distances.push('\n');
    }
    files.insert(ASSIGNMENTS_FILE, assignments);
    files.insert(DISTANCES_FILE, distances);
    if config.export_features {
        files.insert(FEATURES_FILE, outcome.samples.to_csv());
    }

    let mut manifest = Manifest {
        fingerprint: fp.clone(),
        files: BTreeMap::new(),
    };
    for (name, contents) in &files {
        write_file(&out.join(name), contents)?;
        manifest.files.insert(name.to_string(), sha256_hex(contents.as_bytes()));
    }
    write_file(&out.join(MANIFEST_FILE), to_json(&manifest)?)?;
    write_file(
        &out.join(TIMING_FILE),
        envelope(
            "timing",
            fp,
            &Timing {
                grouping_seconds: outcome.run_time_seconds,
            },
        )?,
    )?;

    let r = &inputs.report;
    Ok(format!(
        "group: {} records read, {} kept, {} dropped, {} mapped to objects\n\
         group: {} endpoints, {} samples, {} features -> {} dims, k = {}, {} groups in {:.3}s\n\
         group: fingerprint {}\n",
        r.records_read,
        r.records_kept,
        r.records_dropped_unknown,
        r.records_mapped_to_objects,
        outcome.groups.endpoint_count(),
        outcome.samples.len(),
        outcome.schema.dimension,
        outcome.pca.retained_dim,
        outcome.cluster.k,
        outcome.groups.suggested_qty,
        outcome.run_time_seconds,
        short(fp)
    ))
}

pub fn run_rules(config: &PipelineConfig, strict: bool) -> Result<String> {
    let inputs = load_inputs(config, strict)?;
    let artifacts = GroupArtifacts::load(&config.out_dir, &inputs.fingerprint)?;
    let (ruleset, hygiene) = synthesize_rules(&inputs.flows, &artifacts.groups, &inputs.scope)?;

    let membership = artifacts.groups.membership();
    let allowed = inputs
        .flows
        .iter()
        .filter(|f| match_flow_with(&ruleset, &membership, &inputs.scope, &f.record) == Action::Allow)
        .count();
    if allowed != inputs.flows.len() {
        return Err(internal(format!(
            "ruleset admits only {allowed} of {} observed flows",
            inputs.flows.len()
        )));
    }

    let mut report = format!("fingerprint: {}\n", inputs.fingerprint);
    let _ = writeln!(report, "unknown_policy: {}", config.unknown_policy);
    let _ = writeln!(report, "observed flows allowed: {allowed}/{}", inputs.flows.len());
    report.push_str(&hygiene.render(&ruleset));
    write_file(&config.out_dir.join(RULES_FILE), ruleset.to_csv())?;
    write_file(&config.out_dir.join(RULES_REPORT_FILE), &report)?;
    Ok(format!(
        "rules: {} rules for {} groups, default {}, hygiene {}\n",
        ruleset.len(),
        artifacts.groups.suggested_qty,
        ruleset.default_action,
        if hygiene.is_clean() { "clean" } else { "has findings" }
    ))
}

fn load_truth(config: &PipelineConfig) -> Result<GroundTruth> {
    GroundTruth::parse(&read_text(&truth_path(config))?)
}

pub fn run_eval(config: &PipelineConfig, strict: bool) -> Result<String> {
    let inputs = load_inputs(config, strict)?;
    let artifacts = GroupArtifacts::load(&config.out_dir, &inputs.fingerprint)?;
    let truth = load_truth(config)?;
    let report = evaluate(&artifacts.groups, &truth.labels, artifacts.grouping_seconds)?;
    let row = report.csv_row(&config.dataset_name());
    write_file(
        &config.out_dir.join(EVAL_FILE),
        format!("{EVAL_REPORT_HEADER}\n{row}\n"),
    )?;
    let [h, c, v] = report.percentages();
    Ok(format!(
        "{EVAL_REPORT_HEADER}\n{row}\nhomogeneity {h}, completeness {c}, v-measure {v}\n"
    ))
}

/// Grid file: one candidate per line, whitespace-separated `key=value`
/// overrides on top of the base config.
pub fn parse_grid(text: &str, base: &PipelineConfig) -> Result<Vec<(String, PipelineConfig)>> {
    let mut grid = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut candidate = base.clone();
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::Config(format!("grid line {}: expected key=value, got {token:?}", idx + 1))
            })?;
            candidate.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("grid line {}: {msg}", idx + 1)),
                other => other,
            })?;
        }
        grid.push((line.split_whitespace().collect::<Vec<_>>().join(" "), candidate));
    }
    if grid.is_empty() {
        return Err(Error::Config("tuning grid has no candidates".into()));
    }
    Ok(grid)
}

pub fn run_tune(config: &PipelineConfig, strict: bool) -> Result<String> {
    let grid_path = config
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("tune needs a `grid` file in the config".into()))?;
    let grid = parse_grid(&read_text(grid_path)?, config)?;
    let truth = load_truth(config)?;

    let mut cache: BTreeMap<String, Vec<ClassifiedFlow>> = BTreeMap::new();
    let outcome = tune(&grid, config.homogeneity_floor, |(_, candidate)| {
        let key = candidate.unknown_policy.to_string();
        if !cache.contains_key(&key) {
            cache.insert(key.clone(), load_inputs(candidate, strict)?.flows);
        }
        let grouped = group_flows(&cache[&key], &candidate.grouping_params())?;
        evaluate(&grouped.groups, &truth.labels, grouped.run_time_seconds)
    })?;

    let mut table = String::from(
        "index,settings,homogeneity,completeness,v_measure,suggested_group_qty,meets_floor\n",
    );
    for (i, ((settings, _), r)) in grid.iter().zip(&outcome.reports).enumerate() {
        let _ = writeln!(
            table,
            "{i},{settings},{:?},{:?},{:?},{},{}",
            r.homogeneity,
            r.completeness,
            r.v_measure,
            r.suggested_group_qty,
            r.homogeneity >= config.homogeneity_floor
        );
    }
    let (settings, best) = &outcome.best;
    write_file(&config.out_dir.join(TUNE_FILE), &table)?;
    let best_text = format!(
        "# best of {} candidates: {settings}\n{}homogeneity_floor = {:?}\n",
        grid.len(),
        best.grouping_key_text(),
        best.homogeneity_floor
    );
    write_file(&config.out_dir.join(BEST_CONFIG_FILE), best_text)?;
    let [h, c, v] = outcome.report.percentages();
    let mut msg = format!(
        "tune: {} candidates, best #{} [{settings}]: homogeneity {h}, completeness {c}, v-measure {v}, {} groups\n",
        grid.len(),
        outcome.best_index,
        outcome.report.suggested_group_qty
    );
    if outcome.below_floor {
        let _ = writeln!(
            msg,
            "tune: warning: no candidate reached homogeneity {}; picked the most homogeneous",
            config.homogeneity_floor
        );
    }
    Ok(msg)
}
