//! Line-oriented `key = value` configuration.
//!
//! Every key has a default, so a minimal file names only its input and output
//! paths. Relative paths resolve against the directory holding the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::embedding::PcaTarget;
use crate::error::{Error, Result};
use crate::features::{DEFAULT_TOP_K_PORTS, DEFAULT_WINDOW_SECONDS};
use crate::grouping::{KSpec, DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL};
use crate::ingest::UnknownPolicy;
use crate::synth::ScenarioSpec;

use super::GroupingParams;

pub const DEFAULT_HOMOGENEITY_FLOOR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileStyle {
    Distinct,
    Disjoint,
}

impl FromStr for ProfileStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct" => Ok(ProfileStyle::Distinct),
            "disjoint" => Ok(ProfileStyle::Disjoint),
            other => Err(Error::Config(format!("unknown synth_profile {other:?}"))),
        }
    }
}

impl ProfileStyle {
    fn as_str(&self) -> &'static str {
        match self {
            ProfileStyle::Distinct => "distinct",
            ProfileStyle::Disjoint => "disjoint",
        }
    }
}

/// Scenario knobs for the `synth` command.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub groups: usize,
    pub endpoints_per_group: usize,
    pub windows: usize,
    pub flows: usize,
    pub noise: f64,
    pub object_share: f64,
    pub profile: ProfileStyle,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            groups: 4,
            endpoints_per_group: 3,
            windows: 6,
            flows: 20,
            noise: 0.0,
            object_share: 0.0,
            profile: ProfileStyle::Distinct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub log: Option<PathBuf>,
    pub scope: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub dataset: Option<String>,
    pub window_seconds: u64,
    pub top_k_ports: usize,
    pub pca_target: PcaTarget,
    pub k: KSpec,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub unknown_policy: UnknownPolicy,
    pub homogeneity_floor: f64,
    pub export_features: bool,
    pub synth: SynthSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            log: None,
            scope: None,
            ground_truth: None,
            grid: None,
            out_dir: PathBuf::from("out"),
            dataset: None,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            top_k_ports: DEFAULT_TOP_K_PORTS,
            pca_target: PcaTarget::default(),
            k: KSpec::Endpoints,
            seed: 0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_RESTARTS,
            unknown_policy: UnknownPolicy::DropUnknown,
            homogeneity_floor: DEFAULT_HOMOGENEITY_FLOOR,
            export_features: false,
            synth: SynthSettings::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::parse(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Set one key; used for config files, grid overrides and flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "log" => self.log = Some(value.into()),
            "scope" => self.scope = Some(value.into()),
            "ground_truth" => self.ground_truth = Some(value.into()),
            "grid" => self.grid = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            "dataset" => self.dataset = Some(value.to_string()),
            "window_seconds" => {
                self.window_seconds = parse_num(key, value)?;
                if self.window_seconds == 0 {
                    return Err(Error::Config("window_seconds must be at least 1".into()));
                }
            }
            "top_k_ports" => self.top_k_ports = parse_num(key, value)?,
            "pca_target" => self.pca_target = value.parse()?,
            "k" => self.k = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "tol" => {
                self.tol = parse_num(key, value)?;
                if self.tol.is_nan() || self.tol <= 0.0 {
                    return Err(Error::Config("tol must be positive".into()));
                }
            }
            "max_iter" => {
                self.max_iter = parse_num(key, value)?;
                if self.max_iter == 0 {
                    return Err(Error::Config("max_iter must be at least 1".into()));
                }
            }
            "restarts" => {
                self.restarts = parse_num(key, value)?;
                if self.restarts == 0 {
                    return Err(Error::Config("restarts must be at least 1".into()));
                }
            }
            "unknown_policy" => self.unknown_policy = value.parse()?,
            "homogeneity_floor" => {
                self.homogeneity_floor = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&self.homogeneity_floor) {
                    return Err(Error::Config("homogeneity_floor must lie in [0, 1]".into()));
                }
            }
            "export_features" => self.export_features = parse_num(key, value)?,
            "synth_groups" => self.synth.groups = parse_num(key, value)?,
            "synth_endpoints_per_group" => self.synth.endpoints_per_group = parse_num(key, value)?,
            "synth_windows" => self.synth.windows = parse_num(key, value)?,
            "synth_flows" => self.synth.flows = parse_num(key, value)?,
            "synth_noise" => self.synth.noise = parse_num(key, value)?,
            "synth_object_share" => {
                self.synth.object_share = parse_num(key, value)?;
                if !(0.0..1.0).contains(&self.synth.object_share) {
                    return Err(Error::Config("synth_object_share must lie in [0, 1)".into()));
                }
            }
            "synth_profile" => self.synth.profile = value.parse()?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.log, &mut self.scope, &mut self.ground_truth, &mut self.grid]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    pub fn grouping_params(&self) -> GroupingParams {
        GroupingParams {
            window_seconds: self.window_seconds,
            top_k_ports: self.top_k_ports,
            pca_target: self.pca_target,
            k: self.k,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
        }
    }

    /// Keys that shape the grouping result, in a fixed order.
    pub fn grouping_key_text(&self) -> String {
        format!(
            "window_seconds = {}\ntop_k_ports = {}\npca_target = {}\nk = {}\nseed = {}\ntol = {:?}\nmax_iter = {}\nrestarts = {}\nunknown_policy = {}\n",
            self.window_seconds,
            self.top_k_ports,
            self.pca_target,
            self.k,
            self.seed,
            self.tol,
            self.max_iter,
            self.restarts,
            self.unknown_policy,
        )
    }

    /// Full configuration in the file format, loadable by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for (key, value) in [
            ("log", path(&self.log)),
            ("scope", path(&self.scope)),
            ("ground_truth", path(&self.ground_truth)),
            ("grid", path(&self.grid)),
            ("out_dir", Some(self.out_dir.display().to_string())),
            ("dataset", self.dataset.clone()),
        ] {
            if let Some(value) = value {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out.push_str(&self.grouping_key_text());
        let _ = writeln!(out, "homogeneity_floor = {:?}", self.homogeneity_floor);
        let _ = writeln!(out, "export_features = {}", self.export_features);
        let s = &self.synth;
        let _ = writeln!(out, "synth_groups = {}", s.groups);
        let _ = writeln!(out, "synth_endpoints_per_group = {}", s.endpoints_per_group);
        let _ = writeln!(out, "synth_windows = {}", s.windows);
        let _ = writeln!(out, "synth_flows = {}", s.flows);
        let _ = writeln!(out, "synth_noise = {:?}", s.noise);
        let _ = writeln!(out, "synth_object_share = {:?}", s.object_share);
        let _ = writeln!(out, "synth_profile = {}", s.profile.as_str());
        out
    }

    pub fn scenario(&self) -> ScenarioSpec {
        let s = &self.synth;
        let mut spec = match s.profile {
            ProfileStyle::Distinct => ScenarioSpec::distinct_profiles(
                s.groups,
                s.endpoints_per_group,
                s.windows,
                s.flows,
                s.noise,
                s.object_share,
                self.seed,
            ),
            ProfileStyle::Disjoint => ScenarioSpec::disjoint_profiles(
                s.groups,
                s.endpoints_per_group,
                s.windows,
                s.flows,
                self.seed,
            ),
        };
        spec.window_seconds = self.window_seconds;
        spec
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.log
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = PipelineConfig::parse("log = flows.csv\nscope = scope.txt\nout_dir = out\n").unwrap();
        assert_eq!(c.window_seconds, 3600);
        assert_eq!(c.top_k_ports, 64);
        assert_eq!(c.pca_target, PcaTarget::VarianceFraction(0.95));
        assert_eq!(c.k, KSpec::Endpoints);
        assert_eq!(c.restarts, 4);
        assert_eq!(c.unknown_policy, UnknownPolicy::DropUnknown);
    }

    #[test]
    fn text_round_trip() {
        let mut c = PipelineConfig::default();
        c.set("k", "frac:0.5").unwrap();
        c.set("pca_target", "dim:7").unwrap();
        c.set("unknown_policy", "map_to_objects").unwrap();
        c.set("log", "a/b.csv").unwrap();
        c.set("synth_profile", "disjoint").unwrap();
        assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn bad_keys_and_values() {
        assert!(PipelineConfig::parse("colour = blue").is_err());
        assert!(PipelineConfig::parse("seed = many").is_err());
        assert!(PipelineConfig::parse("no equals sign").is_err());
        assert!(PipelineConfig::parse("tol = 0").is_err());
        assert!(matches!(PipelineConfig::parse("k = 0"), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = PipelineConfig::parse("log = flows.csv\nout_dir = /abs/out").unwrap();
        c.resolve_paths(Path::new("/etc/seg"));
        assert_eq!(c.log.unwrap(), PathBuf::from("/etc/seg/flows.csv"));
        assert_eq!(c.out_dir, PathBuf::from("/abs/out"));
    }
}
