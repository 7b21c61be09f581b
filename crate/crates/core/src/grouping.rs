//! K-means over endpoint signatures and the average-distance group rule.
//!
//! Samples are clustered per (endpoint, window). An endpoint then joins the
//! centroid with the smallest mean distance over all of its samples, so busy
//! and quiet endpoints are treated alike. Centroids that win no endpoint do
//! not become groups.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{distance, squared_distance};
use crate::metrics::EvalReport;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_RESTARTS: usize = 4;

/// Number of clusters, resolved against the endpoint count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    /// One potential group per endpoint.
    #[default]
    Endpoints,
    Absolute(usize),
    /// Fraction of the endpoint count, rounded up.
    Fraction(f64),
}

impl KSpec {
    pub fn resolve(&self, endpoints: usize) -> Result<usize> {
        let k = match *self {
            KSpec::Endpoints => endpoints,
            KSpec::Absolute(k) => k,
            KSpec::Fraction(f) => (f * endpoints as f64).ceil() as usize,
        };
        if k == 0 {
            return Err(Error::Grouping(format!("k resolves to 0 for {endpoints} endpoints")));
        }
        if k > endpoints {
            return Err(Error::Grouping(format!(
                "k = {k} exceeds the {endpoints} endpoints available"
            )));
        }
        Ok(k)
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Endpoints => f.write_str("endpoints"),
            KSpec::Absolute(k) => write!(f, "{k}"),
            KSpec::Fraction(x) => write!(f, "frac:{x}"),
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("invalid k {s:?}"));
        if s == "endpoints" {
            return Ok(KSpec::Endpoints);
        }
        if let Some(frac) = s.strip_prefix("frac:") {
            let f: f64 = frac.trim().parse().map_err(|_| bad())?;
            if !(f > 0.0 && f <= 1.0) {
                return Err(bad());
            }
            return Ok(KSpec::Fraction(f));
        }
        let k: usize = s.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(KSpec::Absolute(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    /// Sum of squared distances from each sample to its nearest centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl ClusterModel {
    pub fn dimension(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid, lowest index on ties.
    pub fn nearest(&self, sample: &[f64]) -> (usize, f64) {
        nearest(sample, &self.centroids)
    }
}

fn nearest(sample: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(sample, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Number of distinct rows, comparing values bit for bit (`-0.0 == 0.0`).
pub fn count_distinct_rows(samples: &[Vec<f64>]) -> usize {
    samples
        .iter()
        .map(|row| row.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

fn check_samples(samples: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Grouping("k must be at least 1".into()));
    }
    let Some(first) = samples.first() else {
        return Err(Error::Grouping("no samples to cluster".into()));
    };
    if samples.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Grouping("samples disagree on dimension".into()));
    }
    let distinct = count_distinct_rows(samples);
    if k > distinct {
        return Err(Error::Grouping(format!(
            "k = {k} exceeds the {distinct} distinct samples"
        )));
    }
    Ok(())
}

/// k-means++ seeding driven by `seed`.
pub fn kmeans_pp_init(samples: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_samples(samples, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seed_centroids(samples, k, &mut rng)
}

fn seed_centroids(samples: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let n = samples.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(samples[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = samples
        .par_iter()
        .map(|s| squared_distance(s, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::Grouping(
                "ran out of distinct samples while seeding centroids".into(),
            ));
        }
        let target = rng.gen::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (i, w) in d2.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            cumulative += w;
            chosen = Some(i);
            if cumulative > target {
                break;
            }
        }
        let chosen = chosen.expect("positive total implies a positive weight");
        let centroid = samples[chosen].clone();
        d2.par_iter_mut().zip(samples.par_iter()).for_each(|(w, s)| {
            let d = squared_distance(s, &centroid);
            if d < *w {
                *w = d;
            }
        });
        centroids.push(centroid);
    }
    Ok(centroids)
}

fn assign_all(samples: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    samples
        .par_iter()
        .map(|s| nearest(s, centroids))
        .unzip()
}

/// Lloyd iterations from the given centroids.
///
/// Returns the fitted model plus the inertia observed after every assignment
/// step, starting with the initial assignment.
pub fn lloyd(
    samples: &[Vec<f64>],
    initial: Vec<Vec<f64>>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> (ClusterModel, Vec<f64>) {
    let k = initial.len();
    let dim = samples[0].len();
    let mut centroids = initial;
    let (mut labels, mut dists) = assign_all(samples, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut trace = vec![inertia];
    let mut iterations_run = 0;

    while iterations_run < max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (s, &label) in samples.iter().zip(&labels) {
            counts[label] += 1;
            for (acc, x) in sums[label].iter_mut().zip(s) {
                *acc += x;
            }
        }
        let mut updated: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((sum, &count), old)| {
                if count == 0 {
                    old.clone()
                } else {
                    sum.into_iter().map(|x| x / count as f64).collect()
                }
            })
            .collect();

        // Empty clusters move to the samples farthest from their centroids.
        if counts.contains(&0) {
            let mut far: Vec<(usize, f64)> = samples
                .iter()
                .zip(&labels)
                .enumerate()
                .map(|(i, (s, &label))| (i, squared_distance(s, &updated[label])))
                .filter(|(_, d)| *d > 0.0)
                .collect();
            far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut far = far.into_iter();
            for j in (0..k).filter(|&j| counts[j] == 0) {
                let Some((i, _)) = far.next() else { break };
                updated[j] = samples[i].clone();
                labels[i] = j;
            }
        }

        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        iterations_run += 1;
        (labels, dists) = assign_all(samples, &centroids);
        inertia = dists.iter().sum();
        trace.push(inertia);
        if movement < tol {
            break;
        }
    }

    (
        ClusterModel {
            centroids,
            k,
            inertia,
            iterations_run,
            seed,
        },
        trace,
    )
}

/// Best-inertia K-means over `params.restarts` k-means++ seedings.
pub fn kmeans_fit(samples: &[Vec<f64>], params: &KMeansParams) -> Result<ClusterModel> {
    kmeans_fit_traced(samples, params).map(|(model, _)| model)
}

/// As [`kmeans_fit`], also returning the inertia trace of every restart.
pub fn kmeans_fit_traced(
    samples: &[Vec<f64>],
    params: &KMeansParams,
) -> Result<(ClusterModel, Vec<Vec<f64>>)> {
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::Grouping("tol must be positive".into()));
    }
    if params.max_iter == 0 {
        return Err(Error::Grouping("max_iter must be at least 1".into()));
    }
    check_samples(samples, params.k)?;
    let mut best: Option<ClusterModel> = None;
    let mut traces = Vec::new();
    for restart in 0..params.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(restart as u64);
        let init = seed_centroids(samples, params.k, &mut rng)?;
        let (model, trace) = lloyd(samples, init, params.tol, params.max_iter, params.seed);
        traces.push(trace);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok((best.expect("at least one restart"), traces))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub endpoint: Ipv4Addr,
    pub group_id: usize,
    /// Mean Euclidean distance of the endpoint's samples to each centroid.
    pub mean_distances: Vec<f64>,
}

pub fn assign_endpoint(
    endpoint: Ipv4Addr,
    samples: &[Vec<f64>],
    model: &ClusterModel,
) -> Result<GroupAssignment> {
    if samples.is_empty() {
        return Err(Error::Grouping(format!("endpoint {endpoint} has no samples")));
    }
    let dim = model.dimension();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Grouping(format!(
            "endpoint {endpoint}: sample dimension differs from centroids ({dim})"
        )));
    }
    let mean_distances: Vec<f64> = model
        .centroids
        .iter()
        .map(|c| samples.iter().map(|s| distance(s, c)).sum::<f64>() / samples.len() as f64)
        .collect();
    let group_id = mean_distances
        .iter()
        .enumerate()
        .fold(0, |best, (j, d)| if *d < mean_distances[best] { j } else { best });
    Ok(GroupAssignment {
        endpoint,
        group_id,
        mean_distances,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SecurityGroups {
    pub groups: BTreeMap<usize, BTreeSet<Ipv4Addr>>,
    pub suggested_qty: usize,
}

impl SecurityGroups {
    /// Endpoint to group lookup.
    pub fn membership(&self) -> BTreeMap<Ipv4Addr, usize> {
        self.groups
            .iter()
            .flat_map(|(g, members)| members.iter().map(move |e| (*e, *g)))
            .collect()
    }

    pub fn group_of(&self, endpoint: Ipv4Addr) -> Option<usize> {
        self.groups
            .iter()
            .find(|(_, members)| members.contains(&endpoint))
            .map(|(g, _)| *g)
    }

    pub fn endpoint_count(&self) -> usize {
        self.groups.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty_group(&self, group: usize) -> bool {
        self.groups.get(&group).is_none_or(BTreeSet::is_empty)
    }
}

pub fn derive_groups(assignments: &[GroupAssignment]) -> Result<SecurityGroups> {
    let mut groups: BTreeMap<usize, BTreeSet<Ipv4Addr>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for a in assignments {
        if !seen.insert(a.endpoint) {
            return Err(Error::Grouping(format!("endpoint {} assigned twice", a.endpoint)));
        }
        groups.entry(a.group_id).or_default().insert(a.endpoint);
    }
    let suggested_qty = groups.len();
    Ok(SecurityGroups {
        groups,
        suggested_qty,
    })
}

/// How group membership moved between two groupings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MembershipDiff {
    pub added: Vec<Ipv4Addr>,
    pub removed: Vec<Ipv4Addr>,
    /// Endpoints present in both whose set of co-members (among endpoints
    /// present in both) changed.
    pub changed: Vec<Ipv4Addr>,
}

impl MembershipDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }
}

pub fn membership_diff(before: &SecurityGroups, after: &SecurityGroups) -> MembershipDiff {
    let old = before.membership();
    let new = after.membership();
    let common: BTreeSet<Ipv4Addr> = old.keys().filter(|e| new.contains_key(e)).copied().collect();
    let peers = |map: &BTreeMap<Ipv4Addr, usize>, e: &Ipv4Addr| -> BTreeSet<Ipv4Addr> {
        let g = map[e];
        common.iter().filter(|o| map[*o] == g).copied().collect()
    };
    MembershipDiff {
        added: new.keys().filter(|e| !old.contains_key(e)).copied().collect(),
        removed: old.keys().filter(|e| !new.contains_key(e)).copied().collect(),
        changed: common
            .iter()
            .filter(|e| peers(&old, e) != peers(&new, e))
            .copied()
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome<C> {
    pub best_index: usize,
    pub best: C,
    pub report: EvalReport,
    /// No candidate reached the homogeneity floor; `best` maximizes homogeneity.
    pub below_floor: bool,
    pub reports: Vec<EvalReport>,
}

/// Pick the winner: highest V-measure among candidates at or above the
/// homogeneity floor, else highest homogeneity. First in order on ties.
pub fn select_best(reports: &[EvalReport], homogeneity_floor: f64) -> Option<(usize, bool)> {
    let argmax = |key: &dyn Fn(&EvalReport) -> f64, eligible: &dyn Fn(&EvalReport) -> bool| {
        reports
            .iter()
            .enumerate()
            .filter(|(_, r)| eligible(r))
            .fold(None::<(usize, f64)>, |best, (i, r)| match best {
                Some((_, v)) if key(r) <= v => best,
                _ => Some((i, key(r))),
            })
            .map(|(i, _)| i)
    };
    if let Some(i) = argmax(&|r| r.v_measure, &|r| r.homogeneity >= homogeneity_floor) {
        return Some((i, false));
    }
    argmax(&|r| r.homogeneity, &|_| true).map(|i| (i, true))
}

/// Evaluate every grid entry and keep the best one under [`select_best`].
pub fn tune<C, F>(grid: &[C], homogeneity_floor: f64, mut evaluate: F) -> Result<TuneOutcome<C>>
where
    C: Clone,
    F: FnMut(&C) -> Result<EvalReport>,
{
    if grid.is_empty() {
        return Err(Error::Grouping("tuning grid is empty".into()));
    }
    let reports = grid.iter().map(&mut evaluate).collect::<Result<Vec<_>>>()?;
    let (best_index, below_floor) =
        select_best(&reports, homogeneity_floor).expect("non-empty grid");
    Ok(TuneOutcome {
        best_index,
        best: grid[best_index].clone(),
        report: reports[best_index].clone(),
        below_floor,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| vec![*x]).collect()
    }

    fn ip(last: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 0, 0, last)
    }

    fn sorted_1d(model: &ClusterModel) -> Vec<f64> {
        let mut c: Vec<f64> = model.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        c
    }

    #[test]
    fn pp_init_picks_both_points() {
        for seed in 0..20 {
            let mut c = kmeans_pp_init(&pts(&[0.0, 10.0]), 2, seed).unwrap();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(c, pts(&[0.0, 10.0]));
        }
    }

    #[test]
    fn pp_init_single_and_deterministic() {
        let samples = pts(&[1.0, 4.0, 9.0, 16.0]);
        let one = kmeans_pp_init(&samples, 1, 7).unwrap();
        assert!(samples.contains(&one[0]));
        assert_eq!(
            kmeans_pp_init(&samples, 3, 99).unwrap(),
            kmeans_pp_init(&samples, 3, 99).unwrap()
        );
        assert!(kmeans_pp_init(&pts(&[1.0, 1.0]), 2, 0).is_err());
    }

    #[test]
    fn separated_pairs() {
        let model = kmeans_fit(&pts(&[0.0, 0.0, 10.0, 10.0]), &KMeansParams::new(2, 1)).unwrap();
        assert_eq!(sorted_1d(&model), vec![0.0, 10.0]);
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn one_centroid_per_point() {
        let samples = pts(&[0.0, 3.0, 7.0, 8.0]);
        let model = kmeans_fit(&samples, &KMeansParams::new(4, 5)).unwrap();
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn two_clusters_of_two() {
        let model = kmeans_fit(&pts(&[0.0, 2.0, 10.0, 12.0]), &KMeansParams::new(2, 3)).unwrap();
        assert_eq!(sorted_1d(&model), vec![1.0, 11.0]);
        assert!((model.inertia - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_params() {
        let s = pts(&[0.0, 1.0]);
        assert!(kmeans_fit(&s, &KMeansParams::new(3, 0)).is_err());
        assert!(kmeans_fit(&s, &KMeansParams { tol: 0.0, ..KMeansParams::new(1, 0) }).is_err());
        assert!(kmeans_fit(&s, &KMeansParams { max_iter: 0, ..KMeansParams::new(1, 0) }).is_err());
        assert!(kmeans_fit(&[], &KMeansParams::new(1, 0)).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let samples = pts(&[0.0, 0.1, 0.2, 50.0]);
        // the centroid at -100 never wins and is moved onto the far sample
        let (model, trace) = lloyd(&samples, pts(&[-100.0, 0.1]), 1e-9, 50, 0);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        let c = sorted_1d(&model);
        assert!((c[0] - 0.1).abs() < 1e-12 && c[1] == 50.0, "{c:?}");
        assert!((model.inertia - 0.02).abs() < 1e-12);
    }

    #[test]
    fn assignment_examples() {
        let model = ClusterModel {
            centroids: pts(&[1.0, 10.0]),
            k: 2,
            inertia: 0.0,
            iterations_run: 0,
            seed: 0,
        };
        let a = assign_endpoint(ip(1), &pts(&[0.0, 2.0]), &model).unwrap();
        assert_eq!(a.mean_distances, vec![1.0, 9.0]);
        assert_eq!(a.group_id, 0);
        assert!(assign_endpoint(ip(1), &[], &model).is_err());

        let tie = ClusterModel { centroids: pts(&[0.0, 10.0]), ..model.clone() };
        let a = assign_endpoint(ip(2), &pts(&[0.0, 10.0]), &tie).unwrap();
        assert_eq!(a.mean_distances, vec![5.0, 5.0]);
        assert_eq!(a.group_id, 0);

        let four = ClusterModel { centroids: pts(&[0.0, 1.0, 2.0, 3.0]), k: 4, ..model };
        let a = assign_endpoint(ip(3), &pts(&[3.0]), &four).unwrap();
        assert_eq!(a.group_id, 3);
        assert_eq!(a.mean_distances[3], 0.0);
    }

    fn assignment(last: u8, group: usize) -> GroupAssignment {
        GroupAssignment { endpoint: ip(last), group_id: group, mean_distances: vec![] }
    }

    #[test]
    fn bucketing() {
        let g = derive_groups(&[assignment(1, 3), assignment(2, 3), assignment(3, 7)]).unwrap();
        assert_eq!(g.suggested_qty, 2);
        assert_eq!(g.groups[&3], [ip(1), ip(2)].into_iter().collect());
        assert_eq!(g.groups[&7], [ip(3)].into_iter().collect());
        assert_eq!(g.group_of(ip(3)), Some(7));

        let all = derive_groups(&[assignment(1, 0), assignment(2, 0)]).unwrap();
        assert_eq!(all.suggested_qty, 1);
        assert!(derive_groups(&[assignment(1, 0), assignment(1, 2)]).is_err());
    }

    #[test]
    fn diff_tracks_co_membership() {
        let before = derive_groups(&[assignment(1, 0), assignment(2, 0), assignment(3, 1)]).unwrap();
        assert!(membership_diff(&before, &before).is_empty());
        let after = derive_groups(&[
            assignment(1, 5),
            assignment(2, 6),
            assignment(3, 6),
            assignment(4, 6),
        ])
        .unwrap();
        let diff = membership_diff(&before, &after);
        assert_eq!(diff.added, vec![ip(4)]);
        assert_eq!(diff.changed, vec![ip(1), ip(2), ip(3)]);
    }

    #[test]
    fn k_spec_parsing_and_resolution() {
        assert_eq!("endpoints".parse::<KSpec>().unwrap().resolve(12).unwrap(), 12);
        assert_eq!("5".parse::<KSpec>().unwrap().resolve(12).unwrap(), 5);
        assert_eq!("frac:0.5".parse::<KSpec>().unwrap().resolve(5).unwrap(), 3);
        assert!("13".parse::<KSpec>().unwrap().resolve(12).is_err());
        assert!("0".parse::<KSpec>().is_err());
        assert!("frac:1.5".parse::<KSpec>().is_err());
        for k in [KSpec::Endpoints, KSpec::Absolute(3), KSpec::Fraction(0.25)] {
            assert_eq!(k.to_string().parse::<KSpec>().unwrap(), k);
        }
    }

    fn report(h: f64, v: f64) -> EvalReport {
        EvalReport { homogeneity: h, v_measure: v, ..EvalReport::default() }
    }

    #[test]
    fn tune_selection_rules() {
        let out = tune(&["only"], 0.95, |_| Ok(report(0.97, 0.9))).unwrap();
        assert_eq!(out.best, "only");
        assert!(!out.below_floor);

        let reports = [report(0.96, 0.91), report(0.99, 0.88)];
        let out = tune(&[0usize, 1], 0.95, |i| Ok(reports[*i].clone())).unwrap();
        assert_eq!(out.best, 0);

        let reports = [report(0.5, 0.6), report(0.9, 0.5), report(0.9, 0.7)];
        let out = tune(&[0usize, 1, 2], 0.95, |i| Ok(reports[*i].clone())).unwrap();
        assert_eq!(out.best, 1);
        assert!(out.below_floor);

        assert!(tune::<usize, _>(&[], 0.95, |_| Ok(report(1.0, 1.0))).is_err());
    }
}
