//! Grid search over k and PCA size against known labels.

use microseg::embedding::PcaTarget;
use microseg::grouping::{tune, KSpec};
use microseg::ingest::{filter_flows, UnknownPolicy};
use microseg::metrics::evaluate;
use microseg::pipeline::{group_flows, GroupingParams};
use microseg::synth::{generate, ScenarioSpec};

fn main() -> microseg::Result<()> {
    let data = generate(&ScenarioSpec::distinct_profiles(8, 3, 8, 15, 0.05, 0.0, 3))?;
    let (flows, _) = filter_flows(data.records, &data.scope, UnknownPolicy::DropUnknown);
    let mut grid = Vec::new();
    for k in [KSpec::Absolute(4), KSpec::Absolute(8), KSpec::Fraction(0.5), KSpec::Endpoints] {
        for pca_target in [PcaTarget::VarianceFraction(0.8), PcaTarget::VarianceFraction(0.95)] {
            grid.push(GroupingParams {
                k,
                pca_target,
                ..GroupingParams::default()
            });
        }
    }
    let outcome = tune(&grid, 0.95, |params| {
        let grouped = group_flows(&flows, params)?;
        evaluate(&grouped.groups, &data.ground_truth.labels, grouped.run_time_seconds)
    })?;
    for (params, r) in grid.iter().zip(&outcome.reports) {
        println!(
            "k={:<10} pca={:<5} h={:.4} c={:.4} v={:.4}",
            params.k.to_string(),
            params.pca_target.to_string(),
            r.homogeneity,
            r.completeness,
            r.v_measure
        );
    }
    println!("winner: #{} (below floor: {})", outcome.best_index, outcome.below_floor);
    Ok(())
}
