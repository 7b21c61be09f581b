use microseg::metrics::{format_percent, score_labels};

fn main() -> microseg::Result<()> {
    let truth = ["web", "web", "web", "db", "db", "cache"];
    for (name, pred) in [
        ("exact", [0, 0, 0, 1, 1, 2]),
        ("split web", [0, 0, 3, 1, 1, 2]),
        ("merged db+cache", [0, 0, 0, 1, 1, 1]),
        ("singletons", [0, 1, 2, 3, 4, 5]),
    ] {
        let (h, c, v) = score_labels(&truth, &pred)?;
        println!(
            "{name:>16}: homogeneity {}, completeness {}, v-measure {}",
            format_percent(h),
            format_percent(c),
            format_percent(v)
        );
    }
    Ok(())
}
