use std::net::Ipv4Addr;

use microseg::grouping::{assign_endpoint, derive_groups, kmeans_fit, KMeansParams};

fn main() -> microseg::Result<()> {
    let endpoints: Vec<(Ipv4Addr, Vec<Vec<f64>>)> = (1..=6u8)
        .map(|h| {
            let centre = if h <= 3 { -4.0 } else { 4.0 };
            let samples = (0..5).map(|w| vec![centre + 0.1 * w as f64, f64::from(h) * 0.05]).collect();
            (Ipv4Addr::new(10, 0, 0, h), samples)
        })
        .collect();
    let all: Vec<Vec<f64>> = endpoints.iter().flat_map(|(_, s)| s.clone()).collect();
    let model = kmeans_fit(&all, &KMeansParams::new(3, 42))?;
    println!("k = {}, inertia {:.4}, {} iterations", model.k, model.inertia, model.iterations_run);

    let assignments = endpoints
        .iter()
        .map(|(e, s)| assign_endpoint(*e, s, &model))
        .collect::<microseg::Result<Vec<_>>>()?;
    let groups = derive_groups(&assignments)?;
    println!("{} non-empty groups", groups.suggested_qty);
    for (id, members) in &groups.groups {
        println!("  group {id}: {members:?}");
    }
    Ok(())
}
