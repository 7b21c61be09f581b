//! Fit PCA on correlated data, inspect explained variance and persist the model.

use microseg::embedding::{fit_pca_rows, PcaModel, PcaTarget};

fn main() -> microseg::Result<()> {
    // three observed columns driven by two latent factors
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
            vec![a + b, 2.0 * a - b, 0.5 * a + 0.01 * i as f64]
        })
        .collect();
    for target in [PcaTarget::VarianceFraction(0.95), PcaTarget::FixedDim(1)] {
        let model = fit_pca_rows(&rows, target)?;
        println!(
            "{target}: keeps {} of 3 dims, explained {:?}",
            model.retained_dim,
            model.explained_variance()
        );
        let json = model.to_json();
        assert_eq!(PcaModel::from_json(&json)?, model);
        println!("  signature of row 0: {:?}", model.project(&rows[0])?);
    }
    Ok(())
}
