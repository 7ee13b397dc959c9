//! Unsupervised refinement: a linear probe on WKS plus orientation features
//! is trained with ADAM to make C and Q orthogonal on a few shape pairs.
//!
//! cargo run --release --example refine_probe

use duo_fmaps::descriptors::default_channel_columns;
use duo_fmaps::mesh::{generate_blob, BlobOptions};
use duo_fmaps::refine::{optimize, probe_input, total_loss};
use duo_fmaps::spectral::SpectralData;
use duo_fmaps::{LinearProbe, PairState, TrainConfig, WksParams};

fn main() -> duo_fmaps::Result<()> {
    let opts = BlobOptions {
        resolution: 2,
        ..Default::default()
    };
    let params = WksParams {
        num_energies: 32,
        sigma_scale: 4.0,
    };
    let cols = default_channel_columns(32, 4);
    let shapes = (0..3)
        .map(|seed| {
            let data = SpectralData::compute(&generate_blob(seed, &opts)?, 30, 12)?;
            let base = probe_input(&data, &params, &cols)?;
            Ok((data, base))
        })
        .collect::<duo_fmaps::Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for i in 0..shapes.len() {
        for j in 0..shapes.len() {
            if i != j {
                let ((a, ba), (b, bb)) = (&shapes[i], &shapes[j]);
                pairs.push(PairState::new(format!("{i}->{j}"), a, b, ba, bb)?);
            }
        }
    }

    let d = pairs[0].dim();
    let mut init = LinearProbe::random(d, 16, 0.05, 1);
    init.w += nalgebra::DMatrix::<f64>::identity(d, 16);
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 2e-3,
        seed: 9,
        ..Default::default()
    };
    let mean = |w: &nalgebra::DMatrix<f64>| -> duo_fmaps::Result<f64> {
        let total: f64 = pairs
            .iter()
            .map(|p| total_loss(p, w, &cfg).map(|l| l.l_final))
            .sum::<duo_fmaps::Result<f64>>()?;
        Ok(total / pairs.len() as f64)
    };
    let before = mean(&init.w)?;
    let result = optimize(&pairs, &init, &cfg)?;
    println!(
        "{} pairs, {} steps: mean L_final {:.4e} -> {:.4e}",
        pairs.len(),
        result.history.len(),
        before,
        mean(&result.probe.w)?
    );
    Ok(())
}
