//! Recover a vertex relabeling from WKS descriptors with both the real map C
//! and the complex map Q, then score the result with geodesic errors.
//!
//! cargo run --release --example match_permuted

use duo_fmaps::convert::evaluate;
use duo_fmaps::mesh::{generate_blob, permuted_copy, BlobOptions};
use duo_fmaps::pipeline::{match_shapes, wks_descriptors};
use duo_fmaps::spectral::SpectralData;
use duo_fmaps::{FmapOptions, WksParams};

pub fn main() -> duo_fmaps::Result<()> {
    let source = generate_blob(3, &BlobOptions::default())?;
    let (target, truth) = permuted_copy(&source, 11)?;

    let m = SpectralData::compute(&source, 50, 20)?;
    let n = SpectralData::compute(&target, 50, 20)?;
    let params = WksParams::default();
    let out = match_shapes(
        &m,
        &n,
        &wks_descriptors(&m, &params)?,
        &wks_descriptors(&n, &params)?,
        &FmapOptions::default(),
    )?;

    for (name, map) in [("C", &out.map_c), ("Q", &out.map_q)] {
        let report = evaluate(map, &truth, &target)?;
        println!(
            "from {name}: {:.1}% exact, mean geodesic error {:.3} (x100 / sqrt(area)), orientation {:+}",
            100.0 * map.accuracy(&truth),
            report.mean_error,
            map.orientation
        );
    }
    Ok(())
}
