//! The complex map Q acts on tangent vector fields the way C acts on
//! functions: <X, grad(C f)> on the source equals <Q X, grad f> on the
//! target. This checks that relation on band-limited probes.
//!
//! cargo run --release --example pushforward_check

use duo_fmaps::mesh::{generate_blob, permuted_copy, BlobOptions};
use duo_fmaps::pipeline::{match_shapes, wks_descriptors};
use duo_fmaps::qmap::{default_probes, verify_pushforward_relation, ShapeView};
use duo_fmaps::spectral::SpectralData;
use duo_fmaps::{FmapOptions, WksParams};

fn main() -> duo_fmaps::Result<()> {
    let source = generate_blob(4, &BlobOptions::default())?;
    let (target, _) = permuted_copy(&source, 2)?;
    let m = SpectralData::compute(&source, 40, 16)?;
    let n = SpectralData::compute(&target, 40, 16)?;
    let params = WksParams::default();
    let out = match_shapes(
        &m,
        &n,
        &wks_descriptors(&m, &params)?,
        &wks_descriptors(&n, &params)?,
        &FmapOptions::default(),
    )?;

    let (vm, vn) = (ShapeView::of(&m), ShapeView::of(&n));
    let (functions, fields) = default_probes(vm, vn, 20);
    let report = verify_pushforward_relation(&out.c, &out.q, vm, vn, &functions, &fields)?;
    println!(
        "pushforward residual: max {:.2e}, mean {:.2e}; L_Q-ortho {:.2e}",
        report.max_residual, report.mean_residual, report.q_ortho
    );
    let qhq = out.q.q.adjoint() * &out.q.q;
    let diag: Vec<String> = (0..4).map(|i| format!("{:.4}", qhq[(i, i)].re)).collect();
    println!("leading diagonal of Q^H Q: {}", diag.join(" "));
    Ok(())
}
