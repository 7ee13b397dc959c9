//! On a mirror-symmetric shape, composing the target descriptors with the
//! mirror leaves every intrinsic energy of C unchanged. The orthogonality
//! energy of Q tells the two apart, because a complex-linear Q cannot
//! represent an orientation-reversing map.
//!
//! cargo run --release --example mirror_ambiguity

use duo_fmaps::convert::symmetry_ambiguity_probe;
use duo_fmaps::descriptors::default_channel_columns;
use duo_fmaps::mesh::{generate_symmetric_blob, BlobOptions, Point};
use duo_fmaps::refine::probe_input;
use duo_fmaps::spectral::SpectralData;
use duo_fmaps::{FmapOptions, SelfSymmetry, WksParams};
use nalgebra::DMatrix;

pub fn main() -> duo_fmaps::Result<()> {
    let (source, sym) = generate_symmetric_blob(7, &BlobOptions::default())?;
    // Stretching along y keeps the x mirror but makes the pair non-isometric.
    let target = source.map_vertices(|p| Point::new(p.x, 1.05 * p.y, p.z))?;
    let sym_t = SelfSymmetry::new(&target, sym.permutation().to_vec(), -1)?;

    let m = SpectralData::compute(&source, 30, 15)?;
    let n = SpectralData::compute(&target, 30, 15)?;
    let cols = default_channel_columns(128, 8);
    let bm = probe_input(&m, &WksParams::default(), &cols)?;
    let bn = probe_input(&n, &WksParams::default(), &cols)?;
    let identity = DMatrix::identity(bm.ncols(), bm.ncols());
    let r = symmetry_ambiguity_probe(&m, &n, &bm, &bn, &sym_t, &identity, &FmapOptions::default())?;

    println!("               L_ortho      L_iso        L_Q-ortho    L_Q-iso");
    for (name, t) in [("direct", r.direct), ("mirrored", r.mirrored)] {
        println!(
            "{name:<12} {:12.6e} {:12.6e} {:12.6e} {:12.6e}",
            t.ortho, t.iso, t.q_ortho, t.q_iso
        );
    }
    println!(
        "intrinsic relative difference {:.1e}, Q margin {:.3e}",
        r.intrinsic_rel_diff, r.q_ortho_margin
    );
    Ok(())
}
