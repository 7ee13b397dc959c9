//! Precomputed operators, bases and WKS round-trip through the binary cache,
//! which refuses to load for a different mesh.
//!
//! cargo run --release --example spectral_cache

use duo_fmaps::descriptors::wks;
use duo_fmaps::mesh::{generate_icosphere, generate_symmetric_blob, BlobOptions};
use duo_fmaps::spectral::{cache_read_for, cache_write, SpectralData};
use duo_fmaps::WksParams;

pub fn main() -> duo_fmaps::Result<()> {
    let (mesh, _) = generate_symmetric_blob(1, &BlobOptions::default())?;
    let mut data = SpectralData::compute(&mesh, 50, 20)?;
    data.wks = Some(wks(&data.lb, &WksParams::default())?);

    let path = std::env::temp_dir().join("blob_0001.duoc");
    cache_write(&path, &data)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    let back = cache_read_for(&path, &mesh)?;
    println!(
        "wrote {} ({bytes} bytes); reloaded {} LB and {} connection eigenpairs, identical: {}",
        path.display(),
        back.lb.k(),
        back.conn.k(),
        back.lb.phi == data.lb.phi && back.conn.psi == data.conn.psi
    );
    match cache_read_for(&path, &generate_icosphere(3, 1.0)?) {
        Err(e) => println!("loading it for another mesh fails: {e}"),
        Ok(_) => println!("unexpected: cache accepted for another mesh"),
    }
    Ok(())
}
