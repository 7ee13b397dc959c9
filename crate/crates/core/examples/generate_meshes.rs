//! Synthetic meshes: an icosphere, a mirror-symmetric blob with its
//! symmetry, an asymmetric blob and a wobbly torus, written as OFF files.
//!
//! cargo run --release --example generate_meshes -- [out_dir]

use duo_fmaps::convert::write_index_list;
use duo_fmaps::mesh::{
    generate_blob, generate_icosphere, generate_symmetric_blob, generate_torus, save_mesh,
    BlobOptions, MeshFormat,
};

fn main() -> duo_fmaps::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let opts = BlobOptions::default();

    let (blob, sym) = generate_symmetric_blob(7, &opts)?;
    let meshes = [
        ("icosphere_3", generate_icosphere(3, 1.0)?),
        ("blob_0007", blob),
        ("ablob_0003", generate_blob(3, &opts)?),
        ("torus", generate_torus(40, 24, 2.0, 0.7, 0.2)?),
    ];
    for (name, mesh) in &meshes {
        let path = out.join(format!("{name}.off"));
        save_mesh(mesh, &path, Some(MeshFormat::Off))?;
        println!(
            "{:<12} {:>5} vertices {:>5} faces  area {:.3}  -> {}",
            name,
            mesh.num_vertices(),
            mesh.faces().len(),
            mesh.total_area(),
            path.display()
        );
    }
    write_index_list(out.join("blob_0007.sym"), sym.permutation())?;
    let fixed = (0..sym.permutation().len())
        .filter(|&v| sym.apply(v) == v)
        .count();
    println!("blob_0007 mirror fixes {fixed} vertices on the x = 0 plane");
    Ok(())
}
