//! Laplace-Beltrami and connection-Laplacian spectra of the unit sphere.
//! The smooth sphere has eigenvalues l(l+1) with multiplicity 2l+1.
//!
//! cargo run --release --example sphere_spectrum

use duo_fmaps::operators::MeshOperators;
use duo_fmaps::spectral::{eigensolve_connection, eigensolve_lb};

fn main() -> duo_fmaps::Result<()> {
    let sphere = duo_fmaps::mesh::generate_icosphere(4, 1.0)?;
    let ops = MeshOperators::build(&sphere)?;
    let t = std::time::Instant::now();
    let lb = eigensolve_lb(&ops.stiffness, &ops.mass, 25)?;
    let conn = eigensolve_connection(&ops.connection, &ops.mass, 12)?;
    println!(
        "{} vertices, eigensolves took {:.2?}",
        sphere.num_vertices(),
        t.elapsed()
    );

    let mut start = 0;
    for l in 0..5usize {
        let size = 2 * l + 1;
        let cluster = &lb.eigenvalues[start..start + size];
        let mean = cluster.iter().sum::<f64>() / size as f64;
        println!(
            "l = {l}: {size} eigenvalues, mean {mean:8.4} (smooth {:>2})",
            l * (l + 1)
        );
        start += size;
    }
    println!("connection Laplacian, smallest 12:");
    for mu in &conn.eigenvalues {
        print!(" {mu:.3}");
    }
    println!();
    Ok(())
}
