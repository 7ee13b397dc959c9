//! One-call matching: descriptors in, both functional maps and both point
//! maps out.

use nalgebra::DMatrix;

use crate::convert::{orientation_sign, p2p_from_c, p2p_from_q, PointMap};
use crate::descriptors::{normalize_columns, wks, WksParams};
use crate::fmap::{estimate_c_regularized, FmapOptions, FunctionalMap};
use crate::qmap::{complex_spectral_coeffs, estimate_q_regularized, ComplexFunctionalMap};
use crate::spectral::{project_real, SpectralData};
use crate::Result;

/// Everything `match` produces for one ordered pair `M -> N`.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub c: FunctionalMap,
    pub q: ComplexFunctionalMap,
    /// Vertices of `M` to vertices of `N`, from `C`.
    pub map_c: PointMap,
    /// Vertices of `M` to vertices of `N`, from `Q`.
    pub map_q: PointMap,
}

/// Mass-normalized WKS columns, reusing the cached copy when its parameters match.
pub fn wks_descriptors(data: &SpectralData, params: &WksParams) -> Result<DMatrix<f64>> {
    let mut set = match &data.wks {
        Some(set) if set.wks_params.as_ref() == Some(params) => set.clone(),
        _ => wks(&data.lb, params)?,
    };
    normalize_columns(&mut set.values, data.mass_diagonal());
    Ok(set.values)
}

/// Estimates `C` and `Q` from per-vertex descriptors and extracts both point
/// maps with their orientation signs.
pub fn match_shapes(
    source: &SpectralData,
    target: &SpectralData,
    desc_m: &DMatrix<f64>,
    desc_n: &DMatrix<f64>,
    opts: &FmapOptions,
) -> Result<MatchOutcome> {
    let a_m = project_real(&source.lb, desc_m)?;
    let a_n = project_real(&target.lb, desc_n)?;
    let c = estimate_c_regularized(
        &a_m,
        &a_n,
        &source.lb.eigenvalues,
        &target.lb.eigenvalues,
        opts,
    )?;
    let b_m = complex_spectral_coeffs(&source.conn, &source.gradient, desc_m)?;
    let b_n = complex_spectral_coeffs(&target.conn, &target.gradient, desc_n)?;
    let q = estimate_q_regularized(
        &b_m,
        &b_n,
        &source.conn.eigenvalues,
        &target.conn.eigenvalues,
        opts,
    )?;

    let mut map_c = p2p_from_c(&c.c, &source.lb.phi, &target.lb.phi)?;
    map_c.orientation = orientation_sign(&map_c, &source.mesh, &target.mesh);
    let mut map_q = p2p_from_q(
        &q.q,
        &source.conn.psi,
        &target.conn.psi,
        &source.divergence(),
        &target.divergence(),
    )?;
    map_q.orientation = orientation_sign(&map_q, &source.mesh, &target.mesh);
    Ok(MatchOutcome { c, q, map_c, map_q })
}
