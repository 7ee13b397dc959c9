//! Runs the cheaper examples so they cannot silently rot.

#[path = "../examples/match_permuted.rs"]
mod match_permuted;
#[path = "../examples/mirror_ambiguity.rs"]
mod mirror_ambiguity;
#[path = "../examples/spectral_cache.rs"]
mod spectral_cache;

#[test]
fn match_permuted_runs() {
    match_permuted::main().unwrap();
}

#[test]
fn mirror_ambiguity_runs() {
    mirror_ambiguity::main().unwrap();
}

#[test]
fn spectral_cache_runs() {
    spectral_cache::main().unwrap();
}
