#[path = "../examples/ground_state.rs"]
mod ground_state;
#[path = "../examples/spectrum.rs"]
mod spectrum;
#[path = "../examples/moving_kernel.rs"]
mod moving_kernel;
#[path = "../examples/soliton_evolution.rs"]
mod soliton_evolution;
#[path = "../examples/critical_collapse.rs"]
mod critical_collapse;
#[path = "../examples/fbbm_threshold.rs"]
mod fbbm_threshold;
#[path = "../examples/profile_cache.rs"]
mod profile_cache;

#[test]
fn ground_state_runs() {
    ground_state::run().unwrap();
}

#[test]
fn spectrum_runs() {
    spectrum::run().unwrap();
}

#[test]
fn moving_kernel_runs() {
    moving_kernel::run().unwrap();
}

#[test]
fn soliton_evolution_runs() {
    soliton_evolution::run().unwrap();
}

#[test]
fn critical_collapse_runs() {
    critical_collapse::run().unwrap();
}

#[test]
fn fbbm_threshold_runs() {
    fbbm_threshold::run().unwrap();
}

#[test]
fn profile_cache_runs() {
    profile_cache::run().unwrap();
}
