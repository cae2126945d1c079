//! At α = 1/2 the energy of the ground state vanishes, and data slightly above
//! it concentrates. The rescaled diagnostics follow the concentration rate μ(t)
//! and the distance of the rescaled solution from the ground state orbit.
//!
//! Defaults are quick; `-- 16384 1.5` reproduces the acceptance run.

use fracwave::dynamics::{self, CriticalOptions, EvolveOptions, Scheme};
use fracwave::grid::Grid;
use fracwave::waves::{self, ModelParams, Normalization, SolveOptions};

pub fn collapse(n: usize, t_final: f64) -> fracwave::Result<()> {
    let params = ModelParams::fkdv(0.5, 1, 1.0, Normalization::PaperEq16)?;
    let q = waves::solve_ground_state(&params, &Grid::shared(50.0, n)?, &SolveOptions::patient())?;
    let (e, f) = waves::energy_mass(&q.field, &params);
    println!("E(Q) = {e:.3e}, F(Q) = {f:.6}");

    let u0 = q.field.scaled(1.05);
    let dt = dynamics::suggest_dt(&u0, &params, Scheme::Etdrk4, 1.0, 0.5).min(2.5e-4);
    let mut opts = EvolveOptions::new(Scheme::Etdrk4, dt, t_final);
    opts.frame_speed = 1.0;
    opts.stride = ((t_final / dt) as usize / 15).max(1);
    opts.check_every = 10;
    opts.energy_guard = Some(1e-3);
    let traj = dynamics::evolve(&u0, &params, &opts)?;
    println!("{:?}, dt = {dt:.2e}", traj.outcome);

    println!("     t       mu      rho      B_t     identities");
    for d in dynamics::critical_monitor(&traj, &q, &CriticalOptions::default())? {
        println!(
            "{:6.3}  {:.4}  {:.4}  {:+.4e}  {:.0e} {:.0e} {:.0e}",
            d.t, d.mu, d.rho, d.b_t, d.identity_mass, d.identity_seminorm, d.identity_energy
        );
    }
    Ok(())
}

pub fn run() -> fracwave::Result<()> {
    collapse(4096, 0.2)
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    match (args.get(1).and_then(|a| a.parse().ok()), args.get(2).and_then(|a| a.parse().ok())) {
        (Some(n), Some(t)) => collapse(n, t),
        _ => run(),
    }
}
