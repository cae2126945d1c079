//! Carry the α = 0.75 soliton for ten time units and watch the invariants and
//! the orbit distance.

use fracwave::dynamics::{self, EvolveOptions, Scheme};
use fracwave::grid::Grid;
use fracwave::waves::{self, ModelParams, Normalization, SolveOptions};

pub fn run() -> fracwave::Result<()> {
    let params = ModelParams::fkdv(0.75, 1, 1.0, Normalization::PaperEq16)?;
    let w = waves::solve_ground_state(&params, &Grid::shared(200.0, 2048)?, &SolveOptions::patient())?;

    let mut opts = EvolveOptions::new(Scheme::Etdrk4, 1e-3, 10.0);
    opts.stride = 1000;
    let traj = dynamics::evolve(&w.field, &params, &opts)?;
    let drift = dynamics::conservation_monitor(&traj)?;
    println!("{:?} after {} steps", traj.outcome, traj.steps);
    println!("energy drift {:.2e}, mass drift {:.2e}", drift.energy_drift, drift.mass_drift);

    println!("     t        rho      shift");
    for (t, rho, gamma) in dynamics::orbit_series(&traj, &w, params.c)? {
        println!("{t:6.2}  {rho:.3e}  {gamma:+.6}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
