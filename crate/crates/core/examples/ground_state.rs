//! Solve the Benjamin-Ono ground state and compare it with `2/(1+x²)`.

use fracwave::grid::Grid;
use fracwave::waves::{self, closed_form, ModelParams, Normalization, SolveOptions};

pub fn run() -> fracwave::Result<()> {
    let params = ModelParams::fkdv(1.0, 1, 1.0, Normalization::GroundState)?;
    let grid = Grid::shared(400.0, 8192)?;
    let w = waves::solve_ground_state(&params, &grid, &SolveOptions::default())?;

    let err = w
        .grid()
        .nodes()
        .iter()
        .zip(w.values())
        .map(|(&x, &q)| (q - closed_form::lorentzian(x)).abs())
        .fold(0.0f64, f64::max);
    let (energy, mass) = waves::energy_mass(&w.field, &params);
    println!("iterations      {}", w.iterations);
    println!("peak            {:.9}", w.field.max_abs());
    println!("max |Q - 2/(1+x^2)| {err:.3e}");
    println!("|Q|^2           {:.9} (2 pi = {:.9})", w.mass, 2.0 * std::f64::consts::PI);
    println!("pohozaev        {:.3e}", waves::pohozaev_residual(&w));
    println!("E, F            {energy:.6e}, {mass:.6e}");
    if let Ok(d) = waves::decay_check(&w) {
        println!("tail exponent   {:.3} (expected {:.3})", d.exponent, d.expected);
    }

    let path = std::env::temp_dir().join("benjamin_ono.fld");
    w.field.write_fld(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
