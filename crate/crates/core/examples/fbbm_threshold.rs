//! Speed threshold `c₀(α)` of the fractional BBM waves and the sign change of
//! `dM/dc` across it.

use fracwave::criteria;
use fracwave::waves::{self, ModelParams, SolveOptions};

pub fn run() -> fracwave::Result<()> {
    println!("alpha   c0");
    for alpha in [0.35, 0.4, 0.45, 0.49] {
        let t = criteria::fbbm_threshold_c0(alpha)?;
        println!("{alpha:.2}   {:.9}", t.c0);
    }

    let alpha = 0.6;
    println!("\nalpha = {alpha}:   c     dM/dc closed form   finite difference");
    for c in [1.5, 2.0, 3.0] {
        let params = ModelParams::fbbm(alpha, c)?;
        let w = waves::solve_ground_state(&params, &waves::auto_grid(&params)?, &SolveOptions::patient())?;
        let closed = criteria::closed_form_slope(&w).unwrap_or(f64::NAN);
        let fd = criteria::dfdc_finite_difference(&w, None)?;
        println!("             {c:.2}  {closed:+.6e}        {fd:+.6e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
