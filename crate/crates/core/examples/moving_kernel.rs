//! The near-kernel eigenvalue of the mode family `A^λ` behaves like `rλ²` as
//! `λ → 0`, with `r` fixed by the momentum slope.

use fracwave::criteria;
use fracwave::grid::Grid;
use fracwave::waves::{self, ModelParams, Normalization, SolveOptions};

pub fn run() -> fracwave::Result<()> {
    let params = ModelParams::fkdv(0.75, 1, 1.0, Normalization::PaperEq16)?;
    let w = waves::solve_ground_state(&params, &Grid::shared(200.0, 8192)?, &SolveOptions::patient())?;
    let lambdas = criteria::default_lambda_list(&params);
    let mk = criteria::moving_kernel_probe(&w, &lambdas)?;
    for (l, b) in mk.lambdas.iter().zip(&mk.values) {
        println!("lambda {l:.4e}  b {b:+.6e}  b/lambda^2 {:+.6}", (b - mk.offset) / (l * l));
    }
    println!("fitted r {:+.6}, predicted {:+.6}, gap {:.2e}", mk.ratio, mk.predicted, mk.relative_error);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
