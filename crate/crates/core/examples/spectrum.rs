//! Spectrum of the linearized operator at α = 0.75 and the inverse pairing
//! `⟨L⁻¹Q, Q⟩` that decides the sign of the momentum slope.

use fracwave::criteria;
use fracwave::specops::{self, WaveOperator};
use fracwave::waves::{ModelParams, Normalization};

pub fn run() -> fracwave::Result<()> {
    let params = ModelParams::fkdv(0.75, 1, 1.0, Normalization::GroundState)?;
    let w = criteria::operator_profile(&params, 1024)?;
    let dense = specops::symmetric_spectrum(&specops::assemble_linearized(&w), None)?;
    println!("N = {}, L = {}", w.grid().len(), w.grid().half_length());
    println!("lowest eigenvalues:");
    for e in dense.eigenvalues.iter().take(6) {
        println!("  {e:+.10e}");
    }
    println!("morse index {}, kernel dim {}", dense.morse_index, dense.kernel_dim);
    if let Some(a) = dense.kernel_alignment(&w.derivative()) {
        println!("kernel vs Q': |cos| = {a:.12}");
    }

    let sol = specops::solve_inverse_on_orthogonal(&WaveOperator::linearized(&w), &dense, w.values())?;
    let (a, c) = (params.alpha, params.c);
    let expected = w.mass * (1.0 / (2.0 * a * c) - 1.0 / c);
    println!("<L^-1 Q, Q> = {:.8} (scaling law {:.8})", sol.pairing, expected);

    let oracles = specops::operator_oracles(&w, 0.0)?;
    println!("dilation identity residual {:.2e}", oracles.dilation);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
