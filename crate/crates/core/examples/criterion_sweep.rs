//! Verdict table of the parity criterion across α, written as CSV.
//!
//! Pass alphas on the command line to change the sweep, e.g.
//! `cargo run --release --example criterion_sweep -- 0.45 0.6 0.75`.

use fracwave::criteria::{self, CriterionOptions};
use fracwave::io::{Cell, Table};
use fracwave::waves::{ModelParams, Normalization};

pub fn sweep(alphas: &[f64]) -> fracwave::Result<Table> {
    let opts = CriterionOptions { finite_difference: true, ..Default::default() };
    let mut table = Table::new(&["alpha", "morse", "kernel_dim", "slope", "finite_difference", "verdict", "rule"]);
    for &alpha in alphas {
        let params = ModelParams::fkdv(alpha, 1, 1.0, Normalization::PaperEq16)?;
        let row = criteria::criterion_row(&params, None, &opts)?;
        let v = &row.verdict;
        table.push(vec![
            alpha.into(),
            v.morse_index.into(),
            v.kernel_dim.into(),
            v.slope.into(),
            row.finite_difference.map(Cell::Num).unwrap_or(Cell::Empty),
            v.verdict.name().into(),
            v.rule.clone().into(),
        ]);
    }
    Ok(table)
}

pub fn run() -> fracwave::Result<()> {
    let table = sweep(&[0.55, 0.75, 1.0, 2.0])?;
    print!("{}", table.to_csv_string()?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if args.is_empty() {
        return run();
    }
    print!("{}", sweep(&args)?.to_csv_string()?);
    Ok(())
}
