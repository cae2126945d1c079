//! Profiles are cached on disk by parameters and grid; a second request is a
//! file read. Tables go out as CSV or JSON lines.

use fracwave::grid::Grid;
use fracwave::io::{ProfileCache, Table};
use fracwave::waves::{self, ModelParams, Normalization, SolveOptions};

pub fn run() -> fracwave::Result<()> {
    let dir = std::env::temp_dir().join(format!("fracwave-example-{}", std::process::id()));
    let cache = ProfileCache::at(&dir);
    let grid = Grid::shared(200.0, 4096)?;
    let opts = SolveOptions::default();

    let mut table = Table::new(&["c", "hit", "peak", "mass"]);
    for c in [0.5, 1.0, 0.5] {
        let params = ModelParams::fkdv(0.8, 1, c, Normalization::GroundState)?;
        let (w, hit) = cache.ground_state(&params, &grid, &opts)?;
        table.push(vec![c.into(), (hit as u32).into(), w.field.max_abs().into(), w.mass.into()]);
    }
    print!("{}", table.to_csv_string()?);
    table.write_jsonl(&mut std::io::stdout())?;

    let params = ModelParams::fkdv(0.8, 1, 1.0, Normalization::GroundState)?;
    let w = waves::solve_ground_state(&params, &grid, &opts)?;
    println!("key {}", ProfileCache::key(&params, &grid, &opts));
    println!("residual {:.2e}", w.residual);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> fracwave::Result<()> {
    run()
}
