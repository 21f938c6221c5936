//! Clusters the most extreme rows of the Statlog shuttle data and scores the
//! clusters against the class labels. Needs the data in the cache; fetch it
//! once with `extremix fetch-shuttle`.
//!
//! ```bash
//! cargo run --release -p extremix --example shuttle_purity
//! ```

use extremix::pipeline::{self, PipelineConfig};
use extremix::shuttle;

fn main() -> Result<(), extremix::Error> {
    let dir = shuttle::default_cache_dir();
    let Some(path) = shuttle::cached(&dir) else {
        eprintln!("no cached shuttle data under {}; run `extremix fetch-shuttle` first", dir.display());
        return Ok(());
    };
    let data = shuttle::load(&path)?;
    println!("{} rows, {} attributes", data.raw.n(), data.raw.d());
    let cfg = PipelineConfig::default();
    println!("  n0  components  purity(hard)  purity(spectral)");
    for n0 in [100, 200, 300, 400, 500] {
        let row = pipeline::shuttle_purity(&data, n0, &cfg)?;
        println!(
            "{:>4}  {:>10}  {:>12.3}  {:>16.3}",
            row.n0, row.components, row.purity_hard, row.purity_spectral
        );
    }
    Ok(())
}
