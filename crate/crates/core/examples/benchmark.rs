//! Synthetic benchmark over the noise sweep: support recovery, labeling
//! errors and parameter errors, averaged over replicates.
//!
//! ```bash
//! cargo run --release -p extremix --example benchmark -- 5
//! ```

use extremix::em::FitConfig;
use extremix::pipeline::{self, DamexConfig};
use extremix::simulate::{SyntheticSpec, LAMBDA_SWEEP};

fn main() -> Result<(), extremix::Error> {
    env_logger::init();
    let replicates: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (0..replicates).collect();
    let base = SyntheticSpec::default();
    let damex = DamexConfig::pareto_scale();
    let fit = FitConfig::default();

    println!("lambda  exact  mean_err  max_err  err_rho    err_nu  err_lambda");
    for lambda in LAMBDA_SWEEP {
        let rows = pipeline::benchmark(&base, lambda, &seeds, &damex, &fit)?;
        let n = rows.len() as f64;
        let exact = rows.iter().filter(|r| r.support_exact).count();
        let mean_err = rows.iter().map(|r| r.labeling_errors as f64).sum::<f64>() / n;
        let max_err = rows.iter().map(|r| r.labeling_errors).max().unwrap_or(0);
        let pe: Vec<_> = rows.iter().filter_map(|r| r.param_errors).collect();
        let avg = |f: fn(&extremix::eval::ParamErrors) -> f64| {
            if pe.is_empty() {
                f64::NAN
            } else {
                pe.iter().map(f).sum::<f64>() / pe.len() as f64
            }
        };
        println!(
            "{lambda:<6}  {exact:>2}/{:<2}  {mean_err:>8.1}  {max_err:>7}  {:.2e}  {:>6.2}  {:>10.4}",
            rows.len(),
            avg(|e| e.err_rho),
            avg(|e| e.err_nu),
            avg(|e| e.err_lambda),
        );
    }
    Ok(())
}
