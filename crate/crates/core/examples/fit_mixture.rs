//! Fits the Dirichlet mixture to a synthetic sample with a known support and
//! shows the EM trace, the recovered parameters and the posterior.
//!
//! ```bash
//! cargo run --release -p extremix --example fit_mixture
//! ```

use std::time::Instant;

use extremix::em::{self, FitConfig};
use extremix::eval;
use extremix::graph;
use extremix::simulate::{self, SyntheticSpec};

fn main() -> Result<(), extremix::Error> {
    let spec = SyntheticSpec::benchmark(1.0, 7);
    let sample = simulate::sample_dataset(&spec)?;
    let support = sample.theta_true.support().clone();

    let start = Instant::now();
    let fit = em::fit(&sample.v, &support, spec.r0, &FitConfig::default())?;
    println!(
        "{} iterations in {:.1?}, converged: {}",
        fit.iterations,
        start.elapsed(),
        fit.converged
    );
    for (t, (q, ll)) in fit.q_trace.iter().zip(&fit.loglik_trace).enumerate().step_by(5) {
        println!("  iter {t:>3}  Q = {q:>14.4}  loglik = {ll:>14.4}");
    }

    let errors = eval::param_errors(&fit.theta, &sample.theta_true)?;
    println!(
        "err_rho = {:.2e}, err_nu = {:.2}, err_lambda = {:.4}",
        errors.err_rho, errors.err_nu, errors.err_lambda
    );

    let hard = graph::hard_assign(&fit.gamma);
    let wrong = eval::labeling_error(&hard.labels, &sample.labels)?;
    println!("{wrong} of {} points assigned to the wrong component", sample.labels.len());

    let first = fit.gamma.row(0);
    let mut top: Vec<(usize, f64)> = first.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("posterior of point 0 (true component {}):", sample.labels[0]);
    for (k, p) in top.iter().take(3) {
        println!("  component {k:>3} {:?}: {p:.4}", support.members(*k));
    }
    Ok(())
}
