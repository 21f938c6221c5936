//! Draws a labeled sample from a random constrained Dirichlet mixture and
//! summarizes the generating support.
//!
//! ```bash
//! cargo run -p extremix --example simulate
//! ```

use extremix::simulate::{self, SyntheticSpec};

fn main() -> Result<(), extremix::Error> {
    let spec = SyntheticSpec {
        d: 20,
        k_faces: 6,
        n0: 500,
        lambda: 0.5.into(),
        seed: 11,
        ..SyntheticSpec::default()
    };
    let sample = simulate::sample_dataset(&spec)?;
    let theta = &sample.theta_true;
    let support = theta.support();

    println!("{} faces, {} singletons", support.n_faces(), support.n_singletons());
    let view = simulate::describe(theta);
    let mut counts = vec![0usize; support.n_components()];
    for &l in &sample.labels {
        counts[l] += 1;
    }
    for k in 0..support.n_components() {
        let centre = view.m.get(k).map(|m| format!("{m:.2?}")).unwrap_or_default();
        println!(
            "  component {k:>2} {:<10} pi = {:.3}  drawn {:>3}  {centre}",
            format!("{:?}", support.members(k)),
            view.pi[k],
            counts[k]
        );
    }

    // a point is its component's signal plus 1 + Exp(lambda) noise elsewhere
    let i = (0..sample.labels.len()).find(|&i| !support.is_singleton(sample.labels[i])).unwrap_or(0);
    let row = sample.v.row(i);
    let members = support.members(sample.labels[i]);
    let signal: f64 = members.iter().map(|&j| row[j]).sum();
    let noise: f64 = row.iter().sum::<f64>() - signal;
    println!(
        "point {i}: face {members:?}, signal radius {signal:.1}, noise total {noise:.1} over {} coordinates",
        spec.d - members.len()
    );
    Ok(())
}
