//! Recovers the faces that carry extreme mass with DAMEX: count points in
//! eps-thickened rectangles, drop negligible faces, and compare with the
//! generating support.
//!
//! ```bash
//! cargo run -p extremix --example damex_support
//! ```

use extremix::damex;
use extremix::pipeline::{self, DamexConfig};
use extremix::simulate::{self, SyntheticSpec};

fn main() -> Result<(), extremix::Error> {
    let spec = SyntheticSpec {
        d: 30,
        k_faces: 8,
        n0: 800,
        seed: 2,
        ..SyntheticSpec::default()
    };
    let sample = simulate::sample_dataset(&spec)?;
    let truth = sample.theta_true.support();

    // the raw rectangle counts at one scale
    let table = damex::estimate_mass_at_scale(&sample.v, 0.75 * spec.r0, 0.5)?;
    println!(
        "{} of {} points above the scale, {} distinct rectangles",
        table.n_assigned(),
        sample.v.nrows(),
        table.counts.len()
    );
    let mut heaviest: Vec<_> = table.masses().collect();
    heaviest.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (face, mass) in heaviest.iter().take(5) {
        println!("  {:?}: {mass:.3}", face.members());
    }

    // the preset used for Pareto-scale data, with the noise-adaptive scale
    let cfg = DamexConfig::pareto_scale();
    println!("noise floor: {:.1}", pipeline::noise_floor(&sample.v));
    let support = pipeline::recover_support(&sample.v, sample.v.nrows(), spec.r0, &cfg)?;
    println!(
        "recovered {} faces and {} singletons; exact: {}",
        support.n_faces(),
        support.n_singletons(),
        pipeline::same_support(&support, truth)
    );
    for f in &support.faces {
        let mark = if truth.position(f).is_some() { "" } else { "  (spurious)" };
        println!("  {:?}{mark}", f.members());
    }
    Ok(())
}
