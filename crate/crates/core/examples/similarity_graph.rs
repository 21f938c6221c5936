//! From a fitted posterior to a map of the extremes: similarity graph,
//! spectral clustering, spring layout and GraphML/DOT/JSON export.
//!
//! ```bash
//! cargo run --release -p extremix --example similarity_graph -- /tmp/extremes
//! ```

use std::path::PathBuf;

use extremix::em::FitConfig;
use extremix::eval;
use extremix::graph::{self, ExportFormat, GraphDocument, LayoutConfig};
use extremix::pipeline::{self, DamexConfig};
use extremix::simulate::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("extremix-graph"));
    let spec = SyntheticSpec {
        d: 20,
        k_faces: 5,
        n0: 300,
        lambda: 0.5.into(),
        seed: 21,
        ..SyntheticSpec::default()
    };
    let run = pipeline::run_synthetic(&spec, &DamexConfig::pareto_scale(), &FitConfig::default())?;

    let sim = graph::similarity_matrix(&run.fit.gamma);
    let hard = graph::hard_assign(&run.fit.gamma);
    let k = run.support.n_components();
    let spectral = graph::spectral_clustering(&sim, k, 0)?;
    println!(
        "purity against the generating components: hard {:.3}, spectral {:.3}",
        eval::purity(&hard.labels, &run.sample.labels)?,
        eval::purity(&spectral.labels, &run.sample.labels)?
    );

    let i = 0;
    let near = graph::rank_neighbors(&sim, i, 5);
    println!("nearest neighbours of point {i}: {near:?}");

    // drop weak edges before drawing; clustering above used the full graph
    let drawn = graph::threshold_edges(&sim, graph::DEFAULT_EDGE_THRESHOLD)?;
    println!("{} edges above {}", drawn.edges().len(), graph::DEFAULT_EDGE_THRESHOLD);
    let layout = graph::fr_layout(&drawn, &LayoutConfig::default())?;
    let doc = GraphDocument::new(&drawn, &spectral, &layout, Some((&hard, &run.support)))?;

    std::fs::create_dir_all(&out_dir)?;
    for format in [ExportFormat::GraphMl, ExportFormat::Dot, ExportFormat::Json] {
        let path = out_dir.join(format!("extremes.{}", format.extension()));
        std::fs::write(&path, doc.render(format))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
