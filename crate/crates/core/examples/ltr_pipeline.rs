//! Runs the whole pipeline on a synthetic collection: QL candidates,
//! DuetMF, the lexical feature runs, LTR over 20 features, and evaluation.

use duetmf::cli::{run_all, PipelineConfig};
use duetmf::synth::{generate, SynthConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("duetmf-ltr"), Into::into);
    let data = generate(&SynthConfig {
        num_docs: 500,
        num_queries: 100,
        ..SynthConfig::default()
    })?;
    data.write(&dir.join("data"))?;
    let out = run_all(&dir.join("data"), &dir.join("run"), &PipelineConfig::default(), |stage| {
        eprintln!("stage {}", stage.name());
    })?;
    print!("{}", out.metrics_tsv());
    println!("outputs in {}", dir.join("run").display());
    Ok(())
}
