//! Hold-out comparison on real data: the distributional baseline,
//! linear-mse and nonlinear-mm post-specialisation, scored on SimLex-999 and
//! SimVerb-3500 with every evaluation word forced unseen.
//!
//! cargo run --release --example holdout_comparison -- DATA_DIR [LIMIT]
//!
//! DATA_DIR holds vectors.txt, attract.txt, repel.txt, simlex.txt and
//! simverb.txt. LIMIT (default 50000) keeps the most frequent words only.

use std::path::PathBuf;

use postspec::constraints::{holdout_filter, load_constraints_with, ConstraintOptions};
use postspec::embedding::load_embeddings;
use postspec::evaluation::{eval_vocabulary, evaluate_all, load_eval};
use postspec::mapping::{ModelKind, Objective};
use postspec::pipeline::{run_pipeline, PipelineConfig};

fn main() -> postspec::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: holdout_comparison DATA_DIR [LIMIT]");
        std::process::exit(2);
    };
    let limit = args.next().map(|l| l.parse().expect("LIMIT must be an integer")).unwrap_or(50_000);

    let space = load_embeddings(dir.join("vectors.txt"), Some(limit))?;
    let opts = ConstraintOptions { strip_prefix: Some("en_".into()) };
    let (cs, _) = load_constraints_with(dir.join("attract.txt"), dir.join("repel.txt"), &opts)?;
    let datasets = vec![load_eval(dir.join("simlex.txt"))?, load_eval(dir.join("simverb.txt"))?];
    let (cs, removed) = holdout_filter(&cs, &eval_vocabulary(&datasets));
    println!("hold-out removed {removed} constraint pairs");

    let print = |label: &str, space: &postspec::embedding::EmbeddingSpace| -> postspec::Result<()> {
        let r = evaluate_all(space, &datasets)?;
        println!("{label:24} SL {:.3}  SV {:.3}", r[0].rho, r[1].rho);
        Ok(())
    };
    print("distributional X_d", &space)?;

    let mm = PipelineConfig::default().with_seed(1);
    let mut mse = mm;
    mse.model = ModelKind::Linear;
    mse.map.objective = Objective::Mse;
    for (label, cfg) in [("linear-mse", mse), ("nonlinear-mm (H=5)", mm)] {
        let out = run_pipeline(&space, &cs, &cfg)?;
        print(label, &out.space)?;
    }
    Ok(())
}
