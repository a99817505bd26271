//! Trains briefly on a small generated corpus and prints the evaluation CSV.
//!
//! `cargo run --release --example train_eval -- [epochs]`

use xmodal::pipeline::{evaluate_samples, load_split, train_samples, Config, EvalOptions};
use xmodal::scenes::{generate_corpus, CorpusOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let dir = std::env::temp_dir().join("xmodal-train-example");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let root = dir.join("data");
    generate_corpus(&CorpusOptions::new(40, 11), &root)?;

    let cfg = Config {
        dataset_root: root.clone(),
        output_dir: dir.join("run"),
        epochs,
        ..Config::default()
    };
    let train = load_split(&root, "train")?;
    let report = train_samples(&cfg, &train, |e| println!("{}", e.to_csv_row()))?;
    println!("checkpoint {}", report.final_checkpoint.display());

    let test = load_split(&root, "test")?;
    let eval = evaluate_samples(&report.model, &test, cfg.eval_caps, EvalOptions::default())?;
    print!("{}", eval.to_csv());
    for w in &eval.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
