//! Generates a small corpus and reports per-scenario image statistics.
//!
//! `cargo run --release --example scenes -- /tmp/xmodal-corpus`

use std::collections::BTreeMap;
use std::path::PathBuf;

use xmodal::io::load_sample;
use xmodal::scenes::{generate_corpus, CorpusOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("xmodal-scenes-example"));
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let index = generate_corpus(&CorpusOptions::new(30, 1), &root)?;

    let mut stats: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for (split, files) in &index.splits {
        println!("{split}: {} samples", files.len());
        for f in files {
            let s = load_sample(f)?;
            let mean = |t: &xmodal::tensor::Tensor| t.data().iter().sum::<f64>() / t.numel() as f64;
            let e = stats.entry(s.scenario.to_string()).or_default();
            e.0 += 1;
            e.1 += mean(&s.i_rgb);
            e.2 += mean(&s.i_thr);
        }
    }
    for (scenario, (n, rgb, thr)) in stats {
        println!(
            "{scenario:5} n={n:2}  mean rgb {:.3}  mean thermal {:.3}",
            rgb / n as f64,
            thr / n as f64
        );
    }
    println!("corpus written to {}", root.display());
    Ok(())
}
