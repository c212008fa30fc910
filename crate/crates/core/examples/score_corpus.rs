//! Score a small corpus with every metric.
//!
//! ```text
//! cargo run -p cascade-eval --example score_corpus
//! cargo run -p cascade-eval --example score_corpus -- hyps.txt refs.txt
//! ```

use cascade_eval::metrics::{score_corpus, Metric, MetricConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (hyps, refs): (Vec<String>, Vec<String>) = match args.as_slice() {
        [h, r] => (
            std::fs::read_to_string(h)?.lines().map(String::from).collect(),
            std::fs::read_to_string(r)?.lines().map(String::from).collect(),
        ),
        _ => (
            vec!["Today I go home.".into(), "He goes to the school every day.".into()],
            vec!["Today I go home.".into(), "He goes to school every day.".into()],
        ),
    };
    let refs: Vec<Vec<String>> = refs.into_iter().map(|r| vec![r]).collect();
    let cfg = MetricConfig::default();
    for metric in Metric::ALL {
        let s = score_corpus(metric, &hyps, &refs, &cfg)?;
        println!("{:<13} {:>7.2}  ({} items)", metric.name(), s.value, s.n_items);
    }
    Ok(())
}
