//! A stage backed by an external process speaking the line-delimited JSON
//! protocol. The "model" here is a shell pipeline that drops the handshake
//! line and answers every request in reverse order; responses are matched
//! back to requests by id.

use std::time::Duration;

use cascade_eval::adapters::{StageAdapter, StageKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stage = StageAdapter::external(
        StageKind::Translate,
        "sh",
        &["-c", "tail -n +2 | tac"],
        Duration::from_secs(10),
    );
    let inputs: Vec<(String, String)> = (1..=4).map(|i| (format!("id{i}"), format!("sentence number {i}"))).collect();
    for (id, text) in stage.run_stage(&inputs)? {
        println!("{id}: {text}");
    }
    println!("{}", stage.describe());
    Ok(())
}
