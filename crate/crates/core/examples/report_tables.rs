//! Report tables: punctuation-impact deltas, the scenario comparison and
//! the written `.records`, `.csv` and `.md` files.

use cascade_eval::report::{delta_table, scenario_table, Delta, DeltaRow, ScenarioScores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("29.04 -> 23.13: {}", Delta::new(29.04, 23.13).render()?);

    let rows: Vec<DeltaRow> = [("dev", 29.04, 23.13), ("devtest", 28.48, 24.12), ("custom", 39.66, 28.40)]
        .into_iter()
        .map(|(label, b, t)| DeltaRow { label: label.into(), metric: "BLEU".into(), baseline: b, treated: t })
        .collect();
    let impact = delta_table("impact", &rows)?;
    println!("{}", impact.to_markdown());

    let scenarios = scenario_table(&[
        ScenarioScores { scenario: "A".into(), bleu: 31.48, chrf_pp: 51.84 },
        ScenarioScores { scenario: "B".into(), bleu: 32.77, chrf_pp: 51.05 },
        ScenarioScores { scenario: "C".into(), bleu: 36.38, chrf_pp: 54.56 },
    ])?;
    print!("{}", scenarios.to_csv());

    let dir = std::env::temp_dir().join("cascade-report");
    for path in impact.write(&dir)?.into_iter().chain(scenarios.write(&dir)?) {
        println!("wrote {}", path.display());
    }
    Ok(())
}
