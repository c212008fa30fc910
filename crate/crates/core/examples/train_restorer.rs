//! Train the punctuation and segmentation restorer, then restore both
//! degraded forms of a sentence it has not seen verbatim.

use cascade_eval::corpus::build_restore_pairs;
use cascade_eval::restore::{boundary_counts, train, BoundaryModel, TrainConfig};
use cascade_eval::textcore::degrade;
use cascade_eval::{normalize, DegradeMode, PunctClass};

const TRAIN: &[&str] = &[
    "म घर जान्छु। तिमी के गर्छौ?",
    "ऊ स्कुल जान्छ। हामी भात खान्छौं।",
    "आज पानी पर्यो। तिमी घर जान्छौ?",
    "म भात खान्छु, ऊ पानी खान्छ।",
    "हामी स्कुल जान्छौं। ऊ घर जान्छ।",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pc = PunctClass::default();
    let sentences: Vec<_> = TRAIN.iter().map(|s| normalize(s)).collect();
    let pairs = build_restore_pairs(&sentences, &DegradeMode::ALL, &pc);
    let model = train(&pairs, &TrainConfig::default())?;
    println!("{} pairs, {} contexts, checksum {}", pairs.len(), model.n_contexts(), &model.checksum()[..16]);

    let gold = normalize("ऊ घर जान्छ। हामी स्कुल जान्छौं।");
    for mode in DegradeMode::ALL {
        let input = degrade(&gold, mode, &pc);
        let out = model.restore(&input, mode == DegradeMode::PunctOnly)?;
        let f1 = boundary_counts(&out, &gold, &pc)?.f1();
        println!("{:<10} {input}\n        -> {out}  (boundary F1 {f1:.3})", mode.as_str());
    }

    let path = std::env::temp_dir().join("cascade-example.model");
    model.save(&path)?;
    let back = BoundaryModel::load(&path)?;
    assert_eq!(back.checksum(), model.checksum());
    println!("saved and reloaded {}", path.display());
    Ok(())
}
