//! Krippendorff's alpha on a small raters x items grid, and the error cases.

use cascade_eval::agreement::{krippendorff_alpha, DistanceMetric, RatingMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let cells = vec![
        vec![Some(1), Some(2), Some(3), Some(3), Some(2), Some(1), Some(4), Some(1), Some(2), None],
        vec![Some(1), Some(2), Some(3), Some(3), Some(2), Some(2), Some(4), Some(1), Some(2), Some(5)],
        vec![None, Some(3), Some(3), Some(3), Some(2), Some(3), Some(4), Some(2), Some(2), Some(5)],
    ];
    let m = RatingMatrix::new(names("rater", 3), names("item", 10), cells, 5)?;
    for metric in [DistanceMetric::Nominal, DistanceMetric::Ordinal] {
        let a = krippendorff_alpha(&m, metric)?;
        println!("{metric:?}: alpha = {:.4} over {} pairable values", a.alpha, a.n_pairable);
    }

    let lone = RatingMatrix::new(names("rater", 1), names("item", 3), vec![vec![Some(1), Some(2), Some(3)]], 5)?;
    println!("single rater: {}", krippendorff_alpha(&lone, DistanceMetric::Ordinal).unwrap_err());
    let flat = RatingMatrix::new(names("rater", 2), names("item", 2), vec![vec![Some(3); 2]; 2], 5)?;
    println!("no variance: {}", krippendorff_alpha(&flat, DistanceMetric::Ordinal).unwrap_err());
    Ok(())
}
