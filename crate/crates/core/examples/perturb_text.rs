//! Normalization and the two degradation modes used to build restoration data.

use cascade_eval::scenarios::{add_noise, Noise};
use cascade_eval::textcore::{degrade, fuse_words, strip_punctuation};
use cascade_eval::{normalize, DegradeMode, PunctClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pc = PunctClass::default();
    // decomposed nukta and a stray double space
    let raw = "म  घर जान्छु। के तिमी आउँछौ?  ड\u{093C}र छैन।";
    let t = normalize(raw);
    println!("normalized   {t}");
    println!("strip        {}", strip_punctuation(&t, &pc));
    println!("fuse         {}", fuse_words(&t));
    for mode in DegradeMode::ALL {
        println!("{:<12} {}", mode.as_str(), degrade(&t, mode, &pc));
    }
    let noisy = add_noise(&[degrade(&t, DegradeMode::PunctOnly, &pc).into_string()], Noise { rate: 0.1, seed: 7 })?;
    println!("noise 0.1    {}", noisy[0]);
    Ok(())
}
