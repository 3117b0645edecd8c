//! Scores "hi" spoken with EY1 in place of AY1, with and without the AY1/EY1
//! fuzzy group.
//!
//! ```text
//! cargo run --example fuzzy_keywords
//! ```

use kws_core::ctc::{build_automaton, search, SearchConfig};
use kws_core::phoneme::{FuzzyMap, PhonemeInventory, PhonemeSeq};
use kws_core::posteriorgram::{synthesize, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = PhonemeInventory::default_english();
    let keyword = PhonemeSeq::from_symbols(&["HH", "AY1"], &inv)?;
    let spoken = PhonemeSeq::from_symbols(&["HH", "EY1"], &inv)?;
    let cfg = SearchConfig {
        threshold: 0.0,
        ..SearchConfig::default()
    };
    println!("{:>6}  {:>10}  {:>10}", "peak", "plain s1", "fuzzy s1");
    for peak in [0.95, 0.9, 0.8, 0.7] {
        let (pg, _) = synthesize(
            &SynthSpec {
                keyword: spoken.clone(),
                total_frames: 60,
                frames_per_phoneme: 4,
                insert_at: 20,
                peak_prob: peak,
                seed: 3,
            },
            &inv,
        )?;
        let best = |fuzzy: &FuzzyMap| -> Result<f64, Box<dyn std::error::Error>> {
            let aut = build_automaton(&keyword, fuzzy)?;
            Ok(search(&pg, &aut, &cfg)?
                .iter()
                .map(|h| h.s1)
                .fold(0.0, f64::max))
        };
        println!(
            "{peak:>6.2}  {:>10.4}  {:>10.4}",
            best(&FuzzyMap::identity(&inv))?,
            best(&FuzzyMap::default_english())?
        );
    }
    Ok(())
}
