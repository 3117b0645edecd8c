//! Plants a keyword twice in a synthetic posteriorgram and finds it with the
//! streaming CTC search.
//!
//! ```text
//! cargo run --example plant_and_search
//! ```

use kws_core::ctc::{build_automaton, search, SearchConfig};
use kws_core::phoneme::{tokenize, FuzzyMap, Lexicon, PhonemeInventory};
use kws_core::posteriorgram::{synthesize_stream, Plant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = PhonemeInventory::default_english();
    let keyword = tokenize("hey snips", &Lexicon::default_english(), &inv)?;
    let plants = [30, 140].map(|at| Plant {
        keyword: keyword.clone(),
        insert_at: at,
        frames_per_phoneme: 4,
    });
    let automaton = build_automaton(&keyword, &FuzzyMap::default_english())?;
    for peak in [1.0, 0.95, 0.8, 0.6] {
        let (pg, truths) = synthesize_stream(240, &plants, peak, 7, &inv)?;
        let hits = search(&pg, &automaton, &SearchConfig::default())?;
        let planted: Vec<_> = truths
            .iter()
            .map(|t| (t.start_frame, t.end_frame))
            .collect();
        println!("peak {peak:.2}  planted {planted:?}");
        for h in &hits {
            println!(
                "    hit frames {:>3}..={:<3} s1 {:.4}  phonemes {}",
                h.start_frame,
                h.end_frame,
                h.s1,
                h.collapsed(&automaton)
                    .iter()
                    .filter_map(|&p| inv.symbol(p))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
        if hits.is_empty() {
            println!("    no hit above the threshold");
        }
    }
    Ok(())
}
