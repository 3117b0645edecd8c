//! Feeds a posteriorgram to the search one frame at a time, the way a live
//! audio front end would, and reports each hit as soon as it is confirmed.
//!
//! ```text
//! cargo run --example streaming
//! ```

use kws_core::ctc::{SearchConfig, SearchState};
use kws_core::phoneme::{FuzzyMap, Lexicon, PhonemeInventory};
use kws_core::pipeline::enroll;
use kws_core::posteriorgram::{synthesize_stream, Plant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = PhonemeInventory::default_english();
    let lex = Lexicon::default_english();
    let fuzzy = FuzzyMap::default_english();
    let keywords = ["hey snips", "lights on"]
        .map(|text| enroll(text, &lex, &inv, &fuzzy))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let plants = [(0, 40), (1, 120), (0, 210)].map(|(k, at)| Plant {
        keyword: keywords[k].seq.clone(),
        insert_at: at,
        frames_per_phoneme: 4,
    });
    let (pg, _) = synthesize_stream(300, &plants, 0.9, 1, &inv)?;
    let shift = f64::from(pg.frame_shift_s());

    let cfg = SearchConfig::default();
    let mut states: Vec<SearchState> = keywords
        .iter()
        .map(|k| SearchState::new(&k.automaton))
        .collect();
    for (t, row) in pg.frames().rows().enumerate() {
        for (k, state) in keywords.iter().zip(states.iter_mut()) {
            if let Some(hit) = state.step(row, &k.automaton, &cfg)? {
                println!(
                    "t={:.2}s  {:<10} {:.2}s..{:.2}s  s1 {:.3}",
                    (t + 1) as f64 * shift,
                    k.id,
                    hit.start_frame as f64 * shift,
                    (hit.end_frame + 1) as f64 * shift,
                    hit.s1
                );
            }
        }
    }
    for (k, state) in keywords.iter().zip(states.iter_mut()) {
        if let Some(hit) = state.finish(&k.automaton, &cfg) {
            println!("end of stream  {}  s1 {:.3}", k.id, hit.s1);
        }
    }
    Ok(())
}
