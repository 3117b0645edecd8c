//! Enrolls keywords from text with the bundled lexicon.
//!
//! ```text
//! cargo run --example tokenize [-- "hey snips" "lights on"]
//! ```

use kws_core::phoneme::{tokenize, Lexicon, PhonemeInventory};

fn main() {
    let inv = PhonemeInventory::default_english();
    let lex = Lexicon::default_english();
    let mut phrases: Vec<String> = std::env::args().skip(1).collect();
    if phrases.is_empty() {
        phrases = ["hey snips", "hello computer", "turn on the lights", "xyzzy"]
            .map(String::from)
            .to_vec();
    }
    for text in &phrases {
        match tokenize(text, &lex, &inv) {
            Ok(seq) => println!(
                "{text:<22} {:<32} {:?}",
                seq.symbols(&inv).join(" "),
                seq.tokens()
            ),
            Err(e) => println!("{text:<22} error: {e}"),
        }
    }
}
