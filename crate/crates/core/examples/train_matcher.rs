//! Trains a small matcher on synthetic pairs and scores a positive and a
//! confusable negative it has not seen.
//!
//! ```text
//! cargo run --release --example train_matcher
//! ```

use kws_core::corpus::{
    anchor_classes, experiment_fuzzy_map, stage_one_spans, synth_pairs, training_examples,
    CorpusConfig,
};
use kws_core::ctc::SearchConfig;
use kws_core::matcher::{forward, train, MatcherConfig, TrainHyper};
use kws_core::phoneme::PhonemeInventory;
use ndarray::s;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inv = PhonemeInventory::default_english();
    let fuzzy = experiment_fuzzy_map(&inv)?;
    let corpus = CorpusConfig {
        positives_per_class: 4,
        negatives_per_class: 4,
        scrambled_per_class: 8,
        padding: 10,
        ..CorpusConfig::default()
    };
    let classes = anchor_classes(40, "ANCH", &inv, &corpus, 5, &Default::default())?;
    let pairs = synth_pairs(&classes, &corpus, &inv, &fuzzy, 6)?;
    let search = SearchConfig {
        threshold: 0.3,
        ..SearchConfig::default()
    };
    let spans = stage_one_spans(&pairs, &fuzzy, &search)?;
    let examples = training_examples(&pairs, &spans, &corpus, 7);
    let config = MatcherConfig {
        vocab_size: inv.len(),
        d_model: 32,
        d_enc: corpus.d_enc,
        d_gru: 32,
        ..MatcherConfig::default()
    };
    let hyper = TrainHyper {
        lr: 0.01,
        epochs: 8,
        lr_decay: 0.9,
        ..TrainHyper::default()
    };
    println!("{} examples from {} classes", examples.len(), classes.len());
    let out = train(&examples, &config, &hyper)?;
    for (epoch, loss) in out.epoch_losses.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", epoch + 1);
    }

    let held_corpus = CorpusConfig {
        scrambled_per_class: 0,
        ..corpus.clone()
    };
    let held = anchor_classes(3, "HELD", &inv, &held_corpus, 99, &Default::default())?;
    let held_pairs = synth_pairs(&held, &held_corpus, &inv, &fuzzy, 8)?;
    let held_spans = stage_one_spans(&held_pairs, &fuzzy, &search)?;
    for (pair, &(start, end)) in held_pairs.iter().zip(&held_spans).take(8) {
        let lo = start.saturating_sub(corpus.padding);
        let hi = (end + corpus.padding).min(pair.features.nrows() - 1);
        let crop = pair.features.slice(s![lo..=hi, ..]).to_owned();
        let r = forward(&crop, &pair.anchor.seq, &out.weights)?;
        println!(
            "{:<8} {:<20} label {}  p_utt {:.3}",
            pair.anchor.word,
            pair.spoken.symbols(&inv).join(" "),
            u8::from(pair.label),
            r.p_utt
        );
    }
    Ok(())
}
