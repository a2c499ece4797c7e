#![allow(dead_code)]

use dflsim::dataset::Dataset;
use dflsim::synth::{synthesize_dataset, SynthesisSpec};

/// Calibrated synthetic survey with every country count divided by `div`.
pub fn small_survey(div: usize, seed: u64) -> Dataset {
    let mut spec = SynthesisSpec::appendix_a();
    for c in &mut spec.countries {
        c.count = (c.count / div).max(40);
    }
    synthesize_dataset(&spec, seed).unwrap()
}
