//! Experiment config parser: panic-free on arbitrary bytes; accepted
//! configs must round-trip with a stable content hash.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ofl_core::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json(text) {
        let serialized = serde_json::to_string(&config).expect("accepted config serializes");
        let round = ExperimentConfig::from_json(&serialized).expect("accepted config re-parses");
        assert_eq!(round.content_hash(), config.content_hash());
    }
});
