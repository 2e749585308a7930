//! Instance file parser: must never panic on arbitrary bytes, and any
//! document it accepts must re-serialize and re-parse to the same value.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ofl_core::instance::Instance;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(inst) = Instance::from_json(text) {
        let round = Instance::from_json(&inst.to_json()).expect("accepted instance re-parses");
        assert_eq!(round, inst, "instance round trip drifted");
    }
});
