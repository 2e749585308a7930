//! Trace events are produced line-delimited by `simulate --trace`; decoding
//! a line back (as downstream tooling would) must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ofl_core::TraceEvent;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = serde_json::from_str::<TraceEvent>(text);
});
