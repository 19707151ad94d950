#![no_main]

use fieldrefine::synth::{generate, ProtocolSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mut spec) = ProtocolSpec::from_json(text) {
        spec.message_count = spec.message_count.min(8);
        let (msgs, truth) = generate(&spec).unwrap();
        assert_eq!(msgs.len(), truth.len());
    }
});
