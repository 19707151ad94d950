#![no_main]

use fieldrefine::model::Message;
use fieldrefine::trace_io::json::{parse_ground_truth, render_ground_truth};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let msgs: Vec<Message> = (0..4u64)
        .map(|i| Message::new(i, vec![0x41; 4 + 4 * i as usize], "fuzz").unwrap())
        .collect();
    if let Ok(gt) = parse_ground_truth(text, &msgs) {
        let again = parse_ground_truth(&render_ground_truth(&gt), &msgs).unwrap();
        assert_eq!(gt.segmentations(), again.segmentations());
    }
});
