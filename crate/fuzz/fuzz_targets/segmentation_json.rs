#![no_main]

use fieldrefine::model::Message;
use fieldrefine::trace_io::json::{parse_segmentations, render_segmentations};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let msgs: Vec<Message> = (0..4u64)
        .map(|i| Message::new(i, vec![0x41; 4 + 4 * i as usize], "fuzz").unwrap())
        .collect();
    if let Ok(segs) = parse_segmentations(text, &msgs) {
        let again = parse_segmentations(&render_segmentations(&segs), &msgs).unwrap();
        assert_eq!(segs, again);
    }
});
