#![no_main]

use fieldrefine::trace_io::hexlines::{parse, render};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse(text) {
        let again = parse(&render(rows.iter().map(|r| r.1.as_slice()))).unwrap();
        assert_eq!(
            rows.iter().map(|r| &r.1).collect::<Vec<_>>(),
            again.iter().map(|r| &r.1).collect::<Vec<_>>()
        );
    }
});
