#![no_main]

use fieldrefine::trace_io::pcap::extract;
use fieldrefine::trace_io::Layer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for layer in [Layer::UdpPayload, Layer::TcpPayload, Layer::RawFrame] {
        if let Ok(out) = extract(data, layer, None) {
            assert!(out.iter().all(|(_, p)| !p.is_empty() && p.len() <= data.len()));
        }
    }
});
