#![no_main]

use ksfem_core::ksdft::GroundStateRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = GroundStateRecord::from_json(text) else {
        return;
    };
    if record.validate().is_err() {
        return;
    }
    // anything that decodes and validates must survive a round trip
    let again = record.to_json().expect("encode");
    let back = GroundStateRecord::from_json(&again).expect("decode of re-encoded record");
    assert_eq!(back, record);
});
