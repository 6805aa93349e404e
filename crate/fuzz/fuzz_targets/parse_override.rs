#![no_main]

use ksfem::overrides::{apply_override, parse_override};
use libfuzzer_sys::fuzz_target;
use serde_json::json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ov) = parse_override(text) else { return };
    assert!(!ov.path.is_empty() && ov.path.iter().all(|s| !s.is_empty()));
    let mut root =
        json!({"system": {"preset": "diatomic"}, "levels": [4, 6], "scf": {"mixing": {"kind": "linear", "beta": 0.3}}});
    if apply_override(&mut root, &ov).is_ok() {
        let mut node = &root;
        for seg in &ov.path {
            node = match node {
                serde_json::Value::Array(a) => &a[seg.parse::<usize>().expect("array segment")],
                other => &other[seg.as_str()],
            };
        }
        assert_eq!(node, &ov.value);
    }
});
