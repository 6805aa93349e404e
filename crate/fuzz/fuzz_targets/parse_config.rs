#![no_main]

use ksfem::{parse_config, Command};
use libfuzzer_sys::fuzz_target;

// First line is an optional `--set` override, the rest is the config text.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (overrides, body) = match text.split_once('\n') {
        Some((first, rest)) if first.contains('=') => (vec![first.to_string()], rest),
        _ => (Vec::new(), text),
    };
    if let Ok(cfg) = parse_config(body, &overrides) {
        let _ = cfg.validate(Command::Solve);
        let _ = cfg.validate(Command::Study);
        let _ = cfg.resolve_system();
    }
});
