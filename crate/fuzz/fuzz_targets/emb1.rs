#![no_main]

use findingscope::embedspace::{parse_emb1, write_emb1};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_emb1(text) {
        // a parsed matrix is finite, so it always writes back
        let written = write_emb1(&m).expect("parsed matrix writes");
        assert_eq!(parse_emb1(&written).expect("written matrix parses"), m);
    }
});
