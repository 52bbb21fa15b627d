#![no_main]

use findingscope::corpus::{parse_findings_jsonl, write_findings_jsonl, SeverityScale};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let scale = SeverityScale::default();
    if let Ok(findings) = parse_findings_jsonl(text, &scale) {
        let again = parse_findings_jsonl(&write_findings_jsonl(&findings), &scale).expect("written findings parse");
        assert_eq!(findings, again);
    }
});
