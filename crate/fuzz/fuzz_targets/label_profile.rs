#![no_main]

use findingscope::corpus::LabelProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(profile) = LabelProfile::parse(text) {
        let counts = profile.counts(657);
        assert_eq!(counts.iter().map(|(_, c)| c).sum::<usize>(), 657);
    }
});
