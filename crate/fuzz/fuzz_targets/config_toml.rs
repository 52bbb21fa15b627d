#![no_main]

use findingscope::pipeline::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_toml(text) {
        let _ = config.validate();
        assert_eq!(ExperimentConfig::from_toml(&config.to_toml()).expect("round trip"), config);
    }
});
