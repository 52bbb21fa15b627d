#![no_main]

use findingscope::boostlab::LogRegModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = LogRegModel::from_json(text) {
        let _ = model.predict_proba(&vec![0.0; model.n_features()]);
        assert_eq!(LogRegModel::from_json(&model.to_json()).expect("round trip"), model);
    }
});
