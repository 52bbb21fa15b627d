#![no_main]

use findingscope::textprep::{Lemmatizer, Preprocessor, Stopwords};
use libfuzzer_sys::fuzz_target;

// The same bytes serve as a stopword list, a lemma exception table and
// free text.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let stopwords = Stopwords::parse(text);
    let lemmatizer = Lemmatizer::parse(text).unwrap_or_default();
    let pre = Preprocessor::new(stopwords, lemmatizer);
    for token in pre.tokens(text) {
        assert_eq!(pre.lemmatizer.lemmatize(&token), token);
    }
});
