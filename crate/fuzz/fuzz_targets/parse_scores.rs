#![no_main]

use libfuzzer_sys::fuzz_target;
use motion_saliency::saliency::{parse_scores, scores_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tracks) = parse_scores(text) {
        let again = parse_scores(&scores_to_string(&tracks)).expect("re-parse of written scores");
        assert_eq!(again.len(), tracks.len());
    }
});
