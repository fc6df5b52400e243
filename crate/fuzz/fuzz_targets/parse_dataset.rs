#![no_main]

use libfuzzer_sys::fuzz_target;
use motion_saliency::data::{dataset_to_string, parse_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(manifest) = parse_dataset(text) {
        // Anything accepted must survive a write/read cycle unchanged.
        let again = parse_dataset(&dataset_to_string(&manifest)).expect("re-parse of written dataset");
        assert_eq!(again, manifest);
        let _ = manifest.features();
    }
});
