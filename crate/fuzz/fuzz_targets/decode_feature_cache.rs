#![no_main]

use libfuzzer_sys::fuzz_target;
use motion_saliency::data::decode_feature_cache;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = decode_feature_cache(data) {
        assert!(cache
            .matrices
            .iter()
            .all(|m| m.rows() == cache.t_max && m.cols() == cache.features));
    }
});
