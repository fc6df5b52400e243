#![no_main]

use libfuzzer_sys::fuzz_target;
use motion_saliency::nn::parse_checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_checkpoint(text) {
        // A validated checkpoint must accept inputs of its declared size.
        if model.architecture.input_dim() <= 1 << 16 {
            let x = vec![0.0; model.architecture.input_dim()];
            let _ = model.predict(&x);
        }
    }
});
