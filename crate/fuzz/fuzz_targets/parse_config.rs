#![no_main]

use libfuzzer_sys::fuzz_target;
use motion_saliency::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml_str(text) {
        let _ = cfg.synth.validate();
        let _ = cfg.sweep.settings();
        let _ = cfg.grid.cells();
    }
});
