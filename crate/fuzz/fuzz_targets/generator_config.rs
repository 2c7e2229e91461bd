#![no_main]

use libfuzzer_sys::fuzz_target;
use triadscope::synth::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = GeneratorConfig::from_toml(text) {
        let again = GeneratorConfig::from_toml(&config.to_toml()).unwrap();
        // NaN fields never compare equal; compare the serialized forms.
        assert_eq!(again.to_toml(), config.to_toml());
        let _ = config.validate();
    }
});
