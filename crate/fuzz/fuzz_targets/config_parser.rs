//! Arbitrary text through the config loader. Accepted configs must survive
//! a serialise/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use wgent_cli::config::{load, parse_config};

fuzz_target!(|text: &str| {
    let Ok(config) = load("fuzz.toml", text, &[]) else {
        return;
    };
    let again = toml::to_string(&config).expect("accepted configs serialise");
    assert_eq!(parse_config("again.toml", &again).expect("serialised configs parse"), config);
});
