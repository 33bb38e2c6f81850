//! Each input line is one `--set` item applied on top of a valid base
//! config, so any error must be blamed on the overrides and not the file.

#![no_main]

use libfuzzer_sys::fuzz_target;
use wgent_cli::config::{load, parse_override, Location};

const BASE: &str = "experiment = \"intensity-vs-z\"\nn_sites = 21\nz_max = 1.0\n";

fuzz_target!(|text: &str| {
    let items: Vec<String> = text.lines().map(str::to_owned).collect();
    for item in &items {
        let _ = parse_override(item);
    }
    if let Err(e) = load("base.toml", BASE, &items) {
        assert!(!matches!(e.location, Location::File { .. }), "{e}");
    }
});
