//! The checked-in fixture CSVs are exactly what the bundled presets produce:
//! regenerate with `carbonsim synth --preset both --out fixtures` after any
//! deliberate generator change.

use std::path::{Path, PathBuf};

use carbonsim::dataio::{synth_generate, write_generation_csv, SyntheticGridSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn checked_in_fixtures_match_the_generator() {
    let presets = [
        (SyntheticGridSpec::caiso_like(), "caiso_like.csv"),
        (SyntheticGridSpec::ercot_like(), "ercot_like.csv"),
    ];
    let dir = tempfile::tempdir().expect("tempdir");
    for (spec, name) in presets {
        let series = synth_generate(&spec).expect("generate preset");
        let path = dir.path().join(name);
        write_generation_csv(&path, &[series]).expect("write preset");
        let fresh = std::fs::read(&path).expect("read fresh bytes");
        let checked_in = std::fs::read(fixture(name)).expect("read fixture");
        assert_eq!(
            fresh, checked_in,
            "{name} no longer matches its generator; regenerate the fixture"
        );
    }
}
