//! Files exchanged with an external trainer: NLWT weights and parity fixtures.

mod common;

use std::fs;

use common::*;
use loclc::model::{load_weights, save_weights};
use loclc::parity::{self, ParityFixture, PARITY_TOLERANCE};
use loclc::schedule::gather_patch;
use loclc::{Error, LocalModel, ModelConfig};

#[test]
fn weight_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.nlwt");
    let model = LocalModel::random(ModelConfig::default(), 11).unwrap();
    fs::write(&path, save_weights(model.config(), model.weights())).unwrap();

    let bytes = fs::read(&path).unwrap();
    let (config, weights) = load_weights(&bytes).unwrap();
    let back = LocalModel::new(config, weights).unwrap();
    assert_eq!(back.hash(), model.hash());
    assert_eq!(back.weights(), model.weights());

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(LocalModel::from_bytes(&flipped).is_err());
}

#[test]
fn parity_fixture_from_disk_is_checked_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let model = LocalModel::random(
        ModelConfig {
            hidden: 16,
            ..ModelConfig::default()
        },
        12,
    )
    .unwrap();
    let (_, img) = natural_images().remove(0);
    let patches: Vec<_> = [(1, 1), (2, 5), (20, 20), (40, 40)]
        .iter()
        .map(|&(i, j)| gather_patch(&img, i, j, 3))
        .collect();
    let path = dir.path().join("parity.json");
    fs::write(
        &path,
        ParityFixture::record(&model, &patches).unwrap().to_json(),
    )
    .unwrap();

    let fixture = ParityFixture::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(fixture.probes.len(), 4);
    assert!(parity::check(&model, &fixture).unwrap() <= PARITY_TOLERANCE);

    // A trainer that drifted past the tolerance is caught.
    let mut drifted = fixture.clone();
    drifted.probes[2].params[0] += 10.0 * PARITY_TOLERANCE;
    assert!(parity::check(&model, &drifted).unwrap() > PARITY_TOLERANCE);

    let other = LocalModel::random(
        ModelConfig {
            hidden: 16,
            ..ModelConfig::default()
        },
        13,
    )
    .unwrap();
    assert!(matches!(
        parity::check(&other, &fixture),
        Err(Error::ModelMismatch { .. })
    ));
}
