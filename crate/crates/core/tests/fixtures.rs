use std::path::PathBuf;

use polyslot::fixtures::{check_fixtures, regen_fixtures, Manifest, DEFAULT_SEED, MANIFEST};
use polyslot::supermap::sequential_composition;
use polyslot::switch::{build_switch, Control};
use polyslot::tensor::Mat;
use polyslot::{srep_apply, Arg, Comb, InternalSupermap, Morphism, NetworkSpec, WireType, C64};
use serde_json::Value;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(corpus().join(path)).unwrap()).unwrap()
}

#[test]
fn committed_digests_reproduce() {
    let m = check_fixtures(&corpus()).unwrap();
    assert_eq!(m.seed, DEFAULT_SEED);
    let fresh = regen_fixtures(DEFAULT_SEED).unwrap();
    assert_eq!(fresh.len(), m.fixtures.len());
}

#[test]
fn manifest_lists_every_file() {
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(corpus().join(MANIFEST)).unwrap()).unwrap();
    for f in &m.fixtures {
        assert!(corpus().join(&f.path).is_file(), "{}", f.path);
        assert!(!f.anchor.is_empty() && !f.description.is_empty());
    }
}

#[test]
fn switch_fixture_is_the_sum_formula() {
    let v = load("switch/pauli.json");
    let phi1: Morphism = serde_json::from_value(v["phi1"].clone()).unwrap();
    let phi2: Morphism = serde_json::from_value(v["phi2"].clone()).unwrap();
    let expected: Morphism = serde_json::from_value(v["expected"].clone()).unwrap();
    let p = |k: usize| Mat::from_fn(2, 2, |r, c| C64::new(if r == k && c == k { 1.0 } else { 0.0 }, 0.0));
    let oracle = p(0).kronecker(&(phi2.mat() * phi1.mat())) + p(1).kronecker(&(phi1.mat() * phi2.mat()));
    assert!((expected.mat() - &oracle).norm() < 1e-12);
    let s = build_switch(Control::computational(2), &WireType::qudit(2)).unwrap();
    let got = srep_apply(&s, &[Arg::plain(phi1), Arg::plain(phi2)]).unwrap();
    assert!((got.mat() - &oracle).norm() < 1e-12);

    let internal: InternalSupermap = serde_json::from_value(load("switch/internal.json")).unwrap();
    assert_eq!(internal, s.to_internal().unwrap());
}

#[test]
fn loop_fixture_matches_its_network() {
    let spec: NetworkSpec = serde_json::from_value(load("networks/loop.json")).unwrap();
    let net = spec.build().unwrap();
    assert_eq!(net.rejected.as_ref().map(|(i, _)| *i), Some(1));
    let expected = load("networks/loop_expected.json");
    assert_eq!(expected["rejection"], "already_connected");
    assert!((expected["scalar"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn stored_supermaps_and_combs_load() {
    let q = WireType::qudit(2);
    let seq: InternalSupermap = serde_json::from_value(load("supermaps/seqcomp.json")).unwrap();
    assert_eq!(seq, sequential_composition(&q, &q, &q));
    let c: Comb = serde_json::from_value(load("combs/random.json")).unwrap();
    let s: InternalSupermap = serde_json::from_value(load("combs/random_internal.json")).unwrap();
    assert_eq!(polyslot::comb_to_internal(&c), s);
}
