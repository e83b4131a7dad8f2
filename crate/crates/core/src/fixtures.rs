//! Deterministic worked-example corpus.
//!
//! [`regen_fixtures`] rebuilds every fixture in memory from a seed. Each
//! fixture stores its inputs together with the expected outputs, and the
//! manifest records a SHA-256 digest of every file so drift is detected by
//! [`check_fixtures`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::category::{haar_unitary, haar_unitary_from};
use crate::comb::{comb_to_internal, Comb};
use crate::error::{Error, Result};
use crate::gates;
use crate::lat::interchange_demo_with;
use crate::pathing::{extract_witness, PathConstraint};
use crate::polycat::{CompositionSpec, NetworkSpec, TermSpec};
use crate::rng;
use crate::supermap::{
    default_ext_schedule, identity_supermap, loop_rejection_demo, loopback_pseudo_supermap, pair_state,
    sequential_composition, verify, HigherObject,
};
use crate::switch::{build_switch, switch_closed_form, Control};
use crate::tensor::{Morphism, Tolerance, WireType};
use crate::CategoryTag;

pub const DEFAULT_SEED: u64 = 20240611;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub path: String,
    pub description: String,
    /// Topic the fixture illustrates.
    pub anchor: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub tol: f64,
    pub generator: String,
    pub fixtures: Vec<FixtureEntry>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub entry: FixtureEntry,
    pub bytes: Vec<u8>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn fixture(path: &str, description: &str, anchor: &str, value: serde_json::Value) -> Result<Fixture> {
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    Ok(Fixture {
        entry: FixtureEntry {
            path: path.into(),
            description: description.into(),
            anchor: anchor.into(),
            sha256: digest(&bytes),
        },
        bytes,
    })
}

/// The corpus under `seed` and the default tolerance.
pub fn regen_fixtures(seed: u64) -> Result<Vec<Fixture>> {
    regen_fixtures_with(seed, Tolerance::DEFAULT)
}

pub fn regen_fixtures_with(seed: u64, tol: Tolerance) -> Result<Vec<Fixture>> {
    let q = WireType::qudit(2);
    let qq = WireType::new(vec![2, 2]);
    let mut out = Vec::new();

    out.push(fixture("gates/swap.json", "SWAP on two qubits", "symmetric-structure", serde_json::to_value(Morphism::braid(&q, &q))?)?);
    out.push(fixture("gates/cnot.json", "CNOT, control first", "signalling", serde_json::to_value(gates::cnot())?)?);
    out.push(fixture("gates/hadamard.json", "Hadamard", "unitaries", serde_json::to_value(gates::hadamard())?)?);

    // Staircase: (id ⊗ g)(f ⊗ id) on three qubits, no path from input 2 to output 0.
    let mut r = rng::stream(seed, 1);
    let f = haar_unitary_from(&qq, &mut r);
    let g = haar_unitary_from(&qq, &mut r);
    let staircase = Morphism::identity(&q).tensor(&g).compose(&f.tensor(&Morphism::identity(&q)))?;
    let constraint = PathConstraint::forbid(vec![2], vec![0]);
    let witness = extract_witness(&staircase, &constraint, tol)?;
    out.push(fixture(
        "pathing/staircase.json",
        "staircase unitary, its constraint and extracted memory dimension",
        "no-pathing-decomposition",
        json!({
            "morphism": staircase,
            "constraint": constraint,
            "memory": witness.memory,
            "reassembly_residual": witness.reassemble()?.max_abs_diff(&staircase)?,
        }),
    )?);
    out.push(fixture(
        "pathing/cnot_constraint.json",
        "CNOT with the control-to-target constraint it violates",
        "signalling",
        json!({ "morphism": gates::cnot(), "constraint": PathConstraint::forbid(vec![0], vec![1]), "expected": false }),
    )?);

    out.push(fixture(
        "supermaps/identity.json",
        "identity supermap on a qubit hole",
        "unit-polymorphism",
        serde_json::to_value(identity_supermap(&HigherObject::square(&q)))?,
    )?);
    out.push(fixture(
        "supermaps/seqcomp.json",
        "sequential composition [2,2] [2,2] → [2,2]",
        "sequential-composition",
        serde_json::to_value(sequential_composition(&q, &q, &q))?,
    )?);
    let loopback = loopback_pseudo_supermap(&q, &gates::hadamard());
    out.push(fixture(
        "supermaps/loopback.json",
        "discard-and-reprepare pseudo-supermap; fails unitary verification",
        "loop-counterexample",
        serde_json::to_value(&loopback)?,
    )?);
    let report = verify(&loopback, CategoryTag::FU, 20, &default_ext_schedule(), seed, tol);
    out.push(fixture(
        "reports/loopback_fu.json",
        "verification report of the pseudo-supermap",
        "loop-counterexample",
        serde_json::to_value(&report)?,
    )?);

    let switch = build_switch(Control::computational(2), &q)?;
    let internal = switch.to_internal()?;
    out.push(fixture(
        "switch/internal.json",
        "internal morphism of the qubit switch",
        "quantum-switch",
        serde_json::to_value(&internal)?,
    )?);
    let (x, z) = (gates::pauli_x(), gates::pauli_z());
    out.push(fixture(
        "switch/pauli.json",
        "switch on (X, Z) and the closed-form sum",
        "quantum-switch",
        json!({ "phi1": x, "phi2": z, "expected": switch_closed_form(&Control::computational(2), &x, &z)? }),
    )?);

    let mut r = rng::stream(seed, 2);
    let comb = Comb::random_unitary(&HigherObject::square(&q), &HigherObject::square(&qq), &q, &mut r)?;
    out.push(fixture("combs/random.json", "random unitary qubit comb", "comb-decomposition", serde_json::to_value(&comb)?)?);
    out.push(fixture(
        "combs/random_internal.json",
        "the same comb as an internal supermap",
        "comb-decomposition",
        serde_json::to_value(comb_to_internal(&comb))?,
    )?);

    let loop_net = NetworkSpec {
        terms: vec![
            TermSpec::Seqcomp { id: "seq".into(), dim: 2, factors: None },
            TermSpec::PairState { id: "pair".into(), dim: 2 },
        ],
        compositions: vec![
            CompositionSpec { from: "pair".into(), from_leg: 0, to: "seq".into(), to_leg: 0 },
            CompositionSpec { from: "pair".into(), from_leg: 1, to: "seq".into(), to_leg: 1 },
        ],
    };
    out.push(fixture("networks/loop.json", "pair state wired twice into sequential composition", "loop-rejection", serde_json::to_value(&loop_net)?)?);
    let demo = loop_rejection_demo(&sequential_composition(&q, &q, &q), &pair_state(&q))?;
    out.push(fixture(
        "networks/loop_expected.json",
        "raw double contraction of the loop network and its scalar",
        "loop-rejection",
        json!({ "rejection": rejection_kind(&demo.rejection), "raw": demo.raw, "scalar": demo.scalar }),
    )?);
    let switch_net = NetworkSpec {
        terms: vec![
            TermSpec::Switch { id: "switch".into(), dim: 2, parties: None },
            TermSpec::Seqcomp { id: "seq".into(), dim: 0, factors: Some(vec![2, 2]) },
        ],
        compositions: vec![CompositionSpec { from: "switch".into(), from_leg: 0, to: "seq".into(), to_leg: 0 }],
    };
    out.push(fixture("networks/switch_then_seq.json", "switch plugged into the first leg of sequential composition", "polycategory-composition", serde_json::to_value(&switch_net)?)?);

    let demo = interchange_demo_with(2, &gates::dft(2), &Morphism::identity(&q))?;
    out.push(fixture("lat/interchange.json", "both orders of S^V and S^loop on the swap", "interchange-failure", serde_json::to_value(&demo)?)?);

    let probe = haar_unitary(&qq, seed);
    out.push(fixture("gates/haar_probe.json", "Haar unitary on two qubits (seeded)", "haar-sampling", serde_json::to_value(&probe)?)?);
    Ok(out)
}

fn rejection_kind(e: &Error) -> &'static str {
    match e {
        Error::AlreadyConnected { .. } => "already_connected",
        Error::SelfComposition(_) => "self_composition",
        _ => "other",
    }
}

pub fn manifest_for(fixtures: &[Fixture], seed: u64, tol: Tolerance) -> Manifest {
    Manifest {
        seed,
        tol: tol.abs_tol,
        generator: rng::GENERATOR.into(),
        fixtures: fixtures.iter().map(|f| f.entry.clone()).collect(),
    }
}

/// Writes the corpus and its manifest under `dir`.
pub fn write_fixtures(dir: &Path, seed: u64) -> Result<Manifest> {
    let fixtures = regen_fixtures(seed)?;
    for f in &fixtures {
        let path = dir.join(&f.entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, &f.bytes)?;
    }
    let manifest = manifest_for(&fixtures, seed, Tolerance::DEFAULT);
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST), bytes)?;
    Ok(manifest)
}

/// Regenerates the corpus with the manifest's seed and tolerance and
/// compares digests with both the manifest and the files on disk.
pub fn check_fixtures(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST))?)?;
    let fresh = regen_fixtures_with(manifest.seed, Tolerance::new(manifest.tol)?)?;
    if fresh.len() != manifest.fixtures.len() {
        return Err(Error::DigestMismatch {
            path: MANIFEST.into(),
            expected: format!("{} fixtures", manifest.fixtures.len()),
            actual: format!("{} fixtures", fresh.len()),
        });
    }
    for (want, got) in manifest.fixtures.iter().zip(&fresh) {
        if want.path != got.entry.path || want.sha256 != got.entry.sha256 {
            return Err(Error::DigestMismatch {
                path: want.path.clone(),
                expected: want.sha256.clone(),
                actual: got.entry.sha256.clone(),
            });
        }
        let on_disk = digest(&std::fs::read(dir.join(&want.path))?);
        if on_disk != want.sha256 {
            return Err(Error::DigestMismatch { path: want.path.clone(), expected: want.sha256.clone(), actual: on_disk });
        }
    }
    Ok(manifest)
}
