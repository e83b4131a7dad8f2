//! Workloads shared by the criterion benches.

use polyslot::category::haar_unitary_from;
use polyslot::comb::Comb;
use polyslot::rng;
use polyslot::supermap::{sequential_composition, HigherObject};
use polyslot::switch::{build_n_switch, cyclic_orderings, Control};
use polyslot::{Arg, InternalSupermap, Morphism, SrepSupermap, WireType};

/// Staircase `(1 ⊗ g)(f ⊗ 1)` on three qudits of dimension `d`.
pub fn staircase(d: usize, seed: u64) -> Morphism {
    let a = WireType::qudit(d);
    let aa = WireType::new(vec![d, d]);
    let mut r = rng::stream(seed, 0);
    let f = haar_unitary_from(&aa, &mut r);
    let g = haar_unitary_from(&aa, &mut r);
    Morphism::identity(&a)
        .tensor(&g)
        .compose(&f.tensor(&Morphism::identity(&a)))
        .expect("matching types")
}

/// A comb on a `d`-dimensional hole with a qubit memory.
pub fn random_comb(d: usize, seed: u64) -> Comb {
    let slot = HigherObject::square(&WireType::qudit(d));
    let outer = HigherObject::square(&WireType::new(vec![d, 2]));
    Comb::random_unitary(&slot, &outer, &WireType::qudit(2), &mut rng::stream(seed, 1)).expect("dimensions agree")
}

pub fn seqcomp(d: usize) -> InternalSupermap {
    let a = WireType::qudit(d);
    sequential_composition(&a, &a, &a)
}

/// The `n`-party switch on a qudit with cyclic orderings.
pub fn switch(d: usize, n: usize) -> SrepSupermap {
    build_n_switch(Control::computational(n), &WireType::qudit(d), cyclic_orderings(n)).expect("valid orderings")
}

/// Haar arguments with trivial extension for the given holes.
pub fn plain_args(holes: &[HigherObject], seed: u64) -> Vec<Arg> {
    holes
        .iter()
        .enumerate()
        .map(|(k, h)| Arg::plain(haar_unitary_from(&h.input, &mut rng::stream(seed, k as u64))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyslot::category::unitarity_defect;

    #[test]
    fn workloads_are_well_typed() {
        assert!(unitarity_defect(&staircase(3, 0)) < 1e-10);
        assert_eq!(random_comb(3, 0).outer().input.factors(), &[3, 2]);
        let s = switch(2, 3);
        let out = polyslot::srep_apply(&s, &plain_args(s.slots(), 0)).unwrap();
        assert!(unitarity_defect(&out) < 1e-10);
        assert_eq!(seqcomp(2).slots().len(), 2);
    }
}
