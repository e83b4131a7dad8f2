//! The quantum switch and its N-party generalization.
//!
//! With control projectors `π_k` on `Q` and orderings `σ_k`, the switch maps
//! `φ₁ … φₙ` on `[A, A]` to `Σ_k π_k ⊗ φ_{σ_k(n)} ∘ ⋯ ∘ φ_{σ_k(1)}` on
//! `Q ⊗ A`. The two-party switch uses `σ₀ = (1, 2)` and `σ₁ = (2, 1)`, so
//! `π₀` selects "φ₁ first". Extension wires ride along as spectators and
//! come out after `Q ⊗ A` in slot order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::category::unitarity_defect;
use crate::comb::{apply_comb, Comb, CombFamily, SrepSupermap};
use crate::error::{Error, Result};
use crate::supermap::{Arg, HigherObject};
use crate::tensor::{Mat, Morphism, Tolerance, WireType};

/// Orthogonal, complete projectors on the control wire.
#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    dim_q: usize,
    projectors: Vec<Morphism>,
}

impl Control {
    pub fn new(dim_q: usize, projectors: Vec<Morphism>, tol: Tolerance) -> Result<Self> {
        let q = WireType::qudit(dim_q);
        if projectors.is_empty() {
            return Err(Error::BadControl("no projectors".into()));
        }
        for p in &projectors {
            if p.dom() != &q || p.cod() != &q {
                return Err(Error::BadControl(format!("projector is not an operator on [{dim_q}]")));
            }
        }
        let mut sum = Morphism::zero(&q, &q);
        for (k, pk) in projectors.iter().enumerate() {
            sum = sum.add(pk)?;
            for (l, pl) in projectors.iter().enumerate() {
                let prod = pk.compose(pl)?;
                let want = if k == l { pk.clone() } else { Morphism::zero(&q, &q) };
                let dev = prod.max_abs_diff(&want)?;
                if dev > tol.abs_tol {
                    return Err(Error::BadControl(format!(
                        "π_{k} π_{l} deviates from δ π_{k} by {dev:.3e}"
                    )));
                }
            }
        }
        let dev = sum.max_abs_diff(&Morphism::identity(&q))?;
        if dev > tol.abs_tol {
            return Err(Error::BadControl(format!("projectors do not sum to the identity (deviation {dev:.3e})")));
        }
        Ok(Control { dim_q, projectors })
    }

    /// Projectors onto the computational basis of `[dim_q]`.
    pub fn computational(dim_q: usize) -> Self {
        let projectors = (0..dim_q).map(|k| crate::gates::projector(dim_q, k)).collect();
        Control { dim_q, projectors }
    }

    pub fn dim_q(&self) -> usize {
        self.dim_q
    }

    pub fn projectors(&self) -> &[Morphism] {
        &self.projectors
    }

    pub fn wire(&self) -> WireType {
        WireType::qudit(self.dim_q)
    }
}

/// Closed-form and per-party comb evaluation of an N-party switch.
#[derive(Clone, Debug)]
pub struct SwitchFamily {
    ctrl: Control,
    a: WireType,
    orderings: Vec<Vec<usize>>,
    slots: Vec<HigherObject>,
    outer: HigherObject,
}

/// Embeds `φ : A ⊗ X_j → A ⊗ X_j` into `A ⊗ X_1 ⋯ X_k`.
fn embed(phi: &Morphism, a: &WireType, exts: &[WireType], j: usize) -> Result<Morphism> {
    let rest: Vec<&WireType> = exts.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, x)| x).collect();
    let big = phi.tensor(&Morphism::identity(&WireType::concat_all(rest.iter().copied())));
    let mut sizes = vec![a.len(), exts[j].len()];
    sizes.extend(rest.iter().map(|x| x.len()));
    let order: Vec<usize> = std::iter::once(0)
        .chain((0..exts.len()).map(|p| match p.cmp(&j) {
            std::cmp::Ordering::Less => p + 2,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Greater => p + 1,
        }))
        .collect();
    big.reorder_blocks(&sizes, &order, &sizes, &order)
}

/// `φ` retyped to `A ⊗ X → A ⊗ X`; requires `X` and `X′` of equal dimension.
fn square_arg(arg: &Arg, a: &WireType) -> Result<Morphism> {
    if arg.ext_in.total() != arg.ext_out.total() {
        return Err(Error::TypeMismatch {
            context: "switch extension",
            expected: arg.ext_in.factors().to_vec(),
            found: arg.ext_out.factors().to_vec(),
        });
    }
    let w = a.concat(&arg.ext_in);
    arg.phi.retype(w.clone(), w)
}

impl SwitchFamily {
    pub fn new(ctrl: Control, a: WireType, orderings: Vec<Vec<usize>>) -> Result<Self> {
        if orderings.len() != ctrl.projectors.len() {
            return Err(Error::BadOrderings(format!(
                "{} orderings for {} projectors",
                orderings.len(),
                ctrl.projectors.len()
            )));
        }
        let n = orderings.first().map(|o| o.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::BadOrderings("empty ordering".into()));
        }
        for o in &orderings {
            let mut seen = vec![false; n];
            if o.len() != n || o.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::BadOrderings(format!("{o:?} is not a permutation of 0..{n}")));
            }
        }
        let qa = ctrl.wire().concat(&a);
        Ok(SwitchFamily {
            slots: vec![HigherObject::square(&a); n],
            outer: HigherObject::square(&qa),
            ctrl,
            a,
            orderings,
        })
    }

    pub fn parties(&self) -> usize {
        self.slots.len()
    }

    pub fn control(&self) -> &Control {
        &self.ctrl
    }

    pub fn orderings(&self) -> &[Vec<usize>] {
        &self.orderings
    }

    /// `Σ_k π_k ⊗ chain_k` where `chain_k` applies the parties in `parties`
    /// (positions into `exts`) in the order they occur in `σ_k`, restricted
    /// by `keep(k, position in σ_k)`.
    fn controlled_chain(
        &self,
        squared: &[Option<Morphism>],
        exts: &[WireType],
        keep: impl Fn(usize, usize) -> bool,
    ) -> Result<Morphism> {
        let w = self.a.concat(&WireType::concat_all(exts));
        let q = self.ctrl.wire();
        let mut total = Morphism::zero(&q.concat(&w), &q.concat(&w));
        for (k, sigma) in self.orderings.iter().enumerate() {
            let mut chain = Morphism::identity(&w);
            for (pos, &party) in sigma.iter().enumerate() {
                if let Some(phi) = &squared[party] {
                    if keep(k, pos) {
                        chain = embed(phi, &self.a, exts, ext_index(squared, party))?.compose(&chain)?;
                    }
                }
            }
            total = total.add(&self.ctrl.projectors[k].tensor(&chain))?;
        }
        Ok(total)
    }

    /// The closed-form action; output `Q ⊗ A ⊗ X₁′ ⋯ Xₙ′`.
    pub fn closed_form(&self, args: &[Arg]) -> Result<Morphism> {
        if args.len() != self.parties() {
            return Err(Error::Invalid(format!("{} arguments for {} parties", args.len(), self.parties())));
        }
        for (h, a) in self.slots.iter().zip(args) {
            a.check(h, "switch")?;
        }
        let squared: Vec<Option<Morphism>> = args.iter().map(|a| square_arg(a, &self.a).map(Some)).collect::<Result<_>>()?;
        let exts: Vec<WireType> = args.iter().map(|a| a.ext_in.clone()).collect();
        let out = self.controlled_chain(&squared, &exts, |_, _| true)?;
        let cod = self.outer.output.concat(&WireType::concat_all(args.iter().map(|a| &a.ext_out)));
        out.retype(out.dom().clone(), cod)
    }
}

/// Position of `party` among the parties present in `squared`.
fn ext_index(squared: &[Option<Morphism>], party: usize) -> usize {
    squared[..party].iter().filter(|s| s.is_some()).count()
}

impl CombFamily for SwitchFamily {
    fn slots(&self) -> &[HigherObject] {
        &self.slots
    }

    fn outer(&self) -> &HigherObject {
        &self.outer
    }

    /// Memory `Q ⊗ X_others`: the control and the other parties'
    /// extensions. `pre` applies, per branch, the parties ordered before
    /// `party`; `post` applies those after it.
    fn comb(&self, party: usize, fixed: &[Option<Arg>]) -> Result<Comb> {
        let squared: Vec<Option<Morphism>> = fixed
            .iter()
            .map(|a| a.as_ref().map(|a| square_arg(a, &self.a)).transpose())
            .collect::<Result<_>>()?;
        let exts: Vec<WireType> = fixed.iter().flatten().map(|a| a.ext_in.clone()).collect();
        let ext_outs: Vec<WireType> = fixed.iter().flatten().map(|a| a.ext_out.clone()).collect();
        let positions: Vec<usize> = self
            .orderings
            .iter()
            .map(|s| s.iter().position(|&p| p == party).expect("permutation"))
            .collect();
        let before = self.controlled_chain(&squared, &exts, |k, pos| pos < positions[k])?;
        let after = self.controlled_chain(&squared, &exts, |k, pos| pos > positions[k])?;

        let q = self.ctrl.wire();
        let x_all = WireType::concat_all(&exts);
        let (nq, na, nx) = (q.len(), self.a.len(), x_all.len());
        let memory = q.concat(&x_all);
        // Q A X → Q A X → A Q X
        let pre = before.reorder_blocks(&[nq, na, nx], &[0, 1, 2], &[nq, na, nx], &[1, 0, 2])?;
        // A Q X → Q A X → Q A X′
        let post = after.reorder_blocks(&[nq, na, nx], &[1, 0, 2], &[nq, na, nx], &[0, 1, 2])?;
        let out_cod = q.concat(&self.a).concat(&WireType::concat_all(&ext_outs));
        let post = post.retype(post.dom().clone(), out_cod.clone())?;
        let outer = HigherObject::new(q.concat(&self.a).concat(&x_all), out_cod);
        Comb::new(self.slots[party].clone(), outer, memory, pre, post)
    }
}

/// The two-party switch `[A,A] [A,A] → [Q ⊗ A, Q ⊗ A]`.
pub fn build_switch(ctrl: Control, a: &WireType) -> Result<SrepSupermap> {
    if ctrl.projectors.len() != 2 {
        return Err(Error::BadControl(format!("switch needs 2 projectors, found {}", ctrl.projectors.len())));
    }
    build_n_switch(ctrl, a, vec![vec![0, 1], vec![1, 0]])
}

/// The N-party switch with one (0-based) ordering per projector; each
/// ordering lists parties in the order they act.
pub fn build_n_switch(ctrl: Control, a: &WireType, orderings: Vec<Vec<usize>>) -> Result<SrepSupermap> {
    Ok(SrepSupermap::from_family(Arc::new(SwitchFamily::new(ctrl, a.clone(), orderings)?)))
}

/// The cyclic orderings of `n` parties.
pub fn cyclic_orderings(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|s| (0..n).map(|k| (s + k) % n).collect()).collect()
}

/// `π₀ ⊗ (φ₂ ∘ φ₁) + π₁ ⊗ (φ₁ ∘ φ₂)` for operators on `A`.
pub fn switch_closed_form(ctrl: &Control, phi1: &Morphism, phi2: &Morphism) -> Result<Morphism> {
    if ctrl.projectors.len() != 2 {
        return Err(Error::BadControl("switch needs 2 projectors".into()));
    }
    ctrl.projectors[0]
        .tensor(&phi2.compose(phi1)?)
        .add(&ctrl.projectors[1].tensor(&phi1.compose(phi2)?))
}

/// The comb seen by `party` (1 or 2) when the other party's operator is
/// `fixed` with trivial extension.
pub fn switch_comb(ctrl: &Control, a: &WireType, party: usize, fixed: &Morphism) -> Result<Comb> {
    let fam = SwitchFamily::new(ctrl.clone(), a.clone(), vec![vec![0, 1], vec![1, 0]])?;
    let args = match party {
        1 => vec![None, Some(Arg::plain(fixed.clone()))],
        2 => vec![Some(Arg::plain(fixed.clone())), None],
        _ => return Err(Error::Invalid(format!("party must be 1 or 2, got {party}"))),
    };
    args.iter().flatten().try_for_each(|a| a.check(&fam.slots[0], "switch_comb"))?;
    fam.comb(party - 1, &args)
}

/// Diagonal blocks `⟨k| S |k⟩` of an operator on `Q ⊗ A`.
pub fn control_blocks(m: &Morphism, dim_q: usize) -> Vec<Mat> {
    let da = m.dom().total() / dim_q;
    (0..dim_q)
        .map(|k| m.mat().view((k * da, k * da), (da, da)).into_owned())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchDemo {
    pub dim: usize,
    pub parties: usize,
    pub seed: u64,
    pub inputs: Vec<Morphism>,
    pub output: Morphism,
    pub blocks: Vec<Morphism>,
    pub unitarity_defect: f64,
    pub closed_form_deviation: f64,
    pub max_party_deviation: f64,
}

/// Haar inputs fed through the N-party switch with cyclic orderings
/// (`n = 2` is the ordinary switch), with the block decomposition and
/// consistency checks.
pub fn switch_demo(dim: usize, n: usize, seed: u64) -> Result<SwitchDemo> {
    let a = WireType::qudit(dim);
    let orderings = cyclic_orderings(n);
    let ctrl = Control::computational(n);
    let fam = SwitchFamily::new(ctrl, a.clone(), orderings)?;
    let inputs: Vec<Morphism> = (0..n)
        .map(|i| crate::category::haar_unitary_from(&a, &mut crate::rng::stream(seed, i as u64)))
        .collect();
    let args: Vec<Arg> = inputs.iter().cloned().map(Arg::plain).collect();
    let output = fam.closed_form(&args)?;
    let mut max_party: f64 = 0.0;
    for p in 0..n {
        let fixed: Vec<Option<Arg>> = args.iter().enumerate().map(|(i, x)| (i != p).then(|| x.clone())).collect();
        let c = fam.comb(p, &fixed)?;
        max_party = max_party.max(apply_comb(&c, &args[p])?.max_abs_diff(&output)?);
    }
    let mut oracle = Morphism::zero(output.dom(), output.cod());
    for (k, sigma) in fam.orderings.iter().enumerate() {
        let chain = sigma
            .iter()
            .try_fold(Morphism::identity(&a), |acc, &p| inputs[p].compose(&acc))?;
        oracle = oracle.add(&fam.ctrl.projectors[k].tensor(&chain))?;
    }
    let blocks = control_blocks(&output, n)
        .into_iter()
        .map(|m| Morphism::new(a.clone(), a.clone(), m))
        .collect::<Result<_>>()?;
    Ok(SwitchDemo {
        dim,
        parties: n,
        seed,
        unitarity_defect: unitarity_defect(&output),
        closed_form_deviation: output.max_abs_diff(&oracle)?,
        max_party_deviation: max_party,
        inputs,
        output,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::haar_unitary;
    use crate::comb::{comb_to_internal, srep_apply, srep_check};
    use crate::gates;
    use crate::supermap::{verify, default_ext_schedule};
    use crate::CategoryTag;

    fn q() -> WireType {
        WireType::qudit(2)
    }

    fn fam2() -> SwitchFamily {
        SwitchFamily::new(Control::computational(2), q(), vec![vec![0, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn control_validation() {
        let tol = Tolerance::DEFAULT;
        assert!(Control::new(2, vec![gates::projector(2, 0), gates::projector(2, 1)], tol).is_ok());
        assert!(matches!(Control::new(2, vec![gates::projector(2, 0)], tol), Err(Error::BadControl(_))));
        assert!(Control::new(2, vec![gates::projector(2, 0), gates::projector(2, 0)], tol).is_err());
        assert!(matches!(build_switch(Control::computational(3), &q()), Err(Error::BadControl(_))));
        assert!(matches!(
            build_n_switch(Control::computational(2), &q(), vec![vec![0, 0], vec![1, 0]]),
            Err(Error::BadOrderings(_))
        ));
        assert!(matches!(
            build_n_switch(Control::computational(3), &q(), vec![vec![0, 1], vec![1, 0]]),
            Err(Error::BadOrderings(_))
        ));
    }

    #[test]
    fn identity_inputs_give_identity() {
        let s = build_switch(Control::computational(2), &q()).unwrap();
        let id = Arg::plain(Morphism::identity(&q()));
        let out = srep_apply(&s, &[id.clone(), id]).unwrap();
        assert!(out.approx_eq(&Morphism::identity(&WireType::new(vec![2, 2])), Tolerance::DEFAULT).unwrap());
        let s3 = build_n_switch(Control::computational(3), &q(), cyclic_orderings(3)).unwrap();
        let id = Arg::plain(Morphism::identity(&q()));
        let out = srep_apply(&s3, &[id.clone(), id.clone(), id]).unwrap();
        assert!(out.approx_eq(&Morphism::identity(&WireType::new(vec![3, 2])), Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn pauli_blocks_anticommute() {
        let f = fam2();
        let out = f.closed_form(&[Arg::plain(gates::pauli_x()), Arg::plain(gates::pauli_z())]).unwrap();
        let blocks = control_blocks(&out, 2);
        let zx = gates::pauli_z().compose(&gates::pauli_x()).unwrap();
        assert!((&blocks[0] - zx.mat()).norm() < 1e-14);
        assert!((&blocks[0] + &blocks[1]).norm() < 1e-14);
    }

    #[test]
    fn commuting_inputs_collapse() {
        let f = fam2();
        let (z, s) = (gates::pauli_z(), gates::phase_s());
        let out = f.closed_form(&[Arg::plain(z.clone()), Arg::plain(s.clone())]).unwrap();
        let want = Morphism::identity(&q()).tensor(&s.compose(&z).unwrap());
        assert!(out.approx_eq(&want, Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn party_combs_match_sum_formula() {
        let ctrl = Control::computational(2);
        for seed in 0..20 {
            let u = haar_unitary(&q(), 2 * seed);
            let v = haar_unitary(&q(), 2 * seed + 1);
            let oracle = switch_closed_form(&ctrl, &u, &v).unwrap();
            let c2 = switch_comb(&ctrl, &q(), 2, &u).unwrap();
            assert!(apply_comb(&c2, &Arg::plain(v.clone())).unwrap().max_abs_diff(&oracle).unwrap() < 1e-10);
            let c1 = switch_comb(&ctrl, &q(), 1, &v).unwrap();
            assert!(apply_comb(&c1, &Arg::plain(u.clone())).unwrap().max_abs_diff(&oracle).unwrap() < 1e-10);
            assert!(c2.unitarity_defect() < 1e-10);
        }
        let c = switch_comb(&ctrl, &q(), 2, &Morphism::identity(&q())).unwrap();
        // With φ₁ = id both stages only move the control into memory.
        assert!(c.pre().approx_eq(&Morphism::braid(&q(), &q()), Tolerance::DEFAULT).unwrap());
        assert!(c.post().approx_eq(&Morphism::braid(&q(), &q()), Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn extensions_are_spectators() {
        let f = fam2();
        let s = SrepSupermap::from_family(Arc::new(f.clone()));
        let rep = srep_check(&s, 3, 10, Tolerance::DEFAULT).unwrap();
        assert!(rep.passed, "{rep:?}");
        let x = WireType::qudit(3);
        let u = haar_unitary(&q().concat(&x), 1);
        let v = haar_unitary(&q(), 2);
        let out = f
            .closed_form(&[Arg::new(u.clone(), x.clone(), x.clone()), Arg::plain(v.clone())])
            .unwrap();
        assert!(unitarity_defect(&out) < 1e-10);
        assert_eq!(out.dom().factors(), &[2, 2, 3]);
    }

    #[test]
    fn verify_switch_and_party_combs() {
        let s = build_switch(Control::computational(2), &q()).unwrap();
        let internal = s.to_internal().unwrap();
        let rep = verify(&internal, CategoryTag::FU, 20, &default_ext_schedule(), 4, Tolerance::DEFAULT);
        assert!(rep.passed(), "{rep:?}");
        let c = switch_comb(&Control::computational(2), &q(), 2, &haar_unitary(&q(), 9)).unwrap();
        let rep = verify(&comb_to_internal(&c), CategoryTag::FU, 20, &default_ext_schedule(), 4, Tolerance::DEFAULT);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn three_party_demo() {
        let d = switch_demo(2, 3, 7).unwrap();
        assert!(d.unitarity_defect < 1e-10);
        assert!(d.closed_form_deviation < 1e-10);
        assert!(d.max_party_deviation < 1e-10);
        assert_eq!(d.blocks.len(), 3);
    }
}
