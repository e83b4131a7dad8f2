//! Combs, single-party representable supermaps, and extraction of a comb
//! from a slot.
//!
//! A [`Comb`] with slot `[A, A′]`, outer hole `[B, B′]` and memory `M` is
//! the pair `pre : B → A ⊗ M`, `post : A′ ⊗ M → B′`. Plugging
//! `φ : A ⊗ X → A′ ⊗ X′` gives
//!
//! ```text
//!   (post ⊗ id_X′) ∘ σ ∘ (φ ⊗ id_M) ∘ σ ∘ (pre ⊗ id_X) : B ⊗ X → B′ ⊗ X′
//! ```
//!
//! where the σ move the memory past the extension.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::category::{haar_unitary_from, unitarity_defect};
use crate::error::{Error, Result};
use crate::pathing::{extract_witness, PathConstraint};
use crate::rng;
use crate::supermap::{Arg, HigherObject, InternalSupermap};
use crate::tensor::{Morphism, Tolerance, WireType};

#[derive(Clone, Debug, PartialEq)]
pub struct Comb {
    slot: HigherObject,
    outer: HigherObject,
    memory: WireType,
    pre: Morphism,
    post: Morphism,
}

fn expect_type(found: &WireType, expected: &WireType, context: &'static str) -> Result<()> {
    if found != expected {
        return Err(Error::TypeMismatch {
            context,
            expected: expected.factors().to_vec(),
            found: found.factors().to_vec(),
        });
    }
    Ok(())
}

impl Comb {
    pub fn new(slot: HigherObject, outer: HigherObject, memory: WireType, pre: Morphism, post: Morphism) -> Result<Self> {
        expect_type(pre.dom(), &outer.input, "comb pre domain")?;
        expect_type(pre.cod(), &slot.input.concat(&memory), "comb pre codomain")?;
        expect_type(post.dom(), &slot.output.concat(&memory), "comb post domain")?;
        expect_type(post.cod(), &outer.output, "comb post codomain")?;
        Ok(Comb { slot, outer, memory, pre, post })
    }

    /// The comb whose action is the identity on `[A, A′]`.
    pub fn identity(slot: &HigherObject) -> Self {
        Comb {
            slot: slot.clone(),
            outer: slot.clone(),
            memory: WireType::unit(),
            pre: Morphism::identity(&slot.input),
            post: Morphism::identity(&slot.output),
        }
    }

    /// A comb with Haar-random unitary stages; requires
    /// `d_B = d_A·d_M` and `d_A′·d_M = d_B′`.
    pub fn random_unitary(slot: &HigherObject, outer: &HigherObject, memory: &WireType, rng: &mut rng::Rng) -> Result<Self> {
        let pre_cod = slot.input.concat(memory);
        let post_dom = slot.output.concat(memory);
        if pre_cod.total() != outer.input.total() || post_dom.total() != outer.output.total() {
            return Err(Error::Invalid("random unitary comb needs matching dimensions".into()));
        }
        let pre = haar_unitary_from(&outer.input, rng).retype(outer.input.clone(), pre_cod)?;
        let post = haar_unitary_from(&post_dom, rng).retype(post_dom.clone(), outer.output.clone())?;
        Comb::new(slot.clone(), outer.clone(), memory.clone(), pre, post)
    }

    pub fn slot(&self) -> &HigherObject {
        &self.slot
    }

    pub fn outer(&self) -> &HigherObject {
        &self.outer
    }

    pub fn memory(&self) -> &WireType {
        &self.memory
    }

    pub fn pre(&self) -> &Morphism {
        &self.pre
    }

    pub fn post(&self) -> &Morphism {
        &self.post
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.pre).max(unitarity_defect(&self.post))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CombJson {
    pub pre: Morphism,
    pub post: Morphism,
    pub memory: WireType,
    pub slot: HigherObject,
    pub outer: HigherObject,
}

impl Serialize for Comb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CombJson {
            pre: self.pre.clone(),
            post: self.post.clone(),
            memory: self.memory.clone(),
            slot: self.slot.clone(),
            outer: self.outer.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Comb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = CombJson::deserialize(d)?;
        Comb::new(j.slot, j.outer, j.memory, j.pre, j.post).map_err(serde::de::Error::custom)
    }
}

/// Plugs `arg` into the comb's hole.
pub fn apply_comb(c: &Comb, arg: &Arg) -> Result<Morphism> {
    arg.check(&c.slot, "apply_comb")?;
    let (na, nm, nx) = (c.slot.input.len(), c.memory.len(), arg.ext_in.len());
    let (na2, nx2) = (c.slot.output.len(), arg.ext_out.len());
    let nb = c.outer.input.len();
    // B X → A M X → A X M
    let s1 = c
        .pre
        .tensor(&Morphism::identity(&arg.ext_in))
        .reorder_blocks(&[nb, nx], &[0, 1], &[na, nm, nx], &[0, 2, 1])?;
    // → A′ X′ M → A′ M X′
    let s2 = arg
        .phi
        .tensor(&Morphism::identity(&c.memory))
        .reorder_blocks(&[na, nx, nm], &[0, 1, 2], &[na2, nx2, nm], &[0, 2, 1])?;
    let s3 = c.post.tensor(&Morphism::identity(&arg.ext_out));
    s3.compose(&s2.compose(&s1)?)
}

/// The comb acting as `outer` applied to the result of `inner`; the memory is
/// `M_outer ⊗ M_inner`.
pub fn compose_combs(outer: &Comb, inner: &Comb) -> Result<Comb> {
    if inner.outer != outer.slot {
        return Err(Error::TypeMismatch {
            context: "compose_combs",
            expected: outer.slot.input.concat(&outer.slot.output).factors().to_vec(),
            found: inner.outer.input.concat(&inner.outer.output).factors().to_vec(),
        });
    }
    let (mo, mi) = (&outer.memory, &inner.memory);
    let (nai, nmi, nmo) = (inner.slot.input.len(), mi.len(), mo.len());
    // B → A_o M_o → A_i M_i M_o → A_i M_o M_i
    let pre = inner
        .pre
        .tensor(&Morphism::identity(mo))
        .compose(&outer.pre)?
        .reorder_blocks(&[outer.outer.input.len()], &[0], &[nai, nmi, nmo], &[0, 2, 1])?;
    // A_i′ M_o M_i → A_i′ M_i M_o → A_o′ M_o → B′
    let nai2 = inner.slot.output.len();
    let arranged = Morphism::identity(&inner.slot.output.concat(mo).concat(mi))
        .reorder_blocks(&[nai2, nmo, nmi], &[0, 1, 2], &[nai2, nmo, nmi], &[0, 2, 1])?;
    let post = outer
        .post
        .compose(&inner.post.tensor(&Morphism::identity(mo)).compose(&arranged)?)?;
    Comb::new(inner.slot.clone(), outer.outer.clone(), mo.concat(mi), pre, post)
}

/// The internal morphism `A′ ⊗ B → A ⊗ B′` realizing the comb as a
/// single-slot supermap: `(id_A ⊗ post) ∘ σ ∘ (id_A′ ⊗ pre)`.
pub fn comb_to_internal(c: &Comb) -> InternalSupermap {
    let (na, na2, nm) = (c.slot.input.len(), c.slot.output.len(), c.memory.len());
    let nb = c.outer.input.len();
    let step1 = Morphism::identity(&c.slot.output).tensor(&c.pre);
    let step2 = Morphism::identity(&c.slot.input).tensor(&c.post);
    let arranged = step1
        .reorder_blocks(&[na2, nb], &[0, 1], &[na2, na, nm], &[1, 0, 2])
        .expect("block sizes match");
    let internal = step2.compose(&arranged).expect("comb stages compose");
    InternalSupermap::new(vec![c.slot.clone()], c.outer.clone(), internal).expect("comb internal is well typed")
}

pub const SLOT_BATTERY: usize = 20;
const SLOT_BATTERY_SEED: u64 = 0x5107;

/// Extracts a comb from a single-slot supermap on unitaries.
///
/// The supermap is applied to the swap `A ⊗ A′ → A′ ⊗ A` (extension
/// `X = A′`, `X′ = A`). For a slot the result has no path from the
/// extension input to the extension output, and its staircase witness is
/// the comb. The comb is checked against the supermap on a Haar battery.
pub fn slot_to_comb(s: &InternalSupermap, tol: Tolerance) -> Result<Comb> {
    slot_to_comb_with(s, tol, SLOT_BATTERY, SLOT_BATTERY_SEED)
}

pub fn slot_to_comb_with(s: &InternalSupermap, tol: Tolerance, battery: usize, seed: u64) -> Result<Comb> {
    let [slot] = s.slots() else {
        return Err(Error::Invalid(format!("slot_to_comb needs one slot, found {}", s.slots().len())));
    };
    let outer = s.outer();
    let (a, a2) = (&slot.input, &slot.output);
    let swap = Morphism::braid(a, a2);
    let big = s.apply(&[Arg::new(swap, a2.clone(), a.clone())])?;
    let (nb, nb2) = (outer.input.len(), outer.output.len());
    let constraint = PathConstraint::forbid(
        (nb..nb + a2.len()).collect::<Vec<_>>(),
        (nb2..nb2 + a.len()).collect::<Vec<_>>(),
    );
    let witness = match extract_witness(&big, &constraint, tol) {
        Ok(w) => w,
        Err(Error::ConstraintFails { deviation }) => return Err(Error::NotAComb { deviation }),
        Err(Error::NotUnitary { defect }) => return Err(Error::NotAComb { deviation: defect }),
        Err(Error::ExtractionUnstable { residual }) => return Err(Error::ReassemblyFail { residual }),
        Err(e) => return Err(e),
    };
    let memory = witness.memory.clone();
    let post = witness.second.compose(&Morphism::braid(a2, &memory))?;
    let comb = Comb::new(slot.clone(), outer.clone(), memory, witness.first, post)?;

    let residual = action_residual(&comb, s, battery, seed)?;
    if residual > tol.scaled(big.dom().total()) {
        return Err(Error::ReassemblyFail { residual });
    }
    Ok(comb)
}

/// Largest entrywise difference between the comb's action and the
/// supermap's on Haar unitaries with extension `X = A′`, `X′ = A`.
pub fn action_residual(c: &Comb, s: &InternalSupermap, battery: usize, seed: u64) -> Result<f64> {
    let (a, a2) = (&c.slot.input, &c.slot.output);
    let mut worst: f64 = 0.0;
    for t in 0..battery {
        let mut r = rng::stream(seed, t as u64);
        let phi = haar_unitary_from(&a.concat(a2), &mut r).retype(a.concat(a2), a2.concat(a))?;
        let arg = Arg::new(phi, a2.clone(), a.clone());
        worst = worst.max(apply_comb(c, &arg)?.max_abs_diff(&s.apply(&[arg])?)?);
    }
    Ok(worst)
}

/// Largest entrywise difference between the actions of two combs of the
/// same type on Haar unitaries with trivial and qubit extensions.
pub fn comb_action_distance(c1: &Comb, c2: &Comb, battery: usize, seed: u64) -> Result<f64> {
    let (a, a2) = (&c1.slot.input, &c1.slot.output);
    if c1.slot != c2.slot || c1.outer != c2.outer {
        return Err(Error::TypeMismatch {
            context: "comb_action_distance",
            expected: c1.outer.input.factors().to_vec(),
            found: c2.outer.input.factors().to_vec(),
        });
    }
    let mut worst: f64 = 0.0;
    for t in 0..battery {
        let mut r = rng::stream(seed, t as u64);
        let (x, x2) = (a2.clone(), a.clone());
        let phi = haar_unitary_from(&a.concat(&x), &mut r).retype(a.concat(&x), a2.concat(&x2))?;
        let arg = Arg::new(phi, x, x2);
        worst = worst.max(apply_comb(c1, &arg)?.max_abs_diff(&apply_comb(c2, &arg)?)?);
    }
    Ok(worst)
}

/// Per-party comb decomposition of a multi-slot supermap.
///
/// `comb(i, fixed)` receives an argument for every party except `i`
/// (`fixed[i]` is `None`) and returns a comb on slot `i` whose outer hole is
/// `[B ⊗ Xₘ…, B′ ⊗ Xₘ′…]`, the fixed parties' extensions in slot order.
pub trait CombFamily: Send + Sync + std::fmt::Debug {
    fn slots(&self) -> &[HigherObject];
    fn outer(&self) -> &HigherObject;
    fn comb(&self, party: usize, fixed: &[Option<Arg>]) -> Result<Comb>;
}

type CombCache = Arc<RwLock<HashMap<u64, Comb>>>;

#[derive(Clone, Debug)]
pub enum SrepBackend {
    /// Closed-form per-party combs.
    Family(Arc<dyn CombFamily>),
    /// Per-party combs extracted from an internal supermap on demand.
    Internal { supermap: Box<InternalSupermap>, cache: CombCache },
}

/// A multi-slot supermap that is a comb from each party's perspective.
#[derive(Clone, Debug)]
pub struct SrepSupermap {
    slots: Vec<HigherObject>,
    outer: HigherObject,
    backend: SrepBackend,
    tol: Tolerance,
}

fn fixing_key(party: usize, fixed: &[Option<Arg>]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    party.hash(&mut h);
    for a in fixed {
        match a {
            None => 0u8.hash(&mut h),
            Some(a) => {
                1u8.hash(&mut h);
                a.phi.content_hash().hash(&mut h);
                a.ext_in.hash(&mut h);
                a.ext_out.hash(&mut h);
            }
        }
    }
    h.finish()
}

impl SrepSupermap {
    pub fn from_family(family: Arc<dyn CombFamily>) -> Self {
        SrepSupermap {
            slots: family.slots().to_vec(),
            outer: family.outer().clone(),
            backend: SrepBackend::Family(family),
            tol: Tolerance::DEFAULT,
        }
    }

    pub fn from_internal(supermap: InternalSupermap, tol: Tolerance) -> Self {
        SrepSupermap {
            slots: supermap.slots().to_vec(),
            outer: supermap.outer().clone(),
            backend: SrepBackend::Internal { supermap: Box::new(supermap), cache: Arc::default() },
            tol,
        }
    }

    pub fn from_comb(c: Comb) -> Self {
        SrepSupermap::from_family(Arc::new(ProductCombFamily::new(vec![c])))
    }

    pub fn slots(&self) -> &[HigherObject] {
        &self.slots
    }

    pub fn outer(&self) -> &HigherObject {
        &self.outer
    }

    pub fn backend(&self) -> &SrepBackend {
        &self.backend
    }

    /// Number of cached per-fixing combs (internal backend only).
    pub fn cached_combs(&self) -> usize {
        match &self.backend {
            SrepBackend::Family(_) => 0,
            SrepBackend::Internal { cache, .. } => cache.read().map(|c| c.len()).unwrap_or(0),
        }
    }

    /// The comb seen by `party` when the others are fixed.
    pub fn party_comb(&self, party: usize, fixed: &[Option<Arg>]) -> Result<Comb> {
        if party >= self.slots.len() || fixed.len() != self.slots.len() || fixed[party].is_some() {
            return Err(Error::Invalid(format!("bad fixing for party {party}")));
        }
        for (i, (slot, a)) in self.slots.iter().zip(fixed).enumerate() {
            match a {
                Some(a) => a.check(slot, "party_comb")?,
                None if i != party => return Err(Error::Invalid(format!("party {i} is not fixed"))),
                None => {}
            }
        }
        match &self.backend {
            SrepBackend::Family(f) => f.comb(party, fixed),
            SrepBackend::Internal { supermap, cache } => {
                let key = fixing_key(party, fixed);
                if let Some(c) = cache.read().ok().and_then(|m| m.get(&key).cloned()) {
                    return Ok(c);
                }
                let c = slot_to_comb(&supermap.fix_slots(fixed)?, self.tol)?;
                if let Ok(mut m) = cache.write() {
                    m.entry(key).or_insert_with(|| c.clone());
                }
                Ok(c)
            }
        }
    }

    /// Evaluates through the comb of `party`; the result is
    /// `B ⊗ X₁ ⋯ Xₙ → B′ ⊗ X₁′ ⋯ Xₙ′`.
    pub fn apply_via(&self, party: usize, args: &[Arg]) -> Result<Morphism> {
        if args.len() != self.slots.len() {
            return Err(Error::Invalid(format!("{} arguments for {} slots", args.len(), self.slots.len())));
        }
        let fixed: Vec<Option<Arg>> = args
            .iter()
            .enumerate()
            .map(|(i, a)| (i != party).then(|| a.clone()))
            .collect();
        let comb = self.party_comb(party, &fixed)?;
        let out = apply_comb(&comb, &args[party])?;
        // B, X_m (m ≠ party), X_party  →  B, X_1 … X_n
        let mut order: Vec<usize> = vec![0];
        let mut in_sizes = vec![self.outer.input.len()];
        let mut out_sizes = vec![self.outer.output.len()];
        for (i, a) in args.iter().enumerate() {
            if i != party {
                in_sizes.push(a.ext_in.len());
                out_sizes.push(a.ext_out.len());
            }
        }
        in_sizes.push(args[party].ext_in.len());
        out_sizes.push(args[party].ext_out.len());
        let n = args.len();
        for i in 0..n {
            order.push(match i.cmp(&party) {
                std::cmp::Ordering::Less => i + 1,
                std::cmp::Ordering::Equal => n,
                std::cmp::Ordering::Greater => i,
            });
        }
        out.reorder_blocks(&in_sizes, &order, &out_sizes, &order)
    }

    /// The internal morphism of the (multilinear) action.
    pub fn to_internal(&self) -> Result<InternalSupermap> {
        if let SrepBackend::Internal { supermap, .. } = &self.backend {
            return Ok((**supermap).clone());
        }
        InternalSupermap::from_action(self.slots.clone(), self.outer.clone(), |phis| {
            srep_apply(self, &phis.iter().cloned().map(Arg::plain).collect::<Vec<_>>())
        })
    }
}

/// Evaluates through the first party's comb.
pub fn srep_apply(s: &SrepSupermap, args: &[Arg]) -> Result<Morphism> {
    if s.slots.is_empty() {
        return Err(Error::Invalid("srep supermap without slots".into()));
    }
    s.apply_via(0, args)
}

/// Evaluates through every party's comb and fails if they disagree.
pub fn srep_apply_checked(s: &SrepSupermap, args: &[Arg], tol: Tolerance) -> Result<Morphism> {
    let first = srep_apply(s, args)?;
    for p in 1..s.slots.len() {
        let deviation = s.apply_via(p, args)?.max_abs_diff(&first)?;
        if deviation > tol.abs_tol {
            return Err(Error::InconsistentBackend { deviation });
        }
    }
    Ok(first)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SrepReport {
    pub trials: usize,
    pub seed: u64,
    pub max_party_deviation: f64,
    pub max_naturality_deviation: f64,
    pub passed: bool,
}

fn qudit_or_unit(d: usize) -> WireType {
    if d == 1 {
        WireType::unit()
    } else {
        WireType::qudit(d)
    }
}

/// A Haar unitary in the hole with a qubit extension on the input side when
/// the dimensions allow one, otherwise with the smallest extension that does.
pub(crate) fn haar_arg(hole: &HigherObject, rng: &mut rng::Rng) -> Arg {
    let (da, da2) = (hole.input.total(), hole.output.total());
    let (x, x2) = if (2 * da) % da2 == 0 {
        (qudit_or_unit(2), qudit_or_unit(2 * da / da2))
    } else {
        (qudit_or_unit(da2), qudit_or_unit(da))
    };
    let dom = hole.input.concat(&x);
    let phi = haar_unitary_from(&dom, rng)
        .retype(dom, hole.output.concat(&x2))
        .expect("equal totals");
    Arg::new(phi, x, x2)
}

/// Dresses the extension of an argument: `(id ⊗ x′) ∘ φ ∘ (id ⊗ x)`.
pub(crate) fn dress_arg(hole: &HigherObject, a: &Arg, x: &Morphism, x2: &Morphism) -> Result<Arg> {
    let phi = Morphism::identity(&hole.output)
        .tensor(x2)
        .compose(&a.phi.compose(&Morphism::identity(&hole.input).tensor(x))?)?;
    Ok(Arg::new(phi, a.ext_in.clone(), a.ext_out.clone()))
}

/// Checks that every party's comb reproduces the same action and that the
/// action is natural in the extensions.
pub fn srep_check(s: &SrepSupermap, seed: u64, trials: usize, tol: Tolerance) -> Result<SrepReport> {
    let mut party_dev: f64 = 0.0;
    let mut nat_dev: f64 = 0.0;
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        let args: Vec<Arg> = s.slots.iter().map(|h| haar_arg(h, &mut r)).collect();
        let base = srep_apply(s, &args)?;
        for p in 1..s.slots.len() {
            party_dev = party_dev.max(s.apply_via(p, &args)?.max_abs_diff(&base)?);
        }
        let xs: Vec<(Morphism, Morphism)> = args
            .iter()
            .map(|a| (haar_unitary_from(&a.ext_in, &mut r), haar_unitary_from(&a.ext_out, &mut r)))
            .collect();
        let dressed: Vec<Arg> = s
            .slots
            .iter()
            .zip(&args)
            .zip(&xs)
            .map(|((h, a), (x, x2))| dress_arg(h, a, x, x2))
            .collect::<Result<_>>()?;
        let lhs = srep_apply(s, &dressed)?;
        let pre = Morphism::tensor_all(
            std::iter::once(&Morphism::identity(&s.outer.input)).chain(xs.iter().map(|(x, _)| x)),
        );
        let post = Morphism::tensor_all(
            std::iter::once(&Morphism::identity(&s.outer.output)).chain(xs.iter().map(|(_, x2)| x2)),
        );
        let rhs = post.compose(&base.compose(&pre)?)?;
        nat_dev = nat_dev.max(lhs.max_abs_diff(&rhs)?);
    }
    Ok(SrepReport {
        trials,
        seed,
        max_party_deviation: party_dev,
        max_naturality_deviation: nat_dev,
        passed: party_dev <= tol.abs_tol && nat_dev <= tol.abs_tol,
    })
}

/// Independent combs, one per party, on the tensored outer hole
/// `[B₁ ⋯ Bₙ, B₁′ ⋯ Bₙ′]`.
#[derive(Clone, Debug)]
pub struct ProductCombFamily {
    combs: Vec<Comb>,
    slots: Vec<HigherObject>,
    outer: HigherObject,
}

impl ProductCombFamily {
    pub fn new(combs: Vec<Comb>) -> Self {
        let slots = combs.iter().map(|c| c.slot.clone()).collect();
        let outer = HigherObject::tensor_all(combs.iter().map(|c| &c.outer));
        ProductCombFamily { combs, slots, outer }
    }

    pub fn combs(&self) -> &[Comb] {
        &self.combs
    }
}

impl CombFamily for ProductCombFamily {
    fn slots(&self) -> &[HigherObject] {
        &self.slots
    }

    fn outer(&self) -> &HigherObject {
        &self.outer
    }

    fn comb(&self, party: usize, fixed: &[Option<Arg>]) -> Result<Comb> {
        let c = &self.combs[party];
        let n = self.combs.len();
        let others: Vec<usize> = (0..n).filter(|&m| m != party).collect();
        let applied: Vec<Morphism> = others
            .iter()
            .map(|&m| apply_comb(&self.combs[m], fixed[m].as_ref().expect("fixed party")))
            .collect::<Result<_>>()?;
        let arg = |m: usize| fixed[m].as_ref().expect("fixed party");
        let spect = Morphism::tensor_all(&applied);

        // Outer domain blocks: B_1 … B_n, X_m (m ≠ party). Reorder to
        // B_party, (B_m X_m)_{m ≠ party}.
        let mut in_sizes: Vec<usize> = self.combs.iter().map(|c| c.outer.input.len()).collect();
        in_sizes.extend(others.iter().map(|&m| arg(m).ext_in.len()));
        let mut in_order = vec![party];
        for (k, &m) in others.iter().enumerate() {
            in_order.extend([m, n + k]);
        }
        let outer_in = WireType::concat_all(self.combs.iter().map(|c| &c.outer.input))
            .concat(&WireType::concat_all(others.iter().map(|&m| &arg(m).ext_in)));
        let arrange_in = Morphism::identity(&outer_in).reorder_blocks(
            &in_sizes,
            &(0..in_sizes.len()).collect::<Vec<_>>(),
            &in_sizes,
            &in_order,
        )?;
        let pre = c.pre.tensor(&spect).compose(&arrange_in)?;
        let memory = c.memory.concat(spect.cod());

        // Post: A′ M (B_m′ X_m′)_{m≠party} → B_party′ (B_m′ X_m′) → B′_1 … B′_n X′_m.
        let staged = c.post.tensor(&Morphism::identity(spect.cod()));
        let mut out_sizes = vec![c.outer.output.len()];
        for &m in &others {
            out_sizes.extend([self.combs[m].outer.output.len(), arg(m).ext_out.len()]);
        }
        // Current blocks: [B_p′, B_o1′, X_o1′, B_o2′, X_o2′, …].
        let mut out_order = vec![0; n];
        out_order[party] = 0;
        for (k, &m) in others.iter().enumerate() {
            out_order[m] = 1 + 2 * k;
        }
        for k in 0..others.len() {
            out_order.push(2 + 2 * k);
        }
        let post = staged.reorder_blocks(
            &[staged.dom().len()],
            &[0],
            &out_sizes,
            &out_order,
        )?;
        let outer = HigherObject::new(
            outer_in,
            WireType::concat_all(self.combs.iter().map(|c| &c.outer.output))
                .concat(&WireType::concat_all(others.iter().map(|&m| &arg(m).ext_out))),
        );
        Comb::new(c.slot.clone(), outer, memory, pre, post)
    }
}
