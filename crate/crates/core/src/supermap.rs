//! Supermaps given by an internal morphism with pending contractions.
//!
//! An [`InternalSupermap`] with slots `[A₁,A₁′] … [Aₙ,Aₙ′]` and outer hole
//! `[B,B′]` stores a morphism `A₁′ ⋯ Aₙ′ ⊗ B → A₁ ⋯ Aₙ ⊗ B′`. Applying it to
//! processes `φᵢ : Aᵢ ⊗ Xᵢ → Aᵢ′ ⊗ Xᵢ′` connects each `Aᵢ` output of the
//! internal morphism to `φᵢ` and each `Aᵢ′` output of `φᵢ` back into the
//! internal morphism. Extension wires pass straight through; the result is
//! `B ⊗ X₁ ⋯ Xₙ → B′ ⊗ X₁′ ⋯ Xₙ′`.

use serde::{Deserialize, Serialize};

use crate::category::{
    choi_of_kraus, haar_unitary_from, random_kraus, unitarity_defect, CategoryTag,
};
use crate::error::{Error, Result};
use crate::gates;
use crate::rng;
use crate::tensor::{block_permutation, Mat, Morphism, Tolerance, WireType, C64, ONE};

/// An object `[A, A′]` of the polycategory of holes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HigherObject {
    pub input: WireType,
    pub output: WireType,
}

impl HigherObject {
    pub fn new(input: WireType, output: WireType) -> Self {
        HigherObject { input, output }
    }

    /// `[A, A]`.
    pub fn square(a: &WireType) -> Self {
        HigherObject::new(a.clone(), a.clone())
    }

    pub fn unit() -> Self {
        HigherObject::new(WireType::unit(), WireType::unit())
    }

    /// `[A ⊗ C, A′ ⊗ C′]`.
    pub fn tensor(&self, other: &HigherObject) -> HigherObject {
        HigherObject::new(self.input.concat(&other.input), self.output.concat(&other.output))
    }

    pub fn tensor_all<'a>(objs: impl IntoIterator<Item = &'a HigherObject>) -> HigherObject {
        objs.into_iter().fold(HigherObject::unit(), |acc, o| acc.tensor(o))
    }
}

/// A process plugged into a hole, with its extension wires.
#[derive(Clone, Debug, PartialEq)]
pub struct Arg {
    pub phi: Morphism,
    pub ext_in: WireType,
    pub ext_out: WireType,
}

impl Arg {
    pub fn new(phi: Morphism, ext_in: WireType, ext_out: WireType) -> Self {
        Arg { phi, ext_in, ext_out }
    }

    /// A process with trivial extension.
    pub fn plain(phi: Morphism) -> Self {
        Arg { phi, ext_in: WireType::unit(), ext_out: WireType::unit() }
    }

    /// Checks `phi : A ⊗ X → A′ ⊗ X′` for the hole `[A, A′]`.
    pub fn check(&self, hole: &HigherObject, context: &'static str) -> Result<()> {
        let dom = hole.input.concat(&self.ext_in);
        let cod = hole.output.concat(&self.ext_out);
        if self.phi.dom() != &dom {
            return Err(Error::TypeMismatch {
                context,
                expected: dom.factors().to_vec(),
                found: self.phi.dom().factors().to_vec(),
            });
        }
        if self.phi.cod() != &cod {
            return Err(Error::TypeMismatch {
                context,
                expected: cod.factors().to_vec(),
                found: self.phi.cod().factors().to_vec(),
            });
        }
        Ok(())
    }
}

/// A supermap realized by an internal morphism and path contractions.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalSupermap {
    slots: Vec<HigherObject>,
    outer: HigherObject,
    internal: Morphism,
}

impl InternalSupermap {
    pub fn new(slots: Vec<HigherObject>, outer: HigherObject, internal: Morphism) -> Result<Self> {
        let dom = WireType::concat_all(slots.iter().map(|s| &s.output)).concat(&outer.input);
        let cod = WireType::concat_all(slots.iter().map(|s| &s.input)).concat(&outer.output);
        if internal.dom() != &dom {
            return Err(Error::TypeMismatch {
                context: "internal supermap domain",
                expected: dom.factors().to_vec(),
                found: internal.dom().factors().to_vec(),
            });
        }
        if internal.cod() != &cod {
            return Err(Error::TypeMismatch {
                context: "internal supermap codomain",
                expected: cod.factors().to_vec(),
                found: internal.cod().factors().to_vec(),
            });
        }
        Ok(InternalSupermap { slots, outer, internal })
    }

    /// Recovers the internal morphism of a multilinear action from its values
    /// on matrix units with trivial extensions: with `φᵢ = |rᵢ⟩⟨cᵢ|`, entry
    /// `(b′, b)` of the action is entry `((c…, b′), (r…, b))` of the internal
    /// morphism.
    pub fn from_action(
        slots: Vec<HigherObject>,
        outer: HigherObject,
        action: impl Fn(&[Morphism]) -> Result<Morphism>,
    ) -> Result<Self> {
        let dom = WireType::concat_all(slots.iter().map(|s| &s.output)).concat(&outer.input);
        let cod = WireType::concat_all(slots.iter().map(|s| &s.input)).concat(&outer.output);
        let (db, db2) = (outer.input.total(), outer.output.total());
        let mut mat = Mat::zeros(cod.total(), dom.total());
        let n = slots.len();
        let dims: Vec<(usize, usize)> = slots.iter().map(|s| (s.output.total(), s.input.total())).collect();
        let count: usize = dims.iter().map(|&(r, c)| r * c).product();
        for flat in 0..count {
            let mut rem = flat;
            let mut rc = vec![(0, 0); n];
            for i in (0..n).rev() {
                let (dr, dc) = dims[i];
                let k = rem % (dr * dc);
                rem /= dr * dc;
                rc[i] = (k / dc, k % dc);
            }
            let units: Vec<Morphism> = slots
                .iter()
                .zip(&rc)
                .map(|(s, &(r, c))| {
                    let mut m = Mat::zeros(s.output.total(), s.input.total());
                    m[(r, c)] = ONE;
                    Morphism::from_parts(s.input.clone(), s.output.clone(), m)
                })
                .collect();
            let out = action(&units)?;
            if out.dom() != &outer.input || out.cod() != &outer.output {
                return Err(Error::TypeMismatch {
                    context: "from_action result",
                    expected: outer.input.factors().to_vec(),
                    found: out.dom().factors().to_vec(),
                });
            }
            let (mut row0, mut col0) = (0, 0);
            for (i, &(r, c)) in rc.iter().enumerate() {
                row0 = row0 * dims[i].1 + c;
                col0 = col0 * dims[i].0 + r;
            }
            for b2 in 0..db2 {
                for b in 0..db {
                    mat[(row0 * db2 + b2, col0 * db + b)] = out.mat()[(b2, b)];
                }
            }
        }
        InternalSupermap::new(slots, outer, Morphism::new(dom, cod, mat)?)
    }

    pub fn slots(&self) -> &[HigherObject] {
        &self.slots
    }

    pub fn outer(&self) -> &HigherObject {
        &self.outer
    }

    pub fn internal(&self) -> &Morphism {
        &self.internal
    }

    fn slot_factor_counts(&self) -> (usize, usize) {
        let n_in: usize = self.slots.iter().map(|s| s.input.len()).sum();
        let n_out: usize = self.slots.iter().map(|s| s.output.len()).sum();
        (n_in, n_out)
    }

    /// Plugs the given processes into their slots. Slots left as `None` stay
    /// open; the extensions of the plugged processes join the outer hole, so
    /// the result has outer `[B ⊗ Xᵢ…, B′ ⊗ Xᵢ′…]` in slot order.
    pub fn fix_slots(&self, args: &[Option<Arg>]) -> Result<InternalSupermap> {
        if args.len() != self.slots.len() {
            return Err(Error::Invalid(format!(
                "{} arguments for {} slots",
                args.len(),
                self.slots.len()
            )));
        }
        for (slot, arg) in self.slots.iter().zip(args) {
            if let Some(a) = arg {
                a.check(slot, "fix_slots")?;
            }
        }
        let (n_in, n_out) = self.slot_factor_counts();
        let (nb_in, nb_out) = (self.outer.input.len(), self.outer.output.len());

        let mut big = self.internal.clone();
        let mut pairs = Vec::new();
        // Positions of each slot's factors inside the internal morphism.
        let mut slot_in_pos = 0; // in internal codomain (Aᵢ)
        let mut slot_out_pos = 0; // in internal domain (Aᵢ′)
        let mut dom_cursor = n_out + nb_in;
        let mut cod_cursor = n_in + nb_out;
        for (slot, arg) in self.slots.iter().zip(args) {
            let (ai, ao) = (slot.input.len(), slot.output.len());
            if let Some(a) = arg {
                big = big.tensor(&a.phi);
                for k in 0..ai {
                    pairs.push((slot_in_pos + k, dom_cursor + k));
                }
                for k in 0..ao {
                    pairs.push((cod_cursor + k, slot_out_pos + k));
                }
                dom_cursor += ai + a.ext_in.len();
                cod_cursor += ao + a.ext_out.len();
            }
            slot_in_pos += ai;
            slot_out_pos += ao;
        }
        let contracted = big.contract_pairs(&pairs)?;

        let open: Vec<HigherObject> = self
            .slots
            .iter()
            .zip(args)
            .filter(|(_, a)| a.is_none())
            .map(|(s, _)| s.clone())
            .collect();
        let mut outer = self.outer.clone();
        for a in args.iter().flatten() {
            outer = outer.tensor(&HigherObject::new(a.ext_in.clone(), a.ext_out.clone()));
        }
        InternalSupermap::new(open, outer, contracted)
    }

    /// Applies the supermap; the result is `B ⊗ X₁ ⋯ Xₙ → B′ ⊗ X₁′ ⋯ Xₙ′`.
    pub fn apply(&self, args: &[Arg]) -> Result<Morphism> {
        let fixed: Vec<Option<Arg>> = args.iter().cloned().map(Some).collect();
        Ok(self.fix_slots(&fixed)?.internal)
    }

    /// Applies the supermap to one joint process
    /// `A₁ ⋯ Aₙ ⊗ X → A₁′ ⋯ Aₙ′ ⊗ X′` occupying all slots at once.
    pub fn apply_joint(&self, phi: &Morphism, ext_in: &WireType, ext_out: &WireType) -> Result<Morphism> {
        let all = HigherObject::tensor_all(&self.slots);
        Arg::new(phi.clone(), ext_in.clone(), ext_out.clone()).check(&all, "apply_joint")?;
        let (n_in, n_out) = self.slot_factor_counts();
        let (nb_in, nb_out) = (self.outer.input.len(), self.outer.output.len());
        let big = self.internal.tensor(phi);
        let mut pairs = Vec::with_capacity(n_in + n_out);
        for k in 0..n_in {
            pairs.push((k, n_out + nb_in + k));
        }
        for k in 0..n_out {
            pairs.push((n_in + nb_out + k, k));
        }
        big.contract_pairs(&pairs)
    }

    pub fn to_json(&self) -> InternalSupermapJson {
        InternalSupermapJson {
            slots: self.slots.clone(),
            outer: self.outer.clone(),
            internal: self.internal.clone(),
        }
    }
}

/// Wire format of an internal supermap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InternalSupermapJson {
    pub slots: Vec<HigherObject>,
    pub outer: HigherObject,
    pub internal: Morphism,
}

impl TryFrom<InternalSupermapJson> for InternalSupermap {
    type Error = Error;

    fn try_from(j: InternalSupermapJson) -> Result<Self> {
        InternalSupermap::new(j.slots, j.outer, j.internal)
    }
}

impl Serialize for InternalSupermap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for InternalSupermap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        InternalSupermapJson::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// The unit supermap `[A, A′] → [A, A′]`.
pub fn identity_supermap(slot: &HigherObject) -> InternalSupermap {
    let internal = Morphism::braid(&slot.output, &slot.input);
    InternalSupermap::new(vec![slot.clone()], slot.clone(), internal).expect("braid has the unit type")
}

/// Sequential composition `[A,B] [B,C] → [A,C]`, sending `(f, g)` to `g ∘ f`.
pub fn sequential_composition(a: &WireType, b: &WireType, c: &WireType) -> InternalSupermap {
    // Internal domain B ⊗ C ⊗ A, codomain A ⊗ B ⊗ C.
    let dom = b.concat(c).concat(a);
    let perm = block_permutation(&[b.len(), c.len(), a.len()], &[2, 0, 1]);
    let internal = Morphism::identity(&dom).permute_cod(&perm).expect("block permutation");
    InternalSupermap::new(
        vec![HigherObject::new(a.clone(), b.clone()), HigherObject::new(b.clone(), c.clone())],
        HigherObject::new(a.clone(), c.clone()),
        internal,
    )
    .expect("sequential composition is well typed")
}

/// Feeds the hole's output straight back into its input and applies a fixed
/// unitary on the outer wires. Not a supermap on unitaries: it traces the
/// plugged process over the hole.
pub fn loopback_pseudo_supermap(a: &WireType, constant: &Morphism) -> InternalSupermap {
    let internal = Morphism::identity(a).tensor(constant);
    InternalSupermap::new(
        vec![HigherObject::square(a)],
        HigherObject::new(constant.dom().clone(), constant.cod().clone()),
        internal,
    )
    .expect("loopback is well typed")
}

/// The normalized maximally entangled projector `|Ω⟩⟨Ω|/d` on `A ⊗ A`, viewed
/// as a slot-free supermap of type `∅ → [A ⊗ A, A ⊗ A]`.
pub fn pair_state(a: &WireType) -> InternalSupermap {
    let d = a.total() as f64;
    let proj = Morphism::cup(a)
        .compose(&Morphism::cap(a))
        .expect("cup after cap")
        .scale(C64::new(1.0 / d, 0.0));
    let aa = a.concat(a);
    InternalSupermap::new(Vec::new(), HigherObject::square(&aa), proj).expect("pair state is well typed")
}

/// Outcome of trying to close both wires between the pair state and the
/// sequential-composition supermap.
#[derive(Debug)]
pub struct LoopDemo {
    /// The error raised by the composition engine on the second wire.
    pub rejection: Error,
    /// The raw double contraction, computed outside the engine.
    pub raw: Morphism,
    /// `|raw| / |unitary|`: the scalar the loop introduces.
    pub scalar: f64,
    /// Unitarity defect of `raw / scalar`.
    pub residual_defect: f64,
}

/// Composes the pair state into sequential composition along one wire, then
/// attempts the second wire (rejected), and computes what the forbidden
/// double contraction would have produced.
pub fn loop_rejection_demo(seqcomp: &InternalSupermap, pair: &InternalSupermap) -> Result<LoopDemo> {
    use crate::polycat::PolyTerm;

    let s = PolyTerm::from_internal("seqcomp", seqcomp.clone(), vec![seqcomp.outer().clone()])?;
    let outputs: Vec<HigherObject> = seqcomp.slots().to_vec();
    let p = PolyTerm::from_internal("pair", pair.clone(), outputs)?;
    let first = s.compose_along(0, &p, 0)?;
    // `first` has inputs [slot 1 of seqcomp] and outputs [seqcomp's output, pair's second leg].
    let rejection = match first.compose_along(0, &first, 1) {
        Err(e) => e,
        Ok(_) => return Err(Error::Invalid("second wire was accepted".into())),
    };

    let raw = seqcomp.apply_joint(pair.internal(), &WireType::unit(), &WireType::unit())?;
    let dim = raw.dom().total().max(1) as f64;
    let frob: f64 = raw.mat().iter().map(|z| z.norm_sqr()).sum();
    let scalar = (frob / dim).sqrt();
    let residual_defect = if scalar > 0.0 {
        unitarity_defect(&raw.scale(C64::new(1.0 / scalar, 0.0)))
    } else {
        f64::INFINITY
    };
    Ok(LoopDemo { rejection, raw, scalar, residual_defect })
}

/// Extension dimensions used per slot: a fixed dimension, or the total
/// dimension of the slot's output wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtDim {
    Fixed(usize),
    MatchOutput,
}

pub fn default_ext_schedule() -> Vec<ExtDim> {
    vec![ExtDim::Fixed(1), ExtDim::Fixed(2), ExtDim::MatchOutput]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorstCase {
    pub trial: Option<usize>,
    pub label: String,
    pub ext_dims: Vec<usize>,
    pub defect: f64,
    pub inputs: Vec<Morphism>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub category: CategoryTag,
    pub trials: usize,
    pub structured_cases: usize,
    pub seed: u64,
    pub generator: String,
    pub tol: f64,
    pub ext_schedule: Vec<ExtDim>,
    pub max_unitarity_defect: Option<f64>,
    pub max_cptp_defect: Option<f64>,
    pub verdict: Verdict,
    pub worst_case: Option<WorstCase>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn max_defect(&self) -> f64 {
        self.max_unitarity_defect.or(self.max_cptp_defect).unwrap_or(0.0)
    }
}

struct Tracker {
    max: f64,
    worst: Option<WorstCase>,
}

impl Tracker {
    fn record(&mut self, defect: f64, make: impl FnOnce() -> WorstCase) {
        if defect > self.max || self.worst.is_none() {
            self.max = self.max.max(defect);
            let mut w = make();
            w.defect = defect;
            self.worst = Some(w);
        }
    }
}

/// The extension pair for a hole at a given schedule entry, when one exists
/// that keeps `A ⊗ X` and `A′ ⊗ X′` the same total dimension.
fn unitary_extension(hole: &HigherObject, e: ExtDim) -> Option<(WireType, WireType)> {
    let d = match e {
        ExtDim::Fixed(d) => d,
        ExtDim::MatchOutput => hole.output.total(),
    };
    let (da, da2) = (hole.input.total(), hole.output.total());
    if (da * d) % da2 != 0 {
        return None;
    }
    let d2 = da * d / da2;
    let w = |k: usize| if k == 1 { WireType::unit() } else { WireType::qudit(k) };
    Some((w(d), w(d2)))
}

fn channel_extension(hole: &HigherObject, e: ExtDim) -> (WireType, WireType) {
    let d = match e {
        ExtDim::Fixed(d) => d,
        ExtDim::MatchOutput => hole.output.total(),
    };
    let w = if d == 1 { WireType::unit() } else { WireType::qudit(d) };
    (w.clone(), w)
}

/// Structured unitaries on `A ⊗ X → A′ ⊗ X′`: identity-like, swaps,
/// controlled gates and products of local unitaries.
pub(crate) fn structured_unitaries(
    hole: &HigherObject,
    x: &WireType,
    x2: &WireType,
    seed: u64,
) -> Vec<(String, Morphism)> {
    let dom = hole.input.concat(x);
    let cod = hole.output.concat(x2);
    let mut out = Vec::new();
    let mut r = rng::stream(seed, 0xBA77);
    if dom == cod {
        out.push(("identity".to_string(), Morphism::identity(&dom)));
    }
    if hole.input == *x2 && hole.output == *x {
        out.push(("swap".to_string(), Morphism::braid(&hole.input, x)));
        let u = haar_unitary_from(&hole.input, &mut r);
        let v = haar_unitary_from(x, &mut r);
        let dressed = Morphism::braid(&hole.input, x).compose(&u.tensor(&v)).expect("types");
        out.push(("dressed swap".to_string(), dressed));
    }
    if hole.input == hole.output && x == x2 {
        let ua = haar_unitary_from(&hole.input, &mut r);
        let ux = haar_unitary_from(x, &mut r);
        out.push(("local product".to_string(), ua.tensor(&ux)));
        if x.total() >= 2 && hole.input.total() >= 2 {
            // Control on the first extension level, target on the hole.
            let u = haar_unitary_from(&hole.input, &mut r);
            let dx = x.total();
            let mut p0 = Mat::zeros(dx, dx);
            p0[(0, 0)] = ONE;
            let p1 = Mat::identity(dx, dx) - &p0;
            let mat = Morphism::identity(&hole.input).mat().kronecker(&p0) + u.mat().kronecker(&p1);
            out.push((
                "controlled (extension controls hole)".to_string(),
                Morphism::from_parts(dom.clone(), cod.clone(), mat),
            ));
            let mut q0 = Mat::zeros(hole.input.total(), hole.input.total());
            q0[(0, 0)] = ONE;
            let q1 = Mat::identity(hole.input.total(), hole.input.total()) - &q0;
            let w = haar_unitary_from(x, &mut r);
            let mat = q0.kronecker(&Mat::identity(dx, dx)) + q1.kronecker(w.mat());
            out.push((
                "controlled (hole controls extension)".to_string(),
                Morphism::from_parts(dom.clone(), cod.clone(), mat),
            ));
        }
    }
    if hole.input.total() == 2 && hole.output.total() == 2 && x.is_unit() && x2.is_unit() {
        out.push(("hadamard".to_string(), gates::hadamard().retype(hole.input.clone(), hole.output.clone()).expect("2x2")));
    }
    out
}

/// Probabilistic and structured check that a supermap maps members of `cat`
/// to members of `cat`.
///
/// `FU` samples Haar unitaries per slot and extension dimension and runs a
/// structured battery. `FQC` samples random channels (random Stinespring
/// isometries) and, where the size budget allows, runs the exact linear
/// certificate of [`fqc_certificate`]. `FHilb` membership is automatic.
pub fn verify(
    s: &InternalSupermap,
    cat: CategoryTag,
    n_trials: usize,
    ext_schedule: &[ExtDim],
    seed: u64,
    tol: Tolerance,
) -> VerificationReport {
    let mut tracker = Tracker { max: 0.0, worst: None };
    let mut notes = Vec::new();
    let mut structured = 0;
    let mut trials_run = 0;
    match cat {
        CategoryTag::FHilb => {
            notes.push("every linear map is a morphism of FHilb; nothing to check".into());
        }
        CategoryTag::FU => {
            for (ei, &e) in ext_schedule.iter().enumerate() {
                let exts: Option<Vec<(WireType, WireType)>> =
                    s.slots.iter().map(|h| unitary_extension(h, e)).collect();
                let Some(exts) = exts else {
                    notes.push(format!("extension {e:?} skipped: no unitary of that shape"));
                    continue;
                };
                let ext_dims: Vec<usize> = exts.iter().map(|(x, _)| x.total()).collect();
                for t in 0..n_trials {
                    let mut r = rng::stream(seed, (ei as u64) << 32 | t as u64);
                    let args: Vec<Arg> = s
                        .slots
                        .iter()
                        .zip(&exts)
                        .map(|(h, (x, x2))| {
                            let u = haar_unitary_from(&h.input.concat(x), &mut r);
                            Arg::new(
                                u.retype(h.input.concat(x), h.output.concat(x2)).expect("same total"),
                                x.clone(),
                                x2.clone(),
                            )
                        })
                        .collect();
                    trials_run += 1;
                    let defect = match s.apply(&args) {
                        Ok(out) => unitarity_defect(&out),
                        Err(_) => f64::INFINITY,
                    };
                    tracker.record(defect, || WorstCase {
                        trial: Some(t),
                        label: "haar".into(),
                        ext_dims: ext_dims.clone(),
                        defect,
                        inputs: args.iter().map(|a| a.phi.clone()).collect(),
                    });
                }
                let batteries: Vec<Vec<(String, Morphism)>> = s
                    .slots
                    .iter()
                    .zip(&exts)
                    .enumerate()
                    .map(|(i, (h, (x, x2)))| structured_unitaries(h, x, x2, rng::child_seed(seed, i as u64)))
                    .collect();
                let rounds = batteries.iter().map(|b| b.len()).max().unwrap_or(0);
                if batteries.iter().any(|b| b.is_empty()) {
                    continue;
                }
                for k in 0..rounds {
                    let picks: Vec<&(String, Morphism)> =
                        batteries.iter().map(|b| &b[k % b.len()]).collect();
                    let args: Vec<Arg> = picks
                        .iter()
                        .zip(&exts)
                        .map(|((_, m), (x, x2))| Arg::new(m.clone(), x.clone(), x2.clone()))
                        .collect();
                    structured += 1;
                    let defect = match s.apply(&args) {
                        Ok(out) => unitarity_defect(&out),
                        Err(_) => f64::INFINITY,
                    };
                    let label = picks.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(" | ");
                    tracker.record(defect, || WorstCase {
                        trial: None,
                        label,
                        ext_dims: ext_dims.clone(),
                        defect,
                        inputs: args.iter().map(|a| a.phi.clone()).collect(),
                    });
                }
            }
            notes.push(
                "unitary preservation is battery-certified on the listed extension dimensions only".into(),
            );
        }
        CategoryTag::FQC => {
            for (ei, &e) in ext_schedule.iter().enumerate() {
                let exts: Vec<(WireType, WireType)> =
                    s.slots.iter().map(|h| channel_extension(h, e)).collect();
                let ext_dims: Vec<usize> = exts.iter().map(|(x, _)| x.total()).collect();
                for t in 0..n_trials {
                    let mut r = rng::stream(seed, (ei as u64) << 32 | t as u64);
                    let kraus: Vec<Vec<Morphism>> = s
                        .slots
                        .iter()
                        .zip(&exts)
                        .map(|(h, (x, x2))| {
                            random_kraus(&h.input.concat(x), &h.output.concat(x2), 2, &mut r).expect("kraus")
                        })
                        .collect();
                    trials_run += 1;
                    let defect = channel_defect(s, &kraus, &exts).unwrap_or(f64::INFINITY);
                    tracker.record(defect, || WorstCase {
                        trial: Some(t),
                        label: "random stinespring".into(),
                        ext_dims: ext_dims.clone(),
                        defect,
                        inputs: kraus.iter().flatten().cloned().collect(),
                    });
                }
                match fqc_certificate(s, &exts, FQC_CERTIFICATE_BUDGET) {
                    Ok(Some(cert)) => {
                        structured += cert.points;
                        tracker.record(cert.max_defect, || WorstCase {
                            trial: None,
                            label: "linear certificate".into(),
                            ext_dims: ext_dims.clone(),
                            defect: cert.max_defect,
                            inputs: Vec::new(),
                        });
                    }
                    Ok(None) => notes.push(format!(
                        "linear certificate skipped for extension dims {ext_dims:?} (over budget)"
                    )),
                    Err(err) => notes.push(format!("linear certificate failed: {err}")),
                }
            }
        }
    }
    let max = tracker.max;
    let verdict = if max <= tol.abs_tol { Verdict::Pass } else { Verdict::Fail };
    VerificationReport {
        category: cat,
        trials: trials_run,
        structured_cases: structured,
        seed,
        generator: rng::GENERATOR.into(),
        tol: tol.abs_tol,
        ext_schedule: ext_schedule.to_vec(),
        max_unitarity_defect: (cat == CategoryTag::FU).then_some(max),
        max_cptp_defect: (cat != CategoryTag::FU).then_some(max),
        verdict,
        worst_case: tracker.worst,
        notes,
    }
}

/// CPTP defect of the supermap applied to channels given by Kraus lists.
/// A pure supermap acts on each tuple of Kraus operators.
pub fn channel_defect(
    s: &InternalSupermap,
    kraus: &[Vec<Morphism>],
    exts: &[(WireType, WireType)],
) -> Result<f64> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; kraus.len()];
    loop {
        let args: Vec<Arg> = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| Arg::new(kraus[i][k].clone(), exts[i].0.clone(), exts[i].1.clone()))
            .collect();
        out.push(s.apply(&args)?);
        let mut p = 0;
        loop {
            if p == idx.len() {
                return Ok(choi_of_kraus(&out)?.cptp_defect());
            }
            idx[p] += 1;
            if idx[p] < kraus[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

const FQC_CERTIFICATE_BUDGET: usize = 4096;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub points: usize,
    pub max_defect: f64,
}

/// One basis element of a slot's Choi space, as sparse entries
/// `((p, a), (q, b), coefficient)` of `Σ |p⟩⟨q| ⊗ |a⟩⟨b|`.
type Sparse = Vec<((usize, usize), (usize, usize), f64)>;

fn choi_affine_basis(n_in: usize, n_out: usize) -> (Sparse, Vec<Sparse>) {
    let j0: Sparse = (0..n_in)
        .flat_map(|p| (0..n_out).map(move |a| ((p, a), (p, a), 1.0 / n_out as f64)))
        .collect();
    let mut deltas = Vec::new();
    for p in 0..n_in {
        for q in 0..n_in {
            for a in 0..n_out {
                for b in 0..n_out {
                    if a != b {
                        deltas.push(vec![((p, a), (q, b), 1.0)]);
                    }
                }
                if a >= 1 {
                    deltas.push(vec![((p, a), (q, a), 1.0), ((p, 0), (q, 0), -1.0)]);
                }
            }
        }
    }
    (j0, deltas)
}

/// Exact check that trace preservation survives the supermap for every
/// tuple of channels with the given extensions.
///
/// Trace preservation of the output is multi-affine in the input Choi
/// matrices, so it suffices to check the product of the completely
/// depolarizing point with a basis of trace-preserving directions in each
/// slot. Complete positivity is automatic for a supermap with a single
/// internal morphism. Returns `None` when the number of points exceeds
/// `budget`.
pub fn fqc_certificate(
    s: &InternalSupermap,
    exts: &[(WireType, WireType)],
    budget: usize,
) -> Result<Option<Certificate>> {
    let dims: Vec<(usize, usize)> = s
        .slots
        .iter()
        .zip(exts)
        .map(|(h, (x, x2))| (h.input.total() * x.total(), h.output.total() * x2.total()))
        .collect();
    let bases: Vec<(Sparse, Vec<Sparse>)> = dims.iter().map(|&(i, o)| choi_affine_basis(i, o)).collect();
    let points: usize = bases.iter().map(|(_, d)| d.len() + 1).product();
    let units: usize = dims.iter().map(|&(i, o)| i * o).product();
    if points > budget || units > budget {
        return Ok(None);
    }
    // Supermap evaluated on each tuple of matrix units |a⟩⟨p| (with extensions
    // folded into the slot wires).
    let widened: Vec<HigherObject> = s
        .slots
        .iter()
        .zip(exts)
        .map(|(h, (x, x2))| HigherObject::new(h.input.concat(x), h.output.concat(x2)))
        .collect();
    let wide = InternalSupermap {
        slots: widened,
        outer: s.outer.clone(),
        internal: s.internal.clone(),
    };
    let strides: Vec<usize> = {
        let mut st = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            st[k] = st[k + 1] * dims[k + 1].0 * dims[k + 1].1;
        }
        st
    };
    let mut table = Vec::with_capacity(units);
    for flat in 0..units {
        let tuple: Vec<(usize, usize)> = dims
            .iter()
            .zip(&strides)
            .map(|(&(ni, no), &st)| {
                let k = (flat / st) % (ni * no);
                (k / ni, k % ni)
            })
            .collect();
        table.push(wide_apply_units(&wide, s, exts, &tuple)?);
    }
    let key = |tuple: &[(usize, usize)]| -> usize {
        tuple
            .iter()
            .zip(&dims)
            .zip(&strides)
            .map(|((&(a, p), &(ni, _)), &st)| (a * ni + p) * st)
            .sum()
    };

    let out_dim = table[0].dom().total();
    let identity = Mat::identity(out_dim, out_dim);
    let mut max_defect: f64 = 0.0;
    let mut choice = vec![0usize; bases.len()];
    let mut count = 0;
    loop {
        count += 1;
        let elems: Vec<&Sparse> = choice
            .iter()
            .zip(&bases)
            .map(|(&c, (j0, d))| if c == 0 { j0 } else { &d[c - 1] })
            .collect();
        let mut acc = Mat::zeros(out_dim, out_dim);
        let mut entry = vec![0usize; elems.len()];
        'terms: loop {
            let mut coef = 1.0;
            let mut left = Vec::with_capacity(elems.len());
            let mut right = Vec::with_capacity(elems.len());
            for (e, &k) in elems.iter().zip(&entry) {
                let ((p, a), (q, b), c) = e[k];
                coef *= c;
                left.push((b, q));
                right.push((a, p));
            }
            let l = table[key(&left)].mat();
            let r = table[key(&right)].mat();
            acc += l.adjoint() * r * C64::new(coef, 0.0);
            let mut pos = 0;
            loop {
                if pos == entry.len() {
                    break 'terms;
                }
                entry[pos] += 1;
                if entry[pos] < elems[pos].len() {
                    break;
                }
                entry[pos] = 0;
                pos += 1;
            }
        }
        let target = if choice.iter().all(|&c| c == 0) { &identity } else { &Mat::zeros(out_dim, out_dim) };
        let defect = (&acc - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
        max_defect = max_defect.max(defect);

        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok(Some(Certificate { points: count, max_defect }));
            }
            choice[pos] += 1;
            if choice[pos] <= bases[pos].1.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

fn wide_apply_units(
    wide: &InternalSupermap,
    s: &InternalSupermap,
    exts: &[(WireType, WireType)],
    tuple: &[(usize, usize)],
) -> Result<Morphism> {
    let args: Vec<Arg> = wide
        .slots
        .iter()
        .zip(s.slots.iter().zip(exts))
        .zip(tuple)
        .map(|((w, (h, (x, x2))), &(a, p))| {
            let mut m = Mat::zeros(w.output.total(), w.input.total());
            m[(a, p)] = ONE;
            Arg::new(
                Morphism::from_parts(h.input.concat(x), h.output.concat(x2), m),
                x.clone(),
                x2.clone(),
            )
        })
        .collect();
    s.apply(&args)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::haar_unitary;
    use crate::rng;

    fn q() -> WireType {
        WireType::qudit(2)
    }

    #[test]
    fn identity_supermap_returns_input() {
        let id = identity_supermap(&HigherObject::square(&q()));
        let u = haar_unitary(&q(), 1);
        assert!(id.apply(&[Arg::plain(u.clone())]).unwrap().approx_eq(&u, Tolerance::DEFAULT).unwrap());
        let phi = haar_unitary(&WireType::new(vec![2, 3]), 2);
        let out = id.apply(&[Arg::new(phi.clone(), WireType::qudit(3), WireType::qudit(3))]).unwrap();
        assert!(out.approx_eq(&phi, Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn sequential_composition_composes() {
        let (a, b, c) = (q(), WireType::qudit(3), q());
        let s = sequential_composition(&a, &b, &c);
        let mut r = rng::stream(3, 0);
        let f = Morphism::new(a.clone(), b.clone(), crate::category::ginibre(3, 2, &mut r)).unwrap();
        let g = Morphism::new(b.clone(), c.clone(), crate::category::ginibre(2, 3, &mut r)).unwrap();
        let out = s.apply(&[Arg::plain(f.clone()), Arg::plain(g.clone())]).unwrap();
        assert!(out.approx_eq(&g.compose(&f).unwrap(), Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn apply_rejects_bad_types() {
        let s = identity_supermap(&HigherObject::square(&q()));
        let bad = Arg::plain(Morphism::identity(&WireType::qudit(3)));
        assert!(matches!(s.apply(&[bad]), Err(Error::TypeMismatch { .. })));
        assert!(s.apply(&[]).is_err());
    }

    #[test]
    fn fix_slots_then_apply_matches_apply() {
        let s = sequential_composition(&q(), &q(), &q());
        let f = haar_unitary(&WireType::new(vec![2, 2]), 5);
        let g = haar_unitary(&q(), 6);
        let fa = Arg::new(f.clone(), q(), q());
        let partial = s.fix_slots(&[Some(fa.clone()), None]).unwrap();
        assert_eq!(partial.slots().len(), 1);
        assert_eq!(partial.outer().input, WireType::new(vec![2, 2]));
        let via_partial = partial.apply(&[Arg::plain(g.clone())]).unwrap();
        let direct = s.apply(&[fa, Arg::plain(g)]).unwrap();
        assert!(via_partial.approx_eq(&direct, Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn loopback_traces_the_hole() {
        let c = gates::hadamard();
        let s = loopback_pseudo_supermap(&q(), &c);
        let u = haar_unitary(&q(), 2);
        let out = s.apply(&[Arg::plain(u.clone())]).unwrap();
        let expect = c.scale(u.trace().unwrap());
        assert!(out.approx_eq(&expect, Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn verify_identity_and_loopback() {
        let tol = Tolerance::DEFAULT;
        let id = identity_supermap(&HigherObject::square(&q()));
        let rep = verify(&id, CategoryTag::FU, 10, &default_ext_schedule(), 1, tol);
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.max_defect() <= 1e-10);
        let rep = verify(&id, CategoryTag::FQC, 5, &default_ext_schedule(), 1, tol);
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.structured_cases > 0);

        let lb = loopback_pseudo_supermap(&q(), &gates::hadamard());
        let rep = verify(&lb, CategoryTag::FU, 10, &[ExtDim::Fixed(2)], 1, tol);
        assert!(!rep.passed());
        assert!(rep.max_defect() >= 0.1);
        let rep = verify(&lb, CategoryTag::FQC, 5, &[ExtDim::Fixed(1)], 1, tol);
        assert!(!rep.passed());
    }

    #[test]
    fn fqc_certificate_catches_trace_decrease() {
        // Projecting the hole output onto |0⟩ before looping it back is not
        // trace preserving on channels.
        let p0 = gates::projector(2, 0);
        let internal = p0.tensor(&Morphism::identity(&q()));
        let s = InternalSupermap::new(vec![HigherObject::square(&q())], HigherObject::square(&q()), internal).unwrap();
        let exts = vec![(WireType::unit(), WireType::unit())];
        let cert = fqc_certificate(&s, &exts, 10_000).unwrap().unwrap();
        assert!(cert.max_defect > 0.1);
        let id = identity_supermap(&HigherObject::square(&q()));
        let cert = fqc_certificate(&id, &exts, 10_000).unwrap().unwrap();
        assert!(cert.max_defect < 1e-12);
        assert_eq!(cert.points, 13);
    }

    #[test]
    fn seqcomp_channel_certificate_two_slots() {
        let s = sequential_composition(&q(), &q(), &q());
        let exts = vec![(WireType::unit(), WireType::unit()); 2];
        let cert = fqc_certificate(&s, &exts, 10_000).unwrap().unwrap();
        assert_eq!(cert.points, 169);
        assert!(cert.max_defect < 1e-12);
    }

    #[test]
    fn loop_demo_scalar() {
        for d in [2usize, 3] {
            let a = WireType::qudit(d);
            let demo = loop_rejection_demo(&sequential_composition(&a, &a, &a), &pair_state(&a)).unwrap();
            assert!(matches!(demo.rejection, Error::AlreadyConnected { .. }));
            assert!((demo.scalar - 1.0 / d as f64).abs() < 1e-12);
            assert!(demo.residual_defect < 1e-10);
        }
        let u = WireType::unit();
        let demo = loop_rejection_demo(&sequential_composition(&u, &u, &u), &pair_state(&u)).unwrap();
        assert!((demo.scalar - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_action_recovers_internal() {
        let s = sequential_composition(&q(), &WireType::qudit(3), &q());
        let rebuilt = InternalSupermap::from_action(s.slots().to_vec(), s.outer().clone(), |phis| {
            s.apply(&phis.iter().cloned().map(Arg::plain).collect::<Vec<_>>())
        })
        .unwrap();
        assert!(rebuilt.internal().approx_eq(s.internal(), Tolerance::DEFAULT).unwrap());
        let id = identity_supermap(&HigherObject::new(q(), WireType::qudit(3)));
        let rebuilt = InternalSupermap::from_action(id.slots().to_vec(), id.outer().clone(), |p| Ok(p[0].clone())).unwrap();
        assert_eq!(rebuilt, id);
    }
}
