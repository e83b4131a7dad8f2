//! Locally-applicable transformations as black-box function families.
//!
//! A [`Lat`] of type `[A, A′] → [B, B′]` maps every `φ : A ⊗ X → A′ ⊗ X′`
//! to a morphism `B ⊗ X → B′ ⊗ X′`, for every extension `X`, `X′`.
//! Naturality in the extension is a property to be tested, not a
//! structural guarantee.
//!
//! [`s_loop`] and [`s_v`] branch on the signalling structure of their input.
//! Both are natural, yet they fail to commute when applied to the two halves
//! of a swap, so neither is a slot.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::category::{haar_unitary_from, unitarity_defect};
use crate::comb::{apply_comb, Comb};
use crate::error::{Error, Result};
use crate::gates;
use crate::pathing::{check_no_path_unitary, PathConstraint};
use crate::rng;
use crate::supermap::{Arg, HigherObject, InternalSupermap};
use crate::tensor::{Morphism, Tolerance, WireType};

pub type EvalFn = dyn Fn(&WireType, &WireType, &Morphism) -> Result<Morphism> + Send + Sync;

#[derive(Clone)]
pub struct Lat {
    slot: HigherObject,
    outer: HigherObject,
    eval: Arc<EvalFn>,
    name: String,
}

impl fmt::Debug for Lat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lat")
            .field("name", &self.name)
            .field("slot", &self.slot)
            .field("outer", &self.outer)
            .finish()
    }
}

impl Lat {
    pub fn new(
        name: impl Into<String>,
        slot: HigherObject,
        outer: HigherObject,
        eval: impl Fn(&WireType, &WireType, &Morphism) -> Result<Morphism> + Send + Sync + 'static,
    ) -> Self {
        Lat { slot, outer, eval: Arc::new(eval), name: name.into() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slot(&self) -> &HigherObject {
        &self.slot
    }

    pub fn outer(&self) -> &HigherObject {
        &self.outer
    }

    /// Type-checked evaluation.
    pub fn apply(&self, arg: &Arg) -> Result<Morphism> {
        arg.check(&self.slot, "lat input")?;
        let out = (self.eval)(&arg.ext_in, &arg.ext_out, &arg.phi)?;
        let (dom, cod) = (self.outer.input.concat(&arg.ext_in), self.outer.output.concat(&arg.ext_out));
        if out.dom() != &dom || out.cod() != &cod {
            return Err(Error::TypeMismatch {
                context: "lat output",
                expected: dom.concat(&cod).factors().to_vec(),
                found: out.dom().concat(out.cod()).factors().to_vec(),
            });
        }
        Ok(out)
    }
}

pub fn lat_from_comb(c: &Comb) -> Lat {
    let comb = c.clone();
    Lat::new("comb", c.slot().clone(), c.outer().clone(), move |x, x2, phi| {
        apply_comb(&comb, &Arg::new(phi.clone(), x.clone(), x2.clone()))
    })
}

pub fn lat_from_internal(s: &InternalSupermap) -> Result<Lat> {
    let [slot] = s.slots() else {
        return Err(Error::Invalid(format!("a lat needs one slot, found {}", s.slots().len())));
    };
    let sup = s.clone();
    Ok(Lat::new("internal", slot.clone(), s.outer().clone(), move |x, x2, phi| {
        sup.apply(&[Arg::new(phi.clone(), x.clone(), x2.clone())])
    }))
}

/// The identity transformation on `[A, A′]`.
pub fn identity_lat(slot: &HigherObject) -> Lat {
    Lat::new("identity", slot.clone(), slot.clone(), |_, _, phi| Ok(phi.clone()))
}

/// No path from the hole input `A` to the hole output `A`.
fn hole_constraint(a: &WireType) -> PathConstraint {
    let n = a.len();
    PathConstraint::forbid((0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>())
}

fn require_unitary(phi: &Morphism, tol: Tolerance) -> Result<()> {
    let defect = unitarity_defect(phi);
    if defect > tol.scaled(phi.dom().total()) {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

/// `S^loop` on `[A, A]`: when `φ` has no path from `A` to `A`, feeds the
/// hole output back into the hole input and returns `id_A ⊗ (X → X′)`;
/// otherwise returns `φ`.
pub fn s_loop(a: &WireType) -> Lat {
    s_loop_with(a, Tolerance::DEFAULT)
}

pub fn s_loop_with(a: &WireType, tol: Tolerance) -> Lat {
    let a = a.clone();
    let hole = HigherObject::square(&a);
    Lat::new("s_loop", hole.clone(), hole, move |_, _, phi| {
        require_unitary(phi, tol)?;
        if !check_no_path_unitary(phi, &hole_constraint(&a), tol)? {
            return Ok(phi.clone());
        }
        let pairs: Vec<(usize, usize)> = (0..a.len()).map(|k| (k, k)).collect();
        Ok(Morphism::identity(&a).tensor(&phi.contract_pairs(&pairs)?))
    })
}

/// `S^V` on `[A, A]`: when `φ` has no path from `A` to `A`, returns
/// `(w ⊗ id) ∘ φ ∘ (v ⊗ id)`; otherwise returns `φ`.
pub fn s_v(a: &WireType, v: &Morphism, w: &Morphism) -> Result<Lat> {
    s_v_with(a, v, w, Tolerance::DEFAULT)
}

pub fn s_v_with(a: &WireType, v: &Morphism, w: &Morphism, tol: Tolerance) -> Result<Lat> {
    for u in [v, w] {
        if u.dom() != a || u.cod() != a {
            return Err(Error::TypeMismatch {
                context: "s_v dressing",
                expected: a.factors().to_vec(),
                found: u.dom().factors().to_vec(),
            });
        }
        require_unitary(u, tol)?;
    }
    let (a, v, w) = (a.clone(), v.clone(), w.clone());
    let hole = HigherObject::square(&a);
    Ok(Lat::new("s_v", hole.clone(), hole, move |_, _, phi| {
        require_unitary(phi, tol)?;
        let c = hole_constraint(&a);
        if !check_no_path_unitary(phi, &c, tol)? {
            return Ok(phi.clone());
        }
        phi.precompose_on(&c.source, &v)?.postcompose_on(&c.target, &w)
    }))
}

/// A transformation that is not natural: it flips the hole output by `Z`
/// (or `shift` for qudits) depending on the phase of one matrix entry,
/// which local dressing of the extension changes.
pub fn broken_lat(a: &WireType) -> Lat {
    let a2 = a.clone();
    let hole = HigherObject::square(a);
    Lat::new("broken", hole.clone(), hole, move |_, _, phi| {
        if phi.entry(0, 0).re >= 0.0 {
            return Ok(phi.clone());
        }
        let flip = if a2.total() == 2 { gates::pauli_z() } else { gates::shift(a2.total()) };
        let flip = flip.retype(a2.clone(), a2.clone())?;
        let idx: Vec<usize> = (0..a2.len()).collect();
        phi.postcompose_on(&idx, &flip)
    })
}

/// Unitary `φ : A ⊗ X → A′ ⊗ X′` with no path from `A` to `A′`, as a random
/// staircase through a qubit memory. `X = A′ ⊗ [2]`, `X′ = [2] ⊗ A`.
pub fn random_no_path_arg(hole: &HigherObject, r: &mut rng::Rng) -> Result<Arg> {
    let m = WireType::qudit(2);
    let x = hole.output.concat(&m);
    let x2 = m.concat(&hole.input);
    let f = haar_unitary_from(&x, r).retype(x.clone(), hole.output.concat(&m))?;
    let g = haar_unitary_from(&x2, r).retype(m.concat(&hole.input), x2.clone())?;
    let staged = Morphism::identity(&hole.output)
        .tensor(&g)
        .compose(&f.tensor(&Morphism::identity(&hole.input)))?;
    let (nx, na) = (x.len(), hole.input.len());
    let (na2, nx2) = (hole.output.len(), x2.len());
    let phi = staged.reorder_blocks(&[nx, na], &[1, 0], &[na2, nx2], &[0, 1])?;
    Ok(Arg::new(phi, x, x2))
}

/// Haar unitary on `A ⊗ X` with `X = [2]` when the hole is square, or the
/// smallest extension that makes the shapes agree.
fn haar_unitary_arg(hole: &HigherObject, r: &mut rng::Rng) -> Result<Arg> {
    Ok(crate::comb::haar_arg(hole, r))
}

/// Permutations of `A ⊗ X` (identity and swap when the types allow) dressed
/// by local unitaries on every factor.
fn dressed_permutation_arg(hole: &HigherObject, r: &mut rng::Rng, swap: bool) -> Result<Option<Arg>> {
    let (a, a2) = (&hole.input, &hole.output);
    let (x, x2) = if swap { (a2.clone(), a.clone()) } else if a == a2 { (WireType::qudit(2), WireType::qudit(2)) } else { return Ok(None) };
    let core = if swap {
        Morphism::braid(a, &x)
    } else {
        Morphism::identity(&a.concat(&x))
    };
    let pre = haar_unitary_from(a, r).tensor(&haar_unitary_from(&x, r));
    let post = haar_unitary_from(a2, r).tensor(&haar_unitary_from(&x2, r));
    let phi = post.compose(&core.compose(&pre)?)?;
    Ok(Some(Arg::new(phi, x, x2)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NaturalityReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_deviation: f64,
    pub passed: bool,
    pub worst_case: Option<String>,
}

/// The input battery for LAT checks: generic Haar unitaries, random
/// no-path staircases, and dressed identities and swaps, in rotation.
pub fn lat_battery(hole: &HigherObject, seed: u64, trials: usize) -> Result<Vec<(String, Arg)>> {
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut r = rng::stream(seed, t as u64);
        let item = match t % 4 {
            0 => Some(("haar".to_string(), haar_unitary_arg(hole, &mut r)?)),
            1 => Some(("staircase".to_string(), random_no_path_arg(hole, &mut r)?)),
            2 => dressed_permutation_arg(hole, &mut r, true)?.map(|a| ("dressed swap".to_string(), a)),
            _ => dressed_permutation_arg(hole, &mut r, false)?.map(|a| ("dressed identity".to_string(), a)),
        };
        let item = match item {
            Some(i) => i,
            None => ("haar".to_string(), haar_unitary_arg(hole, &mut r)?),
        };
        out.push(item);
    }
    Ok(out)
}

/// Samples inputs and local unitaries `x`, `x′` on the extension and
/// compares `eval((id ⊗ x′) φ (id ⊗ x))` with `(id ⊗ x′) eval(φ) (id ⊗ x)`.
pub fn check_naturality(t: &Lat, seed: u64, trials: usize, tol: Tolerance) -> Result<NaturalityReport> {
    let mut worst: f64 = 0.0;
    let mut worst_case = None;
    for (k, (label, arg)) in lat_battery(&t.slot, seed, trials)?.into_iter().enumerate() {
        let mut r = rng::stream(rng::child_seed(seed, 1), k as u64);
        let x = haar_unitary_from(&arg.ext_in, &mut r);
        let x2 = haar_unitary_from(&arg.ext_out, &mut r);
        let dressed = crate::comb::dress_arg(&t.slot, &arg, &x, &x2)?;
        let lhs = t.apply(&dressed)?;
        let base = t.apply(&arg)?;
        let rhs = Morphism::identity(&t.outer.output)
            .tensor(&x2)
            .compose(&base.compose(&Morphism::identity(&t.outer.input).tensor(&x))?)?;
        let dev = lhs.max_abs_diff(&rhs)?;
        if dev > worst || worst_case.is_none() {
            worst = worst.max(dev);
            worst_case = Some(format!("trial {k} ({label})"));
        }
    }
    Ok(NaturalityReport {
        name: t.name.clone(),
        trials,
        seed,
        tol: tol.abs_tol,
        max_deviation: worst,
        passed: worst <= tol.abs_tol,
        worst_case,
    })
}

/// `s` on the first hole of a bipartite process `A_s ⊗ A_t ⊗ X`.
fn apply_first(s: &Lat, phi: &Morphism, rest_in: &WireType, rest_out: &WireType) -> Result<Morphism> {
    s.apply(&Arg::new(phi.clone(), rest_in.clone(), rest_out.clone()))
}

/// `t` on the second hole: braid `A_t` to the front, apply, braid back.
fn apply_second(
    t: &Lat,
    phi: &Morphism,
    first_in: &WireType,
    first_out: &WireType,
    x: &WireType,
    x2: &WireType,
) -> Result<Morphism> {
    let (nf, nt, nx) = (first_in.len(), t.slot.input.len(), x.len());
    let (nf2, nt2, nx2) = (first_out.len(), t.slot.output.len(), x2.len());
    let front = phi.reorder_blocks(&[nf, nt, nx], &[1, 0, 2], &[nf2, nt2, nx2], &[1, 0, 2])?;
    let out = t.apply(&Arg::new(front, first_in.concat(x), first_out.concat(x2)))?;
    let (nb, nb2) = (t.outer.input.len(), t.outer.output.len());
    out.reorder_blocks(&[nb, nf, nx], &[1, 0, 2], &[nb2, nf2, nx2], &[1, 0, 2])
}

/// `(s then t, t then s)` on `φ : A_s ⊗ A_t ⊗ X → A_s′ ⊗ A_t′ ⊗ X′`.
pub fn both_orders(s: &Lat, t: &Lat, phi: &Morphism, x: &WireType, x2: &WireType) -> Result<(Morphism, Morphism)> {
    let s_first = apply_first(s, phi, &t.slot.input.concat(x), &t.slot.output.concat(x2))?;
    let s_then_t = apply_second(t, &s_first, &s.outer.input, &s.outer.output, x, x2)?;
    let t_first = apply_second(t, phi, &s.slot.input, &s.slot.output, x, x2)?;
    let t_then_s = apply_first(s, &t_first, &t.outer.input.concat(x), &t.outer.output.concat(x2))?;
    Ok((s_then_t, t_then_s))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutationReport {
    pub left: String,
    pub right: String,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_deviation: f64,
    pub passed: bool,
    pub worst_case: Option<String>,
}

/// Applies `s` and `t` to disjoint holes of shared processes in both orders.
/// The battery includes the swap of the two holes (when types allow),
/// dressed swaps, and Haar unitaries with a qubit extension.
pub fn check_slot_commutation(s: &Lat, t: &Lat, seed: u64, trials: usize, tol: Tolerance) -> Result<CommutationReport> {
    let a_in = s.slot.input.concat(&t.slot.input);
    let a_out = s.slot.output.concat(&t.slot.output);
    let swap_ok = s.slot.input == t.slot.output && t.slot.input == s.slot.output;
    let mut worst: f64 = 0.0;
    let mut worst_case = None;
    for k in 0..trials.max(1) {
        let mut r = rng::stream(seed, k as u64);
        let (label, phi, x) = match (k % 3, swap_ok) {
            (0, true) => ("swap", Morphism::braid(&s.slot.input, &t.slot.input), WireType::unit()),
            (1, true) => {
                let sw = Morphism::braid(&s.slot.input, &t.slot.input);
                let pre = haar_unitary_from(&s.slot.input, &mut r).tensor(&haar_unitary_from(&t.slot.input, &mut r));
                let post = haar_unitary_from(&s.slot.output, &mut r).tensor(&haar_unitary_from(&t.slot.output, &mut r));
                ("dressed swap", post.compose(&sw.compose(&pre)?)?, WireType::unit())
            }
            _ => {
                let x = WireType::qudit(2);
                if a_in.total() != a_out.total() {
                    continue;
                }
                let u = haar_unitary_from(&a_in.concat(&x), &mut r).retype(a_in.concat(&x), a_out.concat(&x))?;
                ("haar", u, x)
            }
        };
        let (st, ts) = both_orders(s, t, &phi, &x, &x)?;
        let dev = st.max_abs_diff(&ts)?;
        if dev > worst || worst_case.is_none() {
            worst = worst.max(dev);
            worst_case = Some(format!("trial {k} ({label})"));
        }
    }
    Ok(CommutationReport {
        left: s.name.clone(),
        right: t.name.clone(),
        trials,
        seed,
        tol: tol.abs_tol,
        max_deviation: worst,
        passed: worst <= tol.abs_tol,
        worst_case,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterchangeDemo {
    pub dim: usize,
    pub v: Morphism,
    pub w: Morphism,
    /// `S^V` on the first hole, then `S^loop` on the second.
    pub v_then_loop: Morphism,
    /// `S^loop` on the second hole, then `S^V` on the first.
    pub loop_then_v: Morphism,
    pub max_difference: f64,
}

/// Both orders of `S^V` (first hole) and `S^loop` (second hole) applied
/// to the swap on `[dim] ⊗ [dim]`, with `V` the discrete Fourier transform
/// and `W = id`.
pub fn interchange_failure_demo(dim: usize) -> Result<(Morphism, Morphism)> {
    let d = interchange_demo_with(dim, &gates::dft(dim), &Morphism::identity(&WireType::qudit(dim)))?;
    Ok((d.v_then_loop, d.loop_then_v))
}

pub fn interchange_demo_with(dim: usize, v: &Morphism, w: &Morphism) -> Result<InterchangeDemo> {
    if dim < 2 {
        return Err(Error::Invalid("the interchange demo needs dim ≥ 2".into()));
    }
    let a = WireType::qudit(dim);
    let sv = s_v(&a, v, w)?;
    let sl = s_loop(&a);
    let swap = Morphism::braid(&a, &a);
    let (v_then_loop, loop_then_v) = both_orders(&sv, &sl, &swap, &WireType::unit(), &WireType::unit())?;
    let max_difference = v_then_loop.max_abs_diff(&loop_then_v)?;
    Ok(InterchangeDemo { dim, v: v.clone(), w: w.clone(), v_then_loop, loop_then_v, max_difference })
}
