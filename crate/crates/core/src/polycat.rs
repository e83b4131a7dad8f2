//! Polycategorical composition of supermaps.
//!
//! A [`PolyTerm`] has a list of input holes `Γ` and output holes `Θ`; its
//! numerical meaning is a supermap `Γ → [B₁ ⋯ Bₘ, B₁′ ⋯ Bₘ′]`. Terms
//! compose along one hole at a time. Every term carries the plan of atomic
//! terms it was built from, and a second wire between two atomic terms that
//! are already connected is rejected: closing it would feed an output back
//! into its own past.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::category::haar_unitary_from;
use crate::comb::{apply_comb, haar_arg, srep_apply, Comb, CombJson, ProductCombFamily, SrepSupermap};
use crate::error::{Error, Result};
use crate::rng;
use crate::supermap::{pair_state, sequential_composition, Arg, HigherObject, InternalSupermap, InternalSupermapJson};
use crate::switch::{build_n_switch, build_switch, cyclic_orderings, Control};
use crate::tensor::{check_permutation, invert_permutation, Morphism, Tolerance, WireType};

pub type NodeId = u64;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn splice<T: Clone>(outer: &[T], at: usize, inner: &[T]) -> Vec<T> {
    outer[..at].iter().chain(inner).chain(&outer[at + 1..]).cloned().collect()
}

fn fresh_id() -> NodeId {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// An input or output hole of an atomic term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LegRef {
    pub node: NodeId,
    pub leg: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub producer: NodeId,
    pub output_leg: usize,
    pub consumer: NodeId,
    pub input_leg: usize,
}

/// The atomic terms of a composite and the wires between them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub nodes: BTreeSet<NodeId>,
    pub edges: Vec<Edge>,
}

impl CompositionPlan {
    fn atomic(id: NodeId) -> Self {
        CompositionPlan { nodes: BTreeSet::from([id]), edges: Vec::new() }
    }

    pub fn connected(&self, a: NodeId, b: NodeId) -> bool {
        self.edges
            .iter()
            .any(|e| (e.producer == a && e.consumer == b) || (e.producer == b && e.consumer == a))
    }

    pub fn overlaps(&self, other: &CompositionPlan) -> bool {
        self.nodes.intersection(&other.nodes).next().is_some()
    }

    /// At most one edge per pair of nodes, no self edges, legs used once,
    /// and no directed cycle.
    pub fn is_well_formed(&self) -> bool {
        let mut pairs = BTreeSet::new();
        let mut outs = BTreeSet::new();
        let mut ins = BTreeSet::new();
        for e in &self.edges {
            let key = (e.producer.min(e.consumer), e.producer.max(e.consumer));
            if e.producer == e.consumer
                || !pairs.insert(key)
                || !outs.insert((e.producer, e.output_leg))
                || !ins.insert((e.consumer, e.input_leg))
            {
                return false;
            }
        }
        // Kahn's algorithm.
        let mut indeg: HashMap<NodeId, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        for e in &self.edges {
            *indeg.entry(e.consumer).or_default() += 1;
        }
        let mut ready: Vec<NodeId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for e in self.edges.iter().filter(|e| e.producer == n) {
                let d = indeg.get_mut(&e.consumer).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.push(e.consumer);
                }
            }
        }
        seen == indeg.len()
    }
}

#[derive(Clone, Debug)]
pub enum Backend {
    Unit,
    Internal(Arc<InternalSupermap>),
    Comb(Arc<Comb>),
    Srep(Arc<SrepSupermap>),
    /// `outer ∘ inner` along `outer`'s input `outer_leg` and `inner`'s
    /// output `inner_leg`.
    Composite {
        outer: Arc<PolyTerm>,
        inner: Arc<PolyTerm>,
        outer_leg: usize,
        inner_leg: usize,
    },
    /// `inner` with inputs and outputs relabeled: new input `k` is old input
    /// `in_perm[k]`, likewise for outputs.
    Sym {
        inner: Arc<PolyTerm>,
        in_perm: Vec<usize>,
        out_perm: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub struct PolyTerm {
    id: NodeId,
    name: String,
    inputs: Vec<HigherObject>,
    outputs: Vec<HigherObject>,
    backend: Backend,
    plan: CompositionPlan,
    input_origin: Vec<LegRef>,
    output_origin: Vec<LegRef>,
}

fn check_outputs(outputs: &[HigherObject], outer: &HigherObject) -> Result<()> {
    let joint = HigherObject::tensor_all(outputs);
    if &joint != outer {
        return Err(Error::TypeMismatch {
            context: "output legs of term",
            expected: outer.input.concat(&outer.output).factors().to_vec(),
            found: joint.input.concat(&joint.output).factors().to_vec(),
        });
    }
    Ok(())
}

fn lens_in(objs: &[HigherObject]) -> usize {
    objs.iter().map(|o| o.input.len()).sum()
}

fn lens_out(objs: &[HigherObject]) -> usize {
    objs.iter().map(|o| o.output.len()).sum()
}

impl PolyTerm {
    fn atomic(name: &str, inputs: Vec<HigherObject>, outputs: Vec<HigherObject>, backend: Backend) -> Self {
        let id = fresh_id();
        PolyTerm {
            id,
            name: name.to_string(),
            input_origin: (0..inputs.len()).map(|leg| LegRef { node: id, leg }).collect(),
            output_origin: (0..outputs.len()).map(|leg| LegRef { node: id, leg }).collect(),
            inputs,
            outputs,
            backend,
            plan: CompositionPlan::atomic(id),
        }
    }

    /// The unit polymorphism `[A, A′] → [A, A′]`.
    pub fn unit(obj: &HigherObject) -> Self {
        PolyTerm::atomic("unit", vec![obj.clone()], vec![obj.clone()], Backend::Unit)
    }

    /// An internal supermap whose outer hole is split into `outputs`.
    pub fn from_internal(name: &str, s: InternalSupermap, outputs: Vec<HigherObject>) -> Result<Self> {
        check_outputs(&outputs, s.outer())?;
        Ok(PolyTerm::atomic(name, s.slots().to_vec(), outputs, Backend::Internal(Arc::new(s))))
    }

    pub fn from_comb(name: &str, c: Comb, outputs: Vec<HigherObject>) -> Result<Self> {
        check_outputs(&outputs, c.outer())?;
        Ok(PolyTerm::atomic(name, vec![c.slot().clone()], outputs, Backend::Comb(Arc::new(c))))
    }

    pub fn from_srep(name: &str, s: SrepSupermap, outputs: Vec<HigherObject>) -> Result<Self> {
        check_outputs(&outputs, s.outer())?;
        Ok(PolyTerm::atomic(name, s.slots().to_vec(), outputs, Backend::Srep(Arc::new(s))))
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[HigherObject] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[HigherObject] {
        &self.outputs
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn plan(&self) -> &CompositionPlan {
        &self.plan
    }

    pub fn input_origin(&self) -> &[LegRef] {
        &self.input_origin
    }

    pub fn output_origin(&self) -> &[LegRef] {
        &self.output_origin
    }

    /// The joint output hole `[B₁ ⋯ Bₘ, B₁′ ⋯ Bₘ′]`.
    pub fn outer(&self) -> HigherObject {
        HigherObject::tensor_all(&self.outputs)
    }

    /// Plugs `s`'s output `s_leg` into this term's input `leg`.
    ///
    /// The result has inputs `D, Γ_s, E` (this term's inputs before `leg`,
    /// then `s`'s inputs, then the rest) and outputs `B, Θ, C` (`s`'s outputs
    /// before `s_leg`, this term's outputs, then the rest).
    pub fn compose_along(&self, leg: usize, s: &PolyTerm, s_leg: usize) -> Result<PolyTerm> {
        if leg >= self.inputs.len() {
            return Err(Error::BadLeg { leg, len: self.inputs.len() });
        }
        if s_leg >= s.outputs.len() {
            return Err(Error::BadLeg { leg: s_leg, len: s.outputs.len() });
        }
        let consumer = self.input_origin[leg];
        let producer = s.output_origin[s_leg];
        if self.plan.overlaps(&s.plan) {
            let joint = self.plan.edges.iter().chain(&s.plan.edges);
            let linked = joint
                .into_iter()
                .any(|e| (e.producer == producer.node && e.consumer == consumer.node)
                    || (e.producer == consumer.node && e.consumer == producer.node));
            if linked || producer.node == consumer.node {
                return Err(Error::AlreadyConnected { producer: producer.node, consumer: consumer.node });
            }
            return Err(Error::SelfComposition(self.id));
        }
        if s.outputs[s_leg] != self.inputs[leg] {
            let (want, got) = (&self.inputs[leg], &s.outputs[s_leg]);
            return Err(Error::TypeMismatch {
                context: "compose_along",
                expected: want.input.concat(&want.output).factors().to_vec(),
                found: got.input.concat(&got.output).factors().to_vec(),
            });
        }
        let mut plan = self.plan.clone();
        plan.nodes.extend(s.plan.nodes.iter().copied());
        plan.edges.extend(s.plan.edges.iter().copied());
        plan.edges.push(Edge {
            producer: producer.node,
            output_leg: producer.leg,
            consumer: consumer.node,
            input_leg: consumer.leg,
        });
        debug_assert!(plan.is_well_formed());

        Ok(PolyTerm {
            id: fresh_id(),
            name: format!("({} ∘ {})", self.name, s.name),
            inputs: splice(&self.inputs, leg, &s.inputs),
            input_origin: splice(&self.input_origin, leg, &s.input_origin),
            outputs: splice(&s.outputs, s_leg, &self.outputs),
            output_origin: splice(&s.output_origin, s_leg, &self.output_origin),
            backend: Backend::Composite {
                outer: Arc::new(self.clone()),
                inner: Arc::new(s.clone()),
                outer_leg: leg,
                inner_leg: s_leg,
            },
            plan,
        })
    }

    /// Relabels the legs: new input `k` is old input `in_perm[k]`, new
    /// output `k` is old output `out_perm[k]`.
    pub fn sym_action(&self, in_perm: &[usize], out_perm: &[usize]) -> Result<PolyTerm> {
        check_permutation(in_perm, self.inputs.len())?;
        check_permutation(out_perm, self.outputs.len())?;
        let pick = |v: &[_], p: &[usize]| -> Vec<_> { p.iter().map(|&k| v[k]).collect() };
        let pick_obj = |v: &[HigherObject], p: &[usize]| -> Vec<HigherObject> { p.iter().map(|&k| v[k].clone()).collect() };
        Ok(PolyTerm {
            id: fresh_id(),
            name: format!("σ({})", self.name),
            inputs: pick_obj(&self.inputs, in_perm),
            outputs: pick_obj(&self.outputs, out_perm),
            input_origin: pick(&self.input_origin, in_perm),
            output_origin: pick(&self.output_origin, out_perm),
            backend: Backend::Sym {
                inner: Arc::new(self.clone()),
                in_perm: in_perm.to_vec(),
                out_perm: out_perm.to_vec(),
            },
            plan: self.plan.clone(),
        })
    }

    /// Numerical action on one argument per input leg. The result maps
    /// `B₁ ⋯ Bₘ ⊗ X₁ ⋯ Xₙ` to `B₁′ ⋯ Bₘ′ ⊗ X₁′ ⋯ Xₙ′`.
    pub fn evaluate(&self, args: &[Arg]) -> Result<Morphism> {
        if args.len() != self.inputs.len() {
            return Err(Error::Invalid(format!(
                "{} arguments for {} input legs of {}",
                args.len(),
                self.inputs.len(),
                self.name
            )));
        }
        for (h, a) in self.inputs.iter().zip(args) {
            a.check(h, "evaluate")?;
        }
        match &self.backend {
            Backend::Unit => Ok(args[0].phi.clone()),
            Backend::Internal(s) => s.apply(args),
            Backend::Comb(c) => apply_comb(c, &args[0]),
            Backend::Srep(s) => srep_apply(s, args),
            Backend::Composite { outer, inner, outer_leg, inner_leg } => {
                eval_composite(outer, inner, *outer_leg, *inner_leg, args)
            }
            Backend::Sym { inner, in_perm, out_perm } => {
                let mut inner_args: Vec<Option<Arg>> = vec![None; args.len()];
                for (k, &p) in in_perm.iter().enumerate() {
                    inner_args[p] = Some(args[k].clone());
                }
                let inner_args: Vec<Arg> = inner_args.into_iter().map(|a| a.expect("permutation")).collect();
                let r = inner.evaluate(&inner_args)?;
                let m = inner.outputs.len();
                let mut dom_sizes: Vec<usize> = inner.outputs.iter().map(|o| o.input.len()).collect();
                let mut cod_sizes: Vec<usize> = inner.outputs.iter().map(|o| o.output.len()).collect();
                dom_sizes.extend(inner_args.iter().map(|a| a.ext_in.len()));
                cod_sizes.extend(inner_args.iter().map(|a| a.ext_out.len()));
                let order: Vec<usize> = out_perm.iter().copied().chain(in_perm.iter().map(|&p| m + p)).collect();
                r.reorder_blocks(&dom_sizes, &order, &cod_sizes, &order)
            }
        }
    }

    /// The internal morphism of the term's action on its input legs, with
    /// outer hole [`PolyTerm::outer`].
    pub fn to_internal(&self) -> Result<InternalSupermap> {
        InternalSupermap::from_action(self.inputs.clone(), self.outer(), |phis| {
            self.evaluate(&phis.iter().cloned().map(Arg::plain).collect::<Vec<_>>())
        })
    }
}

fn eval_composite(t: &PolyTerm, s: &PolyTerm, i: usize, j: usize, args: &[Arg]) -> Result<Morphism> {
    let ns = s.inputs.len();
    let (d, rest) = args.split_at(i);
    let (a, e) = rest.split_at(ns);
    let psi = s.evaluate(a)?;

    let (b, m, c) = (&s.outputs[..j], &s.outputs[j], &s.outputs[j + 1..]);
    let xa_in: Vec<&WireType> = a.iter().map(|x| &x.ext_in).collect();
    let xa_out: Vec<&WireType> = a.iter().map(|x| &x.ext_out).collect();
    let xa_in = WireType::concat_all(xa_in);
    let xa_out = WireType::concat_all(xa_out);
    let (nb, nc, nxa) = (lens_in(b), lens_in(c), xa_in.len());
    let (nb2, nc2, nxa2) = (lens_out(b), lens_out(c), xa_out.len());
    let psi = psi.reorder_blocks(
        &[nb, m.input.len(), nc, nxa],
        &[1, 0, 2, 3],
        &[nb2, m.output.len(), nc2, nxa2],
        &[1, 0, 2, 3],
    )?;
    let ext_in = HigherObject::tensor_all(b).input.concat(&HigherObject::tensor_all(c).input).concat(&xa_in);
    let ext_out = HigherObject::tensor_all(b).output.concat(&HigherObject::tensor_all(c).output).concat(&xa_out);

    let mut t_args: Vec<Arg> = d.to_vec();
    t_args.push(Arg::new(psi, ext_in, ext_out));
    t_args.extend_from_slice(e);
    let r = t.evaluate(&t_args)?;

    let sum_in = |xs: &[Arg]| xs.iter().map(|x| x.ext_in.len()).sum::<usize>();
    let sum_out = |xs: &[Arg]| xs.iter().map(|x| x.ext_out.len()).sum::<usize>();
    // F XD (B C XA) XE → B F C XD XA XE
    let order = [2, 0, 3, 1, 4, 5];
    r.reorder_blocks(
        &[lens_in(&t.outputs), sum_in(d), nb, nc, nxa, sum_in(e)],
        &order,
        &[lens_out(&t.outputs), sum_out(d), nb2, nc2, nxa2, sum_out(e)],
        &order,
    )
}

/// Relabels `t2` so that its legs line up with `t1`'s by atomic origin.
pub fn align_legs(t1: &PolyTerm, t2: &PolyTerm) -> Result<PolyTerm> {
    let find = |origins: &[LegRef], want: &LegRef| origins.iter().position(|o| o == want);
    let in_perm: Option<Vec<usize>> = t1.input_origin.iter().map(|o| find(&t2.input_origin, o)).collect();
    let out_perm: Option<Vec<usize>> = t1.output_origin.iter().map(|o| find(&t2.output_origin, o)).collect();
    match (in_perm, out_perm) {
        (Some(i), Some(o)) if i.len() == t2.inputs.len() && o.len() == t2.outputs.len() => t2.sym_action(&i, &o),
        _ => Err(Error::Invalid("terms have different legs".into())),
    }
}

/// Largest entrywise difference between the actions of two terms with the
/// same legs (matched by atomic origin), on Haar arguments with extensions.
pub fn action_distance(t1: &PolyTerm, t2: &PolyTerm, seed: u64, trials: usize) -> Result<f64> {
    let t2 = align_legs(t1, t2)?;
    let mut worst: f64 = 0.0;
    for k in 0..trials {
        let mut r = rng::stream(seed, k as u64);
        let args: Vec<Arg> = t1.inputs.iter().map(|h| haar_arg(h, &mut r)).collect();
        worst = worst.max(t1.evaluate(&args)?.max_abs_diff(&t2.evaluate(&args)?)?);
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssociativityReport {
    pub seed: u64,
    pub trials: usize,
    pub tol: f64,
    pub max_sequential_deviation: f64,
    pub max_parallel_deviation: f64,
    pub max_switch_deviation: f64,
    pub max_sym_deviation: f64,
    pub passed: bool,
    pub note: String,
}

fn qubit_hole() -> HigherObject {
    HigherObject::square(&WireType::qudit(2))
}

/// A comb-backed term `[2,2] → [2,2] [2,2]` (or `→ [2,2]` when `split` is
/// false) with Haar unitary stages.
pub fn random_comb_term(name: &str, split: bool, r: &mut rng::Rng) -> Result<PolyTerm> {
    let o = qubit_hole();
    if split {
        let outer = HigherObject::square(&WireType::new(vec![2, 2]));
        let c = Comb::random_unitary(&o, &outer, &WireType::qudit(2), r)?;
        PolyTerm::from_comb(name, c, vec![o.clone(), o])
    } else {
        let c = Comb::random_unitary(&o, &o, &WireType::unit(), r)?;
        PolyTerm::from_comb(name, c, vec![o])
    }
}

/// The qubit switch as a term `[2,2] [2,2] → [Q,Q] [A,A]`.
pub fn switch_term(name: &str) -> Result<PolyTerm> {
    let s = build_switch(Control::computational(2), &WireType::qudit(2))?;
    PolyTerm::from_srep(name, s, vec![qubit_hole(), qubit_hole()])
}

/// Numerical check of the polycategory laws on random comb-backed terms
/// and on chains through the switch.
///
/// Sequential: `(T ∘ S) ∘ R = T ∘ (S ∘ R)`. Parallel: for `R` with two
/// outputs, plugging `S` and `Q` into them in either order agrees. Both
/// sides are compared after matching legs by origin. Symmetry: evaluating a
/// relabeled composite equals relabeling the evaluation.
pub fn check_associativity(seed: u64, trials: usize, tol: Tolerance) -> Result<AssociativityReport> {
    let (mut seq, mut par, mut sw, mut sym): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..trials {
        let mut r = rng::stream(rng::child_seed(seed, k as u64), 0);
        let r_term = random_comb_term("R", true, &mut r)?;
        let s_term = random_comb_term("S", false, &mut r)?;
        let q_term = random_comb_term("Q", false, &mut r)?;
        let t_term = random_comb_term("T", true, &mut r)?;
        let probe = rng::child_seed(seed, 1000 + k as u64);

        // Sequential shape.
        let left = t_term.compose_along(0, &s_term, 0)?.compose_along(0, &r_term, 0)?;
        let right = t_term.compose_along(0, &s_term.compose_along(0, &r_term, 0)?, 0)?;
        seq = seq.max(action_distance(&left, &right, probe, 2)?);

        // Parallel shape.
        let left = s_term.compose_along(0, &r_term, 0)?;
        let left = q_term.compose_along(0, &left, 1)?;
        let right = q_term.compose_along(0, &r_term, 1)?;
        let right = s_term.compose_along(0, &right, 0)?;
        par = par.max(action_distance(&left, &right, probe, 2)?);

        // Through the switch: both outputs consumed, and fed from a comb.
        let switch = switch_term("switch")?;
        let left = s_term.compose_along(0, &switch, 0)?;
        let left = q_term.compose_along(0, &left, 1)?;
        let right = q_term.compose_along(0, &switch, 1)?;
        let right = s_term.compose_along(0, &right, 0)?;
        sw = sw.max(action_distance(&left, &right, probe, 2)?);
        let left = switch.compose_along(1, &q_term, 0)?.compose_along(0, &r_term, 0)?;
        let right = switch.compose_along(0, &r_term, 0)?.compose_along(1, &q_term, 0)?;
        sw = sw.max(action_distance(&left, &right, probe, 2)?);

        // Symmetry: σ(T ∘ R) evaluated directly vs by relabeling.
        let tr = t_term.compose_along(0, &r_term, 1)?;
        let out_perm: Vec<usize> = (0..tr.outputs.len()).rev().collect();
        let relabeled = tr.sym_action(&[0], &out_perm)?;
        let mut rr = rng::stream(probe, 77);
        let args: Vec<Arg> = tr.inputs.iter().map(|h| haar_arg(h, &mut rr)).collect();
        let direct = relabeled.evaluate(&args)?;
        let base = tr.evaluate(&args)?;
        let m = tr.outputs.len();
        let mut dom_sizes: Vec<usize> = tr.outputs.iter().map(|o| o.input.len()).collect();
        let mut cod_sizes: Vec<usize> = tr.outputs.iter().map(|o| o.output.len()).collect();
        dom_sizes.push(args[0].ext_in.len());
        cod_sizes.push(args[0].ext_out.len());
        let order: Vec<usize> = out_perm.iter().copied().chain([m]).collect();
        let oracle = base.reorder_blocks(&dom_sizes, &order, &cod_sizes, &order)?;
        sym = sym.max(direct.max_abs_diff(&oracle)?);
    }
    let worst = seq.max(par).max(sw).max(sym);
    Ok(AssociativityReport {
        seed,
        trials,
        tol: tol.abs_tol,
        max_sequential_deviation: seq,
        max_parallel_deviation: par,
        max_switch_deviation: sw,
        max_sym_deviation: sym,
        passed: worst <= tol.abs_tol,
        note: "battery-certified on Haar samples, not proved".into(),
    })
}

/// Largest deviation of `evaluate ∘ sym_action` from the permuted evaluation
/// over `trials` random relabelings of random terms.
pub fn check_sym_equivariance(seed: u64, trials: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..trials {
        let mut r = rng::stream(rng::child_seed(seed, k as u64), 1);
        let base = match k % 3 {
            0 => switch_term("switch")?,
            1 => {
                let a = random_comb_term("a", true, &mut r)?;
                let b = random_comb_term("b", true, &mut r)?;
                b.compose_along(0, &a, 1)?
            }
            _ => {
                let (c1, c2) = (random_comb_term("c1", false, &mut r)?, random_comb_term("c2", true, &mut r)?);
                let fam = ProductCombFamily::new(vec![comb_of(&c1), comb_of(&c2)]);
                let outputs = vec![qubit_hole(), qubit_hole(), qubit_hole()];
                PolyTerm::from_srep("product", SrepSupermap::from_family(Arc::new(fam)), outputs)?
            }
        };
        let in_perm = random_permutation(base.inputs.len(), &mut r);
        let out_perm = random_permutation(base.outputs.len(), &mut r);
        let t = base.sym_action(&in_perm, &out_perm)?;
        let args: Vec<Arg> = t.inputs.iter().map(|h| haar_arg(h, &mut r)).collect();
        let got = t.evaluate(&args)?;
        // Oracle: evaluate the base on the un-permuted arguments and move
        // the blocks by hand.
        let inv = invert_permutation(&in_perm);
        let base_args: Vec<Arg> = inv.iter().map(|&k| args[k].clone()).collect();
        let raw = base.evaluate(&base_args)?;
        let m = base.outputs.len();
        let mut dom_sizes: Vec<usize> = base.outputs.iter().map(|o| o.input.len()).collect();
        let mut cod_sizes: Vec<usize> = base.outputs.iter().map(|o| o.output.len()).collect();
        dom_sizes.extend(base_args.iter().map(|a| a.ext_in.len()));
        cod_sizes.extend(base_args.iter().map(|a| a.ext_out.len()));
        let order: Vec<usize> = out_perm.iter().copied().chain(in_perm.iter().map(|&p| m + p)).collect();
        let want = raw.reorder_blocks(&dom_sizes, &order, &cod_sizes, &order)?;
        worst = worst.max(got.max_abs_diff(&want)?);
        // The inverse relabeling restores the original action.
        let back = t.sym_action(&invert_permutation(&in_perm), &invert_permutation(&out_perm))?;
        worst = worst.max(action_distance(&base, &back, k as u64, 1)?);
    }
    Ok(worst)
}

fn comb_of(t: &PolyTerm) -> Comb {
    match &t.backend {
        Backend::Comb(c) => (**c).clone(),
        _ => unreachable!("comb-backed term"),
    }
}

fn random_permutation(n: usize, r: &mut rng::Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// One term of a network file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TermSpec {
    Identity { id: String, object: HigherObject },
    /// Sequential composition on one wire type: `factors` when given,
    /// otherwise a single qudit of dimension `dim`.
    Seqcomp { id: String, #[serde(default)] dim: usize, #[serde(default, skip_serializing_if = "Option::is_none")] factors: Option<Vec<usize>> },
    PairState { id: String, dim: usize },
    Switch { id: String, dim: usize, #[serde(default)] parties: Option<usize> },
    Internal { id: String, supermap: Box<InternalSupermapJson>, #[serde(default)] outputs: Option<Vec<HigherObject>> },
    Comb { id: String, comb: Box<CombJson>, #[serde(default)] outputs: Option<Vec<HigherObject>> },
}

impl TermSpec {
    pub fn id(&self) -> &str {
        match self {
            TermSpec::Identity { id, .. }
            | TermSpec::Seqcomp { id, .. }
            | TermSpec::PairState { id, .. }
            | TermSpec::Switch { id, .. }
            | TermSpec::Internal { id, .. }
            | TermSpec::Comb { id, .. } => id,
        }
    }

    pub fn build(&self) -> Result<PolyTerm> {
        match self {
            TermSpec::Identity { id, object } => Ok(PolyTerm { name: id.clone(), ..PolyTerm::unit(object) }),
            TermSpec::Seqcomp { id, dim, factors } => {
                let a = match factors {
                    Some(f) => WireType::try_new(f.clone())?,
                    None => WireType::try_new(vec![*dim])?,
                };
                let s = sequential_composition(&a, &a, &a);
                let out = vec![s.outer().clone()];
                PolyTerm::from_internal(id, s, out)
            }
            TermSpec::PairState { id, dim } => {
                let a = WireType::qudit(*dim);
                let o = HigherObject::square(&a);
                PolyTerm::from_internal(id, pair_state(&a), vec![o.clone(), o])
            }
            TermSpec::Switch { id, dim, parties } => {
                let a = WireType::qudit(*dim);
                let n = parties.unwrap_or(2);
                let s = if n == 2 {
                    build_switch(Control::computational(2), &a)?
                } else {
                    build_n_switch(Control::computational(n), &a, cyclic_orderings(n))?
                };
                let out = vec![s.outer().clone()];
                PolyTerm::from_srep(id, s, out)
            }
            TermSpec::Internal { id, supermap, outputs } => {
                let s = InternalSupermap::try_from((**supermap).clone())?;
                let out = outputs.clone().unwrap_or_else(|| vec![s.outer().clone()]);
                PolyTerm::from_internal(id, s, out)
            }
            TermSpec::Comb { id, comb, outputs } => {
                let c = Comb::new(comb.slot.clone(), comb.outer.clone(), comb.memory.clone(), comb.pre.clone(), comb.post.clone())?;
                let out = outputs.clone().unwrap_or_else(|| vec![c.outer().clone()]);
                PolyTerm::from_comb(id, c, out)
            }
        }
    }
}

/// One wire of a network file: output `from_leg` of term `from` into input
/// `to_leg` of term `to`. Legs index the named atomic terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpec {
    pub from: String,
    pub from_leg: usize,
    pub to: String,
    pub to_leg: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub compositions: Vec<CompositionSpec>,
}

/// A network after all compositions: the connected components and, when
/// a composition was rejected, the error and the index of the offending
/// wire.
#[derive(Debug)]
pub struct Network {
    pub components: Vec<PolyTerm>,
    pub rejected: Option<(usize, Error)>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the terms and applies the compositions in order, stopping at
    /// the first rejected one.
    pub fn build(&self) -> Result<Network> {
        let mut atoms: HashMap<String, NodeId> = HashMap::new();
        let mut components: Vec<PolyTerm> = Vec::new();
        for spec in &self.terms {
            if atoms.contains_key(spec.id()) {
                return Err(Error::Invalid(format!("duplicate term id {}", spec.id())));
            }
            let t = spec.build()?;
            atoms.insert(spec.id().to_string(), t.id);
            components.push(t);
        }
        let locate = |components: &[PolyTerm], name: &str| -> Result<(usize, NodeId)> {
            let node = *atoms.get(name).ok_or_else(|| Error::Invalid(format!("unknown term {name}")))?;
            let idx = components
                .iter()
                .position(|c| c.plan.nodes.contains(&node))
                .expect("every atom lives in one component");
            Ok((idx, node))
        };
        for (w, c) in self.compositions.iter().enumerate() {
            let (pi, pnode) = locate(&components, &c.from)?;
            let (ci, cnode) = locate(&components, &c.to)?;
            let producer = &components[pi];
            let consumer = &components[ci];
            let out_leg = producer
                .output_origin
                .iter()
                .position(|o| *o == LegRef { node: pnode, leg: c.from_leg });
            let in_leg = consumer
                .input_origin
                .iter()
                .position(|o| *o == LegRef { node: cnode, leg: c.to_leg });
            let (Some(out_leg), Some(in_leg)) = (out_leg, in_leg) else {
                let err = if pi == ci {
                    Error::AlreadyConnected { producer: pnode, consumer: cnode }
                } else {
                    Error::BadLeg { leg: c.to_leg.max(c.from_leg), len: 0 }
                };
                return Ok(Network { components, rejected: Some((w, err)) });
            };
            match consumer.compose_along(in_leg, producer, out_leg) {
                Ok(t) => {
                    let (hi, lo) = (pi.max(ci), pi.min(ci));
                    components.remove(hi);
                    if hi != lo {
                        components.remove(lo);
                    }
                    components.push(t);
                }
                Err(e @ (Error::AlreadyConnected { .. } | Error::SelfComposition(_))) => {
                    return Ok(Network { components, rejected: Some((w, e)) });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Network { components, rejected: None })
    }
}

/// Haar unitary arguments with trivial extension for every input leg.
pub fn haar_plain_args(t: &PolyTerm, seed: u64) -> Result<Vec<Arg>> {
    t.inputs
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if h.input.total() != h.output.total() {
                return Err(Error::Invalid("plain Haar argument needs a square hole".into()));
            }
            let u = haar_unitary_from(&h.input, &mut rng::stream(seed, k as u64));
            Ok(Arg::plain(u.retype(h.input.clone(), h.output.clone())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::{haar_unitary, unitarity_defect};
    use crate::comb::comb_to_internal;
    use crate::supermap::{default_ext_schedule, identity_supermap, verify};
    use crate::switch::switch_closed_form;
    use crate::CategoryTag;

    fn q() -> WireType {
        WireType::qudit(2)
    }

    fn positional_distance(t1: &PolyTerm, t2: &PolyTerm, trials: u64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..trials {
            let mut r = rng::stream(1, k);
            let args: Vec<Arg> = t1.inputs().iter().map(|h| haar_arg(h, &mut r)).collect();
            let d = t1.evaluate(&args).unwrap().max_abs_diff(&t2.evaluate(&args).unwrap()).unwrap();
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn unit_law() {
        let mut r = rng::stream(1, 1);
        let t = random_comb_term("t", true, &mut r).unwrap();
        let u_in = PolyTerm::unit(&t.inputs()[0]);
        let u_out = PolyTerm::unit(&t.outputs()[1]);
        let a = t.compose_along(0, &u_in, 0).unwrap();
        assert_eq!(a.inputs(), t.inputs());
        assert!(positional_distance(&t, &a, 3) < 1e-12);
        let b = u_out.compose_along(0, &t, 1).unwrap();
        assert_eq!(b.outputs(), t.outputs());
        assert!(positional_distance(&t, &b, 3) < 1e-12);
        let unit = PolyTerm::unit(&HigherObject::square(&q()));
        let phi = haar_unitary(&q(), 3);
        assert_eq!(unit.evaluate(&[Arg::plain(phi.clone())]).unwrap(), phi);
    }

    #[test]
    fn seqcomp_with_fixed_leg() {
        let s = sequential_composition(&q(), &q(), &q());
        let out = vec![s.outer().clone()];
        let seq = PolyTerm::from_internal("seq", s, out).unwrap();
        let f = haar_unitary(&q(), 1);
        let g = haar_unitary(&q(), 2);
        let f_term = PolyTerm::from_internal(
            "f",
            InternalSupermap::new(Vec::new(), HigherObject::square(&q()), f.clone()).unwrap(),
            vec![HigherObject::square(&q())],
        )
        .unwrap();
        let composed = seq.compose_along(0, &f_term, 0).unwrap();
        assert_eq!(composed.inputs().len(), 1);
        let got = composed.evaluate(&[Arg::plain(g.clone())]).unwrap();
        assert!(got.approx_eq(&g.compose(&f).unwrap(), Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn second_wire_between_same_terms_is_rejected() {
        let a = q();
        let s = sequential_composition(&a, &a, &a);
        let seq = PolyTerm::from_internal("seq", s.clone(), vec![s.outer().clone()]).unwrap();
        let o = HigherObject::square(&a);
        let pair = PolyTerm::from_internal("pair", pair_state(&a), vec![o.clone(), o]).unwrap();
        let once = seq.compose_along(0, &pair, 0).unwrap();
        assert!(once.plan().is_well_formed());
        let err = once.compose_along(0, &once, 0).unwrap_err();
        assert!(matches!(err, Error::AlreadyConnected { .. }));
        assert!(matches!(seq.compose_along(0, &seq, 0), Err(Error::AlreadyConnected { .. })));
        assert!(matches!(seq.compose_along(5, &pair, 0), Err(Error::BadLeg { .. })));
    }

    #[test]
    fn indirect_loops_are_self_composition() {
        let mut r = rng::stream(2, 2);
        let a = random_comb_term("a", true, &mut r).unwrap();
        let b = random_comb_term("b", false, &mut r).unwrap();
        let c = random_comb_term("c", false, &mut r).unwrap();
        let ab = b.compose_along(0, &a, 0).unwrap();
        let abc = c.compose_along(0, &ab, 1).unwrap();
        // Feeding c's output back into a's input would pass through b.
        let t = switch_term("sw").unwrap();
        let joined = t.compose_along(0, &abc, 0).unwrap();
        assert_eq!(joined.outputs().len(), 3);
        let err = joined.compose_along(1, &joined, 2).unwrap_err();
        assert!(matches!(err, Error::SelfComposition(_)));
    }

    #[test]
    fn swapped_switch_inputs() {
        let sw = switch_term("sw").unwrap();
        let swapped = sw.sym_action(&[1, 0], &[0, 1]).unwrap();
        let (u, v) = (haar_unitary(&q(), 1), haar_unitary(&q(), 2));
        let got = swapped.evaluate(&[Arg::plain(u.clone()), Arg::plain(v.clone())]).unwrap();
        let want = sw.evaluate(&[Arg::plain(v.clone()), Arg::plain(u.clone())]).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-14);
        let id = sw.sym_action(&[0, 1], &[0, 1]).unwrap();
        assert!(action_distance(&sw, &id, 0, 3).unwrap() < 1e-14);
    }

    #[test]
    fn switch_into_sequential_composition() {
        // seq([QA,QA],[QA,QA]) with the switch in the first leg and W in
        // the second equals W after the switch.
        let qa = WireType::new(vec![2, 2]);
        let s = sequential_composition(&qa, &qa, &qa);
        let seq = PolyTerm::from_internal("seq", s.clone(), vec![s.outer().clone()]).unwrap();
        let sw = PolyTerm::from_srep(
            "sw",
            build_switch(Control::computational(2), &q()).unwrap(),
            vec![HigherObject::square(&qa)],
        )
        .unwrap();
        let t = seq.compose_along(0, &sw, 0).unwrap();
        assert_eq!(t.inputs().len(), 3);
        let (u, v, w) = (haar_unitary(&q(), 1), haar_unitary(&q(), 2), haar_unitary(&qa, 3));
        let got = t.evaluate(&[Arg::plain(u.clone()), Arg::plain(v.clone()), Arg::plain(w.clone())]).unwrap();
        let want = w.compose(&switch_closed_form(&Control::computational(2), &u, &v).unwrap()).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-10);
    }

    #[test]
    fn three_term_chain_against_flat_contraction() {
        let mut r = rng::stream(5, 5);
        let terms: Vec<PolyTerm> = (0..3).map(|k| random_comb_term(&k.to_string(), false, &mut r).unwrap()).collect();
        let chain = terms[2].compose_along(0, &terms[1], 0).unwrap().compose_along(0, &terms[0], 0).unwrap();
        let phi = haar_unitary(&q(), 8);
        let got = chain.evaluate(&[Arg::plain(phi.clone())]).unwrap();
        // Flat oracle: post₂ pre₂ post₁ pre₁ post₀ φ pre₀ as plain products.
        let mut want = phi;
        for t in &terms {
            let c = comb_of(t);
            want = c.post().compose(&want.compose(c.pre()).unwrap()).unwrap();
        }
        assert!(got.max_abs_diff(&want).unwrap() < 1e-9);
    }

    #[test]
    fn associativity_battery() {
        let rep = check_associativity(11, 3, Tolerance::DEFAULT).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(check_sym_equivariance(3, 6).unwrap() < 1e-10);
    }

    #[test]
    fn unit_object_legs() {
        let unit = HigherObject::unit();
        let u = PolyTerm::unit(&unit);
        let v = PolyTerm::unit(&unit);
        let uv = u.compose_along(0, &v, 0).unwrap();
        let z = Morphism::scalar(crate::C64::new(0.5, 0.0));
        assert_eq!(uv.evaluate(&[Arg::plain(z.clone())]).unwrap(), z);
    }

    #[test]
    fn composed_terms_still_verify() {
        let mut r = rng::stream(4, 4);
        let a = random_comb_term("a", true, &mut r).unwrap();
        let b = random_comb_term("b", false, &mut r).unwrap();
        let t = b.compose_along(0, &a, 0).unwrap();
        let rep = verify(&t.to_internal().unwrap(), CategoryTag::FU, 10, &default_ext_schedule(), 1, Tolerance::DEFAULT);
        assert!(rep.passed(), "{rep:?}");
        let sw = switch_term("sw").unwrap().compose_along(0, &b, 0).unwrap();
        let rep = verify(&sw.to_internal().unwrap(), CategoryTag::FU, 10, &default_ext_schedule(), 1, Tolerance::DEFAULT);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn network_file_roundtrip_and_rejection() {
        let text = r#"{
            "terms": [
                {"id": "seq", "type": "seqcomp", "dim": 2},
                {"id": "pair", "type": "pair_state", "dim": 2}
            ],
            "compositions": [
                {"from": "pair", "from_leg": 0, "to": "seq", "to_leg": 0},
                {"from": "pair", "from_leg": 1, "to": "seq", "to_leg": 1}
            ]
        }"#;
        let net = NetworkSpec::from_json(text).unwrap().build().unwrap();
        let (w, err) = net.rejected.unwrap();
        assert_eq!(w, 1);
        assert!(matches!(err, Error::AlreadyConnected { .. }));

        let c = comb_of(&random_comb_term("c", false, &mut rng::stream(1, 2)).unwrap());
        let spec = NetworkSpec {
            terms: vec![
                TermSpec::Switch { id: "sw".into(), dim: 2, parties: None },
                TermSpec::Comb {
                    id: "c".into(),
                    comb: Box::new(serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap()),
                    outputs: None,
                },
                TermSpec::Internal {
                    id: "i".into(),
                    supermap: Box::new(identity_supermap(&HigherObject::square(&WireType::new(vec![2, 2]))).to_json()),
                    outputs: None,
                },
            ],
            compositions: vec![
                CompositionSpec { from: "c".into(), from_leg: 0, to: "sw".into(), to_leg: 1 },
                CompositionSpec { from: "sw".into(), from_leg: 0, to: "i".into(), to_leg: 0 },
            ],
        };
        let text = serde_json::to_string(&spec).unwrap();
        let net = NetworkSpec::from_json(&text).unwrap().build().unwrap();
        assert!(net.rejected.is_none());
        assert_eq!(net.components.len(), 1);
        let t = &net.components[0];
        let args = haar_plain_args(t, 3).unwrap();
        let out = t.evaluate(&args).unwrap();
        assert!(unitarity_defect(&out) < 1e-10);
        let _ = comb_to_internal(&c);
    }
}
