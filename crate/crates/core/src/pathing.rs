//! No-pathing constraints on unitaries, staircase witnesses, and path
//! contraction.
//!
//! A [`PathConstraint`] forbids directed paths from a block of input factors
//! (`source`) to a block of output factors (`target`). For a unitary this is
//! decided by a semicausality test: the reduced action onto `target` must not
//! depend on what is fed into `source`. When the test passes, the unitary
//! factors as a staircase
//!
//! ```text
//!   φ = (id_target ⊗ second) ∘ (first ⊗ id_source)
//!   first  : early  → target ⊗ M
//!   second : M ⊗ source → late
//! ```
//!
//! where `early` and `late` are the complementary input and output blocks.

use serde::{Deserialize, Serialize};

use crate::category::{hermitian_eigen, isometry_defect, unitarity_defect, CategoryTag};
use crate::error::{Error, Result};
use crate::tensor::{invert_permutation, Mat, Morphism, Tolerance, WireType, C64};

/// Forbids paths from the `source` input factors to the `target` output
/// factors. Indices refer to positions in the morphism's domain and codomain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConstraint {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl PathConstraint {
    pub fn forbid(source: impl Into<Vec<usize>>, target: impl Into<Vec<usize>>) -> Self {
        PathConstraint { source: source.into(), target: target.into() }
    }

    /// Domain order `early ++ source` and codomain order `target ++ late`.
    fn layout(&self, phi: &Morphism) -> Result<Layout> {
        let (nd, nc) = (phi.dom().len(), phi.cod().len());
        let check = |idx: &[usize], len: usize, what: &str| -> Result<Vec<bool>> {
            let mut used = vec![false; len];
            for &k in idx {
                if k >= len || used[k] {
                    return Err(Error::BadConstraint(format!("{what} index {k} invalid for {len} factors")));
                }
                used[k] = true;
            }
            Ok(used)
        };
        let in_src = check(&self.source, nd, "source")?;
        let in_tgt = check(&self.target, nc, "target")?;
        let early: Vec<usize> = (0..nd).filter(|&k| !in_src[k]).collect();
        let late: Vec<usize> = (0..nc).filter(|&k| !in_tgt[k]).collect();
        let dom_order: Vec<usize> = early.iter().chain(&self.source).copied().collect();
        let cod_order: Vec<usize> = self.target.iter().chain(&late).copied().collect();
        let pick = |w: &WireType, idx: &[usize]| WireType::new(idx.iter().map(|&k| w.factors()[k]).collect::<Vec<_>>());
        Ok(Layout {
            early: pick(phi.dom(), &early),
            source: pick(phi.dom(), &self.source),
            target: pick(phi.cod(), &self.target),
            late: pick(phi.cod(), &late),
            dom_order,
            cod_order,
        })
    }
}

struct Layout {
    early: WireType,
    source: WireType,
    target: WireType,
    late: WireType,
    dom_order: Vec<usize>,
    cod_order: Vec<usize>,
}

impl Layout {
    fn canonical(&self, phi: &Morphism) -> Result<Morphism> {
        phi.permute_factors(&self.dom_order, &self.cod_order)
    }
}

/// Entries of the canonical morphism as `psi[(t, l), (e, s)]`.
struct Blocks<'a> {
    psi: &'a Mat,
    de: usize,
    ds: usize,
    dt: usize,
    dl: usize,
}

impl Blocks<'_> {
    fn at(&self, t: usize, l: usize, e: usize, s: usize) -> C64 {
        self.psi[(t * self.dl + l, e * self.ds + s)]
    }

    /// `Σ_l ψ[(t,l),(e,s)] conj(ψ[(t',l),(e',s')])`.
    fn gram(&self, t: usize, e: usize, s: usize, t2: usize, e2: usize, s2: usize) -> C64 {
        (0..self.dl)
            .map(|l| self.at(t, l, e, s) * self.at(t2, l, e2, s2).conj())
            .sum()
    }
}

/// How far the reduced action onto `target` depends on the `source` input.
///
/// Zero exactly when `Tr_late[φ (X ⊗ σ) φ†] = Tr(σ) Ψ(X)` for all operators
/// `X`, `σ`; the test runs over the full matrix-unit basis, so it is complete.
pub fn signalling_deviation(phi: &Morphism, c: &PathConstraint) -> Result<f64> {
    let layout = c.layout(phi)?;
    let psi = layout.canonical(phi)?;
    let b = Blocks {
        psi: psi.mat(),
        de: layout.early.total(),
        ds: layout.source.total(),
        dt: layout.target.total(),
        dl: layout.late.total(),
    };
    let mut worst: f64 = 0.0;
    for t in 0..b.dt {
        for t2 in 0..b.dt {
            for e in 0..b.de {
                for e2 in 0..b.de {
                    let diag: Vec<C64> = (0..b.ds).map(|s| b.gram(t, e, s, t2, e2, s)).collect();
                    let mean = diag.iter().sum::<C64>() / b.ds as f64;
                    for z in &diag {
                        worst = worst.max((z - mean).norm());
                    }
                    for s in 0..b.ds {
                        for s2 in 0..b.ds {
                            if s != s2 {
                                worst = worst.max(b.gram(t, e, s, t2, e2, s2).norm());
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn require_unitary(phi: &Morphism, tol: Tolerance) -> Result<()> {
    let defect = unitarity_defect(phi);
    if defect > tol.scaled(phi.dom().total()) {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

fn decision_threshold(phi: &Morphism, tol: Tolerance) -> f64 {
    tol.scaled(phi.dom().total())
}

/// Decides whether a unitary satisfies the constraint.
pub fn check_no_path_unitary(phi: &Morphism, c: &PathConstraint, tol: Tolerance) -> Result<bool> {
    require_unitary(phi, tol)?;
    Ok(signalling_deviation(phi, c)? <= decision_threshold(phi, tol))
}

/// Staircase factorization witnessing a no-pathing constraint.
#[derive(Clone, Debug)]
pub struct PathWitness {
    /// `early → target ⊗ memory`.
    pub first: Morphism,
    /// `memory ⊗ source → late`.
    pub second: Morphism,
    pub memory: WireType,
    pub constraint: PathConstraint,
    dom_order: Vec<usize>,
    cod_order: Vec<usize>,
}

impl PathWitness {
    /// `(id ⊗ second) ∘ (first ⊗ id)` in the original factor order.
    pub fn reassemble(&self) -> Result<Morphism> {
        let target = self.first.cod().slice(0..self.first.cod().len() - self.memory.len());
        let source = self.second.dom().slice(self.memory.len()..self.second.dom().len());
        let step1 = self.first.tensor(&Morphism::identity(&source));
        let step2 = Morphism::identity(&target).tensor(&self.second);
        let canonical = step2.compose(&step1)?;
        canonical.permute_factors(
            &invert_permutation(&self.dom_order),
            &invert_permutation(&self.cod_order),
        )
    }
}

/// Extracts a staircase witness from a unitary satisfying `c`.
///
/// The first stage is the minimal Stinespring isometry of the marginal channel
/// `early → target` (source maximally mixed); its Kraus rank is the memory
/// dimension. The second stage is then solved linearly from the unitary.
pub fn extract_witness(phi: &Morphism, c: &PathConstraint, tol: Tolerance) -> Result<PathWitness> {
    require_unitary(phi, tol)?;
    let deviation = signalling_deviation(phi, c)?;
    if deviation > decision_threshold(phi, tol) {
        return Err(Error::ConstraintFails { deviation });
    }
    let layout = c.layout(phi)?;
    let psi = layout.canonical(phi)?;
    let (de, ds, dt, dl) = (
        layout.early.total(),
        layout.source.total(),
        layout.target.total(),
        layout.late.total(),
    );
    let b = Blocks { psi: psi.mat(), de, ds, dt, dl };

    // Choi of the marginal channel, indexed (e, t).
    let inv_ds = 1.0 / ds as f64;
    let choi = Mat::from_fn(de * dt, de * dt, |r, col| {
        let (e, t) = (r / dt, r % dt);
        let (e2, t2) = (col / dt, col % dt);
        (0..ds).map(|s| b.gram(t, e, s, t2, e2, s)).sum::<C64>() * inv_ds
    });
    let (vals, vecs) = hermitian_eigen(&choi);
    let cutoff = tol.scaled(de * dt);
    let rank = vals.iter().take_while(|&&v| v > cutoff).count();
    if rank == 0 {
        return Err(Error::ExtractionUnstable { residual: f64::INFINITY });
    }
    // Kraus operators K_m[t, e] = sqrt(λ_m) v_m[(e, t)].
    let kraus: Vec<Mat> = (0..rank)
        .map(|m| {
            let s = vals[m].sqrt();
            Mat::from_fn(dt, de, |t, e| vecs[(e * dt + t, m)] * s)
        })
        .collect();

    let memory = if rank == 1 { WireType::unit() } else { WireType::qudit(rank) };
    let first_cod = layout.target.concat(&memory);
    let first_mat = Mat::from_fn(dt * rank, de, |r, e| kraus[r % rank][(r / rank, e)]);
    let first = Morphism::new(layout.early.clone(), first_cod, first_mat)?;

    // second[l, (m, s)] = (1/λ_m) Σ_{t,e} ψ[(t,l),(e,s)] conj(K_m[t,e]).
    let second_mat = Mat::from_fn(dl, rank * ds, |l, col| {
        let (m, s) = (col / ds, col % ds);
        let mut acc = C64::new(0.0, 0.0);
        for t in 0..dt {
            for e in 0..de {
                acc += b.at(t, l, e, s) * kraus[m][(t, e)].conj();
            }
        }
        acc / vals[m]
    });
    let second = Morphism::new(memory.concat(&layout.source), layout.late.clone(), second_mat)?;

    let witness = PathWitness {
        first,
        second,
        memory,
        constraint: c.clone(),
        dom_order: layout.dom_order,
        cod_order: layout.cod_order,
    };
    let residual = witness.reassemble()?.max_abs_diff(phi)?;
    if residual > tol.scaled(phi.dom().total()) {
        return Err(Error::ExtractionUnstable { residual });
    }
    Ok(witness)
}

/// Whether both stages of a witness are isometries (the second is unitary
/// whenever its dimensions are square).
pub fn witness_isometry_defect(w: &PathWitness) -> f64 {
    isometry_defect(&w.first).max(isometry_defect(&w.second))
}

/// Closes output factor `loop_out` onto input factor `loop_in`.
///
/// In `FHilb` every contraction is allowed. In `FU` the contraction must not
/// create a causal loop: the unitary may not have a path from `loop_in` to
/// `loop_out`, and the result must remain unitary.
pub fn contract_path(
    phi: &Morphism,
    loop_out: usize,
    loop_in: usize,
    cat: CategoryTag,
    tol: Tolerance,
) -> Result<Morphism> {
    let contracted = phi.contract_wire(loop_out, loop_in)?;
    match cat {
        CategoryTag::FHilb => Ok(contracted),
        CategoryTag::FU => {
            require_unitary(phi, tol)?;
            let c = PathConstraint::forbid(vec![loop_in], vec![loop_out]);
            let deviation = signalling_deviation(phi, &c)?;
            if deviation > decision_threshold(phi, tol) {
                return Err(Error::PathViolation { deviation });
            }
            let defect = unitarity_defect(&contracted);
            if defect > tol.scaled(contracted.dom().total()) {
                return Err(Error::NotClosed { defect });
            }
            Ok(contracted)
        }
        CategoryTag::FQC => Err(Error::Invalid(
            "path contraction of channels is not supported; use FHilb or FU".into(),
        )),
    }
}

/// Checks that dressing `source` with `v` and `target` with `w` leaves the
/// decision unchanged. Always true in a groupoid; exposed for testing.
pub fn groupoid_sandwich_invariance(
    phi: &Morphism,
    v: &Morphism,
    w: &Morphism,
    c: &PathConstraint,
    tol: Tolerance,
) -> Result<bool> {
    let dressed = phi.precompose_on(&c.source, v)?.postcompose_on(&c.target, w)?;
    Ok(check_no_path_unitary(phi, c, tol)? == check_no_path_unitary(&dressed, c, tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::haar_unitary_from;
    use crate::gates;
    use crate::rng;

    fn q() -> WireType {
        WireType::qudit(2)
    }

    /// `(id_T ⊗ g)(f ⊗ id_S)` on three qubits: early=[2,2], source=[2],
    /// target=[2], late=[2,2], memory of dimension 2.
    pub(crate) fn staircase(seed: u64) -> Morphism {
        let mut r = rng::stream(seed, 0);
        let f = haar_unitary_from(&WireType::new(vec![2, 2]), &mut r);
        let g = haar_unitary_from(&WireType::new(vec![2, 2]), &mut r);
        Morphism::identity(&q()).tensor(&g).compose(&f.tensor(&Morphism::identity(&q()))).unwrap()
    }

    #[test]
    fn swap_cnot_product() {
        let tol = Tolerance::DEFAULT;
        let c = PathConstraint::forbid(vec![0], vec![0]);
        assert!(check_no_path_unitary(&gates::swap(2), &c, tol).unwrap());
        let ctrl_to_target = PathConstraint::forbid(vec![0], vec![1]);
        assert!(!check_no_path_unitary(&gates::cnot(), &ctrl_to_target, tol).unwrap());
        // Oracle: marginal on the target from control |0⟩ vs |1⟩ (target in |0⟩)
        // differ by the full swap |0⟩⟨0| ↔ |1⟩⟨1|.
        let dev = signalling_deviation(&gates::cnot(), &ctrl_to_target).unwrap();
        assert!(dev > 0.4, "deviation {dev}");
        let uv = gates::hadamard().tensor(&gates::phase_s());
        assert!(check_no_path_unitary(&uv, &ctrl_to_target, tol).unwrap());
        assert!(check_no_path_unitary(&uv, &PathConstraint::forbid(vec![1], vec![0]), tol).unwrap());
    }

    #[test]
    fn non_unitary_rejected() {
        let c = PathConstraint::forbid(vec![0], vec![0]);
        let m = Morphism::identity(&WireType::new(vec![2, 2])).scale(C64::new(2.0, 0.0));
        assert!(matches!(check_no_path_unitary(&m, &c, Tolerance::DEFAULT), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn extract_swap() {
        let tol = Tolerance::DEFAULT;
        let c = PathConstraint::forbid(vec![0], vec![0]);
        let w = extract_witness(&gates::swap(2), &c, tol).unwrap();
        assert!(w.reassemble().unwrap().max_abs_diff(&gates::swap(2)).unwrap() <= 1e-9);
        // The other direction forces the memory to carry the qubit across.
        let c2 = PathConstraint::forbid(vec![1], vec![1]);
        let w2 = extract_witness(&gates::swap(2), &c2, tol).unwrap();
        assert!(w2.reassemble().unwrap().max_abs_diff(&gates::swap(2)).unwrap() <= 1e-9);
    }

    #[test]
    fn extract_staircase_roundtrip() {
        let tol = Tolerance::DEFAULT;
        let c = PathConstraint::forbid(vec![2], vec![0]);
        for seed in 0..5 {
            let phi = staircase(seed);
            assert!(check_no_path_unitary(&phi, &c, tol).unwrap());
            let w = extract_witness(&phi, &c, tol).unwrap();
            assert_eq!(w.memory, q());
            assert!(w.reassemble().unwrap().max_abs_diff(&phi).unwrap() <= 1e-9);
            assert!(witness_isometry_defect(&w) <= 1e-9);
        }
    }

    #[test]
    fn extract_product_has_trivial_memory() {
        let mut r = rng::stream(4, 0);
        let u = haar_unitary_from(&q(), &mut r);
        let v = haar_unitary_from(&q(), &mut r);
        let c = PathConstraint::forbid(vec![1], vec![0]);
        let w = extract_witness(&u.tensor(&v), &c, Tolerance::DEFAULT).unwrap();
        assert!(w.memory.is_unit());
        assert!(w.reassemble().unwrap().max_abs_diff(&u.tensor(&v)).unwrap() <= 1e-9);
        // first is U up to a global phase.
        let ratio = w.first.entry(0, 0) / u.entry(0, 0);
        assert!(w.first.approx_eq(&u.scale(ratio), Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn extract_rejects_signalling() {
        let c = PathConstraint::forbid(vec![0], vec![1]);
        assert!(matches!(
            extract_witness(&gates::cnot(), &c, Tolerance::DEFAULT),
            Err(Error::ConstraintFails { .. })
        ));
    }

    #[test]
    fn contract_path_examples() {
        let tol = Tolerance::DEFAULT;
        let sw = gates::swap(2);
        assert_eq!(contract_path(&sw, 0, 0, CategoryTag::FU, tol).unwrap(), Morphism::identity(&q()));

        let u = gates::phase_s();
        let g = gates::hadamard();
        let ug = u.tensor(&g);
        let hilb = contract_path(&ug, 0, 0, CategoryTag::FHilb, tol).unwrap();
        let tr = u.trace().unwrap();
        assert!(hilb.approx_eq(&g.scale(tr), tol).unwrap());
        assert!(matches!(
            contract_path(&ug, 0, 0, CategoryTag::FU, tol),
            Err(Error::PathViolation { .. })
        ));

        // Staircase with the loop on the target/source wire pulls taut to
        // second ∘ (first with the target fed into the source).
        let phi = staircase(17);
        let looped = contract_path(&phi, 0, 2, CategoryTag::FU, tol).unwrap();
        let c = PathConstraint::forbid(vec![2], vec![0]);
        let w = extract_witness(&phi, &c, tol).unwrap();
        // first: [2,2] → target ⊗ M; second: M ⊗ source → late. Feed target
        // into source by swapping it next to the memory.
        let fed = w.first.permute_cod(&[1, 0]).unwrap();
        let taut = w.second.compose(&fed).unwrap();
        assert!(looped.approx_eq(&taut, tol).unwrap());
    }

    #[test]
    fn sandwich_examples() {
        let tol = Tolerance::DEFAULT;
        let c = PathConstraint::forbid(vec![0], vec![0]);
        let h = gates::hadamard();
        assert!(groupoid_sandwich_invariance(&gates::swap(2), &h, &h, &c, tol).unwrap());
        let id = Morphism::identity(&q());
        assert!(groupoid_sandwich_invariance(&gates::swap(2), &id, &id, &c, tol).unwrap());
        let mut r = rng::stream(8, 0);
        let v = haar_unitary_from(&q(), &mut r);
        let w = haar_unitary_from(&q(), &mut r);
        let c2 = PathConstraint::forbid(vec![0], vec![1]);
        assert!(!check_no_path_unitary(&gates::cnot(), &c2, tol).unwrap());
        assert!(groupoid_sandwich_invariance(&gates::cnot(), &v, &w, &c2, tol).unwrap());
    }
}
