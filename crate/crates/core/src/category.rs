//! Membership tests and samplers for the concrete categories: linear maps
//! (`FHilb`), unitaries (`FU`) and quantum channels (`FQC`, stored as Choi
//! matrices).

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{mat_from_parts, row_major_parts, Mat, Morphism, Tolerance, WireType, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CategoryTag {
    FHilb,
    FU,
    FQC,
}

impl FromStr for CategoryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fhilb" => Ok(CategoryTag::FHilb),
            "fu" => Ok(CategoryTag::FU),
            "fqc" => Ok(CategoryTag::FQC),
            other => Err(Error::Invalid(format!("unknown category {other:?}"))),
        }
    }
}

impl fmt::Display for CategoryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CategoryTag::FHilb => "fhilb",
            CategoryTag::FU => "fu",
            CategoryTag::FQC => "fqc",
        };
        f.write_str(s)
    }
}

/// Max-entry distance of `U†U` and `UU†` from the identity; infinite for
/// non-square morphisms.
pub fn unitarity_defect(u: &Morphism) -> f64 {
    let m = u.mat();
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let id = Mat::identity(n, n);
    let a = (m.adjoint() * m - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let b = (m * m.adjoint() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    a.max(b)
}

pub fn is_unitary(u: &Morphism, tol: Tolerance) -> bool {
    unitarity_defect(u) <= tol.abs_tol
}

/// Max-entry distance of `V†V` from the identity.
pub fn isometry_defect(v: &Morphism) -> f64 {
    let m = v.mat();
    let n = m.ncols();
    (m.adjoint() * m - Mat::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted
/// descending (ties keep solver order) and each eigenvector's first
/// significant component made real and positive.
pub fn hermitian_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = v
            .iter()
            .find(|z| z.norm() > 1e-8)
            .copied()
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm();
        for r in 0..n {
            vecs[(r, col)] = v[r] * phase;
        }
    }
    (values, vecs)
}

/// Choi matrix `J = Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` on `in_w ⊗ out_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    in_w: WireType,
    out_w: WireType,
    mat: Mat,
}

impl ChoiMatrix {
    pub fn new(in_w: WireType, out_w: WireType, mat: Mat) -> Result<Self> {
        let n = in_w.total() * out_w.total();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Shape { rows: mat.nrows(), cols: mat.ncols(), cod_total: n, dom_total: n });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ChoiMatrix { in_w, out_w, mat })
    }

    pub fn in_w(&self) -> &WireType {
        &self.in_w
    }

    pub fn out_w(&self) -> &WireType {
        &self.out_w
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn rank(&self, tol: Tolerance) -> usize {
        let (vals, _) = hermitian_eigen(&self.mat);
        let cut = tol.scaled(self.mat.nrows());
        vals.iter().filter(|&&v| v > cut).count()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.mat).0.last().copied().unwrap_or(0.0)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Tr_out J`, an operator on the input space.
    pub fn trace_out(&self) -> Mat {
        let (di, d_o) = (self.in_w.total(), self.out_w.total());
        Mat::from_fn(di, di, |i, j| (0..d_o).map(|o| self.mat[(i * d_o + o, j * d_o + o)]).sum())
    }

    /// Max-entry distance of `Tr_out J` from the identity.
    pub fn tp_defect(&self) -> f64 {
        let di = self.in_w.total();
        (self.trace_out() - Mat::identity(di, di)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest violation among hermiticity, positivity and trace preservation.
    pub fn cptp_defect(&self) -> f64 {
        let neg = (-self.min_eigenvalue()).max(0.0);
        self.hermiticity_defect().max(neg).max(self.tp_defect())
    }

    pub fn to_json(&self) -> ChoiJson {
        let (re, im) = row_major_parts(&self.mat);
        ChoiJson {
            kind: "choi".into(),
            dom: self.in_w.factors().to_vec(),
            cod: self.out_w.factors().to_vec(),
            re,
            im,
        }
    }

    pub fn from_json(j: &ChoiJson) -> Result<Self> {
        if j.kind != "choi" {
            return Err(Error::Invalid(format!("expected kind \"choi\", found {:?}", j.kind)));
        }
        let in_w = WireType::try_new(j.dom.clone())?;
        let out_w = WireType::try_new(j.cod.clone())?;
        let n = in_w.total() * out_w.total();
        ChoiMatrix::new(in_w, out_w, mat_from_parts(n, n, &j.re, &j.im)?)
    }
}

/// Choi wire format; `dom`/`cod` are the channel's input and output wires.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiJson {
    pub kind: String,
    pub dom: Vec<usize>,
    pub cod: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub fn choi_of_kraus(kraus: &[Morphism]) -> Result<ChoiMatrix> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::Invalid("empty Kraus list".into()))?;
    let (in_w, out_w) = (first.dom().clone(), first.cod().clone());
    let (di, d_o) = (in_w.total(), out_w.total());
    let mut j = Mat::zeros(di * d_o, di * d_o);
    for k in kraus {
        if k.dom() != &in_w || k.cod() != &out_w {
            return Err(Error::TypeMismatch {
                context: "choi_of_kraus",
                expected: in_w.factors().to_vec(),
                found: k.dom().factors().to_vec(),
            });
        }
        let v = vectorize(k);
        j += &v * v.adjoint();
    }
    ChoiMatrix::new(in_w, out_w, j)
}

pub fn choi_of_unitary(u: &Morphism) -> ChoiMatrix {
    choi_of_kraus(std::slice::from_ref(u)).expect("single operator")
}

/// `|K⟩⟩ = Σ_i |i⟩ ⊗ K|i⟩`, indexed as `(i, o)`.
pub(crate) fn vectorize(k: &Morphism) -> Mat {
    let (di, d_o) = (k.dom().total(), k.cod().total());
    Mat::from_fn(di * d_o, 1, |r, _| k.entry(r % d_o, r / d_o))
}

pub fn is_cptp(j: &ChoiMatrix, tol: Tolerance) -> bool {
    let dim = j.mat.nrows();
    j.hermiticity_defect() <= tol.abs_tol
        && j.min_eigenvalue() >= -tol.scaled(dim)
        && j.tp_defect() <= tol.abs_tol
}

/// `Φ(ρ) = Tr_in[(ρᵀ ⊗ 1) J]`.
pub fn apply_channel(j: &ChoiMatrix, rho: &Morphism) -> Result<Morphism> {
    if rho.dom() != &j.in_w || rho.cod() != &j.in_w {
        return Err(Error::TypeMismatch {
            context: "apply_channel",
            expected: j.in_w.factors().to_vec(),
            found: rho.dom().factors().to_vec(),
        });
    }
    let (di, d_o) = (j.in_w.total(), j.out_w.total());
    let mut out = Mat::zeros(d_o, d_o);
    for i in 0..di {
        for k in 0..di {
            let r = rho.entry(i, k);
            if r == C64::new(0.0, 0.0) {
                continue;
            }
            for o in 0..d_o {
                for p in 0..d_o {
                    out[(o, p)] += r * j.mat[(i * d_o + o, k * d_o + p)];
                }
            }
        }
    }
    Morphism::new(j.out_w.clone(), j.out_w.clone(), out)
}

/// Complex Ginibre matrix with standard complex normal entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Haar-random unitary: QR of a Ginibre matrix with R's diagonal phases
/// moved into Q.
pub fn haar_unitary_from(w: &WireType, rng: &mut Rng) -> Morphism {
    let n = w.total();
    let g = ginibre(n, n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    Morphism::new(w.clone(), w.clone(), q).expect("square")
}

pub fn haar_unitary(w: &WireType, seed: u64) -> Morphism {
    haar_unitary_from(w, &mut crate::rng::stream(seed, 0))
}

/// Haar-random isometry `dom → cod` (first columns of a Haar unitary).
pub fn haar_isometry_from(dom: &WireType, cod: &WireType, rng: &mut Rng) -> Result<Morphism> {
    if dom.total() > cod.total() {
        return Err(Error::Invalid(format!("no isometry from {dom} into {cod}")));
    }
    let u = haar_unitary_from(cod, rng);
    let m = u.mat().columns(0, dom.total()).into_owned();
    Morphism::new(dom.clone(), cod.clone(), m)
}

/// Kraus operators of a random channel `in_w → out_w` with `env` Kraus
/// operators, from a Haar isometry into `out_w ⊗ env`.
pub fn random_kraus(in_w: &WireType, out_w: &WireType, env: usize, rng: &mut Rng) -> Result<Vec<Morphism>> {
    let big = out_w.concat(&WireType::qudit(env));
    let v = haar_isometry_from(in_w, &big, rng)?;
    (0..env)
        .map(|e| {
            let rows: Vec<usize> = (0..out_w.total()).map(|o| o * env + e).collect();
            let m = v.mat().select_rows(rows.iter());
            Morphism::new(in_w.clone(), out_w.clone(), m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::rng;

    fn qubit() -> WireType {
        WireType::qudit(2)
    }

    #[test]
    fn unitarity_examples() {
        assert!(is_unitary(&gates::hadamard(), Tolerance::DEFAULT));
        assert!(!is_unitary(&Morphism::cup(&qubit()), Tolerance::DEFAULT));
        let mut r = rng::stream(3, 0);
        let g = Morphism::new(qubit(), qubit(), ginibre(2, 2, &mut r)).unwrap();
        assert!(!is_unitary(&g, Tolerance::DEFAULT));
    }

    #[test]
    fn choi_examples() {
        let id = choi_of_unitary(&Morphism::identity(&qubit()));
        assert_eq!(id.rank(Tolerance::DEFAULT), 1);
        assert!((id.mat().trace().re - 2.0).abs() < 1e-14);
        assert_eq!(id.mat()[(0, 3)], C64::new(1.0, 0.0));

        let half = C64::new(0.5, 0.0);
        let paulis = [
            Morphism::identity(&qubit()),
            gates::pauli_x(),
            gates::pauli_y(),
            gates::pauli_z(),
        ];
        let kraus: Vec<Morphism> = paulis.iter().map(|p| p.scale(half)).collect();
        let dep = choi_of_kraus(&kraus).unwrap();
        let expect = Mat::identity(4, 4) * half;
        assert!((dep.mat() - expect).iter().all(|z| z.norm() < 1e-15));

        assert_eq!(choi_of_unitary(&gates::swap(2)).rank(Tolerance::DEFAULT), 1);

        let bad = [gates::pauli_x(), Morphism::identity(&WireType::qudit(3))];
        assert!(choi_of_kraus(&bad).is_err());
    }

    #[test]
    fn cptp_examples() {
        let tol = Tolerance::DEFAULT;
        assert!(is_cptp(&choi_of_unitary(&Morphism::identity(&qubit())), tol));
        let transpose = ChoiMatrix::new(qubit(), qubit(), gates::swap(2).mat().clone()).unwrap();
        assert!(!is_cptp(&transpose, tol));
        assert!((transpose.min_eigenvalue() + 1.0).abs() < 1e-12);
        let zero = ChoiMatrix::new(qubit(), qubit(), Mat::zeros(4, 4)).unwrap();
        assert!(!is_cptp(&zero, tol));
    }

    #[test]
    fn haar_examples() {
        let w = WireType::new(vec![2, 3]);
        let u = haar_unitary(&w, 11);
        assert!(unitarity_defect(&u) <= 1e-10);
        assert_eq!(u, haar_unitary(&w, 11));
        assert_ne!(u, haar_unitary(&w, 12));
        let norm: f64 = (0..6).map(|r| u.entry(r, 0).norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_channel_examples() {
        let mut r = rng::stream(5, 0);
        let rho = {
            let g = ginibre(2, 2, &mut r);
            let p = &g * g.adjoint();
            let t = p.trace();
            Morphism::new(qubit(), qubit(), p / t).unwrap()
        };
        let id = choi_of_unitary(&Morphism::identity(&qubit()));
        assert!(apply_channel(&id, &rho).unwrap().approx_eq(&rho, Tolerance::DEFAULT).unwrap());

        let half = C64::new(0.5, 0.0);
        let kraus: Vec<Morphism> = [
            Morphism::identity(&qubit()),
            gates::pauli_x(),
            gates::pauli_y(),
            gates::pauli_z(),
        ]
        .iter()
        .map(|p| p.scale(half))
        .collect();
        let dep = choi_of_kraus(&kraus).unwrap();
        let zero = gates::projector(2, 0);
        let out = apply_channel(&dep, &zero).unwrap();
        let mixed = Morphism::identity(&qubit()).scale(half);
        assert!(out.approx_eq(&mixed, Tolerance::DEFAULT).unwrap());

        let u = haar_unitary(&qubit(), 9);
        let out = apply_channel(&choi_of_unitary(&u), &rho).unwrap();
        let expect = u.compose(&rho).unwrap().compose(&u.dagger()).unwrap();
        assert!(out.approx_eq(&expect, Tolerance::DEFAULT).unwrap());
    }

    #[test]
    fn random_kraus_is_cptp() {
        let mut r = rng::stream(1, 0);
        let k = random_kraus(&qubit(), &WireType::qudit(3), 2, &mut r).unwrap();
        assert!(is_cptp(&choi_of_kraus(&k).unwrap(), Tolerance::DEFAULT));
    }

    #[test]
    fn choi_json_roundtrip() {
        let j = choi_of_unitary(&gates::hadamard());
        let s = serde_json::to_string(&j.to_json()).unwrap();
        assert!(s.contains("\"kind\":\"choi\""));
        let back = ChoiMatrix::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, j);
    }
}
