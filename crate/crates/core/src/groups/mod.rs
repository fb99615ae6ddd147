//! Concrete groups: orthogonal, translation, general linear and symmetric
//! groups, plus semidirect and direct products built from them.
//!
//! Every operation is a deterministic function of its inputs. Compact groups
//! carry a Haar sampler; finite groups also carry an exact element list.

mod permutation;

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::stream::RandomStream;

pub use permutation::Permutation;

/// Tolerance used when checking group axioms in double precision.
pub const AXIOM_TOL: f64 = 1e-9;
/// Orthogonal products are re-orthonormalised once drift exceeds this.
pub const REORTHONORMALIZE_TOL: f64 = 1e-12;
/// GL(d) membership threshold on |det|.
pub const GL_DET_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    /// The single element of the trivial group.
    Identity,
    Orthogonal(Matrix),
    Translation(Vector),
    GeneralLinear(Matrix),
    Permutation(Permutation),
    /// Element of a semidirect or direct product: `(normal, acting)`.
    Pair(Box<GroupElement>, Box<GroupElement>),
}

impl GroupElement {
    pub fn pair(a: GroupElement, b: GroupElement) -> Self {
        GroupElement::Pair(Box::new(a), Box::new(b))
    }

    /// `(t, Q)` in T_d ⋊ O(d).
    pub fn euclidean(t: Vector, q: Matrix) -> Self {
        Self::pair(GroupElement::Translation(t), GroupElement::Orthogonal(q))
    }

    /// The matrix behind Orthogonal / GeneralLinear / Permutation elements.
    pub fn as_matrix(&self) -> Option<Matrix> {
        match self {
            GroupElement::Orthogonal(m) | GroupElement::GeneralLinear(m) => Some(m.clone()),
            GroupElement::Permutation(p) => Some(p.matrix()),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&GroupElement, &GroupElement)> {
        match self {
            GroupElement::Pair(a, b) => Some((a, b)),
            _ => None,
        }
    }

    /// Distance used by the tolerance checks; infinite across variants.
    pub fn distance(&self, other: &GroupElement) -> f64 {
        use GroupElement::*;
        match (self, other) {
            (Identity, Identity) => 0.0,
            (Orthogonal(a), Orthogonal(b)) | (GeneralLinear(a), GeneralLinear(b)) => {
                if a.shape() == b.shape() {
                    (a - b).norm()
                } else {
                    f64::INFINITY
                }
            }
            (Translation(a), Translation(b)) if a.len() == b.len() => (a - b).norm(),
            (Permutation(a), Permutation(b)) => {
                if a == b {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            (Pair(a0, a1), Pair(b0, b1)) => a0.distance(b0).max(a1.distance(b1)),
            _ => f64::INFINITY,
        }
    }
}

type TwistFn = dyn Fn(&GroupElement, &GroupElement) -> Result<GroupElement> + Send + Sync;

/// An action of the acting group H on the normal group N by automorphisms,
/// written `rho(h, n)`.
#[derive(Clone)]
pub struct Twist {
    name: String,
    apply: Arc<TwistFn>,
}

impl Twist {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&GroupElement, &GroupElement) -> Result<GroupElement> + Send + Sync + 'static,
    {
        Twist {
            name: name.into(),
            apply: Arc::new(f),
        }
    }

    /// `rho(h, n) = n`; the semidirect product is then the direct product.
    pub fn trivial() -> Self {
        Twist::new("trivial", |_, n| Ok(n.clone()))
    }

    /// Orthogonal (or GL) matrices acting on translations: `rho(Q, t) = Q t`.
    pub fn linear_on_translations() -> Self {
        Twist::new("linear", |h, n| match (h.as_matrix(), n) {
            (Some(q), GroupElement::Translation(t)) if q.ncols() == t.len() => {
                Ok(GroupElement::Translation(q * t))
            }
            _ => Err(Error::GroupMismatch(format!(
                "linear twist expects (matrix, translation), got ({h:?}, {n:?})"
            ))),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, h: &GroupElement, n: &GroupElement) -> Result<GroupElement> {
        (self.apply)(h, n)
    }

    pub fn is_trivial(&self) -> bool {
        self.name == "trivial"
    }
}

impl PartialEq for Twist {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl fmt::Debug for Twist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Twist({})", self.name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupKind {
    Trivial,
    Orthogonal {
        d: usize,
        special: bool,
    },
    Translation {
        d: usize,
    },
    GeneralLinear {
        d: usize,
    },
    Symmetric {
        n: usize,
    },
    Semidirect {
        normal: Group,
        acting: Group,
        twist: Twist,
    },
}

/// A group descriptor. Cheap to clone and safe to share across threads.
#[derive(Clone, PartialEq)]
pub struct Group(Arc<GroupKind>);

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Group {
    fn from_kind(kind: GroupKind) -> Self {
        Group(Arc::new(kind))
    }

    pub fn trivial() -> Self {
        Self::from_kind(GroupKind::Trivial)
    }

    pub fn orthogonal(d: usize) -> Self {
        Self::from_kind(GroupKind::Orthogonal { d, special: false })
    }

    pub fn special_orthogonal(d: usize) -> Self {
        Self::from_kind(GroupKind::Orthogonal { d, special: true })
    }

    pub fn translation(d: usize) -> Self {
        Self::from_kind(GroupKind::Translation { d })
    }

    pub fn general_linear(d: usize) -> Self {
        Self::from_kind(GroupKind::GeneralLinear { d })
    }

    pub fn symmetric(n: usize) -> Self {
        Self::from_kind(GroupKind::Symmetric { n })
    }

    /// N ⋊ H with `(n, h)(n', h') = (n · rho(h, n'), h h')`.
    ///
    /// The twist is checked on seeded random samples: it must act by
    /// automorphisms and satisfy the action axioms, within [`AXIOM_TOL`].
    pub fn semidirect_product(normal: Group, acting: Group, twist: Twist) -> Result<Self> {
        let mut stream = RandomStream::new(0x5e41_d1ec);
        let mut worst: f64 = 0.0;
        for _ in 0..64 {
            let n1 = normal.random_element(&mut stream)?;
            let n2 = normal.random_element(&mut stream)?;
            let h1 = acting.random_element(&mut stream)?;
            let h2 = acting.random_element(&mut stream)?;
            // rho(h, n n') = rho(h, n) rho(h, n')
            let lhs = twist.apply(&h1, &normal.mul(&n1, &n2)?)?;
            let rhs = normal.mul(&twist.apply(&h1, &n1)?, &twist.apply(&h1, &n2)?)?;
            worst = worst.max(rel_distance(&lhs, &rhs));
            // rho(h h', n) = rho(h, rho(h', n))
            let lhs = twist.apply(&acting.mul(&h1, &h2)?, &n1)?;
            let rhs = twist.apply(&h1, &twist.apply(&h2, &n1)?)?;
            worst = worst.max(rel_distance(&lhs, &rhs));
            let unit = twist.apply(&acting.identity(), &n1)?;
            worst = worst.max(rel_distance(&unit, &n1));
        }
        if !(worst <= AXIOM_TOL) {
            return Err(Error::InvalidSemidirect { err: worst });
        }
        Ok(Self::from_kind(GroupKind::Semidirect {
            normal,
            acting,
            twist,
        }))
    }

    /// G × H, realised as the semidirect product with the trivial twist.
    pub fn direct_product(g: Group, h: Group) -> Self {
        Self::from_kind(GroupKind::Semidirect {
            normal: g,
            acting: h,
            twist: Twist::trivial(),
        })
    }

    /// SE(d) = T_d ⋊ SO(d).
    pub fn special_euclidean(d: usize) -> Self {
        Self::semidirect_product(
            Group::translation(d),
            Group::special_orthogonal(d),
            Twist::linear_on_translations(),
        )
        .expect("rotation twist is an automorphism action")
    }

    /// E(d) = T_d ⋊ O(d).
    pub fn euclidean(d: usize) -> Self {
        Self::semidirect_product(
            Group::translation(d),
            Group::orthogonal(d),
            Twist::linear_on_translations(),
        )
        .expect("orthogonal twist is an automorphism action")
    }

    pub fn kind(&self) -> &GroupKind {
        &self.0
    }

    pub fn name(&self) -> String {
        match self.kind() {
            GroupKind::Trivial => "I".into(),
            GroupKind::Orthogonal { d, special: false } => format!("O({d})"),
            GroupKind::Orthogonal { d, special: true } => format!("SO({d})"),
            GroupKind::Translation { d } => format!("T({d})"),
            GroupKind::GeneralLinear { d } => format!("GL({d})"),
            GroupKind::Symmetric { n } => format!("S({n})"),
            GroupKind::Semidirect {
                normal,
                acting,
                twist,
            } => {
                if twist.is_trivial() {
                    format!("{normal}×{acting}")
                } else {
                    format!("{normal}⋊{acting}")
                }
            }
        }
    }

    pub fn semidirect_parts(&self) -> Option<(&Group, &Group, &Twist)> {
        match self.kind() {
            GroupKind::Semidirect {
                normal,
                acting,
                twist,
            } => Some((normal, acting, twist)),
            _ => None,
        }
    }

    /// Matrix size for matrix groups.
    pub fn matrix_dim(&self) -> Option<usize> {
        match self.kind() {
            GroupKind::Orthogonal { d, .. } | GroupKind::GeneralLinear { d } => Some(*d),
            GroupKind::Symmetric { n } => Some(*n),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self.kind() {
            GroupKind::Trivial => GroupElement::Identity,
            GroupKind::Orthogonal { d, .. } => GroupElement::Orthogonal(Matrix::identity(*d, *d)),
            GroupKind::Translation { d } => GroupElement::Translation(Vector::zeros(*d)),
            GroupKind::GeneralLinear { d } => GroupElement::GeneralLinear(Matrix::identity(*d, *d)),
            GroupKind::Symmetric { n } => GroupElement::Permutation(Permutation::identity(*n)),
            GroupKind::Semidirect { normal, acting, .. } => {
                GroupElement::pair(normal.identity(), acting.identity())
            }
        }
    }

    /// Membership test honouring the representation invariants.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self.kind(), g) {
            (GroupKind::Trivial, GroupElement::Identity) => true,
            (GroupKind::Orthogonal { d, special }, GroupElement::Orthogonal(q)) => {
                q.nrows() == *d
                    && q.ncols() == *d
                    && linalg::orthogonality_defect(q) <= AXIOM_TOL
                    && (!special || q.determinant() > 0.0)
            }
            (GroupKind::Translation { d }, GroupElement::Translation(t)) => t.len() == *d,
            (GroupKind::GeneralLinear { d }, GroupElement::GeneralLinear(a)) => {
                a.nrows() == *d && a.ncols() == *d && a.determinant().abs() > GL_DET_TOL
            }
            (GroupKind::Symmetric { n }, GroupElement::Permutation(p)) => {
                p.len() == *n && p.is_bijection()
            }
            (GroupKind::Semidirect { normal, acting, .. }, GroupElement::Pair(a, b)) => {
                normal.contains(a) && acting.contains(b)
            }
            _ => false,
        }
    }

    fn mismatch(&self, what: &str, g: &GroupElement) -> Error {
        Error::GroupMismatch(format!(
            "{what}: {g:?} is not an element of {}",
            self.name()
        ))
    }

    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        use GroupElement as E;
        match (self.kind(), g, h) {
            (GroupKind::Trivial, E::Identity, E::Identity) => Ok(E::Identity),
            (GroupKind::Orthogonal { d, special }, E::Orthogonal(a), E::Orthogonal(b))
                if a.nrows() == *d && b.nrows() == *d =>
            {
                let mut p = a * b;
                if linalg::orthogonality_defect(&p) > REORTHONORMALIZE_TOL {
                    p = reorthonormalize(&p, *special);
                }
                Ok(E::Orthogonal(p))
            }
            (GroupKind::Translation { d }, E::Translation(a), E::Translation(b))
                if a.len() == *d && b.len() == *d =>
            {
                Ok(E::Translation(a + b))
            }
            (GroupKind::GeneralLinear { d }, E::GeneralLinear(a), E::GeneralLinear(b))
                if a.nrows() == *d && b.nrows() == *d =>
            {
                Ok(E::GeneralLinear(a * b))
            }
            (GroupKind::Symmetric { n }, E::Permutation(a), E::Permutation(b))
                if a.len() == *n && b.len() == *n =>
            {
                Ok(E::Permutation(a.compose(b)))
            }
            (
                GroupKind::Semidirect {
                    normal,
                    acting,
                    twist,
                },
                E::Pair(n1, h1),
                E::Pair(n2, h2),
            ) => {
                let n = normal.mul(n1, &twist.apply(h1, n2)?)?;
                let h = acting.mul(h1, h2)?;
                Ok(E::pair(n, h))
            }
            _ => Err(if self.contains(g) {
                self.mismatch("mul", h)
            } else {
                self.mismatch("mul", g)
            }),
        }
    }

    pub fn inv(&self, g: &GroupElement) -> Result<GroupElement> {
        use GroupElement as E;
        match (self.kind(), g) {
            (GroupKind::Trivial, E::Identity) => Ok(E::Identity),
            (GroupKind::Orthogonal { d, .. }, E::Orthogonal(q)) if q.nrows() == *d => {
                Ok(E::Orthogonal(q.transpose()))
            }
            (GroupKind::Translation { d }, E::Translation(t)) if t.len() == *d => {
                Ok(E::Translation(-t))
            }
            (GroupKind::GeneralLinear { d }, E::GeneralLinear(a)) if a.nrows() == *d => {
                Ok(E::GeneralLinear(linalg::lu_inverse(a)?))
            }
            (GroupKind::Symmetric { n }, E::Permutation(p)) if p.len() == *n => {
                Ok(E::Permutation(p.inverse()))
            }
            // (n, h)^{-1} = (rho(h^{-1}, n^{-1}), h^{-1})
            (
                GroupKind::Semidirect {
                    normal,
                    acting,
                    twist,
                },
                E::Pair(n, h),
            ) => {
                let h_inv = acting.inv(h)?;
                let n_inv = twist.apply(&h_inv, &normal.inv(n)?)?;
                Ok(E::pair(n_inv, h_inv))
            }
            _ => Err(self.mismatch("inv", g)),
        }
    }

    pub fn has_haar(&self) -> bool {
        match self.kind() {
            GroupKind::Trivial | GroupKind::Orthogonal { .. } | GroupKind::Symmetric { .. } => true,
            GroupKind::Translation { .. } | GroupKind::GeneralLinear { .. } => false,
            GroupKind::Semidirect { normal, acting, .. } => normal.has_haar() && acting.has_haar(),
        }
    }

    /// A draw from the normalised Haar measure.
    pub fn haar_sample(&self, stream: &mut RandomStream) -> Result<GroupElement> {
        match self.kind() {
            GroupKind::Trivial => Ok(GroupElement::Identity),
            GroupKind::Orthogonal { d, special } => {
                let z = linalg::gaussian_matrix(*d, *d, stream);
                let mut q = linalg::qr_sign_fixed(&z);
                if *special && q.determinant() < 0.0 {
                    q.column_mut(0).neg_mut();
                }
                Ok(GroupElement::Orthogonal(q))
            }
            GroupKind::Symmetric { n } => {
                let mut images: Vec<usize> = (0..*n).collect();
                images.shuffle(stream);
                Ok(GroupElement::Permutation(
                    Permutation::new(images).expect("shuffle preserves bijection"),
                ))
            }
            // Haar on a compact semidirect product is the product of the factors' Haar measures.
            GroupKind::Semidirect { normal, acting, .. } if self.has_haar() => {
                let n = normal.haar_sample(stream)?;
                let h = acting.haar_sample(stream)?;
                Ok(GroupElement::pair(n, h))
            }
            _ => Err(Error::NoHaar(self.name())),
        }
    }

    /// A random element for property checks: Haar when available, otherwise
    /// Gaussian translations and Gaussian (nonsingular) matrices.
    pub fn random_element(&self, stream: &mut RandomStream) -> Result<GroupElement> {
        match self.kind() {
            GroupKind::Translation { d } => Ok(GroupElement::Translation(linalg::gaussian_vector(
                *d, stream,
            ))),
            GroupKind::GeneralLinear { d } => loop {
                let a = linalg::gaussian_matrix(*d, *d, stream);
                if linalg::condition_number(&a) < 1e3 {
                    return Ok(GroupElement::GeneralLinear(a));
                }
            },
            GroupKind::Semidirect { normal, acting, .. } => {
                let n = normal.random_element(stream)?;
                let h = acting.random_element(stream)?;
                Ok(GroupElement::pair(n, h))
            }
            _ => self.haar_sample(stream),
        }
    }

    /// Every element exactly once, for finite groups.
    pub fn elements(&self) -> Option<Vec<GroupElement>> {
        match self.kind() {
            GroupKind::Trivial => Some(vec![GroupElement::Identity]),
            GroupKind::Symmetric { n } => Some(
                Permutation::all(*n)
                    .into_iter()
                    .map(GroupElement::Permutation)
                    .collect(),
            ),
            GroupKind::Semidirect { normal, acting, .. } => {
                let ns = normal.elements()?;
                let hs = acting.elements()?;
                let mut out = Vec::with_capacity(ns.len() * hs.len());
                for n in &ns {
                    for h in &hs {
                        out.push(GroupElement::pair(n.clone(), h.clone()));
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.elements().is_some()
    }
}

fn rel_distance(a: &GroupElement, b: &GroupElement) -> f64 {
    let scale = match a {
        GroupElement::Translation(t) => 1.0 + t.norm(),
        GroupElement::GeneralLinear(m) => 1.0 + m.norm(),
        _ => 1.0,
    };
    a.distance(b) / scale
}

fn reorthonormalize(p: &Matrix, special: bool) -> Matrix {
    let mut q = linalg::qr_sign_fixed(p);
    if special && q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation2;

    fn rot(deg: f64) -> GroupElement {
        GroupElement::Orthogonal(rotation2(deg.to_radians()))
    }

    #[test]
    fn quarter_turns_compose_to_minus_identity() {
        let g = Group::orthogonal(2);
        let p = g.mul(&rot(90.0), &rot(90.0)).unwrap();
        let expect =
            GroupElement::Orthogonal(Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
        assert!(p.distance(&expect) < 1e-15);
    }

    #[test]
    fn se2_product_by_hand() {
        let se2 = Group::special_euclidean(2);
        let a = GroupElement::euclidean(
            Vector::from_vec(vec![1.0, 0.0]),
            rotation2(std::f64::consts::FRAC_PI_2),
        );
        let b = GroupElement::euclidean(Vector::from_vec(vec![0.0, 1.0]), Matrix::identity(2, 2));
        let ab = se2.mul(&a, &b).unwrap();
        let expect =
            GroupElement::euclidean(Vector::zeros(2), rotation2(std::f64::consts::FRAC_PI_2));
        assert!(ab.distance(&expect) < 1e-15, "{ab:?}");
        assert_eq!(
            se2.identity(),
            GroupElement::euclidean(Vector::zeros(2), Matrix::identity(2, 2))
        );
    }

    #[test]
    fn inverses_by_hand() {
        let t = Group::translation(2);
        let g = GroupElement::Translation(Vector::from_vec(vec![1.0, -2.0]));
        assert_eq!(
            t.inv(&g).unwrap(),
            GroupElement::Translation(Vector::from_vec(vec![-1.0, 2.0]))
        );
        let o = Group::orthogonal(2);
        let q = rot(37.0);
        let qi = o.inv(&q).unwrap();
        assert!(o.mul(&q, &qi).unwrap().distance(&o.identity()) < 1e-12);
        assert_eq!(o.inv(&o.identity()).unwrap(), o.identity());
    }

    #[test]
    fn singular_gl_inverse_errors() {
        let gl = Group::general_linear(2);
        let a = GroupElement::GeneralLinear(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(matches!(gl.inv(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn mismatched_kinds_error() {
        let o = Group::orthogonal(2);
        let t = GroupElement::Translation(Vector::zeros(2));
        assert!(matches!(
            o.mul(&o.identity(), &t),
            Err(Error::GroupMismatch(_))
        ));
        let o3 = Group::orthogonal(3);
        assert!(o.mul(&o.identity(), &o3.identity()).is_err());
    }

    #[test]
    fn no_haar_on_noncompact() {
        let mut s = RandomStream::new(0);
        for g in [
            Group::translation(2),
            Group::general_linear(2),
            Group::special_euclidean(2),
        ] {
            assert!(matches!(g.haar_sample(&mut s), Err(Error::NoHaar(_))));
        }
    }

    #[test]
    fn haar_orthogonal_is_orthogonal() {
        let mut s = RandomStream::new(11);
        for d in 1..6 {
            for special in [false, true] {
                let g = if special {
                    Group::special_orthogonal(d)
                } else {
                    Group::orthogonal(d)
                };
                let q = g.haar_sample(&mut s).unwrap();
                let m = q.as_matrix().unwrap();
                assert!(linalg::orthogonality_defect(&m) <= 1e-10);
                if special {
                    assert!(m.determinant() > 0.0);
                }
                assert!(g.contains(&q));
            }
        }
    }

    #[test]
    fn trivial_twist_is_direct_product() {
        let g =
            Group::semidirect_product(Group::orthogonal(2), Group::symmetric(2), Twist::trivial())
                .unwrap();
        let mut s = RandomStream::new(4);
        let a = g.random_element(&mut s).unwrap();
        let b = g.random_element(&mut s).unwrap();
        let ab = g.mul(&a, &b).unwrap();
        let (a0, a1) = a.as_pair().unwrap();
        let (b0, b1) = b.as_pair().unwrap();
        let o = Group::orthogonal(2);
        let s2 = Group::symmetric(2);
        let expect = GroupElement::pair(o.mul(a0, b0).unwrap(), s2.mul(a1, b1).unwrap());
        assert!(ab.distance(&expect) < 1e-12);
        let ai = g.inv(&a).unwrap();
        let expect = GroupElement::pair(o.inv(a0).unwrap(), s2.inv(a1).unwrap());
        assert!(ai.distance(&expect) < 1e-12);
    }

    #[test]
    fn broken_twist_rejected() {
        // Translating a translation is not an automorphism of T_d.
        let bad = Twist::new("shift", |_, n| match n {
            GroupElement::Translation(t) => Ok(GroupElement::Translation(t.add_scalar(1.0))),
            _ => unreachable!(),
        });
        let r = Group::semidirect_product(Group::translation(2), Group::orthogonal(2), bad);
        assert!(matches!(r, Err(Error::InvalidSemidirect { .. })));
    }

    #[test]
    fn finite_enumeration() {
        assert_eq!(Group::symmetric(3).elements().unwrap().len(), 6);
        assert_eq!(Group::trivial().elements().unwrap().len(), 1);
        let d = Group::direct_product(Group::symmetric(2), Group::symmetric(3));
        assert_eq!(d.elements().unwrap().len(), 12);
        assert!(Group::orthogonal(2).elements().is_none());
    }
}
