//! Group actions, homomorphisms and coset bundles.
//!
//! A coset bundle for `φ: H → G` packages an `H`-invariant coset map
//! `q: G → G/H`, a section `s` with `q ∘ s = id`, and the unique action of
//! `G` on `G/H` that makes `q` equivariant.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::groups::{Group, GroupElement, GroupKind};
use crate::linalg::{self, Matrix};
use crate::space::{Point, Space};
use crate::stream::RandomStream;

type ApplyFn = dyn Fn(&GroupElement, &Point) -> Result<Point> + Send + Sync;

#[derive(Clone)]
pub struct Action {
    group: Group,
    space: Space,
    name: String,
    apply: Arc<ApplyFn>,
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Action({} on {} by {})",
            self.group, self.space, self.name
        )
    }
}

impl Action {
    pub fn new<F>(group: Group, space: Space, name: impl Into<String>, apply: F) -> Self
    where
        F: Fn(&GroupElement, &Point) -> Result<Point> + Send + Sync + 'static,
    {
        Action {
            group,
            space,
            name: name.into(),
            apply: Arc::new(apply),
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, g: &GroupElement, x: &Point) -> Result<Point> {
        if !self.group.contains(g) {
            return Err(Error::GroupMismatch(format!(
                "{g:?} is not an element of {}",
                self.group
            )));
        }
        self.space.check(x)?;
        (self.apply)(g, x)
    }

    /// `g · x = x`.
    pub fn trivial(group: Group, space: Space) -> Self {
        Action::new(group, space, "trivial", |_, x| Ok(x.clone()))
    }

    /// `g · g' = g g'` on the group's own underlying set.
    pub fn left_multiplication(group: Group) -> Self {
        let g2 = group.clone();
        Action::new(group.clone(), Space::Group(group), "left", move |g, x| {
            let h = x.as_element().expect("space check guarantees an element");
            Ok(Point::Element(g2.mul(g, h)?))
        })
    }

    /// Action on `R^{d×n}` column by column: matrix groups multiply on the
    /// left, translations add to every column, Euclidean pairs `(t, Q)` map
    /// `x ↦ Q x + t 1ᵀ`, permutations permute rows. The case `n = d` on
    /// `GL(d)`-valued inputs is left multiplication `A ↦ QA`.
    pub fn columnwise(group: Group, d: usize, n: usize) -> Self {
        Action::new(group, Space::matrix(d, n), "columnwise", |g, x| {
            let x = x.as_matrix().expect("space check guarantees a matrix");
            Ok(Point::Matrix(columnwise_apply(g, x)?))
        })
    }

    /// `g · y = y g⁻¹` on `R^{rows×d}`; for orthogonal `g` this is `y gᵀ`.
    pub fn right_inverse_multiplication(group: Group, rows: usize, d: usize) -> Self {
        let g2 = group.clone();
        Action::new(
            group,
            Space::matrix(rows, d),
            "right-inverse",
            move |g, y| {
                let y = y.as_matrix().expect("space check guarantees a matrix");
                let gi = g2.inv(g)?;
                let m = gi.as_matrix().ok_or_else(|| {
                    Error::GroupMismatch(format!("{gi:?} is not a matrix element"))
                })?;
                Ok(Point::Matrix(y * m))
            },
        )
    }

    /// Permutations act on `R^n` by `(σ·x)[σ(i)] = x[i]`.
    pub fn permute_coordinates(n: usize) -> Self {
        Action::new(Group::symmetric(n), Space::Vector(n), "permute", |g, x| {
            let GroupElement::Permutation(p) = g else {
                unreachable!("group check guarantees a permutation")
            };
            let v = x.as_vector().expect("space check guarantees a vector");
            Ok(Point::vector(&p.permute(v.as_slice())))
        })
    }

    /// Translations `T_d` acting additively on `R^d` (for `d = 1`, on scalars too).
    pub fn translate(d: usize, space: Space) -> Self {
        Action::new(Group::translation(d), space, "translate", |g, x| {
            let GroupElement::Translation(t) = g else {
                unreachable!("group check guarantees a translation")
            };
            match x {
                Point::Scalar(y) if t.len() == 1 => Ok(Point::Scalar(y + t[0])),
                Point::Vector(v) => Ok(Point::Vector(v + t)),
                _ => Err(Error::InputShape {
                    expected: format!("R^{}", t.len()),
                    got: format!("{x}"),
                }),
            }
        })
    }

    /// Verify the action axioms on `samples` random pairs; returns the worst
    /// (associativity, unitality) errors.
    pub fn axiom_errors(&self, samples: usize, stream: &mut RandomStream) -> Result<(f64, f64)> {
        let mut assoc: f64 = 0.0;
        let mut unit: f64 = 0.0;
        for _ in 0..samples {
            let g = self.group.random_element(stream)?;
            let h = self.group.random_element(stream)?;
            let x = self.space.random_point(stream)?;
            let lhs = self.apply(&g, &self.apply(&h, &x)?)?;
            let rhs = self.apply(&self.group.mul(&g, &h)?, &x)?;
            assoc = assoc.max(lhs.distance(&rhs) / (1.0 + rhs_scale(&rhs)));
            let e = self.apply(&self.group.identity(), &x)?;
            unit = unit.max(e.distance(&x));
        }
        Ok((assoc, unit))
    }
}

fn rhs_scale(p: &Point) -> f64 {
    p.coordinates()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(0.0)
}

fn columnwise_apply(g: &GroupElement, x: &Matrix) -> Result<Matrix> {
    match g {
        GroupElement::Identity => Ok(x.clone()),
        GroupElement::Orthogonal(m) | GroupElement::GeneralLinear(m) => Ok(m * x),
        GroupElement::Permutation(p) => Ok(p.matrix() * x),
        GroupElement::Translation(t) => {
            let mut out = x.clone();
            for mut col in out.column_iter_mut() {
                col += t;
            }
            Ok(out)
        }
        GroupElement::Pair(n, h) => {
            let hx = columnwise_apply(h, x)?;
            columnwise_apply(n, &hx)
        }
    }
}

/// `h · x = φ(h) · x`.
pub fn restrict_action(a: &Action, phi: &Homomorphism) -> Result<Action> {
    if phi.target() != a.group() {
        return Err(Error::GroupMismatch(format!(
            "cannot restrict an action of {} along a homomorphism into {}",
            a.group(),
            phi.target()
        )));
    }
    let (a2, phi2) = (a.clone(), phi.clone());
    Ok(Action::new(
        phi.source().clone(),
        a.space().clone(),
        format!("{}|{}", a.name(), phi.name()),
        move |h, x| a2.apply(&phi2.map(h)?, x),
    ))
}

/// `g · (x, y) = (g · x, g · y)`.
pub fn diagonal_action(ax: &Action, ay: &Action) -> Result<Action> {
    if ax.group() != ay.group() {
        return Err(Error::GroupMismatch(format!(
            "diagonal action needs one group, got {} and {}",
            ax.group(),
            ay.group()
        )));
    }
    let (ax2, ay2) = (ax.clone(), ay.clone());
    Ok(Action::new(
        ax.group().clone(),
        Space::pair(ax.space().clone(), ay.space().clone()),
        format!("({}, {})", ax.name(), ay.name()),
        move |g, p| {
            let (x, y) = p.as_pair().expect("space check guarantees a pair");
            Ok(Point::pair(ax2.apply(g, x)?, ay2.apply(g, y)?))
        },
    ))
}

type HomFn = dyn Fn(&GroupElement) -> Result<GroupElement> + Send + Sync;

#[derive(Clone)]
pub struct Homomorphism {
    source: Group,
    target: Group,
    name: String,
    map: Arc<HomFn>,
}

impl fmt::Debug for Homomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.name, self.source, self.target)
    }
}

impl Homomorphism {
    pub fn new<F>(source: Group, target: Group, name: impl Into<String>, map: F) -> Self
    where
        F: Fn(&GroupElement) -> Result<GroupElement> + Send + Sync + 'static,
    {
        Homomorphism {
            source,
            target,
            name: name.into(),
            map: Arc::new(map),
        }
    }

    pub fn source(&self) -> &Group {
        &self.source
    }

    pub fn target(&self) -> &Group {
        &self.target
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn map(&self, h: &GroupElement) -> Result<GroupElement> {
        if !self.source.contains(h) {
            return Err(Error::GroupMismatch(format!(
                "{h:?} is not an element of {}",
                self.source
            )));
        }
        (self.map)(h)
    }

    pub fn identity(g: Group) -> Self {
        Homomorphism::new(g.clone(), g, "id", |h| Ok(h.clone()))
    }

    /// The unique homomorphism `I → G`.
    pub fn from_trivial(g: Group) -> Self {
        let g2 = g.clone();
        Homomorphism::new(Group::trivial(), g, "e", move |_| Ok(g2.identity()))
    }

    /// Subgroup inclusion between matrix groups, e.g. `SO(d) ↪ O(d)` or
    /// `O(d) ↪ GL(d)`.
    pub fn matrix_inclusion(source: Group, target: Group) -> Result<Self> {
        let ok = match (source.kind(), target.kind()) {
            (
                GroupKind::Orthogonal { d: a, special: s },
                GroupKind::Orthogonal { d: b, special: t },
            ) => a == b && (*s || !*t),
            (GroupKind::Orthogonal { d: a, .. }, GroupKind::GeneralLinear { d: b }) => a == b,
            _ => false,
        };
        if !ok {
            return Err(Error::GroupMismatch(format!(
                "no matrix inclusion {source} -> {target}"
            )));
        }
        let to_gl = matches!(target.kind(), GroupKind::GeneralLinear { .. });
        Ok(Homomorphism::new(source, target, "incl", move |h| {
            let m = h.as_matrix().expect("source check guarantees a matrix");
            Ok(if to_gl {
                GroupElement::GeneralLinear(m)
            } else {
                GroupElement::Orthogonal(m)
            })
        }))
    }

    /// `i_N: n ↦ (n, e)` into `N ⋊ H`.
    pub fn semidirect_normal_inclusion(product: &Group) -> Result<Self> {
        let (n, h, _) = semidirect_parts(product)?;
        let e = h.identity();
        Ok(Homomorphism::new(
            n.clone(),
            product.clone(),
            "i_N",
            move |x| Ok(GroupElement::pair(x.clone(), e.clone())),
        ))
    }

    /// `i_H: h ↦ (e, h)` into `N ⋊ H`.
    pub fn semidirect_acting_inclusion(product: &Group) -> Result<Self> {
        let (n, h, _) = semidirect_parts(product)?;
        let e = n.identity();
        Ok(Homomorphism::new(
            h.clone(),
            product.clone(),
            "i_H",
            move |x| Ok(GroupElement::pair(e.clone(), x.clone())),
        ))
    }

    /// `self ∘ other`.
    pub fn after(&self, other: &Homomorphism) -> Result<Homomorphism> {
        if other.target() != self.source() {
            return Err(Error::GroupMismatch(format!(
                "cannot compose {self:?} after {other:?}"
            )));
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(Homomorphism::new(
            other.source.clone(),
            self.target.clone(),
            format!("{}∘{}", self.name, other.name),
            move |h| a.map(&b.map(h)?),
        ))
    }

    /// Worst violation of `φ(hh') = φ(h)φ(h')` and `φ(e) = e` over random pairs.
    pub fn law_error(&self, samples: usize, stream: &mut RandomStream) -> Result<f64> {
        let mut worst = self
            .map(&self.source.identity())?
            .distance(&self.target.identity());
        for _ in 0..samples {
            let a = self.source.random_element(stream)?;
            let b = self.source.random_element(stream)?;
            let lhs = self.map(&self.source.mul(&a, &b)?)?;
            let rhs = self.target.mul(&self.map(&a)?, &self.map(&b)?)?;
            worst = worst.max(lhs.distance(&rhs));
        }
        Ok(worst)
    }
}

fn semidirect_parts(product: &Group) -> Result<(Group, Group, crate::groups::Twist)> {
    product
        .semidirect_parts()
        .map(|(n, h, t)| (n.clone(), h.clone(), t.clone()))
        .ok_or_else(|| Error::GroupMismatch(format!("{product} is not a semidirect product")))
}

type PointFn = dyn Fn(&GroupElement) -> Result<Point> + Send + Sync;
type SectionFn = dyn Fn(&Point) -> Result<GroupElement> + Send + Sync;

/// Coset map `q`, section `s` and induced coset action for `φ: H → G`.
#[derive(Clone)]
pub struct CosetBundle {
    phi: Homomorphism,
    coset_space: Space,
    q: Arc<PointFn>,
    s: Arc<SectionFn>,
    coset_action: Action,
}

impl fmt::Debug for CosetBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CosetBundle({:?}, G/H = {})", self.phi, self.coset_space)
    }
}

/// Worst-case errors of the three bundle laws.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BundleLawErrors {
    pub right_inverse: f64,
    pub h_invariance: f64,
    pub g_equivariance: f64,
}

impl BundleLawErrors {
    pub fn max(&self) -> f64 {
        self.right_inverse
            .max(self.h_invariance)
            .max(self.g_equivariance)
    }
}

impl CosetBundle {
    pub fn new<Q, S>(
        phi: Homomorphism,
        coset_space: Space,
        q: Q,
        s: S,
        coset_action: Action,
    ) -> Self
    where
        Q: Fn(&GroupElement) -> Result<Point> + Send + Sync + 'static,
        S: Fn(&Point) -> Result<GroupElement> + Send + Sync + 'static,
    {
        CosetBundle {
            phi,
            coset_space,
            q: Arc::new(q),
            s: Arc::new(s),
            coset_action,
        }
    }

    pub fn phi(&self) -> &Homomorphism {
        &self.phi
    }

    /// The group `G` (target of φ).
    pub fn group(&self) -> &Group {
        self.phi.target()
    }

    pub fn coset_space(&self) -> &Space {
        &self.coset_space
    }

    pub fn coset_action(&self) -> &Action {
        &self.coset_action
    }

    pub fn q(&self, g: &GroupElement) -> Result<Point> {
        (self.q)(g)
    }

    pub fn s(&self, c: &Point) -> Result<GroupElement> {
        self.coset_space.check(c)?;
        (self.s)(c)
    }

    /// φ = id_G, q = s = id, coset action = left multiplication.
    pub fn trivial(g: Group) -> Self {
        CosetBundle::new(
            Homomorphism::from_trivial(g.clone()),
            Space::Group(g.clone()),
            |g| Ok(Point::Element(g.clone())),
            |c| {
                Ok(c.as_element()
                    .expect("space check guarantees an element")
                    .clone())
            },
            Action::left_multiplication(g),
        )
    }

    /// `O(d) ↪ GL(d)`: q(A) = AAᵀ, s = lower Cholesky factor, A·P = APAᵀ.
    pub fn orthogonal_in_gl(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyInput("dimension must be positive".into()));
        }
        let gl = Group::general_linear(d);
        let phi = Homomorphism::matrix_inclusion(Group::orthogonal(d), gl.clone())?;
        let action = Action::new(gl, Space::PositiveDefinite(d), "congruence", |a, p| {
            let a = a.as_matrix().expect("group check guarantees a matrix");
            let p = p.as_matrix().expect("space check guarantees a matrix");
            Ok(Point::Matrix(&a * p * a.transpose()))
        });
        Ok(CosetBundle::new(
            phi,
            Space::PositiveDefinite(d),
            |a| {
                let a = a
                    .as_matrix()
                    .ok_or_else(|| Error::GroupMismatch(format!("{a:?} is not a GL element")))?;
                Ok(Point::Matrix(&a * a.transpose()))
            },
            |p| {
                let l = linalg::cholesky_lower(
                    p.as_matrix().expect("space check guarantees a matrix"),
                )?;
                Ok(GroupElement::GeneralLinear(l))
            },
            action,
        ))
    }

    /// `SO(d) ↪ O(d)`: cosets are the sign of the determinant.
    pub fn special_in_orthogonal(d: usize) -> Result<Self> {
        let o = Group::orthogonal(d);
        let phi = Homomorphism::matrix_inclusion(Group::special_orthogonal(d), o.clone())?;
        let action = Action::new(o, Space::Scalar, "det-sign", |q, c| {
            let q = q.as_matrix().expect("group check guarantees a matrix");
            let c = c.as_scalar().expect("space check guarantees a scalar");
            Ok(Point::Scalar(q.determinant().signum() * c))
        });
        Ok(CosetBundle::new(
            phi,
            Space::Scalar,
            |q| {
                let q = q
                    .as_matrix()
                    .ok_or_else(|| Error::GroupMismatch(format!("{q:?} is not orthogonal")))?;
                Ok(Point::Scalar(q.determinant().signum()))
            },
            move |c| {
                let mut m = Matrix::identity(d, d);
                m[(0, 0)] = c
                    .as_scalar()
                    .expect("space check guarantees a scalar")
                    .signum();
                Ok(GroupElement::Orthogonal(m))
            },
            action,
        ))
    }

    /// Bundles for the factor inclusions of `N ⋊ H`.
    ///
    /// `ViaNormal`: φ = i_N, q = p_H, s = i_H, `(n, h) · h' = h h'`.
    /// `ViaActing`: φ = i_H, q = p_N, s = i_N, `(n, h) · n' = n · rho(h, n')`.
    pub fn semidirect(product: &Group, which: SemidirectFactor) -> Result<Self> {
        let (normal, acting, twist) = semidirect_parts(product)?;
        match which {
            SemidirectFactor::ViaNormal => {
                let phi = Homomorphism::semidirect_normal_inclusion(product)?;
                let e_n = normal.identity();
                let acting2 = acting.clone();
                let action = Action::new(
                    product.clone(),
                    Space::Group(acting.clone()),
                    "mul/N",
                    move |g, c| {
                        let (_, h) = g.as_pair().expect("group check guarantees a pair");
                        let h2 = c.as_element().expect("space check guarantees an element");
                        Ok(Point::Element(acting2.mul(h, h2)?))
                    },
                );
                Ok(CosetBundle::new(
                    phi,
                    Space::Group(acting),
                    |g| {
                        let (_, h) = g
                            .as_pair()
                            .ok_or_else(|| Error::GroupMismatch(format!("{g:?} is not a pair")))?;
                        Ok(Point::Element(h.clone()))
                    },
                    move |c| {
                        let h = c.as_element().expect("space check guarantees an element");
                        Ok(GroupElement::pair(e_n.clone(), h.clone()))
                    },
                    action,
                ))
            }
            SemidirectFactor::ViaActing => {
                let phi = Homomorphism::semidirect_acting_inclusion(product)?;
                let e_h = acting.identity();
                let normal2 = normal.clone();
                let action = Action::new(
                    product.clone(),
                    Space::Group(normal.clone()),
                    "mul/H",
                    move |g, c| {
                        let (n, h) = g.as_pair().expect("group check guarantees a pair");
                        let n2 = c.as_element().expect("space check guarantees an element");
                        Ok(Point::Element(normal2.mul(n, &twist.apply(h, n2)?)?))
                    },
                );
                Ok(CosetBundle::new(
                    phi,
                    Space::Group(normal),
                    |g| {
                        let (n, _) = g
                            .as_pair()
                            .ok_or_else(|| Error::GroupMismatch(format!("{g:?} is not a pair")))?;
                        Ok(Point::Element(n.clone()))
                    },
                    move |c| {
                        let n = c.as_element().expect("space check guarantees an element");
                        Ok(GroupElement::pair(n.clone(), e_h.clone()))
                    },
                    action,
                ))
            }
        }
    }

    /// Check `q∘s = id`, `q(g φ(h)⁻¹) = q(g)` and `q(g g') = g · q(g')` on
    /// `samples` random draws. Errors are relative to `1 + |value|`.
    pub fn law_errors(&self, samples: usize, stream: &mut RandomStream) -> Result<BundleLawErrors> {
        let g_grp = self.group().clone();
        let h_grp = self.phi.source().clone();
        let mut out = BundleLawErrors::default();
        for _ in 0..samples {
            let g = g_grp.random_element(stream)?;
            let g2 = g_grp.random_element(stream)?;
            let h = h_grp.random_element(stream)?;

            let c = self.q(&g)?;
            let back = self.q(&self.s(&c)?)?;
            out.right_inverse = out
                .right_inverse
                .max(back.distance(&c) / (1.0 + rhs_scale(&c)));

            let g_h = g_grp.mul(&g, &g_grp.inv(&self.phi.map(&h)?)?)?;
            let c_h = self.q(&g_h)?;
            out.h_invariance = out
                .h_invariance
                .max(c_h.distance(&c) / (1.0 + rhs_scale(&c)));

            let lhs = self.q(&g_grp.mul(&g, &g2)?)?;
            let rhs = self.coset_action.apply(&g, &self.q(&g2)?)?;
            out.g_equivariance = out
                .g_equivariance
                .max(lhs.distance(&rhs) / (1.0 + rhs_scale(&rhs)));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemidirectFactor {
    ViaNormal,
    ViaActing,
}
