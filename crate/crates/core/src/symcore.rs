//! The symmetrisation combinator and its companions.
//!
//! Given a coset bundle for `φ: H → G`, actions of `G` on `X` and `Y`, and a
//! `G`-equivariant `γ: X → G/H`, [`symmetrise`] turns an `H`-equivariant map
//! `k: X → Y` into a `G`-equivariant one. Sampling follows
//! `Γ ~ γ(·|x)`, `g = s(Γ)`, `y ~ k(·|g⁻¹·x)`, return `g·y`.
//! Stream layout: `split(0)` feeds `γ`, `split(1)` feeds `k`.

use crate::equivariance::{Action, CosetBundle};
use crate::error::{Error, Result};
use crate::groups::GroupElement;
use crate::space::{Point, Space};
use crate::stochmap::{Distribution, StochasticMap};
use crate::stream::RandomStream;

/// How the equivariance of `γ` was established when a spec was built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaCheck {
    /// Exact distribution comparison over every element of a finite group.
    Exact,
    /// Pointwise comparison of a deterministic γ on random probes.
    Pointwise,
    /// Mean comparison of sampled coset coordinates.
    Statistical,
    /// Verification was skipped by the caller.
    Skipped,
}

#[derive(Clone, Debug)]
pub struct SymmetrisationSpec {
    bundle: CosetBundle,
    action_x: Action,
    action_y: Action,
    gamma: StochasticMap,
    check: GammaCheck,
}

impl SymmetrisationSpec {
    /// Build a spec and verify that `gamma` is equivariant.
    pub fn new(
        bundle: CosetBundle,
        action_x: Action,
        action_y: Action,
        gamma: StochasticMap,
    ) -> Result<Self> {
        let mut spec = Self::unchecked(bundle, action_x, action_y, gamma)?;
        spec.check = spec.verify_gamma(&mut RandomStream::new(0x9a33a))?;
        Ok(spec)
    }

    /// Build a spec with structural checks only; equivariance of `gamma` is
    /// left to the caller.
    pub fn unchecked(
        bundle: CosetBundle,
        action_x: Action,
        action_y: Action,
        gamma: StochasticMap,
    ) -> Result<Self> {
        let g = bundle.group();
        if action_x.group() != g || action_y.group() != g {
            return Err(Error::GroupMismatch(format!(
                "actions must be of {g}, got {} and {}",
                action_x.group(),
                action_y.group()
            )));
        }
        if gamma.codomain() != bundle.coset_space() {
            return Err(Error::CompositionType(format!(
                "gamma lands in {}, coset space is {}",
                gamma.codomain(),
                bundle.coset_space()
            )));
        }
        if gamma.domain() != action_x.space() {
            return Err(Error::CompositionType(format!(
                "gamma reads {}, X is {}",
                gamma.domain(),
                action_x.space()
            )));
        }
        Ok(SymmetrisationSpec {
            bundle,
            action_x,
            action_y,
            gamma,
            check: GammaCheck::Skipped,
        })
    }

    pub fn bundle(&self) -> &CosetBundle {
        &self.bundle
    }

    pub fn action_x(&self) -> &Action {
        &self.action_x
    }

    pub fn action_y(&self) -> &Action {
        &self.action_y
    }

    pub fn gamma(&self) -> &StochasticMap {
        &self.gamma
    }

    pub fn gamma_check(&self) -> GammaCheck {
        self.check
    }

    fn verify_gamma(&self, stream: &mut RandomStream) -> Result<GammaCheck> {
        let group = self.bundle.group();
        let coset = self.bundle.coset_action();
        let probes = 8;
        if let (true, Some(elements)) = (self.gamma.has_finite_support(), group.elements()) {
            for _ in 0..probes {
                let x = self.action_x.space().random_point(stream)?;
                let base = self.gamma.enumerate_distribution(&x)?;
                for g in &elements {
                    let moved = self
                        .gamma
                        .enumerate_distribution(&self.action_x.apply(g, &x)?)?;
                    let pushed = base.pushforward(|c| coset.apply(g, c))?;
                    if !moved.same_as(&pushed) {
                        return Err(Error::NotEquivariant(format!(
                            "gamma at g·x differs from g·gamma(x) for g = {g:?}"
                        )));
                    }
                }
            }
            return Ok(GammaCheck::Exact);
        }
        if self.gamma.is_deterministic() {
            for _ in 0..probes {
                let x = self.action_x.space().random_point(stream)?;
                let g = group.random_element(stream)?;
                let lhs = self.gamma.apply(&self.action_x.apply(&g, &x)?)?;
                let rhs = coset.apply(&g, &self.gamma.apply(&x)?)?;
                let err = lhs.distance(&rhs) / (1.0 + norm(&rhs));
                if !(err <= 1e-8) {
                    return Err(Error::NotEquivariant(format!(
                        "deterministic gamma off by {err:e} under {g:?}"
                    )));
                }
            }
            return Ok(GammaCheck::Pointwise);
        }
        let n = 2000;
        for _ in 0..4 {
            let x = self.action_x.space().random_point(stream)?;
            let g = group.random_element(stream)?;
            let gx = self.action_x.apply(&g, &x)?;
            let mut moved = Vec::with_capacity(n);
            let mut pushed = Vec::with_capacity(n);
            for _ in 0..n {
                let a = self.gamma.sample(&gx, stream)?;
                let b = coset.apply(&g, &self.gamma.sample(&x, stream)?)?;
                match (a.coordinates(), b.coordinates()) {
                    (Some(a), Some(b)) => {
                        moved.push(a);
                        pushed.push(b);
                    }
                    _ => return Ok(GammaCheck::Skipped),
                }
            }
            let dim = moved[0].len();
            for j in 0..dim {
                let (m1, v1) = mean_var(moved.iter().map(|c| c[j]));
                let (m2, v2) = mean_var(pushed.iter().map(|c| c[j]));
                let tol = 5.0 * ((v1 + v2) / n as f64).sqrt() + 1e-9;
                if (m1 - m2).abs() > tol {
                    return Err(Error::NotEquivariant(format!(
                        "sampled gamma coordinate {j} means differ: {m1} vs {m2} (tol {tol:e})"
                    )));
                }
            }
        }
        Ok(GammaCheck::Statistical)
    }
}

fn norm(p: &Point) -> f64 {
    p.coordinates()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(0.0)
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    let v = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

fn check_k(k: &StochasticMap, spec: &SymmetrisationSpec) -> Result<()> {
    if k.domain() != spec.action_x.space() || k.codomain() != spec.action_y.space() {
        return Err(Error::CompositionType(format!(
            "map {} -> {} does not match X = {}, Y = {}",
            k.domain(),
            k.codomain(),
            spec.action_x.space(),
            spec.action_y.space()
        )));
    }
    Ok(())
}

/// `s(c) · k(s(c)⁻¹ · x)`, sampled with the given stream.
fn act_through(
    spec: &SymmetrisationSpec,
    k: &StochasticMap,
    c: &Point,
    x: &Point,
    stream: &mut RandomStream,
) -> Result<Point> {
    let g = spec.bundle.s(c)?;
    let g_inv = spec.bundle.group().inv(&g)?;
    let y = k.sample(&spec.action_x.apply(&g_inv, x)?, stream)?;
    spec.action_y.apply(&g, &y)
}

fn enumerate_through(
    spec: &SymmetrisationSpec,
    k: &StochasticMap,
    c: &Point,
    x: &Point,
) -> Result<(GroupElement, Distribution)> {
    let g = spec.bundle.s(c)?;
    let g_inv = spec.bundle.group().inv(&g)?;
    Ok((
        g,
        k.enumerate_distribution(&spec.action_x.apply(&g_inv, x)?)?,
    ))
}

/// `sym_γ(k)`: the `G`-equivariant map obtained from an `H`-equivariant `k`.
pub fn symmetrise(k: &StochasticMap, spec: &SymmetrisationSpec) -> Result<StochasticMap> {
    check_k(k, spec)?;
    let (k1, spec1) = (k.clone(), spec.clone());
    let sampler = move |x: &Point, s: &mut RandomStream| {
        let c = spec1.gamma.sample(x, &mut s.split(0))?;
        act_through(&spec1, &k1, &c, x, &mut s.split(1))
    };
    let mut out = StochasticMap::new(
        spec.action_x.space().clone(),
        spec.action_y.space().clone(),
        sampler,
    );
    if spec.gamma.is_deterministic() && k.is_deterministic() {
        let (k2, spec2) = (k.clone(), spec.clone());
        out = StochasticMap::lift_deterministic(
            spec.action_x.space().clone(),
            spec.action_y.space().clone(),
            move |x| {
                let mut s = RandomStream::new(0);
                let c = spec2.gamma.sample(x, &mut s.split(0))?;
                act_through(&spec2, &k2, &c, x, &mut s.split(1))
            },
        );
    } else if spec.gamma.has_finite_support() && k.has_finite_support() {
        let (k2, spec2) = (k.clone(), spec.clone());
        out = out.with_enumerator(move |x| {
            let mut dist = Distribution::new();
            for (wc, c) in spec2.gamma.enumerate_distribution(x)?.atoms() {
                let (g, inner) = enumerate_through(&spec2, &k2, c, x)?;
                for (wy, y) in inner.atoms() {
                    dist.push(wc * wy, spec2.action_y.apply(&g, y)?);
                }
            }
            Ok(dist)
        });
    }
    Ok(out)
}

/// The extension `k♯: G/H ⊗ X → Y`, `k♯(c, x) = s(c) · k(s(c)⁻¹ · x)`.
/// `sym_γ(k)` is `k♯` precomposed with `x ↦ (γ(x), x)`.
pub fn extend(k: &StochasticMap, spec: &SymmetrisationSpec) -> Result<StochasticMap> {
    check_k(k, spec)?;
    let (k1, spec1) = (k.clone(), spec.clone());
    let domain = Space::pair(
        spec.bundle.coset_space().clone(),
        spec.action_x.space().clone(),
    );
    let sampler = move |p: &Point, s: &mut RandomStream| {
        let (c, x) = p.as_pair().expect("domain check guarantees a pair");
        act_through(&spec1, &k1, c, x, s)
    };
    Ok(if k.is_deterministic() {
        let (k2, spec2) = (k.clone(), spec.clone());
        StochasticMap::lift_deterministic(domain, spec.action_y.space().clone(), move |p| {
            let (c, x) = p.as_pair().expect("domain check guarantees a pair");
            act_through(&spec2, &k2, c, x, &mut RandomStream::new(0))
        })
    } else {
        StochasticMap::new(domain, spec.action_y.space().clone(), sampler)
    })
}

/// `γ = λ`: ignore the input and draw from the Haar measure of the coset
/// space (which must be a compact group).
pub fn gamma_from_haar(bundle: &CosetBundle, action_x: &Action) -> Result<StochasticMap> {
    let Space::Group(h) = bundle.coset_space() else {
        return Err(Error::NoHaar(format!(
            "coset space {} is not a group",
            bundle.coset_space()
        )));
    };
    if !h.has_haar() {
        return Err(Error::NoHaar(h.name()));
    }
    let h1 = h.clone();
    let map = StochasticMap::new(
        action_x.space().clone(),
        bundle.coset_space().clone(),
        move |_, s| Ok(Point::Element(h1.haar_sample(s)?)),
    );
    Ok(match h.elements() {
        Some(elements) => {
            let uniform = Distribution::uniform(elements.into_iter().map(Point::Element));
            map.with_enumerator(move |_| Ok(uniform.clone()))
        }
        None => map,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanMode {
    /// Into `T_d`, paired with the trivial bundle of `T_d`.
    Translation,
    /// Into the `SE(d)/SO(d) ≅ T_d` coset space of the via-acting bundle.
    Euclidean,
}

/// Deterministic `x ↦ (1/n) Σᵢ xᵢ` over the columns of `x ∈ R^{d×n}`.
///
/// Both modes land in `T_d`; they differ only in which bundle the result is
/// meant to be paired with. Equivariance holds because the mean commutes
/// with `x ↦ Qx + t1ᵀ`.
pub fn gamma_columnwise_mean(d: usize, n: usize, mode: MeanMode) -> Result<StochasticMap> {
    if n == 0 {
        return Err(Error::EmptyInput("columnwise mean of zero columns".into()));
    }
    let _ = mode;
    Ok(StochasticMap::lift_deterministic(
        Space::matrix(d, n),
        Space::Group(crate::groups::Group::translation(d)),
        move |x| {
            let x = x.as_matrix().expect("domain check guarantees a matrix");
            Ok(Point::Element(GroupElement::Translation(x.column_mean())))
        },
    ))
}

/// `γ := sym_{γ₁}(γ₀)`: symmetrise an unconstrained `γ₀: X → G/H` using an
/// inner spec whose `Y`-action is the coset action.
pub fn gamma_recursive(
    gamma0: &StochasticMap,
    inner: &SymmetrisationSpec,
) -> Result<StochasticMap> {
    if gamma0.codomain() != inner.action_y.space() {
        return Err(Error::CompositionType(format!(
            "gamma0 lands in {}, inner spec acts on {}",
            gamma0.codomain(),
            inner.action_y.space()
        )));
    }
    symmetrise(gamma0, inner)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AverageMode {
    /// Mean of `samples` draws, each from `RandomStream::new(seed).split(i)`.
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact mean of the enumerated distribution.
    Exact,
}

/// The expectation operator: a deterministic map returning the (estimated)
/// conditional mean of `k`. Outputs must have real coordinates.
pub fn average(k: &StochasticMap, mode: AverageMode) -> Result<StochasticMap> {
    let k1 = k.clone();
    match mode {
        AverageMode::Exact => {
            if !k.has_finite_support() {
                return Err(Error::UnsupportedEnumeration(
                    "exact averaging needs a finitely supported map".into(),
                ));
            }
            Ok(StochasticMap::lift_deterministic(
                k.domain().clone(),
                k.codomain().clone(),
                move |x| {
                    k1.enumerate_distribution(x)?.mean().ok_or_else(|| {
                        Error::CompositionType("outputs have no real coordinates".into())
                    })
                },
            ))
        }
        AverageMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::EmptyInput(
                    "Monte Carlo average needs at least one sample".into(),
                ));
            }
            Ok(StochasticMap::lift_deterministic(
                k.domain().clone(),
                k.codomain().clone(),
                move |x| {
                    let mut base = RandomStream::new(seed);
                    let mut acc: Option<(Point, Vec<f64>)> = None;
                    for i in 0..samples {
                        let y = k1.sample(x, &mut base.split(i as u64))?;
                        let c = y.coordinates().ok_or_else(|| {
                            Error::CompositionType("outputs have no real coordinates".into())
                        })?;
                        match &mut acc {
                            None => acc = Some((y, c)),
                            Some((_, sum)) => sum.iter_mut().zip(c).for_each(|(a, b)| *a += b),
                        }
                    }
                    let (template, sum) = acc.expect("samples > 0");
                    let mean: Vec<f64> = sum.iter().map(|v| v / samples as f64).collect();
                    Ok(template
                        .with_coordinates(&mean)
                        .expect("same shape as template"))
                },
            ))
        }
    }
}

/// Two procedures applied in sequence: `K → H` (inner) then `H → G` (outer).
#[derive(Clone, Debug)]
pub struct ComposedProcedure {
    outer: SymmetrisationSpec,
    inner: SymmetrisationSpec,
}

impl ComposedProcedure {
    pub fn apply(&self, k: &StochasticMap) -> Result<StochasticMap> {
        symmetrise(&symmetrise(k, &self.inner)?, &self.outer)
    }
}

/// Chain two specs. The inner spec must act through the outer bundle's
/// source group with the restricted actions; both are checked on probes.
pub fn compose_procedures(
    outer: &SymmetrisationSpec,
    inner: &SymmetrisationSpec,
) -> Result<ComposedProcedure> {
    let phi = outer.bundle.phi();
    if inner.bundle.group() != phi.source() {
        return Err(Error::CompositionType(format!(
            "inner procedure targets {}, outer needs {}",
            inner.bundle.group(),
            phi.source()
        )));
    }
    if inner.action_x.space() != outer.action_x.space()
        || inner.action_y.space() != outer.action_y.space()
    {
        return Err(Error::CompositionType(
            "inner and outer spaces differ".into(),
        ));
    }
    let mut s = RandomStream::new(0xc0c0);
    for _ in 0..16 {
        let h = phi.source().random_element(&mut s)?;
        let g = phi.map(&h)?;
        for (a_in, a_out) in [
            (&inner.action_x, &outer.action_x),
            (&inner.action_y, &outer.action_y),
        ] {
            let x = a_in.space().random_point(&mut s)?;
            let lhs = a_in.apply(&h, &x)?;
            let rhs = a_out.apply(&g, &x)?;
            if !(lhs.distance(&rhs) <= 1e-9 * (1.0 + norm(&rhs))) {
                return Err(Error::CompositionType(format!(
                    "inner action {} is not the restriction of {}",
                    a_in.name(),
                    a_out.name()
                )));
            }
        }
    }
    Ok(ComposedProcedure {
        outer: outer.clone(),
        inner: inner.clone(),
    })
}
