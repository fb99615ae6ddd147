//! Seeded stochastic maps: sampling, sequential and parallel composition,
//! deterministic lifting, and exact enumeration of finitely supported maps.
//!
//! Composites split the caller's stream once per constituent, in order:
//! `compose(m, k)` uses `split(0)` for `k` and `split(1)` for `m`;
//! `product(k, m)` uses `split(0)` for `k` and `split(1)` for `m`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::space::{Point, Space};
use crate::stream::RandomStream;

pub type Probability = BigRational;

pub fn ratio(num: i64, den: i64) -> Probability {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// A finitely supported distribution with exact rational weights.
/// Atoms with equal points are merged on insertion.
#[derive(Clone, Debug, Default)]
pub struct Distribution {
    atoms: Vec<(Probability, Point)>,
}

impl Distribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dirac(p: Point) -> Self {
        Distribution {
            atoms: vec![(Probability::one(), p)],
        }
    }

    pub fn uniform(points: impl IntoIterator<Item = Point>) -> Self {
        let points: Vec<Point> = points.into_iter().collect();
        let w = ratio(1, points.len() as i64);
        let mut d = Distribution::new();
        for p in points {
            d.push(w.clone(), p);
        }
        d
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = (Probability, Point)>) -> Self {
        let mut d = Distribution::new();
        for (w, p) in atoms {
            d.push(w, p);
        }
        d
    }

    pub fn push(&mut self, weight: Probability, point: Point) {
        if let Some(slot) = self.atoms.iter_mut().find(|(_, q)| *q == point) {
            slot.0 += weight;
        } else {
            self.atoms.push((weight, point));
        }
    }

    pub fn atoms(&self) -> &[(Probability, Point)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> Probability {
        self.atoms
            .iter()
            .fold(Probability::zero(), |acc, (w, _)| acc + w)
    }

    pub fn probability_of(&self, p: &Point) -> Probability {
        self.atoms
            .iter()
            .filter(|(_, q)| q == p)
            .fold(Probability::zero(), |acc, (w, _)| acc + w)
    }

    pub fn pushforward<F>(&self, f: F) -> Result<Distribution>
    where
        F: Fn(&Point) -> Result<Point>,
    {
        let mut out = Distribution::new();
        for (w, p) in &self.atoms {
            out.push(w.clone(), f(p)?);
        }
        Ok(out)
    }

    /// Exact multiset equality: same support, same rational weights.
    pub fn same_as(&self, other: &Distribution) -> bool {
        let a: Vec<_> = self.atoms.iter().filter(|(w, _)| !w.is_zero()).collect();
        let b: Vec<_> = other.atoms.iter().filter(|(w, _)| !w.is_zero()).collect();
        a.len() == b.len() && a.iter().all(|(w, p)| other.probability_of(p) == *w)
    }

    /// Exact mean of numeric atoms: every finite double is a dyadic rational.
    pub fn mean_exact(&self) -> Option<Vec<BigRational>> {
        let mut acc: Option<Vec<BigRational>> = None;
        for (w, p) in &self.atoms {
            let coords = p.coordinates()?;
            let acc = acc.get_or_insert_with(|| vec![BigRational::zero(); coords.len()]);
            if acc.len() != coords.len() {
                return None;
            }
            for (a, c) in acc.iter_mut().zip(coords) {
                *a += w * BigRational::from_float(c)?;
            }
        }
        acc
    }

    /// Mean as a point of the same shape as the atoms.
    pub fn mean(&self) -> Option<Point> {
        let (_, first) = self.atoms.first()?;
        let mut acc = vec![0.0; first.coordinates()?.len()];
        for (w, p) in &self.atoms {
            let w = to_f64(w);
            for (a, c) in acc.iter_mut().zip(p.coordinates()?) {
                *a += w * c;
            }
        }
        first.with_coordinates(&acc)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (w, p)) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({w}, {p})")?;
        }
        write!(f, "]")
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

type Sampler = dyn Fn(&Point, &mut RandomStream) -> Result<Point> + Send + Sync;
type Enumerator = dyn Fn(&Point) -> Result<Distribution> + Send + Sync;

/// A Markov kernel realised as a seeded sampler, optionally with an exact
/// enumerator of its (finite) output distribution.
#[derive(Clone)]
pub struct StochasticMap {
    domain: Space,
    codomain: Space,
    sampler: Arc<Sampler>,
    deterministic: bool,
    enumerator: Option<Arc<Enumerator>>,
}

impl fmt::Debug for StochasticMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "StochasticMap({} -> {}, deterministic={}, finite={})",
            self.domain,
            self.codomain,
            self.deterministic,
            self.enumerator.is_some()
        )
    }
}

impl StochasticMap {
    pub fn new<F>(domain: Space, codomain: Space, sampler: F) -> Self
    where
        F: Fn(&Point, &mut RandomStream) -> Result<Point> + Send + Sync + 'static,
    {
        StochasticMap {
            domain,
            codomain,
            sampler: Arc::new(sampler),
            deterministic: false,
            enumerator: None,
        }
    }

    /// A map given by an exact finite distribution at each input; sampling
    /// draws from it by inverse CDF.
    pub fn finite<F>(domain: Space, codomain: Space, dist: F) -> Self
    where
        F: Fn(&Point) -> Result<Distribution> + Send + Sync + 'static,
    {
        let dist = Arc::new(dist);
        let d2 = dist.clone();
        let sampler = move |x: &Point, s: &mut RandomStream| {
            let dist = d2(x)?;
            let u = s.uniform();
            let mut cum = 0.0;
            let atoms = dist.atoms();
            for (w, p) in atoms {
                cum += to_f64(w);
                if u < cum {
                    return Ok(p.clone());
                }
            }
            atoms
                .last()
                .map(|(_, p)| p.clone())
                .ok_or_else(|| Error::EmptyInput("finite map with empty support".into()))
        };
        StochasticMap {
            domain,
            codomain,
            sampler: Arc::new(sampler),
            deterministic: false,
            enumerator: Some(dist),
        }
    }

    /// Attach an exact enumerator to a map built with [`new`](Self::new).
    pub fn with_enumerator<F>(mut self, f: F) -> Self
    where
        F: Fn(&Point) -> Result<Distribution> + Send + Sync + 'static,
    {
        self.enumerator = Some(Arc::new(f));
        self
    }

    pub fn lift_deterministic<F>(domain: Space, codomain: Space, f: F) -> Self
    where
        F: Fn(&Point) -> Result<Point> + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let g = f.clone();
        StochasticMap {
            domain,
            codomain,
            sampler: Arc::new(move |x, _| f(x)),
            deterministic: true,
            enumerator: Some(Arc::new(move |x| Ok(Distribution::dirac(g(x)?)))),
        }
    }

    pub fn identity(space: Space) -> Self {
        Self::lift_deterministic(space.clone(), space, |x| Ok(x.clone()))
    }

    pub fn constant(domain: Space, codomain: Space, value: Point) -> Self {
        Self::lift_deterministic(domain, codomain, move |_| Ok(value.clone()))
    }

    /// `I → R`, one standard normal draw.
    pub fn standard_gaussian() -> Self {
        Self::new(Space::Unit, Space::Scalar, |_, s| {
            Ok(Point::Scalar(s.standard_normal()))
        })
    }

    pub fn domain(&self) -> &Space {
        &self.domain
    }

    pub fn codomain(&self) -> &Space {
        &self.codomain
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn has_finite_support(&self) -> bool {
        self.enumerator.is_some()
    }

    pub fn sample(&self, x: &Point, stream: &mut RandomStream) -> Result<Point> {
        self.domain.check(x)?;
        (self.sampler)(x, stream)
    }

    pub fn enumerate_distribution(&self, x: &Point) -> Result<Distribution> {
        self.domain.check(x)?;
        let e = self.enumerator.as_ref().ok_or_else(|| {
            Error::UnsupportedEnumeration(format!("{self:?} has no finite support"))
        })?;
        let dist = e(x)?;
        if dist.atoms().iter().any(|(w, _)| *w < Probability::zero())
            || dist.total() != Probability::one()
        {
            return Err(Error::UnsupportedEnumeration(format!(
                "enumerator weights must be nonnegative and sum to 1, got total {}",
                dist.total()
            )));
        }
        Ok(dist)
    }

    /// Evaluate a deterministic map.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        if !self.deterministic {
            return Err(Error::CompositionType(
                "apply() requires a deterministic map; use sample()".into(),
            ));
        }
        self.sample(x, &mut RandomStream::new(0))
    }

    pub(crate) fn from_parts(
        domain: Space,
        codomain: Space,
        sampler: Arc<Sampler>,
        deterministic: bool,
        enumerator: Option<Arc<Enumerator>>,
    ) -> Self {
        StochasticMap {
            domain,
            codomain,
            sampler,
            deterministic,
            enumerator,
        }
    }
}

/// Sequential composition `m ∘ k`: draw `y ~ k(·|x)`, then `z ~ m(·|y)`.
pub fn compose(m: &StochasticMap, k: &StochasticMap) -> Result<StochasticMap> {
    if k.codomain != m.domain {
        return Err(Error::CompositionType(format!(
            "cannot compose {} -> {} after {} -> {}",
            m.domain, m.codomain, k.domain, k.codomain
        )));
    }
    let (k1, m1) = (k.clone(), m.clone());
    let sampler = move |x: &Point, s: &mut RandomStream| {
        let y = k1.sample(x, &mut s.split(0))?;
        m1.sample(&y, &mut s.split(1))
    };
    let enumerator = match (k.has_finite_support(), m.has_finite_support()) {
        (true, true) => {
            let (k2, m2) = (k.clone(), m.clone());
            let e = move |x: &Point| {
                let mut out = Distribution::new();
                for (wy, y) in k2.enumerate_distribution(x)?.atoms() {
                    for (wz, z) in m2.enumerate_distribution(y)?.atoms() {
                        out.push(wy * wz, z.clone());
                    }
                }
                Ok(out)
            };
            Some(Arc::new(e) as Arc<Enumerator>)
        }
        _ => None,
    };
    Ok(StochasticMap::from_parts(
        k.domain.clone(),
        m.codomain.clone(),
        Arc::new(sampler),
        k.deterministic && m.deterministic,
        enumerator,
    ))
}

/// Parallel product `k ⊗ m` on pairs, sampling the factors independently.
pub fn product(k: &StochasticMap, m: &StochasticMap) -> StochasticMap {
    let (k1, m1) = (k.clone(), m.clone());
    let sampler = move |x: &Point, s: &mut RandomStream| {
        let (a, b) = x.as_pair().expect("domain check guarantees a pair");
        let y = k1.sample(a, &mut s.split(0))?;
        let v = m1.sample(b, &mut s.split(1))?;
        Ok(Point::pair(y, v))
    };
    let enumerator = if k.has_finite_support() && m.has_finite_support() {
        let (k2, m2) = (k.clone(), m.clone());
        let e = move |x: &Point| {
            let (a, b) = x.as_pair().expect("domain check guarantees a pair");
            let dk = k2.enumerate_distribution(a)?;
            let dm = m2.enumerate_distribution(b)?;
            let mut out = Distribution::new();
            for (wy, y) in dk.atoms() {
                for (wv, v) in dm.atoms() {
                    out.push(wy * wv, Point::pair(y.clone(), v.clone()));
                }
            }
            Ok(out)
        };
        Some(Arc::new(e) as Arc<Enumerator>)
    } else {
        None
    };
    StochasticMap::from_parts(
        Space::pair(k.domain.clone(), m.domain.clone()),
        Space::pair(k.codomain.clone(), m.codomain.clone()),
        Arc::new(sampler),
        k.deterministic && m.deterministic,
        enumerator,
    )
}
