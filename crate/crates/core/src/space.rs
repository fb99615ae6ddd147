//! Points and the descriptors of the spaces they live in.

use std::fmt;

use crate::error::{Error, Result};
use crate::groups::{Group, GroupElement};
use crate::linalg::{self, Matrix, Vector};
use crate::stream::RandomStream;

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    /// The monoidal unit: an input carrying no information.
    Unit,
    Scalar(f64),
    /// An element of a finite set `{0, .., n-1}`.
    Label(usize),
    Vector(Vector),
    Matrix(Matrix),
    Element(GroupElement),
    Pair(Box<Point>, Box<Point>),
}

impl Point {
    pub fn pair(a: Point, b: Point) -> Self {
        Point::Pair(Box::new(a), Box::new(b))
    }

    pub fn vector(xs: &[f64]) -> Self {
        Point::Vector(Vector::from_column_slice(xs))
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Point::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&Vector> {
        match self {
            Point::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Point::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_element(&self) -> Option<&GroupElement> {
        match self {
            Point::Element(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Point, &Point)> {
        match self {
            Point::Pair(a, b) => Some((a, b)),
            _ => None,
        }
    }

    /// Real coordinates of numeric points (scalars, vectors, matrices in
    /// row-major order, and pairs thereof concatenated).
    pub fn coordinates(&self) -> Option<Vec<f64>> {
        match self {
            Point::Unit => Some(vec![]),
            Point::Scalar(x) => Some(vec![*x]),
            Point::Vector(v) => Some(v.as_slice().to_vec()),
            Point::Matrix(m) => Some(linalg::flatten_row_major(m)),
            Point::Element(g) => element_coordinates(g),
            Point::Pair(a, b) => {
                let mut c = a.coordinates()?;
                c.extend(b.coordinates()?);
                Some(c)
            }
            Point::Label(_) => None,
        }
    }

    /// Rebuild a point of the same shape as `self` from coordinates.
    pub fn with_coordinates(&self, coords: &[f64]) -> Option<Point> {
        let (p, rest) = self.rebuild(coords)?;
        rest.is_empty().then_some(p)
    }

    fn rebuild<'a>(&self, c: &'a [f64]) -> Option<(Point, &'a [f64])> {
        Some(match self {
            Point::Unit => (Point::Unit, c),
            Point::Scalar(_) => (Point::Scalar(*c.first()?), &c[1..]),
            Point::Vector(v) => {
                let n = v.len();
                (
                    Point::Vector(Vector::from_column_slice(c.get(..n)?)),
                    &c[n..],
                )
            }
            Point::Matrix(m) => {
                let n = m.len();
                let vals = c.get(..n)?;
                (
                    Point::Matrix(linalg::unflatten_row_major(vals, m.nrows(), m.ncols())),
                    &c[n..],
                )
            }
            Point::Pair(a, b) => {
                let (pa, rest) = a.rebuild(c)?;
                let (pb, rest) = b.rebuild(rest)?;
                (Point::pair(pa, pb), rest)
            }
            Point::Label(_) | Point::Element(_) => return None,
        })
    }

    pub fn distance(&self, other: &Point) -> f64 {
        match (self, other) {
            (Point::Element(a), Point::Element(b)) => a.distance(b),
            (Point::Label(a), Point::Label(b)) => {
                if a == b {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            (Point::Pair(a0, a1), Point::Pair(b0, b1)) => a0.distance(b0).max(a1.distance(b1)),
            _ => match (self.coordinates(), other.coordinates()) {
                (Some(a), Some(b)) if a.len() == b.len() && self.same_shape(other) => a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt(),
                _ => f64::INFINITY,
            },
        }
    }

    fn same_shape(&self, other: &Point) -> bool {
        match (self, other) {
            (Point::Unit, Point::Unit) | (Point::Scalar(_), Point::Scalar(_)) => true,
            (Point::Vector(a), Point::Vector(b)) => a.len() == b.len(),
            (Point::Matrix(a), Point::Matrix(b)) => a.shape() == b.shape(),
            _ => false,
        }
    }

    fn shape_name(&self) -> String {
        match self {
            Point::Unit => "()".into(),
            Point::Scalar(_) => "scalar".into(),
            Point::Label(l) => format!("label {l}"),
            Point::Vector(v) => format!("vector[{}]", v.len()),
            Point::Matrix(m) => format!("matrix[{}x{}]", m.nrows(), m.ncols()),
            Point::Element(g) => format!("element {g:?}"),
            Point::Pair(a, b) => format!("({}, {})", a.shape_name(), b.shape_name()),
        }
    }
}

fn element_coordinates(g: &GroupElement) -> Option<Vec<f64>> {
    match g {
        GroupElement::Identity => Some(vec![]),
        GroupElement::Orthogonal(m) | GroupElement::GeneralLinear(m) => {
            Some(linalg::flatten_row_major(m))
        }
        GroupElement::Translation(t) => Some(t.as_slice().to_vec()),
        GroupElement::Permutation(p) => Some(linalg::flatten_row_major(&p.matrix())),
        GroupElement::Pair(a, b) => {
            let mut c = element_coordinates(a)?;
            c.extend(element_coordinates(b)?);
            Some(c)
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Unit => write!(f, "()"),
            Point::Scalar(x) => write!(f, "{x}"),
            Point::Label(l) => write!(f, "#{l}"),
            Point::Vector(v) => write!(f, "{:?}", v.as_slice()),
            Point::Matrix(m) => {
                let rows: Vec<Vec<f64>> =
                    m.row_iter().map(|r| r.iter().cloned().collect()).collect();
                write!(f, "{rows:?}")
            }
            Point::Element(GroupElement::Permutation(p)) => write!(f, "{p:?}"),
            Point::Element(g) => write!(f, "{g:?}"),
            Point::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// Descriptor of a measurable space; used for shape and type checks.
#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Unit,
    Scalar,
    Labels(usize),
    Vector(usize),
    Matrix {
        rows: usize,
        cols: usize,
    },
    /// Symmetric positive-definite d×d matrices.
    PositiveDefinite(usize),
    /// The underlying set of a group.
    Group(Group),
    Pair(Box<Space>, Box<Space>),
}

impl Space {
    pub fn matrix(rows: usize, cols: usize) -> Self {
        Space::Matrix { rows, cols }
    }

    pub fn pair(a: Space, b: Space) -> Self {
        Space::Pair(Box::new(a), Box::new(b))
    }

    pub fn contains(&self, p: &Point) -> bool {
        match (self, p) {
            (Space::Unit, Point::Unit) => true,
            (Space::Scalar, Point::Scalar(_)) => true,
            (Space::Labels(n), Point::Label(l)) => l < n,
            (Space::Vector(n), Point::Vector(v)) => v.len() == *n,
            (Space::Matrix { rows, cols }, Point::Matrix(m)) => {
                m.nrows() == *rows && m.ncols() == *cols
            }
            (Space::PositiveDefinite(d), Point::Matrix(m)) => m.nrows() == *d && m.ncols() == *d,
            (Space::Group(g), Point::Element(e)) => g.contains(e),
            (Space::Pair(a, b), Point::Pair(x, y)) => a.contains(x) && b.contains(y),
            _ => false,
        }
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::InputShape {
                expected: self.to_string(),
                got: p.shape_name(),
            })
        }
    }

    /// A random point for property probes.
    pub fn random_point(&self, stream: &mut RandomStream) -> Result<Point> {
        Ok(match self {
            Space::Unit => Point::Unit,
            Space::Scalar => Point::Scalar(stream.standard_normal()),
            Space::Labels(n) => Point::Label((stream.uniform() * *n as f64) as usize % n.max(&1)),
            Space::Vector(n) => Point::Vector(linalg::gaussian_vector(*n, stream)),
            Space::Matrix { rows, cols } => {
                Point::Matrix(linalg::gaussian_matrix(*rows, *cols, stream))
            }
            Space::PositiveDefinite(d) => {
                let a = linalg::gaussian_matrix(*d, *d, stream);
                Point::Matrix(&a * a.transpose() + Matrix::identity(*d, *d) * 0.1)
            }
            Space::Group(g) => Point::Element(g.random_element(stream)?),
            Space::Pair(a, b) => Point::pair(a.random_point(stream)?, b.random_point(stream)?),
        })
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Unit => write!(f, "I"),
            Space::Scalar => write!(f, "R"),
            Space::Labels(n) => write!(f, "{{0..{n}}}"),
            Space::Vector(n) => write!(f, "R^{n}"),
            Space::Matrix { rows, cols } => write!(f, "R^{rows}x{cols}"),
            Space::PositiveDefinite(d) => write!(f, "PD({d})"),
            Space::Group(g) => write!(f, "{g}"),
            Space::Pair(a, b) => write!(f, "{a}⊗{b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_roundtrip() {
        let p = Point::pair(
            Point::Scalar(1.5),
            Point::Matrix(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])),
        );
        let c = p.coordinates().unwrap();
        assert_eq!(c, vec![1.5, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.with_coordinates(&c).unwrap(), p);
        assert!(p.with_coordinates(&c[..4]).is_none());
    }

    #[test]
    fn shape_check() {
        let s = Space::Vector(2);
        assert!(s.check(&Point::vector(&[1.0, 2.0])).is_ok());
        assert!(matches!(
            s.check(&Point::vector(&[1.0])),
            Err(Error::InputShape { .. })
        ));
        assert!(s.check(&Point::Scalar(1.0)).is_err());
    }
}
