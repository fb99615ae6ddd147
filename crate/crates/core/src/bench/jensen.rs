use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::task::{loss_from_input, TaskSample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::Point;
use crate::stochmap::{to_f64, Distribution, StochasticMap};
use crate::stream::RandomStream;

/// Mean of `ℓ(y, ŷᵢ)` over a batch, one draw `ŷᵢ ~ k(·|xᵢ)` per sample read
/// from `stream.split(i)`. Also returns the per-sample losses.
pub fn jensen_objective(
    k: &StochasticMap,
    batch: &[TaskSample],
    stream: &mut RandomStream,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let mut losses = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let y = k.sample(&Point::Matrix(t.x.clone()), &mut stream.split(i as u64))?;
        let y = y
            .as_matrix()
            .ok_or_else(|| Error::CompositionType("predictions must be matrices".into()))?;
        let l = loss_from_input(&t.x, y)?;
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("loss at batch sample {i}")));
        }
        losses.push(l);
    }
    Ok((losses.iter().sum::<f64>() / batch.len() as f64, losses))
}

/// Outcome of the exact comparison `Σ pᵢ ℓ(y, ŷᵢ) ≥ ℓ(y, Σ pᵢ ŷᵢ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JensenCertificate {
    pub holds: bool,
    pub atoms: usize,
    /// Float approximations, for reporting only.
    pub objective: f64,
    pub averaged_loss: f64,
}

fn rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v)
        .ok_or_else(|| Error::NonFinite(format!("{v} has no exact rational form")))
}

fn rational_matrix(m: &Matrix) -> Result<Vec<Vec<BigRational>>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| rational(m[(r, c)])).collect())
        .collect()
}

/// Decide, exactly, whether the expected loss under a finite distribution of
/// predictions dominates the loss of its mean.
///
/// With residuals `Eᵢ = xŷᵢ − I` the claim reads `Σ pᵢ‖Eᵢ‖ ≥ ‖Σ pᵢEᵢ‖`.
/// Squaring, it suffices that `‖Eᵢ‖‖Eⱼ‖ ≥ ⟨Eᵢ, Eⱼ⟩` for every pair, which
/// holds iff `⟨Eᵢ, Eⱼ⟩ ≤ 0` or `⟨Eᵢ, Eⱼ⟩² ≤ ‖Eᵢ‖²‖Eⱼ‖²`, both rational.
pub fn jensen_certificate(x: &Matrix, predictions: &Distribution) -> Result<JensenCertificate> {
    let d = x.nrows();
    let xr = rational_matrix(x)?;
    let mut residuals = Vec::with_capacity(predictions.len());
    for (w, p) in predictions.atoms() {
        let y = p
            .as_matrix()
            .ok_or_else(|| Error::CompositionType("predictions must be matrices".into()))?;
        if y.shape() != (d, d) {
            return Err(Error::InputShape {
                expected: format!("{d}x{d}"),
                got: format!("{}x{}", y.nrows(), y.ncols()),
            });
        }
        let yr = rational_matrix(y)?;
        let mut e = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let mut v: BigRational = (0..d).map(|k| &xr[r][k] * &yr[k][c]).sum();
                if r == c {
                    v -= BigRational::from_integer(1.into());
                }
                e.push(v);
            }
        }
        residuals.push((w.clone(), e));
    }
    let dot = |a: &[BigRational], b: &[BigRational]| -> BigRational {
        a.iter().zip(b).map(|(p, q)| p * q).sum()
    };
    let sq: Vec<BigRational> = residuals.iter().map(|(_, e)| dot(e, e)).collect();
    let mut holds = true;
    'outer: for i in 0..residuals.len() {
        for j in (i + 1)..residuals.len() {
            let ip = dot(&residuals[i].1, &residuals[j].1);
            if !(ip.is_negative() || ip.is_zero() || &ip * &ip <= &sq[i] * &sq[j]) {
                holds = false;
                break 'outer;
            }
        }
    }
    let objective = residuals
        .iter()
        .zip(&sq)
        .map(|((w, _), s)| to_f64(w) * to_f64(s).sqrt())
        .sum();
    let mut mean = vec![BigRational::zero(); d * d];
    for (w, e) in &residuals {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += w * v;
        }
    }
    let averaged_loss = to_f64(&dot(&mean, &mean)).sqrt();
    Ok(JensenCertificate {
        holds,
        atoms: residuals.len(),
        objective,
        averaged_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Space;
    use crate::stochmap::ratio;

    fn m(v: &[f64]) -> Matrix {
        Matrix::from_row_slice(2, 2, v)
    }

    #[test]
    fn dirac_is_tight() {
        let x = m(&[2.0, 1.0, 0.5, 3.0]);
        let d = Distribution::dirac(Point::Matrix(m(&[0.1, 0.2, -0.3, 0.4])));
        let c = jensen_certificate(&x, &d).unwrap();
        assert!(c.holds);
        assert!((c.objective - c.averaged_loss).abs() < 1e-15);
    }

    #[test]
    fn opposite_errors_cancel_in_the_mean() {
        let x = Matrix::identity(2, 2);
        let d = Distribution::from_atoms([
            (ratio(1, 2), Point::Matrix(m(&[2.0, 0.0, 0.0, 1.0]))),
            (ratio(1, 2), Point::Matrix(m(&[0.0, 0.0, 0.0, 1.0]))),
        ]);
        let c = jensen_certificate(&x, &d).unwrap();
        assert!(c.holds);
        assert_eq!(c.averaged_loss, 0.0);
        assert_eq!(c.objective, 1.0);
    }

    #[test]
    fn deterministic_map_objective_is_its_loss() {
        let k = StochasticMap::lift_deterministic(Space::matrix(2, 2), Space::matrix(2, 2), |x| {
            Ok(Point::Matrix(x.as_matrix().unwrap().transpose()))
        });
        let t = TaskSample {
            x: m(&[1.0, 2.0, 3.0, 4.0]),
            y: m(&[-2.0, 1.0, 1.5, -0.5]),
        };
        let (obj, losses) = jensen_objective(&k, &[t.clone()], &mut RandomStream::new(0)).unwrap();
        assert_eq!(obj, losses[0]);
        assert_eq!(obj, loss_from_input(&t.x, &t.x.transpose()).unwrap());
        assert!(jensen_objective(&k, &[], &mut RandomStream::new(0)).is_err());
    }
}
