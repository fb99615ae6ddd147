use std::fmt;
use std::str::FromStr;

use super::task::{loss_and_grad, TaskSample};
use crate::equivariance::{Action, CosetBundle};
use crate::error::{Error, Result};
use crate::groups::{Group, GroupElement};
use crate::linalg::{self, Matrix};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    gram_schmidt_backward, gram_schmidt_forward, gram_schmidt_project, GramSchmidtTape, MlpCache,
    MlpGrads, MlpParams,
};
use crate::space::{Point, Space};
use crate::stochmap::StochasticMap;
use crate::stream::RandomStream;
use crate::symcore::{gamma_from_haar, gamma_recursive, symmetrise, SymmetrisationSpec};

/// Fresh-noise retries after a degenerate Gram-Schmidt input.
pub const GS_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    PlainMlp,
    SymHaar,
    SymRecursive,
    CanonicalDeterministic,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::PlainMlp,
        Variant::SymHaar,
        Variant::SymRecursive,
        Variant::CanonicalDeterministic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PlainMlp => "plain_mlp",
            Variant::SymHaar => "sym_haar",
            Variant::SymRecursive => "sym_recursive",
            Variant::CanonicalDeterministic => "canonical_deterministic",
        }
    }

    pub fn is_symmetrised(self) -> bool {
        self != Variant::PlainMlp
    }

    /// Whether a single prediction consumes randomness.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Variant::SymHaar | Variant::SymRecursive)
    }

    /// Hidden layers of `nn_k`. Variants without a learned `γ` get one more.
    pub fn k_hidden_layers(self) -> usize {
        match self {
            Variant::SymRecursive => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// The randomness behind one prediction, before any network is evaluated.
#[derive(Clone, Debug)]
pub enum BaseDraw {
    None,
    Haar(Matrix),
    /// `Q₁ ~ Haar` and the stream that supplies `η` (and any retries).
    Recursive {
        q1: Matrix,
        eta_stream: RandomStream,
    },
}

impl BaseDraw {
    /// The draw used at `Q·x` under the coupling `Gᵢ ↦ Q Gᵢ`.
    pub fn coupled(&self, q: &Matrix) -> BaseDraw {
        match self {
            BaseDraw::None => BaseDraw::None,
            BaseDraw::Haar(g) => BaseDraw::Haar(q * g),
            BaseDraw::Recursive { q1, eta_stream } => BaseDraw::Recursive {
                q1: q * q1,
                eta_stream: eta_stream.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub k: MlpGrads,
    pub gamma0: Option<MlpGrads>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.k.tensors();
        if let Some(g) = &self.gamma0 {
            t.extend(g.tensors());
        }
        t
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

/// One of the benchmark predictors `X = GL(d) → Y = R^{d×d}`.
///
/// Symmetrised variants predict `ŷ = nn_k(Gᵀx) Gᵀ` for a frame `G ∈ O(d)`:
/// a Haar draw, `Q₁ · GS(nn_γ₀([Q₁ᵀx; η]))`, or `GS(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    variant: Variant,
    d: usize,
    k: MlpParams,
    gamma0: Option<MlpParams>,
}

struct Row {
    g: Option<Matrix>,
    q1: Option<Matrix>,
    gs: Option<GramSchmidtTape>,
    yk: Matrix,
    yhat: Matrix,
}

struct Pass {
    rows: Vec<Row>,
    k_cache: MlpCache,
    g0_cache: Option<MlpCache>,
}

impl Model {
    pub fn new(
        variant: Variant,
        d: usize,
        hidden: usize,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        if d == 0 || hidden == 0 {
            return Err(Error::Config(
                "dimension and hidden width must be positive".into(),
            ));
        }
        let d2 = d * d;
        let mut sizes = vec![d2];
        sizes.extend(std::iter::repeat_n(hidden, variant.k_hidden_layers()));
        sizes.push(d2);
        let k = MlpParams::new_uniform(&sizes, &mut stream.split(0))?;
        let gamma0 = match variant {
            Variant::SymRecursive => Some(MlpParams::new_uniform(
                &[d2 + d, hidden, d2],
                &mut stream.split(1),
            )?),
            _ => None,
        };
        Ok(Model {
            variant,
            d,
            k,
            gamma0,
        })
    }

    pub fn from_parts(
        variant: Variant,
        d: usize,
        k: MlpParams,
        gamma0: Option<MlpParams>,
    ) -> Result<Self> {
        let d2 = d * d;
        let shape = |what: &str, expected: String, got: String| {
            Err(Error::InputShape {
                expected: format!("{what} {expected}"),
                got,
            })
        };
        if k.input_size() != d2 || k.output_size() != d2 {
            return shape("nn_k", format!("{d2} -> {d2}"), format!("{:?}", k.sizes()));
        }
        match (variant, &gamma0) {
            (Variant::SymRecursive, Some(g)) => {
                if g.input_size() != d2 + d || g.output_size() != d2 {
                    return shape(
                        "nn_gamma0",
                        format!("{} -> {d2}", d2 + d),
                        format!("{:?}", g.sizes()),
                    );
                }
            }
            (Variant::SymRecursive, None) => {
                return shape("nn_gamma0", "present".into(), "missing".into())
            }
            (_, Some(_)) => return shape("nn_gamma0", "absent".into(), "present".into()),
            (_, None) => {}
        }
        Ok(Model {
            variant,
            d,
            k,
            gamma0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> &MlpParams {
        &self.k
    }

    pub fn gamma0(&self) -> Option<&MlpParams> {
        self.gamma0.as_ref()
    }

    pub fn num_params(&self) -> usize {
        self.k.num_params() + self.gamma0.as_ref().map_or(0, |g| g.num_params())
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.k.tensors().iter().map(|t| t.len()).collect();
        if let Some(g) = &self.gamma0 {
            t.extend(g.tensors().iter().map(|t| t.len()));
        }
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.k.tensors_mut();
        if let Some(g) = &mut self.gamma0 {
            t.extend(g.tensors_mut());
        }
        t
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("variant".into(), self.variant.name().into());
        ck.meta.insert("d".into(), self.d.to_string());
        ck.nets.push(("k".into(), self.k.clone()));
        if let Some(g) = &self.gamma0 {
            ck.nets.push(("gamma0".into(), g.clone()));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |key: &str| {
            ck.meta
                .get(key)
                .ok_or_else(|| Error::Config(format!("checkpoint has no {key:?} entry")))
        };
        let variant: Variant = meta("variant")?.parse()?;
        let d: usize = meta("d")?
            .parse()
            .map_err(|_| Error::Config("checkpoint dimension is not an integer".into()))?;
        let k = ck
            .net("k")
            .ok_or_else(|| Error::Config("checkpoint has no net \"k\"".into()))?
            .clone();
        Model::from_parts(variant, d, k, ck.net("gamma0").cloned())
    }

    /// The randomness of one prediction, laid out like the generic
    /// symmetrisation: `γ` reads `stream.split(0)`; inside it the Haar draw
    /// reads `split(0)` and `γ₀` reads `split(1)`.
    pub fn base_draw(&self, stream: &mut RandomStream) -> Result<BaseDraw> {
        let orthogonal = Group::orthogonal(self.d);
        let haar = |s: &mut RandomStream| -> Result<Matrix> {
            let g = orthogonal.haar_sample(s)?;
            Ok(g.as_matrix().expect("orthogonal elements are matrices"))
        };
        Ok(match self.variant {
            Variant::PlainMlp | Variant::CanonicalDeterministic => BaseDraw::None,
            Variant::SymHaar => BaseDraw::Haar(haar(&mut stream.split(0))?),
            Variant::SymRecursive => {
                let mut sg = stream.split(0);
                let q1 = haar(&mut sg.split(0))?;
                BaseDraw::Recursive {
                    q1,
                    eta_stream: sg.split(1),
                }
            }
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.nrows() != self.d || x.ncols() != self.d {
            return Err(Error::InputShape {
                expected: format!("{0}x{0}", self.d),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    fn forward(&self, xs: &[&Matrix], bases: &[BaseDraw]) -> Result<Pass> {
        let d = self.d;
        let d2 = d * d;
        let n = xs.len();
        for x in xs {
            self.check_input(x)?;
        }
        let mut frames: Vec<(Option<Matrix>, Option<Matrix>, Option<GramSchmidtTape>)> =
            Vec::with_capacity(n);
        let mut g0_cache = None;
        match self.variant {
            Variant::PlainMlp => frames.resize_with(n, || (None, None, None)),
            Variant::CanonicalDeterministic => {
                for x in xs {
                    frames.push((Some(gram_schmidt_project(x)?), None, None));
                }
            }
            Variant::SymHaar => {
                for b in bases {
                    let BaseDraw::Haar(g) = b else {
                        return Err(Error::Config("sym_haar needs Haar draws".into()));
                    };
                    frames.push((Some(g.clone()), None, None));
                }
            }
            Variant::SymRecursive => {
                let net = self.gamma0.as_ref().expect("checked at construction");
                let mut inputs = Matrix::zeros(n, d2 + d);
                let mut streams = Vec::with_capacity(n);
                let mut q1s = Vec::with_capacity(n);
                for (r, (x, b)) in xs.iter().zip(bases).enumerate() {
                    let BaseDraw::Recursive { q1, eta_stream } = b else {
                        return Err(Error::Config("sym_recursive needs recursive draws".into()));
                    };
                    let mut es = eta_stream.clone();
                    let z = q1.transpose() * *x;
                    let eta = linalg::gaussian_vector(d, &mut es);
                    let row: Vec<f64> = linalg::flatten_row_major(&z)
                        .into_iter()
                        .chain(eta.iter().copied())
                        .collect();
                    inputs.row_mut(r).copy_from_slice(&row);
                    streams.push(es);
                    q1s.push(q1.clone());
                }
                let (mut out, mut cache) = net.forward_batch(&inputs)?;
                let mut tapes = Vec::with_capacity(n);
                let mut retried = false;
                for r in 0..n {
                    let mut attempt = 0;
                    loop {
                        let m =
                            linalg::unflatten_row_major(out.row(r).transpose().as_slice(), d, d);
                        match gram_schmidt_forward(&m) {
                            Ok((_, tape)) => {
                                tapes.push(tape);
                                break;
                            }
                            Err(Error::DegenerateProjection { ratio }) => {
                                if attempt == GS_RETRIES {
                                    return Err(Error::DegenerateProjection { ratio });
                                }
                                attempt += 1;
                                retried = true;
                                let eta = linalg::gaussian_vector(d, &mut streams[r]);
                                for j in 0..d {
                                    inputs[(r, d2 + j)] = eta[j];
                                }
                                let single = inputs.rows(r, 1).into_owned();
                                let (o, _) = net.forward_batch(&single)?;
                                out.row_mut(r).copy_from(&o.row(0));
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
                if retried {
                    cache = net.forward_batch(&inputs)?.1;
                }
                g0_cache = Some(cache);
                let o = Group::orthogonal(d);
                for (q1, tape) in q1s.into_iter().zip(tapes) {
                    // The group law re-orthonormalises products that drift.
                    let g = o
                        .mul(
                            &GroupElement::Orthogonal(q1.clone()),
                            &GroupElement::Orthogonal(tape.q().clone()),
                        )?
                        .as_matrix()
                        .expect("orthogonal");
                    frames.push((Some(g), Some(q1), Some(tape)));
                }
            }
        }
        let mut k_in = Matrix::zeros(n, d2);
        for (r, (x, (g, _, _))) in xs.iter().zip(&frames).enumerate() {
            let u = match g {
                Some(g) => g.transpose() * *x,
                None => (*x).clone(),
            };
            k_in.row_mut(r)
                .copy_from_slice(&linalg::flatten_row_major(&u));
        }
        let (k_out, k_cache) = self.k.forward_batch(&k_in)?;
        let rows = frames
            .into_iter()
            .enumerate()
            .map(|(r, (g, q1, gs))| {
                let yk = linalg::unflatten_row_major(k_out.row(r).transpose().as_slice(), d, d);
                let yhat = match &g {
                    Some(g) => &yk * g.transpose(),
                    None => yk.clone(),
                };
                Row {
                    g,
                    q1,
                    gs,
                    yk,
                    yhat,
                }
            })
            .collect();
        Ok(Pass {
            rows,
            k_cache,
            g0_cache,
        })
    }

    fn backward(&self, pass: &Pass, xs: &[&Matrix], out_grads: &[Matrix]) -> Result<ModelGrads> {
        let d = self.d;
        let d2 = d * d;
        let n = pass.rows.len();
        let mut dk = Matrix::zeros(n, d2);
        for (r, (row, gy)) in pass.rows.iter().zip(out_grads).enumerate() {
            let dyk = match &row.g {
                Some(g) => gy * g,
                None => gy.clone(),
            };
            dk.row_mut(r)
                .copy_from_slice(&linalg::flatten_row_major(&dyk));
        }
        let (k_grads, du) = self.k.backward(&pass.k_cache, &dk)?;
        let gamma0 = match (&self.gamma0, &pass.g0_cache) {
            (Some(net), Some(cache)) => {
                let mut dm = Matrix::zeros(n, d2);
                for (r, row) in pass.rows.iter().enumerate() {
                    let q1 = row.q1.as_ref().expect("recursive rows carry Q1");
                    let tape = row.gs.as_ref().expect("recursive rows carry a tape");
                    let du_r = linalg::unflatten_row_major(du.row(r).transpose().as_slice(), d, d);
                    let dg = out_grads[r].tr_mul(&row.yk) + xs[r] * du_r.transpose();
                    let dp = q1.tr_mul(&dg);
                    let dmr = gram_schmidt_backward(tape, &dp);
                    dm.row_mut(r)
                        .copy_from_slice(&linalg::flatten_row_major(&dmr));
                }
                let (g, _) = net.backward(cache, &dm)?;
                Some(g)
            }
            _ => None,
        };
        Ok(ModelGrads { k: k_grads, gamma0 })
    }

    fn draws(&self, n_mc: usize, stream: &mut RandomStream) -> Result<Vec<BaseDraw>> {
        let n = if self.variant.is_stochastic() {
            n_mc
        } else {
            1
        };
        if n == 0 {
            return Err(Error::EmptyInput(
                "Monte Carlo averaging needs at least one sample".into(),
            ));
        }
        (0..n)
            .map(|i| self.base_draw(&mut stream.split(i as u64)))
            .collect()
    }

    /// One draw from the model's stochastic map at `x`.
    pub fn sample_prediction(&self, x: &Matrix, stream: &mut RandomStream) -> Result<Matrix> {
        let b = self.base_draw(stream)?;
        let pass = self.forward(&[x], &[b])?;
        Ok(pass.rows.into_iter().next().expect("one row").yhat)
    }

    fn mean_prediction(&self, x: &Matrix, bases: &[BaseDraw]) -> Result<Matrix> {
        let xs = vec![x; bases.len()];
        let pass = self.forward(&xs, bases)?;
        let mut acc = Matrix::zeros(self.d, self.d);
        for row in &pass.rows {
            acc += &row.yhat;
        }
        Ok(acc / bases.len() as f64)
    }

    /// Monte Carlo estimate of the averaged predictor; draw `i` reads
    /// `stream.split(i)`. Deterministic variants ignore `n_mc`.
    pub fn predict_mean(
        &self,
        x: &Matrix,
        n_mc: usize,
        stream: &mut RandomStream,
    ) -> Result<Matrix> {
        let bases = self.draws(n_mc, stream)?;
        self.mean_prediction(x, &bases)
    }

    /// `‖f̂(Qx) − f̂(x)Qᵀ‖_F / (1 + ‖f̂(x)‖_F)` with `f̂(Qx)` evaluated on the
    /// coupled draws `Gᵢ ↦ QGᵢ`.
    pub fn equivariance_gap(
        &self,
        x: &Matrix,
        q: &Matrix,
        n_mc: usize,
        stream: &mut RandomStream,
    ) -> Result<f64> {
        if q.nrows() != self.d || q.ncols() != self.d {
            return Err(Error::InputShape {
                expected: format!("{0}x{0} orthogonal matrix", self.d),
                got: format!("{}x{}", q.nrows(), q.ncols()),
            });
        }
        let defect = linalg::orthogonality_defect(q);
        if !(defect <= 1e-9) {
            return Err(Error::NotEquivariant(format!(
                "Q is not orthogonal (defect {defect:e})"
            )));
        }
        let bases = self.draws(n_mc, stream)?;
        let coupled: Vec<BaseDraw> = bases.iter().map(|b| b.coupled(q)).collect();
        let fx = self.mean_prediction(x, &bases)?;
        let fqx = self.mean_prediction(&(q * x), &coupled)?;
        Ok((fqx - &fx * q.transpose()).norm() / (1.0 + fx.norm()))
    }

    /// The Jensen upper bound on a batch, one draw per sample (sample `i`
    /// reads `stream.split(i)`), with its exact reparameterised gradient.
    pub fn jensen_objective(
        &self,
        batch: &[TaskSample],
        stream: &mut RandomStream,
    ) -> Result<(f64, ModelGrads)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let bases: Vec<BaseDraw> = (0..batch.len())
            .map(|i| self.base_draw(&mut stream.split(i as u64)))
            .collect::<Result<_>>()?;
        let xs: Vec<&Matrix> = batch.iter().map(|t| &t.x).collect();
        let pass = self.forward(&xs, &bases)?;
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(batch.len());
        for (i, (row, t)) in pass.rows.iter().zip(batch).enumerate() {
            let (l, g) = loss_and_grad(&t.x, &row.yhat);
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("loss at batch sample {i}")));
            }
            total += l;
            grads.push(g * scale);
        }
        let g = self.backward(&pass, &xs, &grads)?;
        Ok((total * scale, g))
    }

    /// `ℓ(y, mean of n_mc draws)` with frozen noise, and its gradient.
    pub fn averaged_loss(
        &self,
        sample: &TaskSample,
        n_mc: usize,
        stream: &mut RandomStream,
    ) -> Result<(f64, ModelGrads)> {
        let bases = self.draws(n_mc, stream)?;
        let xs = vec![&sample.x; bases.len()];
        let pass = self.forward(&xs, &bases)?;
        let mut mean = Matrix::zeros(self.d, self.d);
        for row in &pass.rows {
            mean += &row.yhat;
        }
        mean /= bases.len() as f64;
        let (l, g) = loss_and_grad(&sample.x, &mean);
        let g = g / bases.len() as f64;
        let grads = vec![g; bases.len()];
        Ok((l, self.backward(&pass, &xs, &grads)?))
    }

    /// The same predictor assembled from the generic combinators.
    pub fn as_stochastic_map(&self) -> Result<StochasticMap> {
        let d = self.d;
        let x_space = Space::matrix(d, d);
        let o = Group::orthogonal(d);
        let net = self.k.clone();
        let nn_k = StochasticMap::lift_deterministic(x_space.clone(), x_space.clone(), move |x| {
            let x = x.as_matrix().expect("domain check guarantees a matrix");
            let (y, _) = net.forward(&linalg::flatten_row_major(x))?;
            Ok(Point::Matrix(linalg::unflatten_row_major(&y, d, d)))
        });
        if self.variant == Variant::PlainMlp {
            return Ok(nn_k);
        }
        let bundle = CosetBundle::trivial(o.clone());
        let action_x = Action::columnwise(o.clone(), d, d);
        let action_y = Action::right_inverse_multiplication(o.clone(), d, d);
        let gamma = match self.variant {
            Variant::SymHaar => gamma_from_haar(&bundle, &action_x)?,
            Variant::CanonicalDeterministic => {
                StochasticMap::lift_deterministic(x_space.clone(), Space::Group(o.clone()), |x| {
                    let x = x.as_matrix().expect("domain check guarantees a matrix");
                    Ok(Point::Element(GroupElement::Orthogonal(
                        gram_schmidt_project(x)?,
                    )))
                })
            }
            Variant::SymRecursive => {
                let net = self.gamma0.clone().expect("checked at construction");
                let gamma0 =
                    StochasticMap::new(x_space.clone(), Space::Group(o.clone()), move |z, s| {
                        let z = z.as_matrix().expect("domain check guarantees a matrix");
                        let flat = linalg::flatten_row_major(z);
                        let mut last = Error::DegenerateProjection { ratio: 0.0 };
                        for _ in 0..=GS_RETRIES {
                            let eta = linalg::gaussian_vector(d, s);
                            let input: Vec<f64> = flat.iter().chain(eta.iter()).copied().collect();
                            let (m, _) = net.forward(&input)?;
                            match gram_schmidt_project(&linalg::unflatten_row_major(&m, d, d)) {
                                Ok(p) => return Ok(Point::Element(GroupElement::Orthogonal(p))),
                                Err(e @ Error::DegenerateProjection { .. }) => last = e,
                                Err(e) => return Err(e),
                            }
                        }
                        Err(last)
                    });
                let inner = SymmetrisationSpec::new(
                    bundle.clone(),
                    action_x.clone(),
                    Action::left_multiplication(o.clone()),
                    gamma_from_haar(&bundle, &action_x)?,
                )?;
                gamma_recursive(&gamma0, &inner)?
            }
            Variant::PlainMlp => unreachable!(),
        };
        let spec = SymmetrisationSpec::new(bundle, action_x, action_y, gamma)?;
        symmetrise(&nn_k, &spec)
    }
}
