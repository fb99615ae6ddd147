//! Property suites behind `equisym check`.
//!
//! Each property reports the worst error it measured against a tolerance.
//! A [`Fault`] can be injected to confirm the suites actually catch broken
//! group laws.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;

use crate::bench::{sample_task, Model, TaskSample, Variant};
use crate::equivariance::{Action, CosetBundle, SemidirectFactor};
use crate::error::{Error, Result};
use crate::groups::{Group, GroupElement, Permutation};
use crate::linalg::{self, Matrix};
use crate::nn::{gram_schmidt_backward, gram_schmidt_forward, MlpParams};
use crate::space::{Point, Space};
use crate::stochmap::{Distribution, StochasticMap};
use crate::stream::RandomStream;
use crate::symcore::{gamma_from_haar, symmetrise, SymmetrisationSpec};

pub const LAW_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Groups,
    Cosets,
    Symmetrise,
    Gradients,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["groups", "cosets", "symmetrise", "gradients", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "groups" => Suite::Groups,
            "cosets" => Suite::Cosets,
            "symmetrise" => Suite::Symmetrise,
            "gradients" => Suite::Gradients,
            "all" => Suite::All,
            _ => {
                return Err(Error::Config(format!(
                    "unknown suite {s:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Every group's inverse returns its argument unchanged.
    BrokenInverse,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "broken-inv" => Ok(Fault::BrokenInverse),
            _ => Err(Error::Config(format!("unknown fault {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub suite: &'static str,
    pub name: String,
    pub worst_error: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.worst_error <= self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub results: Vec<PropertyResult>,
    /// Extra lines printed after the table.
    pub notes: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed())
    }

    pub fn failures(&self) -> Vec<&PropertyResult> {
        self.results.iter().filter(|r| !r.passed()).collect()
    }

    fn record(
        &mut self,
        suite: &'static str,
        name: impl Into<String>,
        tolerance: f64,
        outcome: Result<f64>,
    ) {
        let name = name.into();
        let worst_error = match outcome {
            Ok(e) if e.is_nan() => f64::INFINITY,
            Ok(e) => e,
            Err(e) => {
                self.notes.push(format!("{name}: {e}"));
                f64::INFINITY
            }
        };
        self.results.push(PropertyResult {
            suite,
            name,
            worst_error,
            tolerance,
        });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(
                f,
                "{} [{}] {}: worst error {:.3e} (tolerance {:.1e})",
                if r.passed() { "PASS" } else { "FAIL" },
                r.suite,
                r.name,
                r.worst_error,
                r.tolerance
            )?;
        }
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        let failed = self.failures().len();
        write!(f, "{} properties, {} failed", self.results.len(), failed)
    }
}

/// The operations a group-law check needs.
pub trait GroupLaw {
    fn label(&self) -> String;
    fn identity(&self) -> GroupElement;
    fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement>;
    fn inv(&self, a: &GroupElement) -> Result<GroupElement>;
    fn sample(&self, stream: &mut RandomStream) -> Result<GroupElement>;
}

impl GroupLaw for Group {
    fn label(&self) -> String {
        self.name()
    }

    fn identity(&self) -> GroupElement {
        Group::identity(self)
    }

    fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        Group::mul(self, a, b)
    }

    fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        Group::inv(self, a)
    }

    fn sample(&self, stream: &mut RandomStream) -> Result<GroupElement> {
        self.random_element(stream)
    }
}

/// A deliberately wrong law: `inv(a) = a`.
pub struct BrokenInverse(pub Group);

impl GroupLaw for BrokenInverse {
    fn label(&self) -> String {
        self.0.name()
    }

    fn identity(&self) -> GroupElement {
        self.0.identity()
    }

    fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.0.mul(a, b)
    }

    fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        Ok(a.clone())
    }

    fn sample(&self, stream: &mut RandomStream) -> Result<GroupElement> {
        self.0.random_element(stream)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LawErrors {
    pub associativity: f64,
    pub unit: f64,
    pub inverse: f64,
}

/// Worst errors of `(ab)c = a(bc)`, `ea = ae = a` and `aa⁻¹ = a⁻¹a = e`.
pub fn group_law_errors(
    law: &dyn GroupLaw,
    samples: usize,
    stream: &mut RandomStream,
) -> Result<LawErrors> {
    let e = law.identity();
    let mut out = LawErrors::default();
    for _ in 0..samples {
        let (a, b, c) = (
            law.sample(stream)?,
            law.sample(stream)?,
            law.sample(stream)?,
        );
        let lhs = law.mul(&law.mul(&a, &b)?, &c)?;
        let rhs = law.mul(&a, &law.mul(&b, &c)?)?;
        out.associativity = out.associativity.max(lhs.distance(&rhs));
        out.unit = out
            .unit
            .max(law.mul(&e, &a)?.distance(&a))
            .max(law.mul(&a, &e)?.distance(&a));
        let ai = law.inv(&a)?;
        out.inverse = out
            .inverse
            .max(law.mul(&a, &ai)?.distance(&e))
            .max(law.mul(&ai, &a)?.distance(&e));
    }
    Ok(out)
}

/// The groups of the axiom suite, each with an action to check alongside.
pub fn axiom_groups() -> Vec<(Group, Action)> {
    let cols = |g: Group, d: usize| {
        let a = Action::columnwise(g.clone(), d, 3);
        (g, a)
    };
    vec![
        cols(Group::orthogonal(2), 2),
        cols(Group::orthogonal(3), 3),
        cols(Group::special_orthogonal(3), 3),
        (Group::symmetric(4), Action::permute_coordinates(4)),
        (
            Group::translation(3),
            Action::translate(3, Space::Vector(3)),
        ),
        cols(Group::special_euclidean(2), 2),
        cols(Group::special_euclidean(3), 3),
        cols(Group::general_linear(2), 2),
    ]
}

fn groups_suite(report: &mut Report, fault: Fault, samples: usize, stream: &mut RandomStream) {
    for (g, action) in axiom_groups() {
        let law: Box<dyn GroupLaw> = match fault {
            Fault::None => Box::new(g.clone()),
            Fault::BrokenInverse => Box::new(BrokenInverse(g.clone())),
        };
        let label = law.label();
        match group_law_errors(law.as_ref(), samples, stream) {
            Ok(e) => {
                report.record(
                    "groups",
                    format!("{label}: associativity"),
                    LAW_TOL,
                    Ok(e.associativity),
                );
                report.record("groups", format!("{label}: unit"), LAW_TOL, Ok(e.unit));
                report.record(
                    "groups",
                    format!("{label}: inverse"),
                    LAW_TOL,
                    Ok(e.inverse),
                );
            }
            Err(e) => report.record("groups", format!("{label}: group laws"), LAW_TOL, Err(e)),
        }
        match action.axiom_errors(samples, stream) {
            Ok((assoc, unit)) => {
                report.record(
                    "groups",
                    format!("{label} on {}: action compatibility", action.space()),
                    LAW_TOL,
                    Ok(assoc),
                );
                report.record(
                    "groups",
                    format!("{label} on {}: action unit", action.space()),
                    LAW_TOL,
                    Ok(unit),
                );
            }
            Err(e) => report.record("groups", format!("{label}: action axioms"), LAW_TOL, Err(e)),
        }
    }
}

/// The bundles of the coset suite, labelled.
pub fn suite_bundles() -> Result<Vec<(String, CosetBundle)>> {
    let mut out = vec![(
        "trivial I -> O(3)".to_string(),
        CosetBundle::trivial(Group::orthogonal(3)),
    )];
    for d in [2, 3] {
        out.push((
            format!("O({d}) -> GL({d})"),
            CosetBundle::orthogonal_in_gl(d)?,
        ));
    }
    out.push((
        "SO(3) -> O(3)".into(),
        CosetBundle::special_in_orthogonal(3)?,
    ));
    for d in [2, 3] {
        let se = Group::special_euclidean(d);
        out.push((
            format!("SE({d}) via N"),
            CosetBundle::semidirect(&se, SemidirectFactor::ViaNormal)?,
        ));
        out.push((
            format!("SE({d}) via H"),
            CosetBundle::semidirect(&se, SemidirectFactor::ViaActing)?,
        ));
    }
    Ok(out)
}

fn cosets_suite(report: &mut Report, samples: usize, stream: &mut RandomStream) {
    match suite_bundles() {
        Ok(bundles) => {
            for (label, b) in bundles {
                match b.law_errors(samples, stream) {
                    Ok(e) => {
                        report.record(
                            "cosets",
                            format!("{label}: q(s(c)) = c"),
                            LAW_TOL,
                            Ok(e.right_inverse),
                        );
                        report.record(
                            "cosets",
                            format!("{label}: H-invariance of q"),
                            LAW_TOL,
                            Ok(e.h_invariance),
                        );
                        report.record(
                            "cosets",
                            format!("{label}: G-equivariance of q"),
                            LAW_TOL,
                            Ok(e.g_equivariance),
                        );
                    }
                    Err(e) => {
                        report.record("cosets", format!("{label}: bundle laws"), LAW_TOL, Err(e))
                    }
                }
                report.record(
                    "cosets",
                    format!("{label}: phi is a homomorphism"),
                    LAW_TOL,
                    b.phi().law_error(samples, stream),
                );
            }
        }
        Err(e) => report.record("cosets", "bundle construction", LAW_TOL, Err(e)),
    }
}

/// `k(x)ᵢ = (i + 1)·xᵢ + x₀`: deliberately not permutation-equivariant.
pub fn janossy_test_map(n: usize) -> StochasticMap {
    StochasticMap::lift_deterministic(Space::Vector(n), Space::Vector(n), move |x| {
        let v = x.as_vector().expect("domain check guarantees a vector");
        let out: Vec<f64> = (0..n).map(|i| (i + 1) as f64 * v[i] + v[0]).collect();
        Ok(Point::vector(&out))
    })
}

/// Janossy symmetrisation over `S_n` acting on inputs and outputs by
/// coordinate permutation, with `γ` uniform on `S_n`.
pub fn janossy_spec(n: usize) -> Result<SymmetrisationSpec> {
    let g = Group::symmetric(n);
    let bundle = CosetBundle::trivial(g);
    let ax = Action::permute_coordinates(n);
    let ay = Action::permute_coordinates(n);
    let gamma = gamma_from_haar(&bundle, &ax)?;
    SymmetrisationSpec::new(bundle, ax, ay, gamma)
}

fn small_integer_vector(n: usize, stream: &mut RandomStream) -> Vec<f64> {
    (0..n)
        .map(|_| (stream.uniform() * 19.0).floor() - 9.0)
        .collect()
}

/// Count of `(x, g)` pairs whose enumerated distributions disagree.
fn janossy_equivariance_failures(
    n: usize,
    trials: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    let spec = janossy_spec(n)?;
    let sym = symmetrise(&janossy_test_map(n), &spec)?;
    let act = Action::permute_coordinates(n);
    let mut failures = 0;
    for _ in 0..trials {
        let x = Point::vector(&small_integer_vector(n, stream));
        let base = sym.enumerate_distribution(&x)?;
        for p in Permutation::all(n) {
            let g = GroupElement::Permutation(p);
            let moved = sym.enumerate_distribution(&act.apply(&g, &x)?)?;
            if !moved.same_as(&base.pushforward(|y| act.apply(&g, y))?) {
                failures += 1;
            }
        }
    }
    Ok(failures as f64)
}

/// Count of inputs where the exact mean differs from `(1/n!) Σ σ·k(σ⁻¹·x)`.
fn janossy_formula_failures(n: usize, trials: usize, stream: &mut RandomStream) -> Result<f64> {
    let spec = janossy_spec(n)?;
    let k = janossy_test_map(n);
    let sym = symmetrise(&k, &spec)?;
    let perms = Permutation::all(n);
    let count = BigRational::from_integer(perms.len().into());
    let mut failures = 0;
    for _ in 0..trials {
        let xv = small_integer_vector(n, stream);
        let mut expect = vec![BigRational::from_integer(0.into()); n];
        for p in &perms {
            let moved = p.inverse().permute(&xv);
            let y = k.apply(&Point::vector(&moved))?;
            let yv = y.coordinates().expect("vector output");
            for (e, v) in expect.iter_mut().zip(p.permute(&yv)) {
                *e += BigRational::from_float(v).expect("finite");
            }
        }
        for e in expect.iter_mut() {
            *e /= count.clone();
        }
        let got = sym
            .enumerate_distribution(&Point::vector(&xv))?
            .mean_exact()
            .ok_or_else(|| Error::CompositionType("no exact mean".into()))?;
        if got != expect {
            failures += 1;
        }
    }
    Ok(failures as f64)
}

/// `k(x) = x + (Σ xᵢ)·1` is permutation-equivariant, so symmetrising it is a no-op.
fn stability_error(n: usize, trials: usize, stream: &mut RandomStream) -> Result<f64> {
    let spec = janossy_spec(n)?;
    let k = StochasticMap::lift_deterministic(Space::Vector(n), Space::Vector(n), |x| {
        let v = x.as_vector().expect("vector");
        let s = v.sum();
        Ok(Point::Vector(v.map(|a| a + s)))
    });
    let sym = symmetrise(&k, &spec)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = Point::Vector(linalg::gaussian_vector(n, stream));
        let fx = k.apply(&x)?;
        for (_, y) in sym.enumerate_distribution(&x)?.atoms() {
            worst = worst.max(y.distance(&fx));
        }
    }
    Ok(worst)
}

fn idempotence_failures(n: usize, trials: usize, stream: &mut RandomStream) -> Result<f64> {
    let spec = janossy_spec(n)?;
    let once = symmetrise(&janossy_test_map(n), &spec)?;
    let twice = symmetrise(&once, &spec)?;
    let mut failures = 0;
    for _ in 0..trials {
        let x = Point::vector(&small_integer_vector(n, stream));
        if !twice
            .enumerate_distribution(&x)?
            .same_as(&once.enumerate_distribution(&x)?)
        {
            failures += 1;
        }
    }
    Ok(failures as f64)
}

fn coupled_gap(variant: Variant, d: usize, pairs: usize, stream: &mut RandomStream) -> Result<f64> {
    let model = Model::new(variant, d, 16, &mut stream.split(0))?;
    let o = Group::orthogonal(d);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = sample_task(d, stream, 1e4)?.x;
        let q = o.haar_sample(stream)?.as_matrix().expect("orthogonal");
        worst = worst.max(model.equivariance_gap(&x, &q, 8, &mut stream.split(1))?);
    }
    Ok(worst)
}

fn symmetrise_suite(report: &mut Report, stream: &mut RandomStream) {
    for n in [2, 3, 4] {
        report.record(
            "symmetrise",
            format!("S_{n} Janossy: exact equivariance (failing pairs)"),
            0.0,
            janossy_equivariance_failures(n, 5, stream),
        );
        report.record(
            "symmetrise",
            format!("S_{n} Janossy: mean equals uniform average (failing inputs)"),
            0.0,
            janossy_formula_failures(n, 5, stream),
        );
        report.record(
            "symmetrise",
            format!("S_{n} stability"),
            LAW_TOL,
            stability_error(n, 100, stream),
        );
    }
    report.record(
        "symmetrise",
        "S_3 idempotence (failing inputs)",
        0.0,
        idempotence_failures(3, 5, stream),
    );
    for v in [
        Variant::SymHaar,
        Variant::SymRecursive,
        Variant::CanonicalDeterministic,
    ] {
        for d in [2, 3] {
            report.record(
                "symmetrise",
                format!("{v} d={d}: coupled equivariance gap"),
                1e-6,
                coupled_gap(v, d, 20, stream),
            );
        }
    }
    for (n, x) in [(2, vec![3.0, 5.0]), (3, vec![1.0, 2.0, 4.0])] {
        let dist = janossy_spec(n)
            .and_then(|spec| symmetrise(&janossy_test_map(n), &spec))
            .and_then(|sym| sym.enumerate_distribution(&Point::vector(&x)));
        match dist {
            Ok(d) => report
                .notes
                .push(format!("S_{n} Janossy distribution at {x:?}: {d}")),
            Err(e) => report
                .notes
                .push(format!("S_{n} Janossy distribution unavailable: {e}")),
        }
    }
}

/// Norm-wise relative error between an analytic gradient and central
/// differences of `f` at step `h`.
pub fn finite_difference_error(
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<f64> {
    let mut diff = 0.0;
    let mut scale = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let fd = (f(i, h)? - f(i, -h)?) / (2.0 * h);
        diff += (a - fd) * (a - fd);
        scale += a * a;
    }
    Ok(diff.sqrt() / scale.sqrt().max(1e-300))
}

fn perturb_model(m: &Model, idx: usize, delta: f64) -> Model {
    let mut p = m.clone();
    let mut i = idx;
    for t in p.tensors_mut() {
        if i < t.len() {
            t[i] += delta;
            break;
        }
        i -= t.len();
    }
    p
}

fn mlp_gradient_error(stream: &mut RandomStream) -> Result<f64> {
    let net = MlpParams::new_uniform(&[3, 5, 2], stream)?;
    let x = linalg::gaussian_vector(3, stream);
    let w = linalg::gaussian_vector(2, stream);
    let objective = |n: &MlpParams| -> Result<f64> {
        let (y, _) = n.forward(x.as_slice())?;
        Ok(y.iter().zip(w.iter()).map(|(a, b)| a * b).sum())
    };
    let (_, cache) = net.forward(x.as_slice())?;
    let (grads, _) = net.backward(&cache, &Matrix::from_row_slice(1, 2, w.as_slice()))?;
    let analytic: Vec<f64> = grads.tensors().concat();
    finite_difference_error(&analytic, 1e-5, |i, h| {
        let mut p = net.clone();
        let mut j = i;
        for t in p.tensors_mut() {
            if j < t.len() {
                t[j] += h;
                break;
            }
            j -= t.len();
        }
        objective(&p)
    })
}

fn gram_schmidt_gradient_error(stream: &mut RandomStream) -> Result<f64> {
    let m = linalg::gaussian_matrix(3, 3, stream);
    let w = linalg::gaussian_matrix(3, 3, stream);
    let (_, tape) = gram_schmidt_forward(&m)?;
    let g = gram_schmidt_backward(&tape, &w);
    let analytic: Vec<f64> = g.iter().copied().collect();
    finite_difference_error(&analytic, 1e-5, |i, h| {
        let mut p = m.clone();
        p[i] += h;
        Ok(gram_schmidt_forward(&p)?.0.component_mul(&w).sum())
    })
}

fn jensen_gradient_error(stream: &mut RandomStream) -> Result<f64> {
    let model = Model::new(Variant::SymRecursive, 2, 8, &mut stream.split(0))?;
    let mut data = stream.split(1);
    let batch: Vec<TaskSample> = (0..8)
        .map(|_| sample_task(2, &mut data, 1e4))
        .collect::<Result<_>>()?;
    let noise = stream.split(2);
    let (_, g) = model.jensen_objective(&batch, &mut noise.clone())?;
    finite_difference_error(&g.flat(), 1e-5, |i, h| {
        Ok(perturb_model(&model, i, h)
            .jensen_objective(&batch, &mut noise.clone())?
            .0)
    })
}

fn averaged_gradient_error(stream: &mut RandomStream) -> Result<f64> {
    let model = Model::new(Variant::SymRecursive, 2, 8, &mut stream.split(0))?;
    let t = sample_task(2, &mut stream.split(1), 1e4)?;
    let noise = stream.split(2);
    let (_, g) = model.averaged_loss(&t, 10, &mut noise.clone())?;
    finite_difference_error(&g.flat(), 1e-5, |i, h| {
        Ok(perturb_model(&model, i, h)
            .averaged_loss(&t, 10, &mut noise.clone())?
            .0)
    })
}

fn gradients_suite(report: &mut Report, stream: &mut RandomStream) {
    report.record(
        "gradients",
        "MLP 3-5-2 backprop vs central differences",
        1e-5,
        mlp_gradient_error(stream),
    );
    report.record(
        "gradients",
        "Gram-Schmidt reverse mode vs central differences",
        1e-5,
        gram_schmidt_gradient_error(stream),
    );
    report.record(
        "gradients",
        "sym_recursive d=2 Jensen objective vs central differences",
        1e-4,
        jensen_gradient_error(stream),
    );
    report.record(
        "gradients",
        "sym_recursive d=2 averaged-predictor loss vs central differences",
        1e-4,
        averaged_gradient_error(stream),
    );
}

/// Run a suite with `samples` random tuples per law.
pub fn run(suite: Suite, fault: Fault, samples: usize, seed: u64) -> Report {
    let mut root = RandomStream::new(seed);
    let mut report = Report::default();
    let all = suite == Suite::All;
    if all || suite == Suite::Groups {
        groups_suite(&mut report, fault, samples, &mut root.split(0));
    }
    if all || suite == Suite::Cosets {
        cosets_suite(&mut report, samples, &mut root.split(1));
    }
    if all || suite == Suite::Symmetrise {
        symmetrise_suite(&mut report, &mut root.split(2));
    }
    if all || suite == Suite::Gradients {
        gradients_suite(&mut report, &mut root.split(3));
    }
    report
}

/// Exact distributions used by the Janossy notes, exposed for callers that
/// want them without running the whole suite.
pub fn janossy_distribution(n: usize, x: &[f64]) -> Result<Distribution> {
    let spec = janossy_spec(n)?;
    symmetrise(&janossy_test_map(n), &spec)?.enumerate_distribution(&Point::vector(x))
}
