//! Synthetic multi-index models `f(x) = g(V^T x)` with analytic Jacobians,
//! an oracle for the expected gradient outer product, and the
//! subspace-recovery experiment.
//!
//! Only a small library of link functions is supported so that exact
//! Jacobians are always available: softmax of linear scores, softmax of
//! quadratic scores, radial (RBF prototypes), and an affine simplex link
//! whose Jacobian is constant (a zero-variance reference for oracles).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{EjopMatrix, EstimatorParams, KernelSpec, LabeledDataset};
use crate::error::{EjopError, Result};
use crate::estimator::softmax;
use crate::jacobian::{estimate_ejop, EjopOptions, GateMode, GradientGateConfig};
use crate::neighbors::NeighborIndex;
use crate::spectral::{principal_angles, spectral_norm_symmetric, sym_eigen};

/// Smooth maps from the latent space `R^r` to the class simplex, with exact
/// Jacobians.
#[derive(Debug, Clone)]
pub enum LinkFunction {
    /// `g(z) = softmax(A z + b)`, `A` is `c x r`.
    SoftmaxLinear { scores: Array2<f64>, bias: Array1<f64> },
    /// `g(z) = softmax(s)` with `s_k = z^T Q_k z + a_k^T z + b_k`.
    SoftmaxQuadratic {
        quad: Vec<Array2<f64>>,
        linear: Array2<f64>,
        bias: Array1<f64>,
    },
    /// `g(z) = softmax(-||z - mu_k||^2 / (2 sigma^2))`: RBF prototypes.
    Radial { centers: Array2<f64>, sigma: f64 },
    /// `g(z) = p0 + M z` with column sums of `M` zero. The Jacobian is the
    /// constant `M`; the caller must keep `z` inside the region where the
    /// output stays a probability vector.
    Affine { m: Array2<f64>, p0: Array1<f64> },
}

impl LinkFunction {
    pub fn class_count(&self) -> usize {
        match self {
            LinkFunction::SoftmaxLinear { scores, .. } => scores.nrows(),
            LinkFunction::SoftmaxQuadratic { linear, .. } => linear.nrows(),
            LinkFunction::Radial { centers, .. } => centers.nrows(),
            LinkFunction::Affine { m, .. } => m.nrows(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            LinkFunction::SoftmaxLinear { scores, .. } => scores.ncols(),
            LinkFunction::SoftmaxQuadratic { linear, .. } => linear.ncols(),
            LinkFunction::Radial { centers, .. } => centers.ncols(),
            LinkFunction::Affine { m, .. } => m.ncols(),
        }
    }

    /// Class probabilities `g(z)`.
    pub fn probs(&self, z: ArrayView1<'_, f64>) -> Vec<f64> {
        match self {
            LinkFunction::SoftmaxLinear { scores, bias } => {
                let s = scores.dot(&z) + bias;
                softmax(s.as_slice().expect("contiguous")).probs().to_vec()
            }
            LinkFunction::SoftmaxQuadratic { quad, linear, bias } => {
                let mut s = linear.dot(&z) + bias;
                for (k, q) in quad.iter().enumerate() {
                    s[k] += z.dot(&q.dot(&z));
                }
                softmax(s.as_slice().expect("contiguous")).probs().to_vec()
            }
            LinkFunction::Radial { centers, sigma } => {
                let inv = 1.0 / (2.0 * sigma * sigma);
                let s: Vec<f64> = centers
                    .outer_iter()
                    .map(|mu| {
                        let diff = &z.to_owned() - &mu;
                        -diff.iter().map(|v| v * v).sum::<f64>() * inv
                    })
                    .collect();
                softmax(&s).probs().to_vec()
            }
            LinkFunction::Affine { m, p0 } => (m.dot(&z) + p0).to_vec(),
        }
    }

    /// Exact Jacobian as an `r x c` matrix whose column `k` is `grad g_k(z)`.
    pub fn jacobian(&self, z: ArrayView1<'_, f64>) -> Array2<f64> {
        let r = self.latent_dim();
        let c = self.class_count();
        match self {
            LinkFunction::Affine { m, .. } => m.t().to_owned(),
            _ => {
                // All softmax links share dp_k/dz = p_k (s'_k - sum_j p_j s'_j)
                // where s'_k is the score gradient.
                let p = self.probs(z);
                let score_grads = self.score_gradients(z);
                let mut mean = Array1::<f64>::zeros(r);
                for (k, pk) in p.iter().enumerate() {
                    mean += &(&score_grads.row(k) * *pk);
                }
                let mut out = Array2::zeros((r, c));
                for k in 0..c {
                    let gk = &score_grads.row(k) - &mean;
                    for i in 0..r {
                        out[[i, k]] = p[k] * gk[i];
                    }
                }
                out
            }
        }
    }

    /// Gradients of the pre-softmax scores, rows per class (`c x r`).
    fn score_gradients(&self, z: ArrayView1<'_, f64>) -> Array2<f64> {
        let r = self.latent_dim();
        let c = self.class_count();
        match self {
            LinkFunction::SoftmaxLinear { scores, .. } => scores.clone(),
            LinkFunction::SoftmaxQuadratic { quad, linear, .. } => {
                let mut out = linear.clone();
                for (k, q) in quad.iter().enumerate() {
                    let grad = q.dot(&z) + q.t().dot(&z);
                    for i in 0..r {
                        out[[k, i]] += grad[i];
                    }
                }
                out
            }
            LinkFunction::Radial { centers, sigma } => {
                let inv = 1.0 / (sigma * sigma);
                let mut out = Array2::zeros((c, r));
                for (k, mu) in centers.outer_iter().enumerate() {
                    for i in 0..r {
                        out[[k, i]] = -(z[i] - mu[i]) * inv;
                    }
                }
                out
            }
            LinkFunction::Affine { .. } => unreachable!("affine handled in jacobian"),
        }
    }
}

/// Where the ambient points come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingLaw {
    /// Uniform on the box `[-half_width, half_width]^d`.
    UniformBox { half_width: f64 },
    /// Standard normal rejected into the box `[-half_width, half_width]^d`.
    GaussianTruncated { half_width: f64 },
}

impl SamplingLaw {
    fn half_width(&self) -> f64 {
        match self {
            SamplingLaw::UniformBox { half_width } => *half_width,
            SamplingLaw::GaussianTruncated { half_width } => *half_width,
        }
    }

    fn draw(&self, d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        match self {
            SamplingLaw::UniformBox { half_width } => {
                Array1::from_shape_fn(d, |_| rng.gen_range(-half_width..*half_width))
            }
            SamplingLaw::GaussianTruncated { half_width } => loop {
                let x = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
                if x.iter().all(|v| v.abs() <= *half_width) {
                    return x;
                }
            },
        }
    }
}

/// `f(x) = g(V^T x)` with orthonormal `V`, label-flip noise, and a sampling
/// law for the ambient points.
#[derive(Debug, Clone)]
pub struct MultiIndexModel {
    v: Array2<f64>,
    link: LinkFunction,
    noise: f64,
    sampling: SamplingLaw,
}

impl MultiIndexModel {
    pub fn new(
        v: Array2<f64>,
        link: LinkFunction,
        noise: f64,
        sampling: SamplingLaw,
    ) -> Result<Self> {
        let d = v.nrows();
        let r = v.ncols();
        if r == 0 || r >= d {
            return Err(EjopError::InvalidParam(format!(
                "latent dimension {r} must lie in [1, d-1]"
            )));
        }
        if link.latent_dim() != r {
            return Err(EjopError::DimensionMismatch {
                expected: r,
                got: link.latent_dim(),
            });
        }
        if link.class_count() < 2 {
            return Err(EjopError::TooFewClasses {
                found: link.class_count(),
            });
        }
        if !(0.0..0.5).contains(&noise) {
            return Err(EjopError::InvalidParam(
                "label noise must lie in [0, 0.5)".into(),
            ));
        }
        if !(sampling.half_width() > 0.0) {
            return Err(EjopError::InvalidParam(
                "sampling half-width must be positive".into(),
            ));
        }
        // V^T V = I within 1e-10.
        let vtv = v.t().dot(&v);
        for i in 0..r {
            for j in 0..r {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (vtv[[i, j]] - expect).abs() > 1e-10 {
                    return Err(EjopError::InvalidParam(
                        "V columns must be orthonormal".into(),
                    ));
                }
            }
        }
        Ok(Self {
            v,
            link,
            noise,
            sampling,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.link.class_count()
    }

    /// The ground-truth projection basis.
    pub fn projection(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn sampling(&self) -> SamplingLaw {
        self.sampling
    }

    /// Exact class probabilities `f(x) = g(V^T x)`.
    pub fn probs(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let z = self.v.t().dot(&x);
        self.link.probs(z.view())
    }

    /// Exact Jacobian of `f` at `x` (`d x c`): chain rule through `V`.
    pub fn jacobian(&self, x: ArrayView1<'_, f64>) -> Array2<f64> {
        let z = self.v.t().dot(&x);
        self.v.dot(&self.link.jacobian(z.view()))
    }

    /// One point's exact gradient outer product `J_f(x) J_f(x)^T`.
    pub fn point_gop(&self, x: ArrayView1<'_, f64>) -> Array2<f64> {
        let j = self.jacobian(x);
        j.dot(&j.t())
    }
}

/// Random orthonormal `d x r` basis (SVD of a seeded Gaussian matrix).
pub fn random_orthonormal(d: usize, r: usize, seed: u64) -> Array2<f64> {
    assert!(r <= d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = nalgebra::DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let svd = raw.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    Array2::from_shape_fn((d, r), |(i, j)| u[(i, j)])
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 step keeps per-cell streams decorrelated.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_class(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut cum = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return k;
        }
    }
    probs.len() - 1
}

/// Draw `n` labeled points from the model: `x ~ mu`, label sampled from
/// `f(x)`, then flipped to a uniformly random other class with probability
/// `noise`.
pub fn sample_dataset(model: &MultiIndexModel, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(EjopError::EmptyDataset);
    }
    let d = model.dim();
    let c = model.class_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x = model.sampling.draw(d, &mut rng);
        let probs = model.probs(x.view());
        let mut label = draw_class(&probs, &mut rng);
        if model.noise > 0.0 && rng.gen_range(0.0..1.0) < model.noise {
            let shift = rng.gen_range(1..c);
            label = (label + shift) % c;
        }
        points.row_mut(i).assign(&x);
        labels.push(label);
    }
    LabeledDataset::from_dense(points, labels, c)
}

/// Monte Carlo estimate of the exact expected gradient outer product
/// `E_X[J_f(X) J_f(X)^T]` using analytic Jacobians on fresh draws.
pub fn oracle_gop(model: &MultiIndexModel, n_mc: usize, seed: u64) -> Result<EjopMatrix> {
    if n_mc == 0 {
        return Err(EjopError::InvalidParam("n_mc must be positive".into()));
    }
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Array2::<f64>::zeros((d, d));
    for _ in 0..n_mc {
        let x = model.sampling.draw(d, &mut rng);
        acc += &model.point_gop(x.view());
    }
    acc /= n_mc as f64;
    EjopMatrix::new_symmetrized(acc)
}

/// Bandwidth/step schedule `h = c1 / ln n`, `t = c2 * h^{1/4}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySchedule {
    pub c1: f64,
    pub c2: f64,
}

impl RecoverySchedule {
    pub fn params_for(&self, n: usize) -> (f64, f64) {
        let h = self.c1 / (n as f64).ln();
        let t = self.c2 * h.powf(0.25);
        (h, t)
    }
}

/// Configuration of the subspace-recovery experiment.
#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub schedule: RecoverySchedule,
    pub delta: f64,
    pub gate_mode: GateMode,
    pub kernel: KernelSpec,
    /// Monte Carlo draws for the oracle GOP.
    pub oracle_samples: usize,
    pub oracle_seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![500, 1000, 2000, 4000],
            seeds: vec![0, 1, 2, 3, 4],
            // Calibrated once on the d=10, r=2 softmax-of-linear pilot and
            // frozen; the theory prescribes only the proportionalities.
            schedule: RecoverySchedule { c1: 12.0, c2: 0.45 },
            delta: 0.05,
            gate_mode: GateMode::MinSupport(5),
            kernel: KernelSpec::boxcar(),
            oracle_samples: 100_000,
            oracle_seed: 0xE10,
        }
    }
}

/// One (n, seed) cell of the recovery experiment.
#[derive(Debug, Clone)]
pub struct RecoveryCell {
    pub n: usize,
    pub seed: u64,
    pub h: f64,
    pub t: f64,
    /// `|| E_n G_hat - G_oracle ||_2`
    pub spectral_error: f64,
    /// `|| sin Theta(V, V_tilde) ||_2` between the true projection and the
    /// top-r eigenvectors of the estimate.
    pub sin_theta: f64,
    /// Largest magnitude among the bottom `d - r` eigenvalues of the
    /// estimate.
    pub max_bottom_eigval: f64,
}

impl RecoveryCell {
    pub fn csv_header() -> &'static str {
        "n,seed,h,t,spectral_error,sin_theta,max_bottom_eigval"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.n, self.seed, self.h, self.t, self.spectral_error, self.sin_theta,
            self.max_bottom_eigval
        )
    }
}

/// Run the recovery experiment: per `(n, seed)` cell, draw a fresh sample,
/// estimate the EJOP under the schedule, and report spectral error, subspace
/// angle, and residual bottom eigenvalues against the oracle.
pub fn recovery_experiment(
    model: &MultiIndexModel,
    config: &RecoveryConfig,
) -> Result<Vec<RecoveryCell>> {
    if config.n_grid.is_empty() || config.seeds.is_empty() {
        return Err(EjopError::InvalidParam("empty n grid or seed list".into()));
    }
    let r = model.latent_dim();
    let oracle = oracle_gop(model, config.oracle_samples, config.oracle_seed)?;

    let cells: Vec<(usize, u64)> = config
        .n_grid
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();

    cells
        .par_iter()
        .map(|&(n, seed)| {
            let (h, t) = config.schedule.params_for(n);
            let params = EstimatorParams::new(h, t, config.delta, config.kernel)?;
            let ds = sample_dataset(model, n, mix_seed(seed, n as u64))?;
            let index = NeighborIndex::build(&ds)?;
            let gate =
                GradientGateConfig::with_mode(n, model.dim(), config.delta, config.gate_mode)?;
            let estimate = estimate_ejop(&index, &params, &gate, &EjopOptions::default(), None)?;

            let diff = &estimate.matrix().to_owned() - &oracle.matrix().to_owned();
            let spectral_error = spectral_norm_symmetric(diff.view());
            let (eigvals, eigvecs) = sym_eigen(estimate.matrix());
            let v_tilde = eigvecs.slice(ndarray::s![.., ..r]);
            let sin_theta = match principal_angles(model.projection(), v_tilde) {
                Ok(rep) => rep.sin_theta_norm,
                // A rank-collapsed estimate (e.g. everything gated off) has
                // no usable top-r eigenspace; the angle is maximal.
                Err(_) => 1.0,
            };
            let max_bottom_eigval = eigvals[r..]
                .iter()
                .map(|l| l.abs())
                .fold(0.0f64, f64::max);
            Ok(RecoveryCell {
                n,
                seed,
                h,
                t,
                spectral_error,
                sin_theta,
                max_bottom_eigval,
            })
        })
        .collect()
}

/// The standard recovery-experiment instance: a softmax-of-linear link steep
/// enough that class regions have crisp boundaries in the latent plane.
///
/// Kernel smoothing at the bandwidths the `d = 10` grid affords averages
/// over most of the latent range; a saturated link keeps the smoothed
/// estimate varying along the boundary normals (which lie in the relevant
/// subspace), so the finite differences still carry directional signal.
/// Score magnitudes are drawn from `[3, 6]` with random signs.
pub fn default_recovery_model(d: usize, r: usize, noise: f64, seed: u64) -> Result<MultiIndexModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD0));
    let v = random_orthonormal(d, r, mix_seed(seed, 0xD1));
    let link = LinkFunction::SoftmaxLinear {
        scores: Array2::from_shape_fn((3, r), |_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(3.0..6.0)
        }),
        bias: Array1::from_shape_fn(3, |_| rng.gen_range(-0.3..0.3)),
    };
    MultiIndexModel::new(v, link, noise, SamplingLaw::UniformBox { half_width: 1.0 })
}

/// Build a model by link name (`softmax-linear`, `softmax-quadratic`,
/// `radial`) at the given size. The softmax-linear instance is the steep
/// recovery default; the others come from the builtin zoo.
pub fn model_from_name(
    name: &str,
    d: usize,
    r: usize,
    noise: f64,
    sampling: SamplingLaw,
    seed: u64,
) -> Result<MultiIndexModel> {
    if name == "softmax-linear" {
        let model = default_recovery_model(d, r, noise, seed)?;
        return MultiIndexModel::new(model.projection().to_owned(), model.link().clone(), noise, sampling);
    }
    for (candidate, model) in builtin_models(d, r, seed) {
        if candidate == name {
            return MultiIndexModel::new(
                model.projection().to_owned(),
                model.link().clone(),
                noise,
                sampling,
            );
        }
    }
    Err(EjopError::InvalidParam(format!("unknown link {name}")))
}

/// The three analytic link families at standardized sizes, for experiments
/// and tests: softmax-of-linear, softmax-of-quadratic, and radial.
pub fn builtin_models(d: usize, r: usize, seed: u64) -> Vec<(String, MultiIndexModel)> {
    let c = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, (d * 100 + r) as u64));
    let v = random_orthonormal(d, r, mix_seed(seed, 7));
    let sampling = SamplingLaw::UniformBox { half_width: 1.0 };

    let linear = LinkFunction::SoftmaxLinear {
        scores: Array2::from_shape_fn((c, r), |_| rng.gen_range(-2.0..2.0)),
        bias: Array1::from_shape_fn(c, |_| rng.gen_range(-0.5..0.5)),
    };
    let quad = LinkFunction::SoftmaxQuadratic {
        quad: (0..c)
            .map(|_| {
                let q = Array2::from_shape_fn((r, r), |_| rng.gen_range(-1.0..1.0));
                (&q + &q.t()) * 0.5
            })
            .collect(),
        linear: Array2::from_shape_fn((c, r), |_| rng.gen_range(-1.0..1.0)),
        bias: Array1::from_shape_fn(c, |_| rng.gen_range(-0.5..0.5)),
    };
    let radial = LinkFunction::Radial {
        centers: Array2::from_shape_fn((c, r), |_| rng.gen_range(-1.0..1.0)),
        sigma: 0.8,
    };

    [
        ("softmax-linear", linear),
        ("softmax-quadratic", quad),
        ("radial", radial),
    ]
    .into_iter()
    .map(|(name, link)| {
        (
            name.to_string(),
            MultiIndexModel::new(v.clone(), link, 0.0, sampling).expect("valid builtin"),
        )
    })
    .collect()
}
