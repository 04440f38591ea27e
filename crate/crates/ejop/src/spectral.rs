//! Eigenstructure of the outer-product matrix: the metric transform
//! `x -> D^p V^T x`, principal angles between subspaces, and the matrix
//! perturbation inequalities as runnable checks.
//!
//! Eigenvector sign and ordering inside degenerate eigenvalue clusters are
//! not meaningful; every check here is phrased on reconstructions, subspaces,
//! and distances, never on individual eigenvector entries.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::data::{EjopMatrix, PSD_REL_TOL};
use crate::error::{EjopError, Result};

/// Eigenpair bundle of an EJOP matrix, applied as `x -> diag(D)^power V^T x`.
///
/// Columns of `eigvecs` are orthonormal and ordered by nonincreasing
/// eigenvalue; eigenvalues are clipped at zero.
#[derive(Debug, Clone)]
pub struct MetricTransform {
    eigvecs: Array2<f64>,
    eigvals: Vec<f64>,
    power: f64,
}

impl MetricTransform {
    pub fn new(eigvecs: Array2<f64>, eigvals: Vec<f64>, power: f64) -> Result<Self> {
        if eigvecs.nrows() != eigvecs.ncols() || eigvecs.nrows() != eigvals.len() {
            return Err(EjopError::DimensionMismatch {
                expected: eigvecs.nrows(),
                got: eigvals.len(),
            });
        }
        if eigvals.windows(2).any(|w| w[0] < w[1]) {
            return Err(EjopError::InvalidParam(
                "eigenvalues must be nonincreasing".into(),
            ));
        }
        if eigvals.iter().any(|&l| l < 0.0) {
            return Err(EjopError::InvalidParam(
                "eigenvalues must be nonnegative".into(),
            ));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(EjopError::InvalidParam("power must be positive".into()));
        }
        Ok(Self {
            eigvecs,
            eigvals,
            power,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Orthogonal matrix of eigenvectors (columns, descending eigenvalue).
    pub fn eigvecs(&self) -> ArrayView2<'_, f64> {
        self.eigvecs.view()
    }

    /// Nonincreasing, nonnegative eigenvalues.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn with_power(&self, power: f64) -> Result<Self> {
        Self::new(self.eigvecs.clone(), self.eigvals.clone(), power)
    }

    /// Top-`r` eigenvectors as a `d x r` basis.
    pub fn top_eigvecs(&self, r: usize) -> Array2<f64> {
        self.eigvecs.slice(ndarray::s![.., ..r]).to_owned()
    }

    /// Apply `diag(D)^power V^T` to a single point.
    pub fn transform_point(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(EjopError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let projected = self.eigvecs.t().dot(&x);
        let scaled: Array1<f64> = projected
            .iter()
            .zip(self.eigvals.iter())
            .map(|(&p, &l)| l.powf(self.power) * p)
            .collect();
        Ok(scaled)
    }

    /// Apply the transform to every row of `points`.
    pub fn transform_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(EjopError::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        let mut out = points.dot(&self.eigvecs);
        for (j, &l) in self.eigvals.iter().enumerate() {
            let scale = l.powf(self.power);
            out.column_mut(j).mapv_inplace(|v| v * scale);
        }
        Ok(out)
    }
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigen-decompose a symmetric matrix; returns `(eigenvalues, eigenvectors)`
/// sorted by nonincreasing eigenvalue, eigenvectors as columns.
pub fn sym_eigen(a: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let d = a.nrows();
    let eig = SymmetricEigen::new(to_dmatrix(a));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let eigvals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigvecs = Array2::zeros((d, d));
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..d {
            eigvecs[[row, new_col]] = eig.eigenvectors[(row, old_col)];
        }
    }
    (eigvals, eigvecs)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_symmetric(a: ArrayView2<'_, f64>) -> f64 {
    let (eigvals, _) = sym_eigen(a);
    eigvals.iter().fold(0.0f64, |m, &l| m.max(l.abs()))
}

/// Largest singular value of a general rectangular matrix.
pub fn spectral_norm(a: ArrayView2<'_, f64>) -> f64 {
    to_dmatrix(a)
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |m, &s| m.max(s))
}

/// Spectral decomposition of an EJOP matrix into a metric transform with the
/// default exponent 1/2 (so Euclidean distance on transformed points equals
/// the `G`-weighted distance).
///
/// Eigenvalues more negative than `-PSD_REL_TOL * lambda_max` are rejected;
/// anything in the round-off band below zero is clipped to 0.
pub fn eigendecompose(g: &EjopMatrix) -> Result<MetricTransform> {
    eigendecompose_with_power(g, 0.5)
}

pub fn eigendecompose_with_power(g: &EjopMatrix, power: f64) -> Result<MetricTransform> {
    let (eigvals, eigvecs) = sym_eigen(g.matrix());
    let lambda_max = eigvals.first().copied().unwrap_or(0.0);
    let allow = PSD_REL_TOL * lambda_max.max(0.0) + f64::EPSILON;
    if let Some(&worst) = eigvals.last() {
        if worst < -allow {
            return Err(EjopError::NotPsd { eigval: worst });
        }
    }
    let clipped: Vec<f64> = eigvals.into_iter().map(|l| l.max(0.0)).collect();
    MetricTransform::new(eigvecs, clipped, power)
}

/// Principal angles between the column spaces of two `d x r` bases.
#[derive(Debug, Clone)]
pub struct AngleReport {
    /// The `r x r` angle matrix `Theta(X1, X2)`.
    pub theta: Array2<f64>,
    /// Spectral norm of `sin Theta`: the sine of the largest principal angle.
    pub sin_theta_norm: f64,
    /// Principal angles in nondecreasing order.
    pub angles: Vec<f64>,
}

fn orthonormal_basis(x: ArrayView2<'_, f64>) -> Result<DMatrix<f64>> {
    let r = x.ncols();
    if r == 0 || x.nrows() < r {
        return Err(EjopError::RankDeficient {
            rank: 0,
            cols: r,
        });
    }
    let svd = to_dmatrix(x).svd(true, false);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * smax.max(1.0))
        .count();
    if rank < r {
        return Err(EjopError::RankDeficient { rank, cols: r });
    }
    let u = svd.u.expect("left singular vectors requested");
    Ok(u.columns(0, r).into_owned())
}

/// The angle matrix between two full-rank `d x r` bases, plus the spectral
/// norm of its sine. Inputs are orthonormalized first, which makes the
/// `(X^T X)^{-1/2}` and `(X^T X)^{-1}` factors in the definition coincide.
pub fn principal_angles(
    x1: ArrayView2<'_, f64>,
    x2: ArrayView2<'_, f64>,
) -> Result<AngleReport> {
    if x1.nrows() != x2.nrows() || x1.ncols() != x2.ncols() {
        return Err(EjopError::DimensionMismatch {
            expected: x1.ncols(),
            got: x2.ncols(),
        });
    }
    let q1 = orthonormal_basis(x1)?;
    let q2 = orthonormal_basis(x2)?;
    let product = q1.transpose() * &q2;
    let svd = product.clone().svd(true, false);

    let r = x1.ncols();
    let mut pairs: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .take(r)
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect();
    // Descending cosine = ascending angle.
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite singular values"));
    let angles: Vec<f64> = pairs
        .iter()
        .map(|&(s, _)| s.clamp(0.0, 1.0).acos())
        .collect();

    // Theta = W diag(arccos sigma) W^T with W the left singular vectors of
    // Q1^T Q2 (eigenvectors of Q1^T Q2 Q2^T Q1).
    let w = svd.u.expect("left singular vectors requested");
    let mut theta = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            let mut acc = 0.0;
            for (a, &(s, col)) in pairs.iter().enumerate() {
                let angle = angles[a];
                let _ = s;
                acc += w[(i, col)] * angle * w[(j, col)];
            }
            theta[[i, j]] = acc;
        }
    }

    // The sines of the principal angles are the singular values of
    // (I - Q1 Q1^T) Q2; unlike arccos of the cosines, this keeps full
    // precision for small angles.
    let complement = &q2 - &q1 * product;
    let sin_theta_norm = complement
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |m, &s| m.max(s))
        .min(1.0);
    Ok(AngleReport {
        theta,
        sin_theta_norm,
        angles,
    })
}

/// Two sides of an inequality check.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack() >= -tol
    }
}

/// Both eigenvalue-variation inequalities evaluated on a pair of symmetric
/// matrices.
#[derive(Debug, Clone, Copy)]
pub struct EigenvaluePerturbationReport {
    /// `max_i |lambda_i - lambda_hat_i| <= ||G - G_hat||_2`
    pub spectral: BoundCheck,
    /// `sqrt(sum_i |lambda_i - lambda_hat_i|^2) <= ||G - G_hat||_F`
    pub frobenius: BoundCheck,
}

fn require_symmetric(a: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(EjopError::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_asym = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > 1e-10 * scale.max(1.0) {
        return Err(EjopError::NotSymmetric { max_asym });
    }
    Ok(())
}

/// Evaluate both sides of the eigenvalue-variation inequalities (spectral
/// and Frobenius) for a pair of symmetric matrices of equal size.
pub fn check_eigenvalue_perturbation(
    g: ArrayView2<'_, f64>,
    g_hat: ArrayView2<'_, f64>,
) -> Result<EigenvaluePerturbationReport> {
    require_symmetric(g)?;
    require_symmetric(g_hat)?;
    if g.nrows() != g_hat.nrows() {
        return Err(EjopError::DimensionMismatch {
            expected: g.nrows(),
            got: g_hat.nrows(),
        });
    }
    let (lam, _) = sym_eigen(g);
    let (lam_hat, _) = sym_eigen(g_hat);
    let diff = &g.to_owned() - &g_hat.to_owned();

    let max_dev = lam
        .iter()
        .zip(lam_hat.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let fro_dev = lam
        .iter()
        .zip(lam_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let spectral_rhs = spectral_norm_symmetric(diff.view());
    let fro_rhs = diff.iter().map(|v| v * v).sum::<f64>().sqrt();

    Ok(EigenvaluePerturbationReport {
        spectral: BoundCheck {
            lhs: max_dev,
            rhs: spectral_rhs,
        },
        frobenius: BoundCheck {
            lhs: fro_dev,
            rhs: fro_rhs,
        },
    })
}

/// Result of the eigenspace-variation check.
#[derive(Debug, Clone, Copy)]
pub enum SinThetaReport {
    /// `||sin Theta(X1, X1_hat)||_2 <= ||(G_hat - G) X1||_2 / gap`, where the
    /// gap separates the top-`r` eigenvalues of `G` from the bottom `d - r`
    /// eigenvalues of `G_hat`.
    Checked(BoundCheck),
    /// The denominator fell below 1e-10; the bound is vacuous there.
    GapDegenerate,
}

/// Evaluate the eigenspace-variation bound at split rank `r`.
pub fn check_sin_theta_bound(
    g: ArrayView2<'_, f64>,
    g_hat: ArrayView2<'_, f64>,
    r: usize,
) -> Result<SinThetaReport> {
    require_symmetric(g)?;
    require_symmetric(g_hat)?;
    let d = g.nrows();
    if g_hat.nrows() != d {
        return Err(EjopError::DimensionMismatch {
            expected: d,
            got: g_hat.nrows(),
        });
    }
    if r == 0 || r >= d {
        return Err(EjopError::InvalidParam(format!(
            "split rank {r} must lie in [1, d-1]"
        )));
    }

    let (lam, vecs) = sym_eigen(g);
    let (lam_hat, vecs_hat) = sym_eigen(g_hat);
    let x1 = vecs.slice(ndarray::s![.., ..r]);
    let x1_hat = vecs_hat.slice(ndarray::s![.., ..r]);

    // min |lambda - lambda_hat| over lambda in the top-r of G and
    // lambda_hat in the bottom d-r of G_hat.
    let mut gap = f64::INFINITY;
    for &l in &lam[..r] {
        for &lh in &lam_hat[r..] {
            gap = gap.min((l - lh).abs());
        }
    }
    if gap < 1e-10 {
        return Ok(SinThetaReport::GapDegenerate);
    }

    let lhs = principal_angles(x1, x1_hat)?.sin_theta_norm;
    let diff = &g_hat.to_owned() - &g.to_owned();
    let perturbed = diff.dot(&x1);
    let rhs = spectral_norm(perturbed.view()) / gap;
    Ok(SinThetaReport::Checked(BoundCheck { lhs, rhs }))
}

/// Aggregate result of a randomized inequality suite.
#[derive(Debug, Clone, Copy)]
pub struct TrialStats {
    pub trials: usize,
    pub held: usize,
    pub skipped: usize,
    pub min_slack: f64,
    pub median_slack: f64,
}

fn summarize(slacks: &mut Vec<f64>, skipped: usize, tol: f64) -> TrialStats {
    slacks.sort_by(|a, b| a.partial_cmp(b).expect("finite slack"));
    let held = slacks.iter().filter(|&&s| s >= -tol).count();
    TrialStats {
        trials: slacks.len() + skipped,
        held,
        skipped,
        min_slack: slacks.first().copied().unwrap_or(f64::INFINITY),
        median_slack: slacks.get(slacks.len() / 2).copied().unwrap_or(f64::NAN),
    }
}

fn random_symmetric_matrix(d: usize, scale: f64, rng: &mut impl rand::Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d), |_| rng.gen_range(-scale..scale));
    (&a + &a.t()) * 0.5
}

/// Run `trials` random symmetric pairs through the eigenvalue-variation
/// inequalities; dimensions cycle over `dims`. Returns (spectral, Frobenius)
/// stats with slack tolerance `1e-12`.
pub fn eigenvalue_perturbation_trials(
    trials: usize,
    dims: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> (TrialStats, TrialStats) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim_list: Vec<usize> = dims.collect();
    let mut spectral = Vec::with_capacity(trials);
    let mut frobenius = Vec::with_capacity(trials);
    for trial in 0..trials {
        let d = dim_list[trial % dim_list.len()];
        let g = random_symmetric_matrix(d, 1.0, &mut rng);
        let g_hat = random_symmetric_matrix(d, 1.0, &mut rng);
        let rep = check_eigenvalue_perturbation(g.view(), g_hat.view())
            .expect("symmetric by construction");
        spectral.push(rep.spectral.slack());
        frobenius.push(rep.frobenius.slack());
    }
    (
        summarize(&mut spectral, 0, 1e-12),
        summarize(&mut frobenius, 0, 1e-12),
    )
}

/// Run `trials` random PSD pairs with an enforced eigengap of at least
/// `gap` between the top-`r` spectrum of `G` and the bottom spectrum of the
/// perturbed matrix, through the eigenspace-variation bound.
pub fn sin_theta_trials(
    trials: usize,
    dims: std::ops::RangeInclusive<usize>,
    gap: f64,
    seed: u64,
) -> TrialStats {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim_list: Vec<usize> = dims.collect();
    let mut slacks = Vec::with_capacity(trials);
    let mut skipped = 0usize;
    for trial in 0..trials {
        let d = dim_list[trial % dim_list.len()];
        let r = 1 + trial % (d - 1);
        // PSD with top-r eigenvalues >= 2 + gap, bottom <= 1, then a
        // perturbation of spectral norm at most ~0.3: the spectra stay
        // separated by at least gap + 0.7.
        let basis = sym_eigen(random_symmetric_matrix(d, 1.0, &mut rng).view()).1;
        let eigvals: Vec<f64> = (0..d)
            .map(|i| {
                if i < r {
                    2.0 + gap + rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        let g = basis
            .dot(&Array2::from_diag(&Array1::from(eigvals)))
            .dot(&basis.t());
        let g = (&g + &g.t()) * 0.5;
        let noise = random_symmetric_matrix(d, 0.3 / d as f64, &mut rng);
        let g_hat = &g + &noise;
        match check_sin_theta_bound(g.view(), g_hat.view(), r).expect("valid inputs") {
            SinThetaReport::Checked(b) => slacks.push(b.slack()),
            SinThetaReport::GapDegenerate => skipped += 1,
        }
    }
    summarize(&mut slacks, skipped, 1e-12)
}
