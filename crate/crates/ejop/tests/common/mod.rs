//! Independent reference implementations used as oracles by the
//! integration and acceptance tests. Everything here is written as plain
//! scalar loops against the raw arrays, deliberately sharing no code with
//! the library's estimation path.

use ndarray::{Array1, Array2};

/// Gate rule mirrored by the reference implementation.
#[derive(Clone, Copy)]
pub enum RefGate {
    /// Empirical mass of both offset `h/2`-balls at least
    /// `(2 d ln 2n + ln(4/delta)) / n`.
    VcBound { delta: f64 },
    /// Both offset support balls (radius `h`) hold at least this many points.
    MinSupport(usize),
}

fn ref_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let diff = a[i] - b[i];
        acc += diff * diff;
    }
    acc.sqrt()
}

fn ref_softmax(v: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x > max {
            max = x;
        }
    }
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Boxcar kernel estimate at `x`, softmaxed: in-ball class frequencies, or
/// global class frequencies when the ball is empty.
fn ref_smoothed_estimate(
    points: &Array2<f64>,
    labels: &[usize],
    c: usize,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let n = points.nrows();
    let mut counts = vec![0.0; c];
    let mut in_ball = 0usize;
    for i in 0..n {
        let row: Vec<f64> = points.row(i).to_vec();
        if ref_distance(&row, x) <= h {
            counts[labels[i]] += 1.0;
            in_ball += 1;
        }
    }
    let raw: Vec<f64> = if in_ball > 0 {
        let total: f64 = counts.iter().sum();
        counts.iter().map(|&w| w / total).collect()
    } else {
        let mut global = vec![0.0; c];
        for &l in labels {
            global[l] += 1.0;
        }
        global.iter().map(|&w| w / n as f64).collect()
    };
    ref_softmax(&raw)
}

fn ref_ball_count(points: &Array2<f64>, x: &[f64], radius: f64) -> usize {
    (0..points.nrows())
        .filter(|&i| {
            let row: Vec<f64> = points.row(i).to_vec();
            ref_distance(&row, x) <= radius
        })
        .count()
}

/// Sequential scalar-loop recomputation of the empirical EJOP with a boxcar
/// kernel: for every evaluation point, gate each coordinate on the offset
/// balls, difference the softmaxed estimates, and average the outer
/// products in order.
pub fn reference_ejop(
    points: &Array2<f64>,
    labels: &[usize],
    c: usize,
    h: f64,
    t: f64,
    gate: RefGate,
    eval_points: &[usize],
) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut total = Array2::<f64>::zeros((d, d));
    for &pt in eval_points {
        let x: Vec<f64> = points.row(pt).to_vec();
        let mut jac = Array2::<f64>::zeros((d, c));
        for i in 0..d {
            let mut plus = x.clone();
            plus[i] += t;
            let mut minus = x.clone();
            minus[i] -= t;
            let pass = match gate {
                RefGate::VcBound { delta } => {
                    let alpha =
                        (2.0 * d as f64 * (2.0 * n as f64).ln() + (4.0 / delta).ln()) / n as f64;
                    let mass_plus = ref_ball_count(points, &plus, h / 2.0) as f64 / n as f64;
                    let mass_minus = ref_ball_count(points, &minus, h / 2.0) as f64 / n as f64;
                    mass_plus.min(mass_minus) >= alpha
                }
                RefGate::MinSupport(k) => {
                    ref_ball_count(points, &plus, h).min(ref_ball_count(points, &minus, h)) >= k
                }
            };
            if !pass {
                continue;
            }
            let f_plus = ref_smoothed_estimate(points, labels, c, &plus, h);
            let f_minus = ref_smoothed_estimate(points, labels, c, &minus, h);
            for k in 0..c {
                jac[[i, k]] = (f_plus[k] - f_minus[k]) / (2.0 * t);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..c {
                    acc += jac[[i, k]] * jac[[j, k]];
                }
                total[[i, j]] += acc;
            }
        }
    }
    let m = eval_points.len() as f64;
    total.mapv_inplace(|v| v / m);
    // Same final symmetrization the library applies.
    let sym = (&total + &total.t()) * 0.5;
    sym
}

/// Central finite difference of a scalar function of one coordinate.
pub fn central_difference(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, i: usize, step: f64) -> f64 {
    let mut plus = x.clone();
    plus[i] += step;
    let mut minus = x.clone();
    minus[i] -= step;
    (f(&plus) - f(&minus)) / (2.0 * step)
}
