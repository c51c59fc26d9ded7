//! Dense-network energy model for the central-sink architecture.
//!
//! In the continuous model a sender at radius `x` relays through a
//! cooperator at radius `y <= x`; `Q(x, y)` is the transmit-plus-relay
//! energy density of that choice. Concentrating all mass on the minimiser
//! `y*(x)` gives the minimal total energy. The ring model discretises the
//! disk into `N` annuli and lets each ring spread its traffic over the inner
//! rings with probabilities `p[i][j]`; [`balance_optimize`] searches for the
//! distribution that equalises per-ring energy as far as possible.

use serde::{Deserialize, Serialize};

use crate::error::DenseError;

/// Points in the coarse scan that seeds the bracket of [`q_min`].
const SCAN_POINTS: usize = 1024;
const GOLDEN_TOL: f64 = 1e-10;

/// Energy density of relaying from radius `x` through radius `y`:
/// `(x - y)^alpha + y^(alpha - 1) * x`.
pub fn q_value(x: f64, y: f64, alpha: f64) -> Result<f64, DenseError> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(DenseError::Domain(format!(
            "radii must be non-negative (x={x}, y={y})"
        )));
    }
    if y > x {
        return Err(DenseError::Domain(format!(
            "relay radius {y} exceeds sender radius {x}"
        )));
    }
    Ok(q_unchecked(x, y, alpha))
}

#[inline]
fn q_unchecked(x: f64, y: f64, alpha: f64) -> f64 {
    let relay = if y == 0.0 {
        0.0
    } else {
        y.powf(alpha - 1.0) * x
    };
    (x - y).powf(alpha) + relay
}

fn check_alpha(alpha: f64) -> Result<(), DenseError> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(DenseError::Domain(format!(
            "path-loss exponent must exceed 1, got {alpha}"
        )))
    }
}

/// Minimises `Q(x, .)` over `[0, x]`, returning `(y*, q(x))`.
///
/// A coarse scan picks the best grid cell. Inside its neighbours the
/// minimiser is refined by bisection on the sign of `dQ/dy` when the
/// derivative changes sign there, and by golden-section search otherwise,
/// to an absolute tolerance of 1e-10 in `y`. Bisection keeps going down to
/// machine precision, which golden section cannot reach on a flat minimum.
pub fn q_min(x: f64, alpha: f64) -> Result<(f64, f64), DenseError> {
    check_alpha(alpha)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(DenseError::Domain(format!(
            "sender radius must be non-negative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok((0.0, 0.0));
    }
    let f = |y: f64| q_unchecked(x, y, alpha);
    let step = x / SCAN_POINTS as f64;
    let (best, _) = (0..=SCAN_POINTS)
        .map(|k| (k, f(k as f64 * step)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("scan is non-empty");
    let slope =
        |y: f64| (alpha - 1.0) * x * y.powf(alpha - 2.0) - alpha * (x - y).powf(alpha - 1.0);
    let refine = |lo: f64, hi: f64| {
        if slope(lo) < 0.0 && slope(hi) > 0.0 {
            let y = bisect_sign_change(slope, lo, hi);
            (y, f(y))
        } else {
            golden_section(f, lo, hi, GOLDEN_TOL)
        }
    };
    let lo = best.saturating_sub(1) as f64 * step;
    let hi = ((best + 1).min(SCAN_POINTS)) as f64 * step;
    let mut candidates = vec![(0.0, f(0.0)), (x, f(x)), refine(lo, hi)];
    // For alpha < 2, Q dips just below y = x over a width that can be far
    // smaller than a scan cell.
    if slope(x - step) < 0.0 {
        let y = bisect_sign_change(slope, x - step, x);
        candidates.push((y, f(y)));
    }
    Ok(candidates
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty"))
}

/// Root of `g` in `[a, b]` given `g(a) < 0 < g(b)`.
fn bisect_sign_change(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return mid;
        }
        if g(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let y = 0.5 * (a + b);
    (y, f(y))
}

/// Parameters of the continuous dense model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub radius: f64,
    pub path_loss_exp: f64,
    /// Propagation constant.
    pub k: f64,
}

impl DenseParams {
    pub fn new(radius: f64, path_loss_exp: f64, k: f64) -> Result<Self, DenseError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(DenseError::Domain(format!(
                "radius must be positive, got {radius}"
            )));
        }
        check_alpha(path_loss_exp)?;
        Ok(DenseParams {
            radius,
            path_loss_exp,
            k,
        })
    }
}

/// `K * integral_0^R q(x) dx`, by adaptive Simpson quadrature to a
/// relative tolerance of 1e-8.
pub fn minimal_total_energy(params: &DenseParams) -> Result<f64, DenseError> {
    check_alpha(params.path_loss_exp)?;
    let alpha = params.path_loss_exp;
    let q = |x: f64| q_min(x, alpha).map(|(_, q)| q).expect("validated inputs");
    let integral = adaptive_simpson(&q, 0.0, params.radius, 1e-8, 50);
    Ok(params.k * integral)
}

/// Closed form of [`minimal_total_energy`] using `q(x) = q(1) x^alpha`.
pub fn minimal_total_energy_closed_form(params: &DenseParams) -> Result<f64, DenseError> {
    let (_, q1) = q_min(1.0, params.path_loss_exp)?;
    let a = params.path_loss_exp;
    Ok(params.k * q1 * params.radius.powf(a + 1.0) / (a + 1.0))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    // Absolute target from a first estimate keeps the relative tolerance
    // meaningful.
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// Disk split into `rings` annuli of equal `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingModel {
    pub rings: usize,
    pub width: f64,
}

impl RingModel {
    pub fn new(rings: usize, width: f64) -> Result<Self, DenseError> {
        if rings == 0 {
            return Err(DenseError::Domain("need at least one ring".into()));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(DenseError::Domain(format!(
                "ring width must be positive, got {width}"
            )));
        }
        Ok(RingModel { rings, width })
    }

    /// `rings` annuli covering a disk of `radius`.
    pub fn for_radius(radius: f64, rings: usize) -> Result<Self, DenseError> {
        if rings == 0 {
            return Err(DenseError::Domain("need at least one ring".into()));
        }
        RingModel::new(rings, radius / rings as f64)
    }
}

/// Row-stochastic, strictly lower-triangular targeting probabilities.
/// Row `i` (1-based ring index) holds `p[i][0..i]`; column 0 is the sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingDistribution {
    rows: Vec<Vec<f64>>,
}

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-8;

impl RingDistribution {
    /// Validates shape, non-negativity and row sums. Entries down to -1e-12
    /// are clamped to zero.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, DenseError> {
        let mut rows = rows;
        for (idx, row) in rows.iter_mut().enumerate() {
            let i = idx + 1;
            if row.len() != i {
                return Err(DenseError::Domain(format!(
                    "ring {i} must have {i} probabilities, got {}",
                    row.len()
                )));
            }
            for p in row.iter_mut() {
                if *p < -1e-12 || !p.is_finite() {
                    return Err(DenseError::Domain(format!(
                        "ring {i} has invalid probability {p}"
                    )));
                }
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(DenseError::Domain(format!(
                    "ring {i} probabilities sum to {sum}"
                )));
            }
        }
        Ok(RingDistribution { rows })
    }

    pub fn uniform(rings: usize) -> Self {
        RingDistribution {
            rows: (1..=rings).map(|i| vec![1.0 / i as f64; i]).collect(),
        }
    }

    /// All of ring `i`'s mass on `targets[i - 1]`.
    pub fn singular(targets: &[usize]) -> Result<Self, DenseError> {
        let rows = targets
            .iter()
            .enumerate()
            .map(|(idx, &j)| {
                let mut row = vec![0.0; idx + 1];
                if j > idx {
                    return Err(DenseError::Domain(format!(
                        "ring {} cannot target ring {j}",
                        idx + 1
                    )));
                }
                row[j] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RingDistribution { rows })
    }

    pub fn rings(&self) -> usize {
        self.rows.len()
    }

    /// Probability that ring `i` (1-based) targets ring `j < i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i - 1][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Largest deviation of a row sum from one.
    pub fn feasibility_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    fn from_flat(rings: usize, flat: &[f64]) -> Self {
        let mut rows = Vec::with_capacity(rings);
        let mut start = 0;
        for i in 1..=rings {
            rows.push(flat[start..start + i].iter().map(|&p| p.max(0.0)).collect());
            start += i;
        }
        RingDistribution { rows }
    }
}

/// Energy coefficient of `p[i][j]` summed over both rings it touches:
/// transmit `(i - j)^alpha`, plus relay `i * j^(alpha - 1)` when `j` is a
/// ring rather than the sink.
pub fn delta_coefficient(i: usize, j: usize, alpha: f64) -> f64 {
    let hop = ((i - j) as f64).powf(alpha);
    if j == 0 {
        hop
    } else {
        hop + i as f64 * (j as f64).powf(alpha - 1.0)
    }
}

fn check_shape(model: &RingModel, dist: &RingDistribution) -> Result<(), DenseError> {
    if model.rings != dist.rings() {
        return Err(DenseError::Dimension {
            expected: model.rings,
            actual: dist.rings(),
        });
    }
    Ok(())
}

/// Energy per ring: transmissions out of ring `i` plus relaying for the
/// outer rings that target it.
pub fn ring_energy_profile(
    model: &RingModel,
    dist: &RingDistribution,
    alpha: f64,
) -> Result<Vec<f64>, DenseError> {
    check_shape(model, dist)?;
    Ok(profile_unchecked(model, dist, alpha))
}

fn profile_unchecked(model: &RingModel, dist: &RingDistribution, alpha: f64) -> Vec<f64> {
    let n = model.rings;
    let scale = model.width.powf(alpha);
    let mut energy = vec![0.0; n + 1];
    for i in 1..=n {
        for (j, &p) in dist.row(i).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            energy[i] += p * ((i - j) as f64).powf(alpha);
            if j > 0 {
                energy[j] += p * i as f64 * (j as f64).powf(alpha - 1.0);
            }
        }
    }
    energy.into_iter().skip(1).map(|e| e * scale).collect()
}

/// Mean per-ring energy (from the coefficient sum) and the variance of the
/// per-ring profile around it.
pub fn mean_and_variance(
    model: &RingModel,
    dist: &RingDistribution,
    alpha: f64,
) -> Result<(f64, f64), DenseError> {
    check_shape(model, dist)?;
    let n = model.rings;
    let weighted: f64 = (1..=n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| delta_coefficient(i, j, alpha) * dist.get(i, j))
        .sum();
    let mean = model.width.powf(alpha) / n as f64 * weighted;
    let profile = profile_unchecked(model, dist, alpha);
    let variance = profile.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
    Ok((mean, variance))
}

/// Each ring sends everything to its cheapest target `argmin_j delta(i, j)`
/// (lowest `j` on ties): the discrete minimal-total-energy distribution.
pub fn min_total_assignment(model: &RingModel, alpha: f64) -> RingDistribution {
    let targets: Vec<usize> = (1..=model.rings)
        .map(|i| {
            (0..i)
                .map(|j| (delta_coefficient(i, j, alpha), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, j)| j)
                .expect("row is non-empty")
        })
        .collect();
    RingDistribution::singular(&targets).expect("targets are below the diagonal")
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Outcome of [`balance_optimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub distribution: RingDistribution,
    pub variance: f64,
    pub mean: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
    /// Objective after the start and after every accepted step.
    pub history: Vec<f64>,
}

/// The per-ring energy as a linear map of the flattened distribution.
struct RingOperator {
    rings: usize,
    scale: f64,
    /// Flat index -> (ring i, target j, transmit coefficient, relay coefficient).
    entries: Vec<(usize, usize, f64, f64)>,
}

impl RingOperator {
    fn new(model: &RingModel, alpha: f64) -> Self {
        let entries = (1..=model.rings)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| {
                let hop = ((i - j) as f64).powf(alpha);
                let relay = if j == 0 {
                    0.0
                } else {
                    i as f64 * (j as f64).powf(alpha - 1.0)
                };
                (i, j, hop, relay)
            })
            .collect();
        RingOperator {
            rings: model.rings,
            scale: model.width.powf(alpha),
            entries,
        }
    }

    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.rings + 1];
        for (&(i, j, hop, relay), &x) in self.entries.iter().zip(p) {
            e[i] += hop * x;
            e[j] += relay * x;
        }
        e.into_iter().skip(1).map(|v| v * self.scale).collect()
    }

    /// Centred profile and its variance.
    fn centred(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let e = self.apply(p);
        let n = self.rings as f64;
        let mean = e.iter().sum::<f64>() / n;
        let c: Vec<f64> = e.iter().map(|v| v - mean).collect();
        let var = c.iter().map(|v| v * v).sum::<f64>() / n;
        (c, var)
    }

    fn gradient(&self, centred: &[f64]) -> Vec<f64> {
        let factor = 2.0 * self.scale / self.rings as f64;
        self.entries
            .iter()
            .map(|&(i, j, hop, relay)| {
                let own = hop * centred[i - 1];
                let other = if j == 0 { 0.0 } else { relay * centred[j - 1] };
                factor * (own + other)
            })
            .collect()
    }
}

fn project_rows(rings: usize, v: &mut [f64]) {
    let mut start = 0;
    for i in 1..=rings {
        project_simplex(&mut v[start..start + i]);
        start += i;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimises the variance of the per-ring energy over row-stochastic
/// distributions by projected gradient descent, starting from the uniform
/// distribution.
///
/// Each step projects `p - lambda * grad` row by row onto the simplex,
/// with `lambda` from the Barzilai-Borwein rule, then moves along the
/// resulting feasible direction by the exact minimising fraction (the
/// objective is quadratic), so the objective never increases. Stops when
/// the projected-gradient norm drops to `tol` or after `max_iters` steps.
pub fn balance_optimize(
    model: &RingModel,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> BalanceResult {
    let op = RingOperator::new(model, alpha);
    let rings = model.rings;
    let mut p = RingDistribution::uniform(rings).flat();
    let (centred, mut value) = op.centred(&p);
    let mut grad = op.gradient(&centred);
    let mut history = vec![value];
    let mut lambda = {
        let g = norm(&grad);
        if g > 0.0 {
            1.0 / g
        } else {
            1.0
        }
    };
    let mut iterations = 0;
    let mut pg_norm;

    loop {
        let mut unit: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x - g).collect();
        project_rows(rings, &mut unit);
        pg_norm = norm(&unit.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
        if pg_norm <= tol || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut trial: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x - lambda * g).collect();
        project_rows(rings, &mut trial);
        let dir: Vec<f64> = trial.iter().zip(&p).map(|(a, b)| a - b).collect();
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope >= 0.0 || norm(&dir) == 0.0 {
            // Step too small to make progress in floating point.
            break;
        }
        let (_, curvature) = op.centred(&dir);
        let t = if curvature > 0.0 {
            (-slope / (2.0 * curvature)).min(1.0)
        } else {
            1.0
        };

        let next: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
        let (next_centred, next_value) = op.centred(&next);
        if next_value > value {
            // Rounding only; never accept an increase.
            lambda *= 0.5;
            continue;
        }
        let next_grad = op.gradient(&next_centred);
        let s: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        lambda = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            (lambda * 2.0).min(1e12)
        };

        p = next;
        value = next_value;
        grad = next_grad;
        history.push(value);
    }
    let distribution = RingDistribution::from_flat(rings, &p);
    let (mean, variance) =
        mean_and_variance(model, &distribution, alpha).expect("shape matches model");
    BalanceResult {
        distribution,
        variance,
        mean,
        iterations,
        converged: pg_norm <= tol,
        projected_gradient_norm: pg_norm,
        history,
    }
}
