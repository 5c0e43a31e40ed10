//! Characteristic time and optimal sampling proportions.
//!
//! For a weight vector `w` and an arm `a` outside the optimal set, the cheapest
//! way to make `a` beat every optimal arm is to move all `M + 1` involved means
//! to their `w`-weighted average. This gives the per-alternative value
//!
//! ```text
//! F_a(w) = sum_{i in top ∪ {a}} w_i d(mu_i, lambda_a(w)),
//! lambda_a(w) = sum w_i mu_i / sum w_i
//! ```
//!
//! and the objective `g(mu, w) = min_a F_a(w)`, whose maximum over the simplex
//! is `1 / T*(mu)`.
//!
//! Each `F_a` is an infimum of functions linear in `w`, so `g` is concave and
//! the vector `G_a = (d(mu_j, lambda_a(w)))_j` is a supergradient of `F_a` with
//! `F_a(w) = G_a · w`. For any probability vector `p` over alternatives this
//! yields the global upper bound
//!
//! ```text
//! max_w g(mu, w) <= max_j (sum_a p_a G_a)_j,
//! ```
//!
//! which the solver uses as its optimality certificate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyKind;

/// Tolerance used to decide whether the top `M` means form a plateau.
pub const PLATEAU_TOL: f64 = 1e-12;

/// Tolerance on `sum(w) = 1` for weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A bandit model: `K` arms from one family plus the declared number `M` of
/// optimal arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec")]
pub struct BanditInstance {
    family: FamilyKind,
    means: Vec<f64>,
    m_opt: usize,
    #[serde(skip)]
    top: Vec<usize>,
    #[serde(skip)]
    alternatives: Vec<usize>,
}

#[derive(Deserialize)]
struct InstanceSpec {
    family: FamilyKind,
    means: Vec<f64>,
    m_opt: usize,
}

impl TryFrom<InstanceSpec> for BanditInstance {
    type Error = Error;

    fn try_from(spec: InstanceSpec) -> Result<Self> {
        BanditInstance::new(spec.family, spec.means, spec.m_opt)
    }
}

impl BanditInstance {
    /// Build an instance whose top `m_opt` means are equal and strictly above
    /// every other mean.
    pub fn new(family: FamilyKind, means: Vec<f64>, m_opt: usize) -> Result<Self> {
        let inst = Self::build(family, means, m_opt)?;
        let best = inst.means[inst.top[0]];
        let plateau_low = inst.top.iter().map(|&i| inst.means[i]).fold(f64::INFINITY, f64::min);
        if best - plateau_low > PLATEAU_TOL {
            return Err(Error::InvalidInstance(format!(
                "the top {m_opt} means are not equal ({best} vs {plateau_low})"
            )));
        }
        let runner_up = inst
            .alternatives
            .iter()
            .map(|&a| inst.means[a])
            .fold(f64::NEG_INFINITY, f64::max);
        if plateau_low - runner_up <= PLATEAU_TOL {
            return Err(Error::InvalidInstance(format!(
                "the optimal plateau {plateau_low} does not strictly exceed the next mean {runner_up}"
            )));
        }
        Ok(inst)
    }

    /// Build an instance from empirical means without requiring a plateau.
    ///
    /// Means are clamped into the family's open domain first. The top set is
    /// the `m_opt` largest means, ties broken by arm index.
    pub fn empirical(family: FamilyKind, means: &[f64], m_opt: usize) -> Result<Self> {
        let clamped = means.iter().map(|&x| family.clamp_mean(x)).collect();
        Self::build(family, clamped, m_opt)
    }

    fn build(family: FamilyKind, means: Vec<f64>, m_opt: usize) -> Result<Self> {
        family.validate()?;
        let k = means.len();
        if k < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 arms, got {k}")));
        }
        if m_opt < 1 || m_opt > k - 1 {
            return Err(Error::InvalidInstance(format!(
                "number of optimal arms must be in 1..={}, got {m_opt}",
                k - 1
            )));
        }
        for &mu in &means {
            family.check_mean(mu)?;
        }
        let order = sorted_desc(&means);
        let mut top = order[..m_opt].to_vec();
        let mut alternatives = order[m_opt..].to_vec();
        top.sort_unstable();
        alternatives.sort_unstable();
        Ok(BanditInstance {
            family,
            means,
            m_opt,
            top,
            alternatives,
        })
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn m_opt(&self) -> usize {
        self.m_opt
    }

    /// Indices of the declared top-`M` arms, ascending.
    pub fn top(&self) -> &[usize] {
        &self.top
    }

    /// Indices of the arms outside the top set, ascending.
    pub fn alternatives(&self) -> &[usize] {
        &self.alternatives
    }

    /// Arms whose mean equals the maximal mean exactly.
    pub fn optimal_set(&self) -> Vec<usize> {
        let best = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.k()).filter(|&a| self.means[a] == best).collect()
    }
}

/// Indices sorted by decreasing value, ties by index.
pub(crate) fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidWeights(format!("entry {x} is not a nonnegative number")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("entries sum to {total}, not 1")));
        }
        Ok(Weights(w))
    }

    pub fn uniform(k: usize) -> Self {
        Weights(vec![1.0 / k as f64; k])
    }

    pub(crate) fn from_raw(w: Vec<f64>) -> Self {
        Weights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether every coordinate is at least `epsilon` (up to rounding).
    pub fn is_truncated(&self, epsilon: f64) -> bool {
        self.0.iter().all(|&x| x >= epsilon - SIMPLEX_TOL)
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// `T*(mu)`.
    pub t_star: f64,
    /// A maximizer `w*(mu)`; not claimed to be unique.
    pub w_star: Weights,
    /// Certified upper bound on `1/T*` minus the achieved objective.
    pub gap_certificate: f64,
    pub iterations: usize,
}

impl OracleSolution {
    pub fn value(&self) -> f64 {
        1.0 / self.t_star
    }
}

/// Weighted mean of the `M + 1` means involved in one alternative.
pub fn pooled_alt_mean(means: &[f64], weights: &[f64]) -> Result<f64> {
    if means.len() != weights.len() || means.is_empty() {
        return Err(Error::Precondition(format!(
            "{} means but {} weights",
            means.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidWeights(format!("pooling weight {w} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    let dot: f64 = means.iter().zip(weights).map(|(m, w)| m * w).sum();
    Ok(dot / total)
}

/// The mixture divergence `I_alpha(mu_1..mu_M, mu_a)`.
pub fn i_alpha(family: FamilyKind, means_top: &[f64], mean_alt: f64, alphas: &[f64]) -> Result<f64> {
    if means_top.len() != alphas.len() || means_top.is_empty() {
        return Err(Error::Precondition(format!(
            "{} top means but {} mixture weights",
            means_top.len(),
            alphas.len()
        )));
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::Precondition("mixture weights must be nonnegative".into()));
    }
    let alpha_sum: f64 = alphas.iter().sum();
    if alpha_sum > 1.0 + SIMPLEX_TOL {
        return Err(Error::Precondition(format!("mixture weights sum to {alpha_sum} > 1")));
    }
    family.validate()?;
    family.check_mean(mean_alt)?;
    for &mu in means_top {
        family.check_mean(mu)?;
    }
    let rest = (1.0 - alpha_sum).max(0.0);
    let mix = means_top.iter().zip(alphas).map(|(m, a)| a * m).sum::<f64>() + rest * mean_alt;
    let top_part: f64 = means_top
        .iter()
        .zip(alphas)
        .map(|(&m, &a)| a * family.kl_unchecked(m, mix))
        .sum();
    Ok(top_part + rest * family.kl_unchecked(mean_alt, mix))
}

/// Inner minimum over the alternative set for fixed weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub value: f64,
    /// The alternative arm attaining the minimum (lowest index on ties).
    pub arm: usize,
    /// Common value all `M + 1` involved means are moved to.
    pub lambda: f64,
}

/// Value and pooled mean of the alternative in which `alt` overtakes the top set.
fn alternative_value(inst: &BanditInstance, w: &[f64], alt: usize) -> (f64, f64) {
    let mu = &inst.means;
    let mut mass = w[alt];
    let mut dot = w[alt] * mu[alt];
    for &i in &inst.top {
        mass += w[i];
        dot += w[i] * mu[i];
    }
    if !(mass > 0.0) {
        // No evidence on any involved arm; any common value is a minimizer.
        let lambda = (mu[alt] + inst.top.iter().map(|&i| mu[i]).sum::<f64>()) / (inst.m_opt + 1) as f64;
        return (0.0, lambda);
    }
    let lambda = dot / mass;
    let kind = inst.family;
    let mut value = w[alt] * kind.kl_unchecked(mu[alt], lambda);
    for &i in &inst.top {
        value += w[i] * kind.kl_unchecked(mu[i], lambda);
    }
    (value, lambda)
}

pub fn best_response(inst: &BanditInstance, w: &Weights) -> Result<BestResponse> {
    check_weights_for(inst, w)?;
    Ok(best_response_raw(inst, w.as_slice()))
}

fn best_response_raw(inst: &BanditInstance, w: &[f64]) -> BestResponse {
    let mut best = BestResponse {
        value: f64::INFINITY,
        arm: usize::MAX,
        lambda: f64::NAN,
    };
    for &a in &inst.alternatives {
        let (value, lambda) = alternative_value(inst, w, a);
        if value < best.value {
            best = BestResponse { value, arm: a, lambda };
        }
    }
    best
}

/// The objective `g(mu, w)`.
pub fn g_value(inst: &BanditInstance, w: &Weights) -> Result<f64> {
    best_response(inst, w).map(|br| br.value)
}

fn check_weights_for(inst: &BanditInstance, w: &Weights) -> Result<()> {
    if w.len() != inst.k() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} arms",
            w.len(),
            inst.k()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative optimality tolerance on `1/T*`.
    pub tol: f64,
    /// Cap on Newton steps per start.
    pub max_iter: usize,
    /// Random restarts besides the first (warm or uniform) start.
    pub multistarts: usize,
    /// Cross-check against an exhaustive simplex grid when `K <= 4`.
    pub grid_certify: bool,
    pub grid_step: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 100_000,
            multistarts: 8,
            grid_certify: true,
            grid_step: 5e-3,
            seed: 0x05ee_d0f0_ac1e,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Self::default() }
    }

    /// Cheap settings for re-solving on empirical means every round.
    pub fn warm(tol: f64, max_iter: usize) -> Self {
        SolverOptions {
            tol,
            max_iter,
            multistarts: 0,
            grid_certify: false,
            ..Self::default()
        }
    }
}

/// Compute `T*(mu)` and a maximizer `w*(mu)` to relative tolerance `tol`.
pub fn solve(inst: &BanditInstance, tol: f64) -> Result<OracleSolution> {
    solve_with(inst, &SolverOptions::with_tol(tol), None)
}

/// Interior-point maximization of `g` with a certified optimality gap.
///
/// The first start is `warm` (or uniform); further starts are seeded random
/// points of the simplex. The best objective wins, and a later start only
/// replaces an earlier one when it improves by more than the tolerance.
pub fn solve_with(inst: &BanditInstance, opts: &SolverOptions, warm: Option<&Weights>) -> Result<OracleSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if let Some(w) = warm {
        check_weights_for(inst, w)?;
    }
    let groups = plateau_groups(inst);
    if groups.len() == inst.m_opt {
        return solve_reduced(inst, opts, warm.map(|w| w.as_slice().to_vec()));
    }

    // Optimal arms with identical means only matter through their total
    // weight; solve on one arm per group and split the weight evenly.
    let mut means: Vec<f64> = groups.iter().map(|g| inst.means[g[0]]).collect();
    means.extend(inst.alternatives.iter().map(|&a| inst.means[a]));
    let n_groups = groups.len();
    let reduced = BanditInstance {
        family: inst.family,
        means,
        m_opt: n_groups,
        top: (0..n_groups).collect(),
        alternatives: (n_groups..n_groups + inst.alternatives.len()).collect(),
    };
    let fold = |w: &[f64]| -> Vec<f64> {
        groups
            .iter()
            .map(|g| g.iter().map(|&i| w[i]).sum())
            .chain(inst.alternatives.iter().map(|&a| w[a]))
            .collect()
    };
    let unfold = |w: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; inst.k()];
        for (gi, g) in groups.iter().enumerate() {
            for &i in g {
                full[i] = w[gi] / g.len() as f64;
            }
        }
        for (ai, &a) in inst.alternatives.iter().enumerate() {
            full[a] = w[n_groups + ai];
        }
        full
    };
    let expand = |sol: OracleSolution| OracleSolution {
        w_star: Weights::from_raw(unfold(sol.w_star.as_slice())),
        ..sol
    };
    match solve_reduced(&reduced, opts, warm.map(|w| fold(w.as_slice()))) {
        Ok(sol) => Ok(expand(sol)),
        Err(Error::NotConverged {
            iterations,
            relative_gap,
            best,
        }) => Err(Error::NotConverged {
            iterations,
            relative_gap,
            best: Box::new(expand(*best)),
        }),
        Err(e) => Err(e),
    }
}

/// Top arms grouped by exactly equal means, in index order.
fn plateau_groups(inst: &BanditInstance) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &inst.top {
        match groups.iter_mut().find(|g| inst.means[g[0]] == inst.means[i]) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn solve_reduced(inst: &BanditInstance, opts: &SolverOptions, warm: Option<Vec<f64>>) -> Result<OracleSolution> {
    let k = inst.k();
    let mut barrier = Barrier::new(inst);

    let uniform = vec![1.0 / k as f64; k];
    if barrier.evaluate(&uniform) <= 0.0 {
        return Err(Error::Degenerate);
    }

    let first = match warm {
        Some(w) if w.iter().all(|x| *x > 0.0) => w,
        _ => uniform,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![first];
    for _ in 0..opts.multistarts {
        let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        starts.push(raw.into_iter().map(|x: f64| x / total).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut upper = f64::INFINITY;
    let mut iterations = 0;
    for start in starts {
        let run = barrier.run(&start, opts.tol, opts.max_iter);
        iterations += run.iterations;
        upper = upper.min(run.upper);
        let replace = match &best {
            None => true,
            Some((_, value)) => run.value > value * (1.0 + opts.tol),
        };
        if replace {
            best = Some((run.w, run.value));
        }
    }
    let (mut w_best, mut value) = best.expect("at least one start");

    if opts.grid_certify && k <= 4 {
        let (grid_w, grid_value) = grid_search(inst, opts.grid_step);
        if grid_value > value * (1.0 + opts.tol) {
            let run = barrier.run(&grid_w, opts.tol, opts.max_iter);
            iterations += run.iterations;
            upper = upper.min(run.upper);
            if run.value > value {
                w_best = run.w;
                value = run.value;
            }
        }
    }

    let gap = (upper - value).max(0.0);
    let solution = OracleSolution {
        t_star: 1.0 / value,
        w_star: Weights::from_raw(w_best),
        gap_certificate: gap,
        iterations,
    };
    if gap > opts.tol * value {
        return Err(Error::NotConverged {
            iterations,
            relative_gap: gap / value,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Exhaustive search of `g` over the simplex grid with spacing `step`.
pub fn grid_search(inst: &BanditInstance, step: f64) -> (Vec<f64>, f64) {
    let k = inst.k();
    let n = (1.0 / step).round() as usize;
    let mut counts = vec![0usize; k];
    let mut w = vec![0.0; k];
    let mut best = (vec![1.0 / k as f64; k], f64::NEG_INFINITY);
    grid_rec(inst, n, 0, n, &mut counts, &mut w, &mut best);
    best
}

fn grid_rec(
    inst: &BanditInstance,
    n: usize,
    pos: usize,
    remaining: usize,
    counts: &mut [usize],
    w: &mut [f64],
    best: &mut (Vec<f64>, f64),
) {
    let k = counts.len();
    if pos == k - 1 {
        counts[pos] = remaining;
        for (x, &c) in w.iter_mut().zip(counts.iter()) {
            *x = c as f64 / n as f64;
        }
        let value = best_response_raw(inst, w).value;
        if value > best.1 {
            best.0.copy_from_slice(w);
            best.1 = value;
        }
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        grid_rec(inst, n, pos + 1, remaining - c, counts, w, best);
    }
}

struct BarrierRun {
    w: Vec<f64>,
    value: f64,
    upper: f64,
    iterations: usize,
}

/// Interior-point solver for `max t s.t. F_a(w) >= t, w in simplex`.
///
/// Newton steps maximize `t / mu + sum_a ln(F_a(w) - t) + sum_j ln w_j` on
/// `sum w = 1` for a decreasing barrier weight `mu`. The Hessian of `F_a` is
/// the rank-one matrix `-c c^T / (V(lambda) W)` with `c_j = mu_j - lambda`,
/// `W` the mass on the involved arms and `V` the family's variance function.
/// At every iterate the barrier multipliers `1 / (F_a - t)`, normalized,
/// feed the upper bound described in the module docs.
struct Barrier<'a> {
    inst: &'a BanditInstance,
    values: Vec<f64>,
    /// Row-major `n_alt x K` supergradients.
    grads: Vec<f64>,
    /// Row-major `n_alt x K` curvature directions `c`.
    dirs: Vec<f64>,
    /// `1 / (V(lambda) W)` per alternative.
    curvature: Vec<f64>,
}

impl<'a> Barrier<'a> {
    fn new(inst: &'a BanditInstance) -> Self {
        let n = inst.alternatives.len();
        let k = inst.k();
        Barrier {
            inst,
            values: vec![0.0; n],
            grads: vec![0.0; n * k],
            dirs: vec![0.0; n * k],
            curvature: vec![0.0; n],
        }
    }

    /// Fill per-alternative values, supergradients and curvature; return `g(w)`.
    fn evaluate(&mut self, w: &[f64]) -> f64 {
        let inst = self.inst;
        let k = inst.k();
        let kind = inst.family;
        let mu = &inst.means;
        let mut g = f64::INFINITY;
        for (row, &a) in inst.alternatives.iter().enumerate() {
            let (value, lambda) = alternative_value(inst, w, a);
            self.values[row] = value;
            g = g.min(value);
            let mass = w[a] + inst.top.iter().map(|&i| w[i]).sum::<f64>();
            self.curvature[row] = 1.0 / (kind.variance(lambda) * mass);
            let grad = &mut self.grads[row * k..(row + 1) * k];
            let dir = &mut self.dirs[row * k..(row + 1) * k];
            grad.fill(0.0);
            dir.fill(0.0);
            for &j in inst.top.iter().chain(std::iter::once(&a)) {
                grad[j] = kind.kl_unchecked(mu[j], lambda);
                dir[j] = mu[j] - lambda;
            }
        }
        g
    }

    /// `max_j (sum_a p_a G_a)_j` with `p_a` proportional to `weights[a]`.
    fn upper_bound(&self, weights: &[f64]) -> f64 {
        let k = self.inst.k();
        let total: f64 = weights.iter().sum();
        (0..k)
            .map(|j| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(row, p)| p * self.grads[row * k + j])
                    .sum::<f64>()
                    / total
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bound from the multipliers that best equalize `sum_a p_a G_a` across
    /// arms (least squares), clipped to the simplex.
    fn refined_upper_bound(&self) -> f64 {
        let k = self.inst.k();
        let n = self.inst.alternatives.len();
        // Unknowns (p_1..p_n, nu): sum_a p_a G_aj - nu = 0, sum_a p_a = 1.
        let mut a = DMatrix::<f64>::zeros(k + 1, n + 1);
        let mut b = DVector::<f64>::zeros(k + 1);
        for j in 0..k {
            for row in 0..n {
                a[(j, row)] = self.grads[row * k + j];
            }
            a[(j, n)] = -1.0;
        }
        for row in 0..n {
            a[(k, row)] = 1.0;
        }
        b[k] = 1.0;
        let Ok(sol) = a.svd(true, true).solve(&b, 1e-14) else {
            return f64::INFINITY;
        };
        let p: Vec<f64> = sol.iter().take(n).map(|x| x.max(0.0)).collect();
        if !(p.iter().sum::<f64>() > 0.0) {
            return f64::INFINITY;
        }
        self.upper_bound(&p)
    }

    fn run(&mut self, start: &[f64], tol: f64, max_iter: usize) -> BarrierRun {
        let k = self.inst.k();
        let n = self.inst.alternatives.len();
        let dim = k + 1;

        // Pull the start strictly inside the simplex.
        let mut w: Vec<f64> = start.iter().map(|&x| 0.999 * x.max(0.0) + 1e-3 / k as f64).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);

        let g0 = self.evaluate(&w);
        let mut t = 0.5 * g0;
        let mut mu = 0.5 * g0 / n as f64;

        let mut best_w = w.clone();
        let mut best_value = g0;
        let mut upper = f64::INFINITY;
        let mut iterations = 0;

        let mut hess = DMatrix::<f64>::zeros(dim + 1, dim + 1);
        let mut rhs = DVector::<f64>::zeros(dim + 1);
        let mut slack_inv = vec![0.0; n];
        let mut w_trial = vec![0.0; k];

        'outer: while iterations < max_iter {
            loop {
                if iterations >= max_iter {
                    break 'outer;
                }
                iterations += 1;
                let g = self.evaluate(&w);
                for (s, &f) in slack_inv.iter_mut().zip(&self.values) {
                    *s = 1.0 / (f - t);
                }
                if g > best_value {
                    best_value = g;
                    best_w.copy_from_slice(&w);
                }
                upper = upper.min(self.upper_bound(&slack_inv)).min(self.refined_upper_bound());
                if upper - best_value <= tol * best_value {
                    break 'outer;
                }

                hess.fill(0.0);
                rhs.fill(0.0);
                for j in 0..k {
                    rhs[j] = 1.0 / w[j];
                    hess[(j, j)] = -1.0 / (w[j] * w[j]);
                }
                rhs[k] = 1.0 / mu;
                for (row, &si) in slack_inv.iter().enumerate() {
                    let grad = &self.grads[row * k..(row + 1) * k];
                    let dir = &self.dirs[row * k..(row + 1) * k];
                    let kappa = self.curvature[row] * si;
                    rhs[k] -= si;
                    hess[(k, k)] -= si * si;
                    for i in 0..k {
                        if grad[i] == 0.0 && dir[i] == 0.0 {
                            continue;
                        }
                        rhs[i] += grad[i] * si;
                        hess[(i, k)] += grad[i] * si * si;
                        hess[(k, i)] += grad[i] * si * si;
                        for j in 0..k {
                            hess[(i, j)] -= kappa * dir[i] * dir[j] + grad[i] * grad[j] * si * si;
                        }
                    }
                }
                for j in 0..k {
                    hess[(j, dim)] = 1.0;
                    hess[(dim, j)] = 1.0;
                }
                hess[(dim, dim)] = 0.0;
                rhs[dim] = 0.0;
                let grad_f: Vec<f64> = rhs.iter().take(dim).copied().collect();
                rhs.neg_mut();
                // H dx + A^T nu = -grad, A dx = 0
                let step = match hess.clone().lu().solve(&rhs) {
                    Some(s) => s,
                    None => break 'outer,
                };
                let mut dx: Vec<f64> = step.iter().take(dim).copied().collect();
                let drift = dx[..k].iter().sum::<f64>() / k as f64;
                dx[..k].iter_mut().for_each(|d| *d -= drift);
                let decrement: f64 = dx.iter().zip(&grad_f).map(|(d, gf)| d * gf).sum();
                if !(decrement > 1e-10) {
                    break;
                }

                let values_now = self.values.clone();
                let mut alpha = 1.0;
                let mut moved = false;
                while alpha > 1e-12 {
                    for j in 0..k {
                        w_trial[j] = w[j] + alpha * dx[j];
                    }
                    let dt = alpha * dx[k];
                    if w_trial.iter().all(|&x| x > 0.0) {
                        self.evaluate(&w_trial);
                        // Change of the barrier objective, summed in relative terms.
                        let mut change = dt / mu;
                        let mut inside = true;
                        for (row, (&f_new, &f_old)) in self.values.iter().zip(&values_now).enumerate() {
                            let ratio = (f_new - f_old - dt) * slack_inv[row];
                            if !(ratio > -1.0) {
                                inside = false;
                                break;
                            }
                            change += ratio.ln_1p();
                        }
                        if inside {
                            change += w
                                .iter()
                                .zip(&w_trial)
                                .map(|(&x, &y)| ((y - x) / x).ln_1p())
                                .sum::<f64>();
                            let full_step = alpha == 1.0 && decrement < 0.2;
                            if full_step || change >= 0.25 * alpha * decrement {
                                std::mem::swap(&mut w, &mut w_trial);
                                t += dt;
                                moved = true;
                                break;
                            }
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if (n + k) as f64 * mu < 1e-3 * tol * best_value.max(f64::MIN_POSITIVE) {
                break;
            }
            mu *= 0.1;
        }
        BarrierRun {
            w: best_w,
            value: best_value,
            upper,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const G1: FamilyKind = FamilyKind::Gaussian { sigma: 1.0 };

    #[test]
    fn instance_validation() {
        assert!(BanditInstance::new(G1, vec![1.0, 0.0], 1).is_ok());
        assert!(BanditInstance::new(G1, vec![1.0, 1.0, 0.0], 2).is_ok());
        // plateau not equal
        assert!(BanditInstance::new(G1, vec![1.0, 0.9, 0.0], 2).is_err());
        // no gap below the plateau
        assert!(BanditInstance::new(G1, vec![1.0, 1.0, 0.0], 1).is_err());
        assert!(BanditInstance::new(G1, vec![1.0], 1).is_err());
        assert!(BanditInstance::new(G1, vec![1.0, 0.0], 2).is_err());
        assert!(BanditInstance::new(FamilyKind::Bernoulli, vec![1.0, 0.5], 1).is_err());
        let inst = BanditInstance::new(G1, vec![0.0, 2.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(inst.top(), &[1, 3]);
        assert_eq!(inst.alternatives(), &[0, 2]);
        assert_eq!(inst.optimal_set(), vec![1, 3]);
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![0.5, 0.5]).is_ok());
        assert!(Weights::new(vec![0.6, 0.3, 0.1]).is_ok());
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        assert!(Weights::new(vec![1.5, -0.5]).is_err());
        assert!(Weights::new(vec![]).is_err());
        assert!(Weights::new(vec![0.9, 0.1]).unwrap().is_truncated(0.1));
        assert!(!Weights::new(vec![0.95, 0.05]).unwrap().is_truncated(0.1));
    }

    #[test]
    fn pooled_mean_examples() {
        assert_abs_diff_eq!(pooled_alt_mean(&[0.6, 0.4], &[1.0, 1.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            pooled_alt_mean(&[0.0, 1.0], &[3.0, 1.0]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(
            pooled_alt_mean(&[1.0, 1.0, 0.0], &[third, third, third]).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert!(pooled_alt_mean(&[1.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(pooled_alt_mean(&[1.0, 0.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn i_alpha_examples() {
        assert_eq!(i_alpha(G1, &[0.5, 0.5], 0.5, &[0.2, 0.3]).unwrap(), 0.0);
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(
            i_alpha(G1, &[1.0, 1.0], 0.0, &[third, third]).unwrap(),
            1.0 / 9.0,
            epsilon = 1e-15
        );
        let b = FamilyKind::Bernoulli;
        let expected = 0.5 * crate::family::binary_kl(0.6, 0.5) + 0.5 * crate::family::binary_kl(0.4, 0.5);
        assert_abs_diff_eq!(i_alpha(b, &[0.6], 0.4, &[0.5]).unwrap(), expected, epsilon = 1e-15);
        assert!(i_alpha(G1, &[1.0, 1.0], 0.0, &[0.7, 0.7]).is_err());
        assert!(i_alpha(b, &[1.2], 0.4, &[0.5]).is_err());
    }

    #[test]
    fn best_response_hand_case() {
        let inst = BanditInstance::new(G1, vec![1.0, 1.0, 0.0], 2).unwrap();
        let br = best_response(&inst, &Weights::uniform(3)).unwrap();
        assert_abs_diff_eq!(br.value, 1.0 / 9.0, epsilon = 1e-15);
        assert_eq!(br.arm, 2);
        assert_abs_diff_eq!(br.lambda, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_value() {
        let inst = BanditInstance::new(G1, vec![1.0, 0.5, 0.0], 1).unwrap();
        let w = Weights::new(vec![0.0, 0.0, 1.0]).unwrap();
        let br = best_response(&inst, &w).unwrap();
        assert_eq!(br.value, 0.0);
        assert_eq!(br.arm, 1);
    }

    #[test]
    fn best_response_ties_prefer_lowest_index() {
        let inst = BanditInstance::new(FamilyKind::Bernoulli, vec![0.8, 0.5, 0.5], 1).unwrap();
        let br = best_response(&inst, &Weights::uniform(3)).unwrap();
        assert_eq!(br.arm, 1);
    }

    #[test]
    fn two_arm_gaussian_analytic() {
        let inst = BanditInstance::new(G1, vec![1.0, 0.0], 1).unwrap();
        let sol = solve(&inst, 1e-9).unwrap();
        assert_abs_diff_eq!(sol.t_star, 8.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.w_star[0], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(sol.w_star[1], 0.5, epsilon = 1e-4);
        let g = g_value(&inst, &sol.w_star).unwrap();
        assert!((g * sol.t_star - 1.0).abs() < 1e-9);
        assert_abs_diff_eq!(g_value(&inst, &Weights::uniform(2)).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn plateau_symmetry() {
        let inst = BanditInstance::new(G1, vec![1.0, 1.0, 0.0], 2).unwrap();
        let sol = solve(&inst, 1e-8).unwrap();
        assert_abs_diff_eq!(sol.w_star[0], sol.w_star[1], epsilon = 1e-9);
    }

    #[test]
    fn alternative_symmetry() {
        let inst = BanditInstance::new(FamilyKind::Bernoulli, vec![0.5, 0.45, 0.45], 1).unwrap();
        let sol = solve(&inst, 1e-8).unwrap();
        assert_abs_diff_eq!(sol.w_star[1], sol.w_star[2], epsilon = 1e-6);
    }

    #[test]
    fn certificate_bounds_gap() {
        let inst = BanditInstance::new(FamilyKind::Poisson, vec![2.0, 3.0, 1.0, 3.0], 2).unwrap();
        let sol = solve(&inst, 1e-7).unwrap();
        assert!(sol.gap_certificate <= 1e-7 * sol.value());
        let (_, grid) = grid_search(&inst, 0.02);
        assert!(grid <= sol.value() + sol.gap_certificate);
    }

    #[test]
    fn degenerate_empirical_instance() {
        let inst = BanditInstance::empirical(G1, &[0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(solve(&inst, 1e-6), Err(Error::Degenerate));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let inst = BanditInstance::new(G1, vec![1.0, 0.0], 1).unwrap();
        assert!(solve(&inst, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let inst = BanditInstance::new(FamilyKind::Bernoulli, vec![0.6, 0.6, 0.3, 0.2], 2).unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 3,
            multistarts: 0,
            grid_certify: false,
            ..SolverOptions::default()
        };
        match solve_with(&inst, &opts, None) {
            Err(Error::NotConverged { best, relative_gap, .. }) => {
                assert!(relative_gap > 1e-12);
                assert!(best.t_star.is_finite());
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
