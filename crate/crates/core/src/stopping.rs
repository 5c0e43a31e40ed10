//! The M-tuple Chernoff stopping rule.
//!
//! For a candidate optimal tuple `B = {b_1..b_M}` and an outside arm `a`,
//! `Z_{a;B}(t)` is the log generalized likelihood ratio between "the arms of
//! `B` are at least as good as `a`" and its reverse. With the empirical
//! means ordered as `mu_a <= min_B mu_b`, it has the closed form
//!
//! ```text
//! Z_{a;B} = N_a d(mu_a, m) + sum_i N_{b_i} d(mu_{b_i}, m)
//! ```
//!
//! where `m` is the count-weighted pooled mean of the `M + 1` arms. The
//! sampling rule stops as soon as `Z(t) = max_B min_{a not in B} Z_{a;B}(t)`
//! exceeds `beta(t, delta)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilyKind;
use crate::tracking::HistoryState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub delta: f64,
    pub m_opt: usize,
    pub k_arms: usize,
}

impl StoppingConfig {
    pub fn new(delta: f64, m_opt: usize, k_arms: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Precondition(format!("delta must lie in (0, 1), got {delta}")));
        }
        if m_opt == 0 || m_opt >= k_arms {
            return Err(Error::Precondition(format!(
                "need 1 <= M <= K - 1, got M = {m_opt}, K = {k_arms}"
            )));
        }
        Ok(StoppingConfig { delta, m_opt, k_arms })
    }
}

/// The max-min statistic together with the tuple and arm attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrStatistic {
    pub z_value: f64,
    pub best_tuple: Vec<usize>,
    pub critical_arm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrReport {
    pub z_value: f64,
    pub best_tuple: Vec<usize>,
    pub critical_arm: usize,
    pub threshold: f64,
    pub stop: bool,
}

pub fn pooled_empirical_mean(counts: &[u64], means: &[f64]) -> Result<f64> {
    if counts.len() != means.len() || counts.is_empty() {
        return Err(Error::Precondition(format!(
            "{} counts but {} means",
            counts.len(),
            means.len()
        )));
    }
    if counts.contains(&0) {
        return Err(Error::Precondition("pooled mean needs every count >= 1".into()));
    }
    let total: f64 = counts.iter().map(|&n| n as f64).sum();
    let dot: f64 = counts.iter().zip(means).map(|(&n, m)| n as f64 * m).sum();
    Ok(dot / total)
}

/// `Z_{a;B}` from per-arm counts and empirical means.
///
/// The closed form only holds when arm `a` looks no better than every arm of
/// `tuple`; any other call is rejected.
pub fn z_statistic(
    family: FamilyKind,
    counts: &[u64],
    empirical_means: &[f64],
    tuple: &[usize],
    arm: usize,
) -> Result<f64> {
    let k = counts.len();
    if empirical_means.len() != k {
        return Err(Error::Precondition(format!(
            "{k} counts but {} means",
            empirical_means.len()
        )));
    }
    if arm >= k || tuple.iter().any(|&b| b >= k || b == arm) || tuple.is_empty() {
        return Err(Error::Precondition(format!(
            "arm {arm} and tuple {tuple:?} are not disjoint arms of 0..{k}"
        )));
    }
    let involved: Vec<usize> = std::iter::once(arm).chain(tuple.iter().copied()).collect();
    let sub_counts: Vec<u64> = involved.iter().map(|&i| counts[i]).collect();
    let sub_means: Vec<f64> = involved
        .iter()
        .map(|&i| family.clamp_mean(empirical_means[i]))
        .collect();
    let floor = sub_means[1..].iter().copied().fold(f64::INFINITY, f64::min);
    if sub_means[0] > floor {
        return Err(Error::Precondition(format!(
            "arm {arm} (mean {}) outranks tuple {tuple:?} (min mean {floor})",
            sub_means[0]
        )));
    }
    let pooled = pooled_empirical_mean(&sub_counts, &sub_means)?;
    Ok(sub_counts
        .iter()
        .zip(&sub_means)
        .map(|(&n, &m)| n as f64 * family.kl_unchecked(m, pooled))
        .sum())
}

/// Tuples whose members all have empirical means at least as large as every
/// outside arm, sorted lexicographically. There is more than one only when
/// the `M`-th largest mean is tied.
pub fn admissible_tuples(means: &[f64], m: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&i, &j| means[j].total_cmp(&means[i]).then(i.cmp(&j)));
    let cut = means[order[m - 1]];
    let above: Vec<usize> = order.iter().copied().filter(|&i| means[i] > cut).collect();
    let tied: Vec<usize> = (0..means.len()).filter(|&i| means[i] == cut).collect();

    let mut tuples = Vec::new();
    let mut chosen = Vec::new();
    combinations(&tied, m - above.len(), 0, &mut chosen, &mut |pick| {
        let mut t: Vec<usize> = above.iter().chain(pick).copied().collect();
        t.sort_unstable();
        tuples.push(t);
    });
    tuples.sort();
    tuples
}

fn combinations(pool: &[usize], r: usize, start: usize, chosen: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if chosen.len() == r {
        emit(chosen);
        return;
    }
    for i in start..pool.len() {
        if pool.len() - i < r - chosen.len() {
            break;
        }
        chosen.push(pool[i]);
        combinations(pool, r, i + 1, chosen, emit);
        chosen.pop();
    }
}

/// `Z(t)` over the admissible tuples, with the lexicographically smallest
/// maximizing tuple and the lowest-index minimizing arm.
pub fn z_max_min(family: FamilyKind, state: &HistoryState, config: &StoppingConfig) -> Result<GlrStatistic> {
    if state.k() != config.k_arms {
        return Err(Error::Precondition(format!(
            "history has {} arms, stopping rule expects {}",
            state.k(),
            config.k_arms
        )));
    }
    let means = state
        .empirical_means()
        .ok_or_else(|| Error::Precondition("every arm must be pulled before testing".into()))?;
    let clamped: Vec<f64> = means.iter().map(|&m| family.clamp_mean(m)).collect();

    let mut best: Option<GlrStatistic> = None;
    for tuple in admissible_tuples(&clamped, config.m_opt) {
        let mut inner: Option<(f64, usize)> = None;
        for a in (0..config.k_arms).filter(|a| !tuple.contains(a)) {
            let z = z_statistic(family, &state.counts, &clamped, &tuple, a)?;
            if inner.is_none_or(|(v, _)| z < v) {
                inner = Some((z, a));
            }
        }
        let (z, a) = inner.expect("M < K leaves an outside arm");
        if best.as_ref().is_none_or(|b| z > b.z_value) {
            best = Some(GlrStatistic {
                z_value: z,
                best_tuple: tuple,
                critical_arm: a,
            });
        }
    }
    Ok(best.expect("at least one admissible tuple"))
}

/// `beta(t, delta) = ln(K^M (4/(M+1))^((M+1)/2) t^((M+1)/2) / delta)`.
pub fn threshold(t: u64, config: &StoppingConfig) -> f64 {
    let (c, alpha) = threshold_constants(config.k_arms, config.m_opt);
    c.ln() + alpha * (t.max(1) as f64).ln() - config.delta.ln()
}

/// `(C, alpha)` with `beta(t, delta) = ln(C t^alpha / delta)`.
pub fn threshold_constants(k: usize, m: usize) -> (f64, f64) {
    let alpha = (m as f64 + 1.0) / 2.0;
    let c = (k as f64).powi(m as i32) * (4.0 / (m as f64 + 1.0)).powf(alpha);
    (c, alpha)
}

/// Statistic, threshold and stopping decision at the current round.
pub fn evaluate(family: FamilyKind, state: &HistoryState, config: &StoppingConfig) -> Result<GlrReport> {
    let stat = z_max_min(family, state, config)?;
    let threshold = threshold(state.t, config);
    Ok(GlrReport {
        stop: stat.z_value > threshold,
        z_value: stat.z_value,
        best_tuple: stat.best_tuple,
        critical_arm: stat.critical_arm,
        threshold,
    })
}

/// Decode the final answer: a uniformly random member of the best tuple.
pub fn recommend<R: Rng + ?Sized>(report: &GlrReport, rng: &mut R) -> Result<usize> {
    if !report.stop {
        return Err(Error::Precondition("recommendation requested before stopping".into()));
    }
    match report.best_tuple.as_slice() {
        [] => Err(Error::Precondition("empty tuple".into())),
        [only] => Ok(*only),
        tuple => Ok(tuple[rng.random_range(0..tuple.len())]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::kl_div;
    use crate::oracle::i_alpha;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn history(counts: &[u64], means: &[f64]) -> HistoryState {
        let mut s = HistoryState::new(counts.len());
        s.counts = counts.to_vec();
        s.sums = counts.iter().zip(means).map(|(&n, m)| n as f64 * m).collect();
        s.t = counts.iter().sum();
        s
    }

    #[test]
    fn pooled_mean_examples() {
        assert_abs_diff_eq!(
            pooled_empirical_mean(&[4, 4, 4], &[0.6, 0.6, 0.4]).unwrap(),
            8.0 / 15.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pooled_empirical_mean(&[3, 3], &[0.7, 0.3]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pooled_empirical_mean(&[1, 9], &[1.0, 0.0]).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert!(pooled_empirical_mean(&[0, 9], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_z_example() {
        let g = FamilyKind::Gaussian { sigma: 1.0 };
        let z = z_statistic(g, &[4, 4, 4], &[0.6, 0.6, 0.4], &[0, 1], 2).unwrap();
        assert_abs_diff_eq!(z, 0.8 / 15.0, epsilon = 1e-12);
        assert_eq!(z_statistic(g, &[4, 4, 4], &[0.5, 0.5, 0.5], &[0, 1], 2).unwrap(), 0.0);
    }

    #[test]
    fn z_rejects_wrong_regime() {
        let g = FamilyKind::Gaussian { sigma: 1.0 };
        assert!(z_statistic(g, &[4, 4, 4], &[0.6, 0.4, 0.5], &[0, 1], 2).is_err());
        assert!(z_statistic(g, &[4, 4, 4], &[0.6, 0.6, 0.4], &[0, 2], 2).is_err());
    }

    #[test]
    fn max_min_examples() {
        let g = FamilyKind::Gaussian { sigma: 1.0 };
        let cfg = StoppingConfig::new(0.1, 2, 3).unwrap();
        let stat = z_max_min(g, &history(&[4, 4, 4], &[0.6, 0.6, 0.4]), &cfg).unwrap();
        assert_abs_diff_eq!(stat.z_value, 0.8 / 15.0, epsilon = 1e-12);
        assert_eq!(stat.best_tuple, vec![0, 1]);
        assert_eq!(stat.critical_arm, 2);

        let flat = z_max_min(g, &history(&[3, 5, 2], &[0.2, 0.2, 0.2]), &cfg).unwrap();
        assert!(flat.z_value.abs() < 1e-15);
        assert_eq!(flat.best_tuple, vec![0, 1]);

        let cfg1 = StoppingConfig::new(0.1, 1, 3).unwrap();
        let b = FamilyKind::Bernoulli;
        let stat = z_max_min(b, &history(&[10, 10, 10], &[0.8, 0.5, 0.5]), &cfg1).unwrap();
        assert_eq!(stat.best_tuple, vec![0]);
        assert_eq!(stat.critical_arm, 1);
    }

    #[test]
    fn tied_tuples_are_enumerated() {
        assert_eq!(
            admissible_tuples(&[0.5, 0.7, 0.5, 0.5], 2),
            vec![vec![0, 1], vec![1, 2], vec![1, 3]]
        );
        assert_eq!(admissible_tuples(&[0.1, 0.3, 0.2], 2), vec![vec![1, 2]]);
        // Each tied tuple faces the other tied arm at zero evidence, so the
        // lexicographically smallest tuple is reported.
        let b = FamilyKind::Bernoulli;
        let cfg = StoppingConfig::new(0.1, 1, 3).unwrap();
        let stat = z_max_min(b, &history(&[5, 20, 40], &[0.6, 0.6, 0.3]), &cfg).unwrap();
        assert_eq!(stat.best_tuple, vec![0]);
        assert_eq!(stat.critical_arm, 1);
        assert!(stat.z_value.abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let cfg = StoppingConfig::new(0.1, 1, 5).unwrap();
        assert_abs_diff_eq!(threshold(100, &cfg), 10000f64.ln(), epsilon = 1e-12);
        let cfg = StoppingConfig {
            delta: 1.0,
            m_opt: 2,
            k_arms: 3,
        };
        assert_abs_diff_eq!(
            threshold(1, &cfg),
            (9.0 * (4.0f64 / 3.0).powf(1.5)).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(threshold(1, &cfg), 2.628748, epsilon = 1e-6);
        let lo = StoppingConfig::new(0.5, 1, 4).unwrap();
        let hi = StoppingConfig::new(0.1, 1, 4).unwrap();
        assert!(threshold(50, &lo) < threshold(50, &hi));
        assert!(threshold(51, &hi) > threshold(50, &hi));
    }

    #[test]
    fn threshold_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let k = rng.random_range(2..12usize);
            let m = rng.random_range(1..k);
            let t = rng.random_range(1..1_000_000u64);
            let delta = rng.random_range(1e-6..0.99);
            let cfg = StoppingConfig::new(delta, m, k).unwrap();
            let direct = ((k as f64).powi(m as i32)
                * (4.0 / (m as f64 + 1.0)).powf((m as f64 + 1.0) / 2.0)
                * (t as f64).powf((m as f64 + 1.0) / 2.0)
                / delta)
                .ln();
            assert!((threshold(t, &cfg) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn config_validation() {
        assert!(StoppingConfig::new(0.0, 1, 3).is_err());
        assert!(StoppingConfig::new(1.0, 1, 3).is_err());
        assert!(StoppingConfig::new(0.1, 3, 3).is_err());
        assert!(StoppingConfig::new(0.1, 0, 3).is_err());
    }

    #[test]
    fn recommend_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut report = GlrReport {
            z_value: 9.0,
            best_tuple: vec![1, 2],
            critical_arm: 0,
            threshold: 5.0,
            stop: true,
        };
        let mut hits = [0usize; 3];
        for _ in 0..10_000 {
            hits[recommend(&report, &mut rng).unwrap()] += 1;
        }
        assert_eq!(hits[0], 0);
        assert!((hits[1] as f64 / 1e4 - 0.5).abs() < 0.02);
        report.best_tuple = vec![2];
        assert_eq!(recommend(&report, &mut rng).unwrap(), 2);
        report.stop = false;
        assert!(recommend(&report, &mut rng).is_err());
    }

    /// Log-likelihood of Bernoulli data with `ones` successes out of `n`.
    fn bern_loglik(ones: f64, n: f64, p: f64) -> f64 {
        ones * p.ln() + (n - ones) * (1.0 - p).ln()
    }

    #[test]
    fn pairwise_glr_matches_likelihood_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let na = rng.random_range(5..60u64);
            let nb = rng.random_range(5..60u64);
            let sa = rng.random_range(1..na) as f64;
            let sb = rng.random_range(1..nb) as f64;
            let (ma, mb) = (sa / na as f64, sb / nb as f64);
            let (lo_arm, hi_arm, lo, hi) = if ma <= mb {
                (0, 1, (sa, na), (sb, nb))
            } else {
                (1, 0, (sb, nb), (sa, na))
            };
            let counts = [na, nb];
            let means = [ma, mb];
            let z = z_statistic(FamilyKind::Bernoulli, &counts, &means, &[hi_arm], lo_arm).unwrap();

            // Unconstrained maximum minus the maximum over {p_lo >= p_hi}.
            let free =
                bern_loglik(lo.0, lo.1 as f64, lo.0 / lo.1 as f64) + bern_loglik(hi.0, hi.1 as f64, hi.0 / hi.1 as f64);
            let joint = |x: f64, y: f64| bern_loglik(lo.0, lo.1 as f64, x) + bern_loglik(hi.0, hi.1 as f64, y);
            let mut coarse = f64::NEG_INFINITY;
            for i in 1..200 {
                for j in 1..=i {
                    coarse = coarse.max(joint(i as f64 / 200.0, j as f64 / 200.0));
                }
            }
            // The constrained optimum sits on the diagonal; refine there.
            let (mut a, mut b) = (1e-6, 1.0 - 1e-6);
            for _ in 0..200 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if joint(m1, m1) < joint(m2, m2) {
                    a = m1
                } else {
                    b = m2
                }
            }
            let constrained = joint(a, a);
            assert!(coarse <= constrained + 1e-9);
            assert!((free - constrained - z).abs() < 1e-6, "z {z} vs {}", free - constrained);
        }
    }

    #[test]
    fn glr_equals_weighted_mixture_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let families = [
            FamilyKind::Bernoulli,
            FamilyKind::Gaussian { sigma: 0.7 },
            FamilyKind::Poisson,
        ];
        for trial in 0..1000 {
            let family = families[trial % 3];
            let k = rng.random_range(2..7usize);
            let m = rng.random_range(1..k);
            let counts: Vec<u64> = (0..k).map(|_| rng.random_range(1..200)).collect();
            let means: Vec<f64> = (0..k)
                .map(|_| match family {
                    FamilyKind::Bernoulli => rng.random_range(0.0..1.0),
                    FamilyKind::Gaussian { .. } => rng.random_range(-2.0..2.0),
                    FamilyKind::Poisson => rng.random_range(0.0..5.0),
                })
                .collect();
            let tuple = admissible_tuples(&means, m).remove(0);
            let t: f64 = counts.iter().sum::<u64>() as f64;
            for a in (0..k).filter(|a| !tuple.contains(a)) {
                let z = z_statistic(family, &counts, &means, &tuple, a).unwrap();
                let mass = (counts[a] + tuple.iter().map(|&b| counts[b]).sum::<u64>()) as f64;
                let alphas: Vec<f64> = tuple.iter().map(|&b| counts[b] as f64 / mass).collect();
                let top: Vec<f64> = tuple.iter().map(|&b| family.clamp_mean(means[b])).collect();
                let i = i_alpha(family, &top, family.clamp_mean(means[a]), &alphas).unwrap();
                let via_oracle = t * (mass / t) * i;
                assert!(
                    (z - via_oracle).abs() <= 1e-10 * z.abs().max(1.0),
                    "{z} vs {via_oracle}"
                );
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let b = FamilyKind::Bernoulli;
        let cfg = StoppingConfig::new(0.05, 2, 4).unwrap();
        let counts = [30, 12, 25, 40];
        let means = [0.55, 0.2, 0.61, 0.4];
        let base = z_max_min(b, &history(&counts, &means), &cfg).unwrap();
        let perm = [2, 0, 3, 1];
        let pc: Vec<u64> = perm.iter().map(|&i| counts[i]).collect();
        let pm: Vec<f64> = perm.iter().map(|&i| means[i]).collect();
        let permuted = z_max_min(b, &history(&pc, &pm), &cfg).unwrap();
        assert_abs_diff_eq!(base.z_value, permuted.z_value, epsilon = 1e-12);
        let mapped: Vec<usize> = {
            let mut v: Vec<usize> = permuted.best_tuple.iter().map(|&i| perm[i]).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(mapped, base.best_tuple);
        assert!(kl_div(b, 0.5, 0.5).unwrap() == 0.0);
    }
}
