//! Analytic references for the stopping time: the lower bound on `E[tau]`,
//! the asymptotic `T* ln(1/delta)` line, and an explicit upper bound on the
//! first time a linear function overtakes a logarithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::binary_kl;
use crate::oracle::{solve, BanditInstance};
use crate::stopping::threshold_constants;

/// Relative tolerance used when these helpers call the oracle themselves.
pub const ORACLE_TOL: f64 = 1e-9;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// `T* kl(1 - delta, delta)`, a lower bound on `E[tau]` for any
/// delta-correct algorithm.
pub fn lower_bound_from_t_star(t_star: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(t_star * binary_kl(1.0 - delta, delta))
}

/// The weaker `T* ln(1/(2.4 delta))`. Negative once `delta > 1/2.4`.
pub fn weak_lower_bound_from_t_star(t_star: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(t_star * (1.0 / (2.4 * delta)).ln())
}

pub fn lower_bound_expected_tau(inst: &BanditInstance, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    lower_bound_from_t_star(solve(inst, ORACLE_TOL)?.t_star, delta)
}

pub fn weak_lower_bound_expected_tau(inst: &BanditInstance, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    weak_lower_bound_from_t_star(solve(inst, ORACLE_TOL)?.t_star, delta)
}

/// `T* ln(1/delta)`, the slope the stopping time approaches as `delta -> 0`.
pub fn predicted_tau_scaling(inst: &BanditInstance, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(solve(inst, ORACLE_TOL)?.t_star * (1.0 / delta).ln())
}

/// `A = ln(c2)/alpha + ln(alpha/c1)` from the crossing lemma.
pub fn lambert_a(c1: f64, c2: f64, alpha: f64) -> f64 {
    c2.ln() / alpha + (alpha / c1).ln()
}

/// Upper bound `(alpha/c1)(A + sqrt(2(A - 1)))` on the largest root of
/// `c1 x = ln(c2 x^alpha)`; beyond it `c1 x >= ln(c2 x^alpha)` holds.
///
/// Setting `x = (alpha/c1) y` turns the root into `y = -W_{-1}(-e^{-A})`,
/// and the bracket on the lower Lambert branch gives the bound for `A > 1`.
pub fn lambert_stop_bound(c1: f64, c2: f64, alpha: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0 && alpha > 0.0) || !(c1.is_finite() && c2.is_finite() && alpha.is_finite()) {
        return Err(Error::BoundDomain(format!(
            "c1, c2, alpha must be positive and finite, got {c1}, {c2}, {alpha}"
        )));
    }
    let a = lambert_a(c1, c2, alpha);
    if !(a > 1.0) {
        return Err(Error::BoundDomain(format!("A = {a} must exceed 1")));
    }
    Ok(alpha / c1 * (a + (2.0 * (a - 1.0)).sqrt()))
}

/// Lambert-W bound on the time `t / T* >= beta(t, delta)` first holds, with
/// `c1 = 1/T*`, `c2 = C/delta` and `alpha = (M + 1)/2`.
pub fn stopping_time_hint(t_star: f64, k: usize, m: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let (c, alpha) = threshold_constants(k, m);
    lambert_stop_bound(1.0 / t_star, c / delta, alpha)
}

/// Everything the `bounds` report prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub t_star: f64,
    pub kl_lower_bound: f64,
    pub log_lower_bound: f64,
    pub asymptotic_line: f64,
    pub threshold_c: f64,
    pub threshold_alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambert_a: f64,
    /// `None` when `A <= 1`.
    pub lambert_bound: Option<f64>,
}

pub fn bound_report(inst: &BanditInstance, delta: f64) -> Result<BoundReport> {
    check_delta(delta)?;
    let t_star = solve(inst, ORACLE_TOL)?.t_star;
    let (c, alpha) = threshold_constants(inst.k(), inst.m_opt());
    let (c1, c2) = (1.0 / t_star, c / delta);
    Ok(BoundReport {
        delta,
        t_star,
        kl_lower_bound: lower_bound_from_t_star(t_star, delta)?,
        log_lower_bound: weak_lower_bound_from_t_star(t_star, delta)?,
        asymptotic_line: t_star * (1.0 / delta).ln(),
        threshold_c: c,
        threshold_alpha: alpha,
        c1,
        c2,
        lambert_a: lambert_a(c1, c2, alpha),
        lambert_bound: lambert_stop_bound(c1, c2, alpha).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilyKind;
    use approx::assert_abs_diff_eq;

    fn two_arm() -> BanditInstance {
        BanditInstance::new(FamilyKind::Gaussian { sigma: 1.0 }, vec![1.0, 0.0], 1).unwrap()
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_from_t_star(8.0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            lower_bound_expected_tau(&two_arm(), 0.1).unwrap(),
            6.4 * 9f64.ln(),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            lower_bound_expected_tau(&two_arm(), 0.1).unwrap(),
            14.0625,
            epsilon = 1e-3
        );
        assert!(lower_bound_from_t_star(8.0, 1.0).is_err());
    }

    #[test]
    fn kl_dominates_log_form() {
        for i in 1..=49 {
            let delta = i as f64 / 100.0;
            assert!(binary_kl(1.0 - delta, delta) >= (1.0 / (2.4 * delta)).ln());
        }
    }

    #[test]
    fn scaling_line() {
        let inst = two_arm();
        assert_abs_diff_eq!(
            predicted_tau_scaling(&inst, 0.01).unwrap(),
            8.0 * 100f64.ln(),
            epsilon = 1e-6
        );
        let diff = predicted_tau_scaling(&inst, 0.005).unwrap() - predicted_tau_scaling(&inst, 0.01).unwrap();
        assert_abs_diff_eq!(diff, 8.0 * 2f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn lambert_examples() {
        let x = lambert_stop_bound(1.0, 3f64.exp(), 1.0).unwrap();
        assert_abs_diff_eq!(x, 5.0, epsilon = 1e-12);
        assert!(x >= 3.0 + x.ln());
        // Continuity as A -> 1 from above.
        let x = lambert_stop_bound(1.0, (1.0 + 1e-12f64).exp(), 1.0).unwrap();
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-5);
        assert!(matches!(lambert_stop_bound(1.0, 1.0, 1.0), Err(Error::BoundDomain(_))));
        assert!(lambert_stop_bound(-1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn report_constants_for_five_arms() {
        let inst = BanditInstance::new(FamilyKind::Bernoulli, vec![0.9, 0.5, 0.4, 0.3, 0.2], 1).unwrap();
        let r = bound_report(&inst, 0.1).unwrap();
        assert_abs_diff_eq!(r.threshold_c, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.c2, 100.0, epsilon = 1e-9);
        let x = r.lambert_bound.unwrap();
        assert!(r.c1 * x >= (r.c2 * x.powf(r.threshold_alpha)).ln());
    }
}
