//! Within-family multiple testing procedures.
//!
//! Each procedure maps a family's p-values and a level to the set of
//! rejected hypotheses, reported as sorted indices into the input slice.
//! Comparisons are `p <= critical value`; equal p-values are ordered by
//! their original index, which never matters for the rejected set because
//! stepwise procedures reject by count.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A within-family procedure, applied at a level chosen by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    Bonferroni,
    Holm,
    Hochberg,
    /// Benjamini–Hochberg linear step-up.
    BenjaminiHochberg,
    /// BH at `q/(1+q)`, then BH again at a level inflated by the estimated
    /// proportion of nulls.
    TwoStageAdaptive,
    /// Lehmann–Romano step-down controlling the k-FWER.
    LehmannRomano { k: usize },
    /// Step-up with critical values `level * c_i`.
    GenericStepUp { critical_values: Vec<f64> },
    /// Step-down with critical values `level * c_i`.
    GenericStepDown { critical_values: Vec<f64> },
}

/// How the rejection threshold responds to the other p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    SingleStep,
    StepUp,
    StepDown,
    Adaptive,
}

impl Procedure {
    pub fn generic_step_up(critical_values: Vec<f64>) -> Result<Self> {
        validate_shape(&critical_values)?;
        Ok(Procedure::GenericStepUp { critical_values })
    }

    pub fn generic_step_down(critical_values: Vec<f64>) -> Result<Self> {
        validate_shape(&critical_values)?;
        Ok(Procedure::GenericStepDown { critical_values })
    }

    pub fn step_kind(&self) -> StepKind {
        match self {
            Procedure::Bonferroni => StepKind::SingleStep,
            Procedure::Hochberg | Procedure::BenjaminiHochberg | Procedure::GenericStepUp { .. } => {
                StepKind::StepUp
            }
            Procedure::Holm | Procedure::LehmannRomano { .. } | Procedure::GenericStepDown { .. } => {
                StepKind::StepDown
            }
            Procedure::TwoStageAdaptive => StepKind::Adaptive,
        }
    }

    /// Single-step, step-up and step-down procedures define simple
    /// selection rules when used to select families.
    pub fn is_stepwise(&self) -> bool {
        self.step_kind() != StepKind::Adaptive
    }

    /// Rejected indices of `p_values` at `level`.
    pub fn apply(&self, p_values: &[f64], level: f64) -> Result<Vec<usize>> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::InvalidLevel(level));
        }
        self.check_family_size(p_values.len())?;
        Ok(self.apply_unchecked(p_values, level))
    }

    /// Validates that the procedure can run on a family of `n` hypotheses.
    pub fn check_family_size(&self, n: usize) -> Result<()> {
        match self {
            Procedure::LehmannRomano { k } if *k == 0 || *k > n => Err(Error::InvalidParameter(
                format!("k-FWER requires 1 <= k <= {n}, got k = {k}"),
            )),
            Procedure::GenericStepUp { critical_values }
            | Procedure::GenericStepDown { critical_values }
                if critical_values.len() != n =>
            {
                Err(Error::LengthMismatch {
                    what: "critical values",
                    expected: n,
                    got: critical_values.len(),
                })
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn apply_unchecked(&self, p: &[f64], level: f64) -> Vec<usize> {
        let n = p.len();
        let nf = n as f64;
        match self {
            Procedure::Bonferroni => bonferroni(p, level),
            Procedure::Holm => step_down_by(p, |i| level / (nf - i as f64 + 1.0)),
            Procedure::Hochberg => step_up_by(p, |i| level / (nf - i as f64 + 1.0)),
            Procedure::BenjaminiHochberg => bh(p, level),
            Procedure::TwoStageAdaptive => two_stage_adaptive(p, level),
            Procedure::LehmannRomano { k } => step_down_by(p, |i| lehmann_romano_critical(i, n, *k, level)),
            Procedure::GenericStepUp { critical_values } => {
                step_up_by(p, |i| level * critical_values[i - 1])
            }
            Procedure::GenericStepDown { critical_values } => {
                step_down_by(p, |i| level * critical_values[i - 1])
            }
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Procedure::Bonferroni => f.write_str("bonferroni"),
            Procedure::Holm => f.write_str("holm"),
            Procedure::Hochberg => f.write_str("hochberg"),
            Procedure::BenjaminiHochberg => f.write_str("bh"),
            Procedure::TwoStageAdaptive => f.write_str("twostage"),
            Procedure::LehmannRomano { k } => write!(f, "lr:{k}"),
            Procedure::GenericStepUp { critical_values } => {
                write!(f, "stepup[{}]", critical_values.len())
            }
            Procedure::GenericStepDown { critical_values } => {
                write!(f, "stepdown[{}]", critical_values.len())
            }
        }
    }
}

fn validate_shape(critical_values: &[f64]) -> Result<()> {
    let in_range = critical_values.iter().all(|c| (0.0..=1.0).contains(c));
    let sorted = critical_values.windows(2).all(|w| w[0] <= w[1]);
    if in_range && sorted {
        Ok(())
    } else {
        Err(Error::InvalidCriticalValues)
    }
}

/// Indices of `p` ordered by value, ties by original position.
pub(crate) fn sorted_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    order
}

fn reject_smallest(order: &[usize], count: usize) -> Vec<usize> {
    let mut rejected = order[..count].to_vec();
    rejected.sort_unstable();
    rejected
}

/// Step-up with the 1-based critical value function `alpha`.
pub(crate) fn step_up_by(p: &[f64], alpha: impl Fn(usize) -> f64) -> Vec<usize> {
    let order = sorted_order(p);
    let count = (1..=p.len())
        .rev()
        .find(|&k| p[order[k - 1]] <= alpha(k))
        .unwrap_or(0);
    reject_smallest(&order, count)
}

/// Step-down with the 1-based critical value function `alpha`.
pub(crate) fn step_down_by(p: &[f64], alpha: impl Fn(usize) -> f64) -> Vec<usize> {
    let order = sorted_order(p);
    let count = (1..=p.len())
        .take_while(|&k| p[order[k - 1]] <= alpha(k))
        .count();
    reject_smallest(&order, count)
}

fn check_lengths(p: &[f64], critical_values: &[f64]) -> Result<()> {
    if p.len() != critical_values.len() {
        return Err(Error::LengthMismatch {
            what: "critical values",
            expected: p.len(),
            got: critical_values.len(),
        });
    }
    Ok(())
}

/// Rejects the `k*` smallest p-values, `k* = max{k : p_(k) <= alpha_k}`.
pub fn step_up(p_values: &[f64], critical_values: &[f64]) -> Result<Vec<usize>> {
    check_lengths(p_values, critical_values)?;
    Ok(step_up_by(p_values, |i| critical_values[i - 1]))
}

/// Rejects the `k*` smallest p-values, where `k*` is the length of the
/// longest prefix of sorted p-values that all clear their critical values.
pub fn step_down(p_values: &[f64], critical_values: &[f64]) -> Result<Vec<usize>> {
    check_lengths(p_values, critical_values)?;
    Ok(step_down_by(p_values, |i| critical_values[i - 1]))
}

/// Rejects `p_j <= level / n`.
pub fn bonferroni(p_values: &[f64], level: f64) -> Vec<usize> {
    let cutoff = level / p_values.len() as f64;
    p_values
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p <= cutoff)
        .map(|(j, _)| j)
        .collect()
}

/// Benjamini–Hochberg: step-up with `alpha_i = i * level / n`.
pub fn bh(p_values: &[f64], level: f64) -> Vec<usize> {
    let n = p_values.len() as f64;
    step_up_by(p_values, |i| i as f64 * level / n)
}

/// Holm: step-down with `alpha_i = level / (n - i + 1)`.
pub fn holm(p_values: &[f64], level: f64) -> Vec<usize> {
    Procedure::Holm.apply_unchecked(p_values, level)
}

/// Hochberg: step-up with `alpha_i = level / (n - i + 1)`.
pub fn hochberg(p_values: &[f64], level: f64) -> Vec<usize> {
    Procedure::Hochberg.apply_unchecked(p_values, level)
}

/// Two-stage adaptive FDR procedure.
///
/// Stage one runs BH at `q' = q/(1+q)` and estimates the null count as
/// `n - R1`. If that estimate is zero every hypothesis is rejected,
/// otherwise BH is rerun at `n / m0_hat * q'`.
pub fn two_stage_adaptive(p_values: &[f64], q: f64) -> Vec<usize> {
    let n = p_values.len();
    let q_prime = q / (1.0 + q);
    let first = bh(p_values, q_prime).len();
    let m0_hat = n - first;
    if m0_hat == 0 {
        return (0..n).collect();
    }
    bh(p_values, n as f64 / m0_hat as f64 * q_prime)
}

fn lehmann_romano_critical(i: usize, n: usize, k: usize, level: f64) -> f64 {
    let kl = k as f64 * level;
    if i <= k {
        kl / n as f64
    } else {
        kl / (n + k - i) as f64
    }
}

/// Lehmann–Romano k-FWER step-down: `alpha_i = k*level/n` for `i <= k`
/// and `k*level/(n + k - i)` beyond.
pub fn lehmann_romano_kfwer(p_values: &[f64], level: f64, k: usize) -> Result<Vec<usize>> {
    let n = p_values.len();
    Procedure::LehmannRomano { k }.check_family_size(n)?;
    Ok(step_down_by(p_values, |i| lehmann_romano_critical(i, n, k, level)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(&[0.01, 0.2, 0.03], 0.05), vec![0]);
        assert!(bonferroni(&[0.5, 0.6], 0.0).is_empty());
        assert_eq!(bonferroni(&[0.004, 0.012, 0.04], 0.03), vec![0]);
    }

    #[test]
    fn step_up_examples() {
        let crit: Vec<f64> = (1..=4).map(|i| i as f64 * 0.05 / 4.0).collect();
        assert_eq!(step_up(&[0.01, 0.02, 0.04, 0.5], &crit).unwrap(), vec![0, 1]);
        assert!(step_up(&[1.0; 4], &crit).unwrap().is_empty());
        assert_eq!(step_up(&[0.3, 0.9, 1.0], &[1.0; 3]).unwrap(), vec![0, 1, 2]);
        assert!(matches!(
            step_up(&[0.1, 0.2], &[0.5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn step_down_examples() {
        let crit = [0.05 / 3.0, 0.05 / 2.0, 0.05];
        assert_eq!(step_down(&[0.001, 0.02, 0.03], &crit).unwrap(), vec![0, 1, 2]);
        assert_eq!(step_down(&[0.02, 0.001, 0.03], &crit).unwrap(), vec![0, 1, 2]);
        assert!(step_down(&[0.02; 3], &[0.01, 0.025, 0.05]).unwrap().is_empty());
        assert!(step_down(&[0.1], &[]).is_err());
    }

    #[test]
    fn step_up_passes_where_step_down_stops() {
        // p_(1) fails but p_(2) clears its value.
        let crit = [0.01, 0.05];
        assert_eq!(step_up(&[0.02, 0.03], &crit).unwrap(), vec![0, 1]);
        assert!(step_down(&[0.02, 0.03], &crit).unwrap().is_empty());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh(&[0.01, 0.02, 0.04, 0.5], 0.05), vec![0, 1]);
        assert_eq!(bh(&[0.01], 0.05), vec![0]);
        // p_(2) = 0.04 <= 2 * 0.05 / 2, so both go.
        assert_eq!(bh(&[0.026, 0.04], 0.05), vec![0, 1]);
    }

    #[test]
    fn ties_at_the_boundary_reject_together() {
        assert_eq!(bh(&[0.05, 0.05, 0.05], 0.05), vec![0, 1, 2]);
        assert_eq!(holm(&[0.01, 0.01, 0.9], 0.03), vec![0, 1]);
    }

    #[test]
    fn two_stage_examples() {
        assert_eq!(two_stage_adaptive(&[0.01, 0.02, 0.10], 0.05), vec![0, 1, 2]);
        assert_eq!(two_stage_adaptive(&[0.01, 0.04, 0.10], 0.05), vec![0, 1]);
        assert!(two_stage_adaptive(&[1.0; 5], 0.05).is_empty());
        // Everything rejected at stage one, so the null estimate is zero.
        assert_eq!(two_stage_adaptive(&[0.001, 0.002], 0.05), vec![0, 1]);
    }

    #[test]
    fn holm_and_hochberg_examples() {
        assert_eq!(holm(&[0.001, 0.02, 0.03], 0.05), vec![0, 1, 2]);
        assert_eq!(hochberg(&[0.001, 0.02, 0.03], 0.05), vec![0, 1, 2]);
        assert!(holm(&[0.001, 0.02, 0.03], 0.0).is_empty());
        assert!(hochberg(&[0.001, 0.02, 0.03], 0.0).is_empty());
    }

    #[test]
    fn lehmann_romano_at_k_equals_n() {
        // Direct evaluation of the critical values: with k = n every
        // alpha_i equals k * level / n = level.
        let p = [0.04, 0.01, 0.049, 0.2];
        let n = p.len();
        let level = 0.05;
        let k = n;
        let oracle: Vec<f64> = (1..=n)
            .map(|i| {
                let kl = k as f64 * level;
                if i < k {
                    kl / n as f64
                } else {
                    kl / (n + k - i) as f64
                }
            })
            .collect();
        assert!(oracle.iter().all(|&a| (a - level).abs() < 1e-15));
        assert_eq!(
            lehmann_romano_kfwer(&p, level, n).unwrap(),
            step_down(&p, &oracle).unwrap()
        );
        assert_eq!(lehmann_romano_kfwer(&p, level, n).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn lehmann_romano_errors_and_nulls() {
        assert!(lehmann_romano_kfwer(&[0.1, 0.2], 0.05, 0).is_err());
        assert!(lehmann_romano_kfwer(&[0.1, 0.2], 0.05, 3).is_err());
        assert!(lehmann_romano_kfwer(&[1.0; 4], 0.05, 2).unwrap().is_empty());
    }

    #[test]
    fn generic_procedures_scale_with_level() {
        let up = Procedure::generic_step_up(vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let bh_crit: Vec<f64> = (1..=4).map(|i| i as f64 * 0.05 / 4.0).collect();
        let p = [0.01, 0.02, 0.04, 0.5];
        assert_eq!(up.apply(&p, 0.05).unwrap(), step_up(&p, &bh_crit).unwrap());
        assert!(Procedure::generic_step_down(vec![0.5, 0.2]).is_err());
        assert!(Procedure::generic_step_down(vec![0.5, 1.2]).is_err());
        assert!(up.apply(&[0.1], 0.05).is_err());
    }

    #[test]
    fn apply_validates_level() {
        assert_eq!(
            Procedure::Bonferroni.apply(&[0.1], 1.5),
            Err(Error::InvalidLevel(1.5))
        );
        assert!(Procedure::Holm.apply(&[0.1], -0.1).is_err());
    }

    fn p_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..25)
    }

    fn all_procedures(n: usize) -> Vec<Procedure> {
        let mut v = vec![
            Procedure::Bonferroni,
            Procedure::Holm,
            Procedure::Hochberg,
            Procedure::BenjaminiHochberg,
            Procedure::TwoStageAdaptive,
            Procedure::LehmannRomano { k: n.div_ceil(2) },
        ];
        let shape: Vec<f64> = (1..=n).map(|i| (i as f64 / n as f64).sqrt()).collect();
        v.push(Procedure::generic_step_up(shape.clone()).unwrap());
        v.push(Procedure::generic_step_down(shape).unwrap());
        v
    }

    fn is_subset(a: &[usize], b: &[usize]) -> bool {
        a.iter().all(|x| b.contains(x))
    }

    proptest! {
        #[test]
        fn bh_matches_generic_step_up(p in p_vec(), level in 0.0f64..=1.0) {
            let n = p.len();
            let crit: Vec<f64> = (1..=n).map(|i| i as f64 * level / n as f64).collect();
            prop_assert_eq!(bh(&p, level), step_up(&p, &crit).unwrap());
        }

        #[test]
        fn lehmann_romano_k1_is_holm(p in p_vec(), level in 0.0f64..=1.0) {
            prop_assert_eq!(lehmann_romano_kfwer(&p, level, 1).unwrap(), holm(&p, level));
        }

        #[test]
        fn lowering_a_p_value_never_shrinks_rejections(
            p in p_vec(),
            pick in any::<prop::sample::Index>(),
            shrink in 0.0f64..=1.0,
            level in 0.0f64..=0.5,
        ) {
            let n = p.len();
            let crit: Vec<f64> = (1..=n).map(|i| i as f64 * level / n as f64).collect();
            let mut lowered = p.clone();
            let j = pick.index(n);
            lowered[j] *= shrink;
            let up_before = step_up(&p, &crit).unwrap();
            let up_after = step_up(&lowered, &crit).unwrap();
            prop_assert!(is_subset(&up_before, &up_after));
            let down_before = step_down(&p, &crit).unwrap();
            let down_after = step_down(&lowered, &crit).unwrap();
            prop_assert!(is_subset(&down_before, &down_after));
        }

        #[test]
        fn raising_the_level_never_shrinks_rejections(
            p in p_vec(),
            lo in 0.0f64..=0.5,
            bump in 0.0f64..=0.5,
        ) {
            for proc in all_procedures(p.len()) {
                let small = proc.apply(&p, lo).unwrap();
                let large = proc.apply(&p, lo + bump).unwrap();
                prop_assert!(is_subset(&small, &large), "{} shrank", proc);
            }
        }
    }
}
