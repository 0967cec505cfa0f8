//! Family selection rules, global-null combiners and `R_min`.
//!
//! Most useful rules look at each family only through one number, its
//! *summary* (the smallest p-value, or a combined global-null p-value), and
//! then pick families by comparing summaries with each other and with fixed
//! cut-offs. For such rules the number of selected families, as a function
//! of one family's summary with everything else held fixed, is piecewise
//! constant with finitely many breakpoints. [`r_min_rank_scan`] evaluates
//! the rule once per piece, which gives `R_min` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{chi_square_sf_even, normal_quantile, normal_sf};
use crate::ensemble::PValueEnsemble;
use crate::error::{Error, Result};
use crate::procedures::{sorted_order, Procedure, StepKind};

/// p-values are raised to this floor before log or quantile transforms.
pub const P_FLOOR: f64 = 1e-300;

/// Builds a p-value for a family's intersection (global null) hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// `min(1, n * min p)`.
    BonferroniMin,
    /// `min_j n * p_(j) / j`.
    Simes,
    /// Chi-square tail of `-2 * sum ln p` on `2n` degrees of freedom.
    Fisher,
    /// Normal tail of `sum Phi^-1(1 - p) / sqrt(n)`.
    Stouffer,
}

impl Combiner {
    pub fn combine(&self, p_values: &[f64]) -> Result<f64> {
        if p_values.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot combine an empty family".into(),
            ));
        }
        Ok(self.combine_unchecked(p_values))
    }

    pub(crate) fn combine_unchecked(&self, p: &[f64]) -> f64 {
        let n = p.len() as f64;
        let combined = match self {
            Combiner::BonferroniMin => n * p.iter().cloned().fold(f64::INFINITY, f64::min),
            Combiner::Simes => {
                let mut sorted = p.to_vec();
                sorted.sort_by(f64::total_cmp);
                sorted
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| pj * n / (j + 1) as f64)
                    .fold(f64::INFINITY, f64::min)
            }
            Combiner::Fisher => {
                let stat: f64 = p.iter().map(|&pj| -2.0 * pj.max(P_FLOOR).ln()).sum();
                chi_square_sf_even(stat, p.len())
            }
            Combiner::Stouffer => {
                let z: f64 = p
                    .iter()
                    .map(|&pj| -normal_quantile(pj.max(P_FLOOR)))
                    .sum::<f64>()
                    / n.sqrt();
                normal_sf(z)
            }
        };
        combined.clamp(0.0, 1.0)
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combiner::BonferroniMin => "bonferroni",
            Combiner::Simes => "simes",
            Combiner::Fisher => "fisher",
            Combiner::Stouffer => "stouffer",
        })
    }
}

/// Free-function form of [`Combiner::combine`].
pub fn combine(combiner: Combiner, p_values: &[f64]) -> Result<f64> {
    combiner.combine(p_values)
}

/// A user-defined rule that sees each family only through a scalar summary.
pub trait SummaryRule: fmt::Debug + Send + Sync {
    fn name(&self) -> String;

    fn summarize(&self, p_values: &[f64]) -> f64;

    /// Selected indices (sorted) given every family's summary.
    fn select_from_summaries(&self, summaries: &[f64]) -> Vec<usize>;

    /// Points strictly inside `(lo, hi)` where selection may change while
    /// the moving summary is the `rank`-th smallest (1-based) of `m`.
    /// Summaries of the other families are always treated as breakpoints.
    fn gap_breakpoints(&self, _rank: usize, _m: usize, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }

    fn is_simple(&self) -> bool {
        false
    }
}

/// A user-defined rule that needs the whole ensemble.
pub trait FamilyRule: fmt::Debug + Send + Sync {
    fn name(&self) -> String;

    fn select(&self, ensemble: &PValueEnsemble) -> Vec<usize>;

    fn is_simple(&self) -> bool {
        false
    }
}

/// How families are chosen for follow-up testing.
#[derive(Debug, Clone)]
pub enum SelectionRule {
    /// Select families whose smallest p-value is at most `t`.
    MinPThreshold(f64),
    /// Select the `k` families with the smallest minimal p-values; ties go
    /// to the lower family index.
    TopKMinP(usize),
    /// Combine each family into a global-null p-value and select the
    /// families whose global null the procedure rejects at `level`.
    GlobalNullTest {
        combiner: Combiner,
        procedure: Procedure,
        level: f64,
    },
    Summary(Arc<dyn SummaryRule>),
    Custom(Arc<dyn FamilyRule>),
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::MinPThreshold(t) => write!(f, "minp:{t}"),
            SelectionRule::TopKMinP(k) => write!(f, "topk:{k}"),
            SelectionRule::GlobalNullTest {
                combiner,
                procedure,
                level,
            } => write!(f, "global:{combiner}:{procedure}:{level}"),
            SelectionRule::Summary(rule) => write!(f, "summary:{}", rule.name()),
            SelectionRule::Custom(rule) => write!(f, "custom:{}", rule.name()),
        }
    }
}

/// Which families were selected, and (once computed) their `R_min`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Sorted family indices.
    pub selected: Vec<usize>,
    pub r: usize,
    pub r_min: BTreeMap<usize, usize>,
}

impl SelectionOutcome {
    pub fn new(selected: Vec<usize>) -> Self {
        SelectionOutcome {
            r: selected.len(),
            selected,
            r_min: BTreeMap::new(),
        }
    }

    pub fn is_selected(&self, family: usize) -> bool {
        self.selected.binary_search(&family).is_ok()
    }
}

fn min_p(p: &[f64]) -> f64 {
    p.iter().cloned().fold(f64::INFINITY, f64::min)
}

impl SelectionRule {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            SelectionRule::MinPThreshold(t) if !(*t > 0.0 && *t <= 1.0) => Err(
                Error::InvalidParameter(format!("threshold {t} must lie in (0, 1]")),
            ),
            SelectionRule::TopKMinP(k) if *k == 0 || *k > m => Err(Error::InvalidParameter(
                format!("top-k selection needs 1 <= k <= {m}, got {k}"),
            )),
            SelectionRule::GlobalNullTest {
                procedure, level, ..
            } => {
                if !(0.0..=1.0).contains(level) {
                    return Err(Error::InvalidLevel(*level));
                }
                procedure.check_family_size(m)
            }
            _ => Ok(()),
        }
    }

    /// Whether the rule is known to be simple: moving a selected family's
    /// own p-values, while it stays selected, never changes how many
    /// families are selected.
    pub fn is_simple(&self) -> bool {
        match self {
            SelectionRule::MinPThreshold(_) | SelectionRule::TopKMinP(_) => true,
            SelectionRule::GlobalNullTest { procedure, .. } => procedure.is_stepwise(),
            SelectionRule::Summary(rule) => rule.is_simple(),
            SelectionRule::Custom(rule) => rule.is_simple(),
        }
    }

    pub fn is_summary_based(&self) -> bool {
        !matches!(self, SelectionRule::Custom(_))
    }

    /// The scalar a summary-based rule reads from one family.
    pub fn summarize(&self, p_values: &[f64]) -> Option<f64> {
        match self {
            SelectionRule::MinPThreshold(_) | SelectionRule::TopKMinP(_) => Some(min_p(p_values)),
            SelectionRule::GlobalNullTest { combiner, .. } => {
                Some(combiner.combine_unchecked(p_values))
            }
            SelectionRule::Summary(rule) => Some(rule.summarize(p_values)),
            SelectionRule::Custom(_) => None,
        }
    }

    pub fn summaries(&self, ensemble: &PValueEnsemble) -> Option<Vec<f64>> {
        ensemble
            .families()
            .iter()
            .map(|f| self.summarize(&f.p_values))
            .collect()
    }

    /// Sorted selected indices from per-family summaries.
    pub fn select_from_summaries(&self, s: &[f64]) -> Option<Vec<usize>> {
        Some(match self {
            SelectionRule::MinPThreshold(t) => (0..s.len()).filter(|&i| s[i] <= *t).collect(),
            SelectionRule::TopKMinP(k) => {
                let mut chosen = sorted_order(s);
                chosen.truncate(*k);
                chosen.sort_unstable();
                chosen
            }
            SelectionRule::GlobalNullTest {
                procedure, level, ..
            } => procedure.apply_unchecked(s, *level),
            SelectionRule::Summary(rule) => rule.select_from_summaries(s),
            SelectionRule::Custom(_) => return None,
        })
    }

    fn select_indices(&self, ensemble: &PValueEnsemble) -> Vec<usize> {
        match self {
            SelectionRule::Custom(rule) => {
                let mut chosen = rule.select(ensemble);
                chosen.sort_unstable();
                chosen.dedup();
                chosen
            }
            _ => {
                let s = self.summaries(ensemble).expect("summary-based rule");
                self.select_from_summaries(&s).expect("summary-based rule")
            }
        }
    }

    /// Breakpoints inside `(lo, hi)` for a summary sitting at `rank` of `m`.
    fn gap_breakpoints(&self, rank: usize, m: usize, lo: f64, hi: f64) -> Vec<f64> {
        let inside = |c: f64| c > lo && c < hi;
        let mut points = match self {
            SelectionRule::MinPThreshold(t) => vec![*t],
            SelectionRule::TopKMinP(_) | SelectionRule::Custom(_) => Vec::new(),
            SelectionRule::Summary(rule) => rule.gap_breakpoints(rank, m, lo, hi),
            SelectionRule::GlobalNullTest {
                procedure, level, ..
            } => match procedure.step_kind() {
                StepKind::Adaptive => two_stage_breakpoints(rank, m, *level, lo, hi),
                _ => vec![stepwise_critical_value(procedure, rank, m, *level)],
            },
        };
        points.retain(|&c| inside(c));
        points
    }
}

/// The critical value a stepwise procedure compares with its `rank`-th
/// smallest p-value out of `m`.
fn stepwise_critical_value(procedure: &Procedure, rank: usize, m: usize, level: f64) -> f64 {
    let mf = m as f64;
    let i = rank as f64;
    match procedure {
        Procedure::Bonferroni => level / mf,
        Procedure::Holm | Procedure::Hochberg => level / (mf - i + 1.0),
        Procedure::BenjaminiHochberg => i * level / mf,
        Procedure::LehmannRomano { k } => {
            let kl = *k as f64 * level;
            if rank <= *k {
                kl / mf
            } else {
                kl / (m + k - rank) as f64
            }
        }
        Procedure::GenericStepUp { critical_values }
        | Procedure::GenericStepDown { critical_values } => level * critical_values[rank - 1],
        Procedure::TwoStageAdaptive => unreachable!("adaptive procedure has no fixed critical values"),
    }
}

/// Stage one compares the `rank`-th p-value with `rank * q' / m`; stage two
/// with `rank * q' / m0_hat` for whichever `m0_hat` stage one produces.
fn two_stage_breakpoints(rank: usize, m: usize, q: f64, lo: f64, hi: f64) -> Vec<f64> {
    let q_prime = q / (1.0 + q);
    let scaled = rank as f64 * q_prime;
    let mut points = vec![scaled / m as f64];
    // rank * q' / m0 lies in (lo, hi) only for m0 in (scaled/hi, scaled/lo).
    let m0_lo = if hi > 0.0 {
        ((scaled / hi).floor() as usize).max(1)
    } else {
        1
    };
    let m0_hi = if lo > 0.0 {
        ((scaled / lo).ceil() as usize).min(m)
    } else {
        m
    };
    for m0 in m0_lo..=m0_hi {
        points.push(scaled / m0 as f64);
    }
    points
}

/// Applies the rule; `r_min` is left empty.
pub fn select(rule: &SelectionRule, ensemble: &PValueEnsemble) -> Result<SelectionOutcome> {
    rule.validate(ensemble.m())?;
    Ok(SelectionOutcome::new(rule.select_indices(ensemble)))
}

/// Applies the rule and fills `r_min` for every selected family.
pub fn select_with_r_min(
    rule: &SelectionRule,
    ensemble: &PValueEnsemble,
) -> Result<SelectionOutcome> {
    let mut outcome = select(rule, ensemble)?;
    outcome.r_min = r_min_for_selected(rule, ensemble, &outcome)?;
    Ok(outcome)
}

pub(crate) fn r_min_for_selected(
    rule: &SelectionRule,
    ensemble: &PValueEnsemble,
    outcome: &SelectionOutcome,
) -> Result<BTreeMap<usize, usize>> {
    if rule.is_simple() {
        return Ok(outcome.selected.iter().map(|&i| (i, outcome.r)).collect());
    }
    let summaries = rule
        .summaries(ensemble)
        .ok_or_else(|| unsupported(rule))?;
    outcome
        .selected
        .iter()
        .map(|&i| {
            let value = r_min_rank_scan(rule, &summaries, i)
                .ok_or_else(|| Error::InvariantViolation(format!(
                    "rank scan found no placement selecting family {i}"
                )))?;
            Ok((i, value))
        })
        .collect()
}

fn unsupported(rule: &SelectionRule) -> Error {
    Error::UnsupportedRule(format!(
        "{rule} is neither simple nor summary-based, so R_min cannot be computed"
    ))
}

/// Smallest number of selected families over every replacement of family
/// `i`'s p-values that keeps `i` selected, other families held fixed.
///
/// Simple rules short-cut to `R`; other summary-based rules use
/// [`r_min_rank_scan`]; anything else is refused.
pub fn r_min(rule: &SelectionRule, ensemble: &PValueEnsemble, i: usize) -> Result<usize> {
    let outcome = select(rule, ensemble)?;
    if !outcome.is_selected(i) {
        return Err(Error::NotSelected(i));
    }
    if rule.is_simple() {
        return Ok(outcome.r);
    }
    let summaries = rule.summaries(ensemble).ok_or_else(|| unsupported(rule))?;
    r_min_rank_scan(rule, &summaries, i).ok_or_else(|| {
        Error::InvariantViolation(format!("rank scan found no placement selecting family {i}"))
    })
}

/// Exact `R_min` for a summary-based rule by scanning every piece of the
/// selection function of family `i`'s summary. Returns `None` when no
/// placement selects `i` (or the rule is not summary-based).
///
/// Candidate placements are 0, 1, the other summaries, rule breakpoints
/// inside each gap between consecutive other summaries, and the midpoints
/// between all of those.
pub fn r_min_rank_scan(rule: &SelectionRule, summaries: &[f64], i: usize) -> Option<usize> {
    if !rule.is_summary_based() {
        return None;
    }
    let m = summaries.len();
    let mut others: Vec<f64> = summaries
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &s)| s)
        .collect();
    others.sort_by(f64::total_cmp);

    let mut points = vec![0.0, 1.0];
    points.extend(others.iter().cloned());
    for rank in 1..=m {
        let lo = if rank == 1 { 0.0 } else { others[rank - 2] };
        let hi = if rank == m { 1.0 } else { others[rank - 1] };
        if lo < hi {
            points.extend(rule.gap_breakpoints(rank, m, lo, hi));
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let midpoints: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    points.extend(midpoints);

    let mut trial = summaries.to_vec();
    let mut best: Option<usize> = None;
    for c in points {
        trial[i] = c;
        let chosen = rule.select_from_summaries(&trial)?;
        if chosen.binary_search(&i).is_ok() {
            best = Some(best.map_or(chosen.len(), |b| b.min(chosen.len())));
        }
    }
    best
}

/// A replacement of one family's p-values that kept it selected but changed
/// the number of selected families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplenessWitness {
    pub family: usize,
    pub replacement: Vec<f64>,
    pub original_count: usize,
    pub perturbed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplenessReport {
    pub trials: usize,
    pub witness: Option<SimplenessWitness>,
}

impl SimplenessReport {
    pub fn found_witness(&self) -> bool {
        self.witness.is_some()
    }
}

/// Draws a replacement family: uniform p-values scaled by a log-uniform
/// factor in `[1e-8, 1]`, so small values are well covered.
fn draw_family(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(-8.0 * rng.random::<f64>());
    (0..n).map(|_| scale * rng.random::<f64>()).collect()
}

/// Randomized search for evidence that the rule is not simple at family
/// `i`. Finding no witness is not a proof of simpleness.
pub fn check_simple(
    rule: &SelectionRule,
    ensemble: &PValueEnsemble,
    i: usize,
    trials: usize,
    seed: u64,
) -> Result<SimplenessReport> {
    let outcome = select(rule, ensemble)?;
    if !outcome.is_selected(i) {
        return Err(Error::NotSelected(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ensemble.family(i).len();
    let mut summaries = rule.summaries(ensemble);
    for _ in 0..trials {
        let replacement = draw_family(&mut rng, n);
        let chosen = match summaries.as_mut() {
            Some(s) => {
                s[i] = rule.summarize(&replacement).expect("summary-based rule");
                rule.select_from_summaries(s).expect("summary-based rule")
            }
            None => rule.select_indices(&ensemble.with_family_replaced(i, replacement.clone())?),
        };
        if chosen.binary_search(&i).is_ok() && chosen.len() != outcome.r {
            return Ok(SimplenessReport {
                trials,
                witness: Some(SimplenessWitness {
                    family: i,
                    replacement,
                    original_count: outcome.r,
                    perturbed_count: chosen.len(),
                }),
            });
        }
    }
    Ok(SimplenessReport {
        trials,
        witness: None,
    })
}

/// An increase of one off-family p-value that increased `R_min` of
/// `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceWitness {
    pub family: usize,
    pub changed_family: usize,
    pub hypothesis: usize,
    pub old_value: f64,
    pub new_value: f64,
    pub r_min_before: usize,
    pub r_min_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub trials: usize,
    pub witness: Option<ConcordanceWitness>,
}

impl ConcordanceReport {
    pub fn found_witness(&self) -> bool {
        self.witness.is_some()
    }
}

/// Randomized search for a violation of concordance: `R_min` of a family,
/// viewed as a function of the other families' p-values, must never grow
/// when one of those p-values grows.
///
/// Each trial picks a target family and a different family; half the time
/// that second family is first redrawn at random, then one of its p-values
/// is raised.
pub fn check_concordant(
    rule: &SelectionRule,
    ensemble: &PValueEnsemble,
    trials: usize,
    seed: u64,
) -> Result<ConcordanceReport> {
    rule.validate(ensemble.m())?;
    let base = rule.summaries(ensemble).ok_or_else(|| unsupported(rule))?;
    let m = ensemble.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if m < 2 {
        return Ok(ConcordanceReport {
            trials,
            witness: None,
        });
    }
    for _ in 0..trials {
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let mut family_j = ensemble.p_values(j).to_vec();
        if rng.random_bool(0.5) {
            family_j = draw_family(&mut rng, family_j.len());
        }
        let h = rng.random_range(0..family_j.len());
        let old_value = family_j[h];
        let new_value = old_value + (1.0 - old_value) * rng.random::<f64>();

        let mut summaries = base.clone();
        summaries[j] = rule.summarize(&family_j).expect("summary-based rule");
        let before = r_min_rank_scan(rule, &summaries, i);
        family_j[h] = new_value;
        summaries[j] = rule.summarize(&family_j).expect("summary-based rule");
        let after = r_min_rank_scan(rule, &summaries, i);

        if let (Some(r_min_before), Some(r_min_after)) = (before, after) {
            if r_min_after > r_min_before {
                return Ok(ConcordanceReport {
                    trials,
                    witness: Some(ConcordanceWitness {
                        family: i,
                        changed_family: j,
                        hypothesis: h,
                        old_value,
                        new_value,
                        r_min_before,
                        r_min_after,
                    }),
                });
            }
        }
    }
    Ok(ConcordanceReport {
        trials,
        witness: None,
    })
}
