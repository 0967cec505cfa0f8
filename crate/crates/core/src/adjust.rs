//! Selection-adjusted testing.
//!
//! After selecting `R` of `m` families, testing each selected family at the
//! nominal level `q` lets the average error over the selected families
//! drift far above `q`. Testing each selected family at `R * q / m`
//! instead keeps the expected average at or below `q` for simple rules and
//! independent families; for arbitrary rules the per-family `R_min(i)`
//! replaces `R`.

use serde::Serialize;

use crate::ensemble::PValueEnsemble;
use crate::error::{Error, Result};
use crate::metric::{average_over_selected, ErrorMetric, FamilyDecision};
use crate::procedures::Procedure;
use crate::selection::{
    r_min_for_selected, select, Combiner, SelectionOutcome, SelectionRule,
};

/// How the within-family level is chosen for each selected family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    /// Test every selected family at `q`. Only useful for exhibiting the
    /// selection bias.
    Unadjusted,
    /// `R * q / m`; valid for simple rules.
    Simple,
    /// `R_min(i) * q / m`; valid for any rule `R_min` can be computed for.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedAnalysis {
    pub selection: SelectionOutcome,
    /// One decision per selected family, in family order.
    pub decisions: Vec<FamilyDecision>,
    pub q: f64,
    pub m: usize,
    pub procedure: Procedure,
    pub metric: ErrorMetric,
    /// Selected sets visited by the iterative variant; empty otherwise.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Vec<usize>>,
}

impl AdjustedAnalysis {
    /// The realized average error over the selected families, when the
    /// ensemble carried a truth mask.
    pub fn average_error(&self) -> Option<f64> {
        average_over_selected(&self.decisions, self.selection.r).ok()
    }

    pub fn decision(&self, family: usize) -> Option<&FamilyDecision> {
        self.decisions
            .binary_search_by_key(&family, |d| d.family)
            .ok()
            .map(|k| &self.decisions[k])
    }

    pub fn total_rejections(&self) -> usize {
        self.decisions.iter().map(|d| d.rejected.len()).sum()
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(q))
    }
}

fn test_families(
    ensemble: &PValueEnsemble,
    selected: &[usize],
    procedure: &Procedure,
    metric: ErrorMetric,
    level_of: impl Fn(usize) -> f64,
) -> Result<Vec<FamilyDecision>> {
    selected
        .iter()
        .map(|&i| {
            let family = ensemble.family(i);
            let level = level_of(i);
            let rejected = procedure.apply(&family.p_values, level)?;
            Ok(FamilyDecision::new(i, family, level, rejected, metric))
        })
        .collect()
}

/// Selects with `rule`, then tests every selected family at `R * q / m`.
///
/// The rule is assumed simple; [`crate::selection::check_simple`] can look
/// for evidence against that. Unselected families get no rejections.
pub fn simple_selection_adjusted(
    ensemble: &PValueEnsemble,
    rule: &SelectionRule,
    procedure: &Procedure,
    q: f64,
    metric: ErrorMetric,
) -> Result<AdjustedAnalysis> {
    check_q(q)?;
    let mut selection = select(rule, ensemble)?;
    let m = ensemble.m();
    let r = selection.r;
    selection.r_min = selection.selected.iter().map(|&i| (i, r)).collect();
    let level = r as f64 * q / m as f64;
    let decisions = test_families(ensemble, &selection.selected, procedure, metric, |_| level)?;
    Ok(AdjustedAnalysis {
        selection,
        decisions,
        q,
        m,
        procedure: procedure.clone(),
        metric,
        trajectory: Vec::new(),
    })
}

/// Selects with `rule`, then tests each selected family `i` at
/// `R_min(i) * q / m`. Reduces to [`simple_selection_adjusted`] for simple
/// rules.
pub fn selection_adjusted(
    ensemble: &PValueEnsemble,
    rule: &SelectionRule,
    procedure: &Procedure,
    q: f64,
    metric: ErrorMetric,
) -> Result<AdjustedAnalysis> {
    check_q(q)?;
    let mut selection = select(rule, ensemble)?;
    selection.r_min = r_min_for_selected(rule, ensemble, &selection)?;
    let m = ensemble.m() as f64;
    let decisions = test_families(ensemble, &selection.selected, procedure, metric, |i| {
        selection.r_min[&i] as f64 * q / m
    })?;
    Ok(AdjustedAnalysis {
        selection,
        decisions,
        q,
        m: ensemble.m(),
        procedure: procedure.clone(),
        metric,
        trajectory: Vec::new(),
    })
}

/// Tests every selected family at the nominal `q`, ignoring selection.
pub fn unadjusted(
    ensemble: &PValueEnsemble,
    rule: &SelectionRule,
    procedure: &Procedure,
    q: f64,
    metric: ErrorMetric,
) -> Result<AdjustedAnalysis> {
    check_q(q)?;
    let selection = select(rule, ensemble)?;
    let decisions = test_families(ensemble, &selection.selected, procedure, metric, |_| q)?;
    Ok(AdjustedAnalysis {
        selection,
        decisions,
        q,
        m: ensemble.m(),
        procedure: procedure.clone(),
        metric,
        trajectory: Vec::new(),
    })
}

/// Dispatches on `adjustment`.
pub fn analyze(
    ensemble: &PValueEnsemble,
    rule: &SelectionRule,
    procedure: &Procedure,
    q: f64,
    metric: ErrorMetric,
    adjustment: Adjustment,
) -> Result<AdjustedAnalysis> {
    match adjustment {
        Adjustment::Unadjusted => unadjusted(ensemble, rule, procedure, q, metric),
        Adjustment::Simple => simple_selection_adjusted(ensemble, rule, procedure, q, metric),
        Adjustment::General => selection_adjusted(ensemble, rule, procedure, q, metric),
    }
}

/// Repeats the simple adjustment until every selected family has at least
/// one rejection.
///
/// Round one selects with `rule` and tests at `R * q / m`. Each later round
/// keeps only the families that had a rejection and retests them at
/// `R' * q / m` with the new count `R'`. A family without rejections at a
/// level cannot gain one at a smaller level, so the selected set only
/// shrinks and at most `m` rounds are needed; `max_iters` (default `m`)
/// bounds the loop.
pub fn iterative_simple_adjusted(
    ensemble: &PValueEnsemble,
    rule: &SelectionRule,
    procedure: &Procedure,
    q: f64,
    metric: ErrorMetric,
    max_iters: Option<usize>,
) -> Result<AdjustedAnalysis> {
    check_q(q)?;
    let m = ensemble.m();
    let max_iters = max_iters.unwrap_or(m);
    let mut selected = select(rule, ensemble)?.selected;
    let mut trajectory = Vec::new();

    loop {
        if selected.is_empty() {
            trajectory.push(Vec::new());
            break;
        }
        if trajectory.len() >= max_iters {
            trajectory.push(selected);
            return Err(Error::NonConvergence { trajectory });
        }
        trajectory.push(selected.clone());
        let level = selected.len() as f64 * q / m as f64;
        let decisions = test_families(ensemble, &selected, procedure, metric, |_| level)?;
        let kept: Vec<usize> = decisions
            .iter()
            .filter(|d| !d.rejected.is_empty())
            .map(|d| d.family)
            .collect();
        if kept.len() == selected.len() {
            let mut selection = SelectionOutcome::new(selected);
            let r = selection.r;
            selection.r_min = selection.selected.iter().map(|&i| (i, r)).collect();
            return Ok(AdjustedAnalysis {
                selection,
                decisions,
                q,
                m,
                procedure: procedure.clone(),
                metric,
                trajectory,
            });
        }
        selected = kept;
    }

    Ok(AdjustedAnalysis {
        selection: SelectionOutcome::new(Vec::new()),
        decisions: Vec::new(),
        q,
        m,
        procedure: procedure.clone(),
        metric,
        trajectory,
    })
}

/// Simes-combined global nulls selected by BH at `q`, then BH at
/// `R * q / m` inside each selected family.
///
/// A family is selected only if its Simes p-value is at most `R * q / m`,
/// which is exactly when BH at that level rejects something inside it, so
/// every selected family ends up with at least one rejection.
pub fn guaranteed_rejection_analysis(
    ensemble: &PValueEnsemble,
    q: f64,
    metric: ErrorMetric,
) -> Result<AdjustedAnalysis> {
    let rule = SelectionRule::GlobalNullTest {
        combiner: Combiner::Simes,
        procedure: Procedure::BenjaminiHochberg,
        level: q,
    };
    let analysis = simple_selection_adjusted(
        ensemble,
        &rule,
        &Procedure::BenjaminiHochberg,
        q,
        metric,
    )?;
    if let Some(empty) = analysis.decisions.iter().find(|d| d.rejected.is_empty()) {
        return Err(Error::InvariantViolation(format!(
            "selected family {} has no rejection",
            empty.family
        )));
    }
    Ok(analysis)
}
