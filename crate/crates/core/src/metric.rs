//! Error measures `C` and their averages.
//!
//! Every error rate handled here is the expectation of a per-family random
//! quantity computed from `V` (false rejections) and `R` (rejections). The
//! criterion that matters after selection is the average of `C` over the
//! selected families, with the convention that the average is zero when
//! nothing is selected.

use serde::{Deserialize, Serialize};

use crate::ensemble::Family;
use crate::error::{Error, Result};

/// Which per-family error measure is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMetric {
    /// `V` itself; its expectation is the per-family error rate.
    Pfer,
    /// `1{V >= 1}`.
    Fwer,
    /// The false discovery proportion `V / max(R, 1)`.
    Fdr,
    /// `1{FDP > gamma}`.
    Fdx { gamma: f64 },
    /// `1{V >= k}`.
    KFwer { k: usize },
    /// `FDP * 1{V >= k}`.
    KFdr { k: usize },
}

impl ErrorMetric {
    pub fn fdx(gamma: f64) -> Result<Self> {
        let metric = ErrorMetric::Fdx { gamma };
        metric.validate()?;
        Ok(metric)
    }

    pub fn k_fwer(k: usize) -> Result<Self> {
        let metric = ErrorMetric::KFwer { k };
        metric.validate()?;
        Ok(metric)
    }

    pub fn k_fdr(k: usize) -> Result<Self> {
        let metric = ErrorMetric::KFdr { k };
        metric.validate()?;
        Ok(metric)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorMetric::Fdx { gamma } if !(gamma > 0.0 && gamma < 1.0) => Err(
                Error::InvalidParameter(format!("FDX threshold {gamma} must lie in (0, 1)")),
            ),
            ErrorMetric::KFwer { k: 0 } | ErrorMetric::KFdr { k: 0 } => Err(
                Error::InvalidParameter("k must be a positive integer".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluates `C` for `v` false rejections among `r` rejections.
    pub fn value(&self, v: usize, r: usize) -> Result<f64> {
        self.validate()?;
        if v > r {
            return Err(Error::InvalidCounts {
                false_rejections: v,
                rejections: r,
            });
        }
        Ok(self.value_unchecked(v, r))
    }

    pub(crate) fn value_unchecked(&self, v: usize, r: usize) -> f64 {
        let fdp = fdp(v, r);
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        match *self {
            ErrorMetric::Pfer => v as f64,
            ErrorMetric::Fwer => indicator(v >= 1),
            ErrorMetric::Fdr => fdp,
            ErrorMetric::Fdx { gamma } => indicator(fdp > gamma),
            ErrorMetric::KFwer { k } => indicator(v >= k),
            ErrorMetric::KFdr { k } => fdp * indicator(v >= k),
        }
    }
}

/// Free-function form of [`ErrorMetric::value`].
pub fn metric_value(metric: ErrorMetric, v: usize, r: usize) -> Result<f64> {
    metric.value(v, r)
}

/// `v / max(r, 1)`; zero rejections give an FDP of zero.
pub fn fdp(v: usize, r: usize) -> f64 {
    v as f64 / r.max(1) as f64
}

/// Outcome of testing one selected family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDecision {
    /// Position of the family in the ensemble.
    pub family: usize,
    pub family_id: String,
    pub adjusted_level: f64,
    /// Sorted hypothesis indices within the family.
    pub rejected: Vec<usize>,
    /// The realized `C_i`; only known when the truth mask is.
    pub realized_c: Option<f64>,
    /// False rejections `V_i`.
    pub v: Option<usize>,
    /// The family's false discovery proportion `Q_i`.
    pub q_i: Option<f64>,
}

impl FamilyDecision {
    /// Builds a decision and, when `family` carries a truth mask, fills in
    /// `V_i`, `Q_i` and `C_i` for `metric`.
    pub fn new(
        index: usize,
        family: &Family,
        adjusted_level: f64,
        rejected: Vec<usize>,
        metric: ErrorMetric,
    ) -> Self {
        let (v, q_i, realized_c) = match &family.truth {
            Some(truth) => {
                let v = rejected.iter().filter(|&&j| truth[j]).count();
                let r = rejected.len();
                (
                    Some(v),
                    Some(fdp(v, r)),
                    Some(metric.value_unchecked(v, r)),
                )
            }
            None => (None, None, None),
        };
        FamilyDecision {
            family: index,
            family_id: family.id.clone(),
            adjusted_level,
            rejected,
            realized_c,
            v,
            q_i,
        }
    }

    /// A decision with known counts and no hypothesis identities, for
    /// hand-built scenarios.
    pub fn from_counts(
        family: usize,
        v: usize,
        rejections: usize,
        metric: ErrorMetric,
    ) -> Result<Self> {
        let c = metric.value(v, rejections)?;
        Ok(FamilyDecision {
            family,
            family_id: family.to_string(),
            adjusted_level: f64::NAN,
            rejected: (0..rejections).collect(),
            realized_c: Some(c),
            v: Some(v),
            q_i: Some(fdp(v, rejections)),
        })
    }
}

/// `sum C_i / max(r, 1)` over the decisions for the selected families.
///
/// `r` is the number of selected families, which may exceed the number of
/// decisions with rejections but must match `decisions.len()`.
pub fn average_over_selected(decisions: &[FamilyDecision], r: usize) -> Result<f64> {
    if decisions.len() != r {
        return Err(Error::LengthMismatch {
            what: "decisions for selected families",
            expected: r,
            got: decisions.len(),
        });
    }
    let mut total = 0.0;
    for d in decisions {
        total += d.realized_c.ok_or_else(|| {
            Error::InvalidParameter(format!("family {} has no realized error value", d.family))
        })?;
    }
    Ok(total / r.max(1) as f64)
}

/// FDP of the union of all rejections, `sum V_i / max(sum R_i, 1)`.
pub fn pooled_fdp(decisions: &[FamilyDecision]) -> Result<f64> {
    let mut v_total = 0;
    let mut r_total = 0;
    for d in decisions {
        v_total += d.v.ok_or_else(|| {
            Error::InvalidParameter(format!("family {} has no false-rejection count", d.family))
        })?;
        r_total += d.rejected.len();
    }
    Ok(fdp(v_total, r_total))
}
