//! The ensemble of p-value families that every other module consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One family of hypotheses: an opaque label, its p-values, and optionally
/// which hypotheses are truly null (`true` = null holds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub id: String,
    pub p_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<bool>>,
}

impl Family {
    pub fn new(id: impl Into<String>, p_values: Vec<f64>) -> Self {
        Family {
            id: id.into(),
            p_values,
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: Vec<bool>) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn len(&self) -> usize {
        self.p_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_values.is_empty()
    }

    /// Number of true nulls, when the truth is known.
    pub fn null_count(&self) -> Option<usize> {
        self.truth
            .as_ref()
            .map(|t| t.iter().filter(|&&null| null).count())
    }
}

/// A validated collection of families.
///
/// Every p-value lies in `[0, 1]`, every family is non-empty, there is at
/// least one family, and a truth mask (when present) has one flag per
/// hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueEnsemble {
    families: Vec<Family>,
}

impl PValueEnsemble {
    pub fn new(families: Vec<Family>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::NoFamilies);
        }
        for (i, family) in families.iter().enumerate() {
            validate_family(i, family)?;
        }
        Ok(PValueEnsemble { families })
    }

    /// Builds an ensemble from bare p-value vectors, labelling families by
    /// their position.
    pub fn from_p_values(families: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            families
                .into_iter()
                .enumerate()
                .map(|(i, p)| Family::new(i.to_string(), p))
                .collect(),
        )
    }

    /// Number of families, `m`.
    pub fn m(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn family(&self, i: usize) -> &Family {
        &self.families[i]
    }

    pub fn p_values(&self, i: usize) -> &[f64] {
        &self.families[i].p_values
    }

    pub fn total_hypotheses(&self) -> usize {
        self.families.iter().map(Family::len).sum()
    }

    pub fn has_truth(&self) -> bool {
        self.families.iter().all(|f| f.truth.is_some())
    }

    /// A copy of the ensemble with family `i`'s p-values swapped out. The
    /// truth mask is kept when the new vector has the same length.
    pub fn with_family_replaced(&self, i: usize, p_values: Vec<f64>) -> Result<Self> {
        let mut families = self.families.clone();
        let family = &mut families[i];
        if family.truth.as_ref().map(Vec::len) != Some(p_values.len()) {
            family.truth = None;
        }
        family.p_values = p_values;
        validate_family(i, family)?;
        Ok(PValueEnsemble { families })
    }

    pub fn into_families(self) -> Vec<Family> {
        self.families
    }
}

fn validate_family(i: usize, family: &Family) -> Result<()> {
    if family.p_values.is_empty() {
        return Err(Error::EmptyFamily(i));
    }
    for (j, &p) in family.p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PValueOutOfRange {
                family: i,
                hypothesis: j,
                value: p,
            });
        }
    }
    if let Some(truth) = &family.truth {
        if truth.len() != family.p_values.len() {
            return Err(Error::TruthMismatch {
                family: i,
                expected: family.p_values.len(),
                got: truth.len(),
            });
        }
    }
    Ok(())
}
