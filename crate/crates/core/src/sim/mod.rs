//! Monte Carlo estimation of the average error over selected families.
//!
//! Replicates are generated from per-replicate random streams and reduced
//! in fixed-size blocks whose partial results are merged in index order,
//! so an estimate depends only on the configuration and seed, never on
//! the number of worker threads.

mod closed_form;
mod generate;

use rayon::prelude::*;
use serde::Serialize;

use crate::adjust::{analyze, Adjustment};
use crate::error::{Error, Result};
use crate::metric::ErrorMetric;
use crate::procedures::Procedure;
use crate::selection::{check_concordant, SelectionRule};

pub use closed_form::closed_form_example1;
pub use generate::{generate, replicate_rng};

/// Which hypotheses are false nulls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthModel {
    AllNull,
    /// The first `round(signal_families * m)` families each carry
    /// `round(non_null_fraction * n_i)` non-null hypotheses (the first ones),
    /// whose z-scores are shifted by `effect`.
    Mixed {
        signal_families: f64,
        non_null_fraction: f64,
        effect: f64,
    },
}

impl TruthModel {
    pub(crate) fn is_null(&self, family: usize, hypothesis: usize, m: usize, n: usize) -> bool {
        match *self {
            TruthModel::AllNull => true,
            TruthModel::Mixed {
                signal_families,
                non_null_fraction,
                ..
            } => {
                let signal = family < (signal_families * m as f64).round() as usize;
                let non_null = hypothesis < (non_null_fraction * n as f64).round() as usize;
                !(signal && non_null)
            }
        }
    }

    pub(crate) fn effect(&self) -> f64 {
        match *self {
            TruthModel::AllNull => 0.0,
            TruthModel::Mixed { effect, .. } => effect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "rho", rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    /// Every pair of test statistics, within and across families, has
    /// correlation `rho`.
    Equicorrelated(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FamilySizes {
    Equal(usize),
    PerFamily(Vec<usize>),
}

/// A complete simulation scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub m: usize,
    pub family_sizes: FamilySizes,
    pub truth: TruthModel,
    pub dependence: Dependence,
    pub q: f64,
    pub rule: SelectionRule,
    pub procedure: Procedure,
    pub metric: ErrorMetric,
    pub adjustment: Adjustment,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// `m` families of `n` null hypotheses, independent, `q = 0.05`, FWER,
    /// the simple adjustment, 10^4 replicates, seed 0.
    pub fn new(m: usize, n: usize, rule: SelectionRule, procedure: Procedure) -> Self {
        ScenarioConfig {
            m,
            family_sizes: FamilySizes::Equal(n),
            truth: TruthModel::AllNull,
            dependence: Dependence::Independent,
            q: 0.05,
            rule,
            procedure,
            metric: ErrorMetric::Fwer,
            adjustment: Adjustment::Simple,
            replicates: 10_000,
            seed: 0,
        }
    }

    /// The selection-bias scenario: select families whose smallest p-value
    /// is below `q`, then Bonferroni at `q` inside, without adjustment.
    pub fn selection_bias_example(m: usize, n: usize, q: f64) -> Self {
        ScenarioConfig {
            q,
            adjustment: Adjustment::Unadjusted,
            ..Self::new(m, n, SelectionRule::MinPThreshold(q), Procedure::Bonferroni)
        }
    }

    pub fn with_truth(mut self, truth: TruthModel) -> Self {
        self.truth = truth;
        self
    }

    pub fn with_dependence(mut self, dependence: Dependence) -> Self {
        self.dependence = dependence;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_metric(mut self, metric: ErrorMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_adjustment(mut self, adjustment: Adjustment) -> Self {
        self.adjustment = adjustment;
        self
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_family_sizes(mut self, sizes: Vec<usize>) -> Self {
        self.family_sizes = FamilySizes::PerFamily(sizes);
        self
    }

    pub fn family_size(&self, i: usize) -> usize {
        match &self.family_sizes {
            FamilySizes::Equal(n) => *n,
            FamilySizes::PerFamily(sizes) => sizes[i],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m == 0 {
            return Err(Error::NoFamilies);
        }
        match &self.family_sizes {
            FamilySizes::Equal(0) => return Err(Error::EmptyFamily(0)),
            FamilySizes::PerFamily(sizes) => {
                if sizes.len() != self.m {
                    return Err(Error::LengthMismatch {
                        what: "family sizes",
                        expected: self.m,
                        got: sizes.len(),
                    });
                }
                if let Some(i) = sizes.iter().position(|&n| n == 0) {
                    return Err(Error::EmptyFamily(i));
                }
            }
            FamilySizes::Equal(_) => {}
        }
        if let TruthModel::Mixed {
            signal_families,
            non_null_fraction,
            effect,
        } = self.truth
        {
            let unit = 0.0..=1.0;
            if !unit.contains(&signal_families) || !unit.contains(&non_null_fraction) {
                return invalid("signal fractions must lie in [0, 1]".into());
            }
            if !(effect >= 0.0 && effect.is_finite()) {
                return invalid(format!("effect size {effect} must be finite and >= 0"));
            }
        }
        if let Dependence::Equicorrelated(rho) = self.dependence {
            if !(0.0..1.0).contains(&rho) {
                return invalid(format!("correlation {rho} must lie in [0, 1)"));
            }
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidLevel(self.q));
        }
        if self.replicates == 0 {
            return invalid("at least one replicate is required".into());
        }
        self.metric.validate()?;
        self.rule.validate(self.m)
    }
}

/// Monte Carlo summary of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    /// Mean over replicates of the average error over selected families.
    pub e_cs_hat: f64,
    /// Mean over replicates of `|S| / m`.
    pub e_sel_frac_hat: f64,
    /// Standard error of `e_cs_hat`.
    pub se: f64,
    /// Standard error of `e_sel_frac_hat`.
    pub se_sel_frac: f64,
    pub replicates: usize,
}

/// Running mean and sum of squared deviations for two quantities.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: [f64; 2],
    m2: [f64; 2],
}

impl Moments {
    #[allow(clippy::needless_range_loop)]
    fn push(&mut self, x: [f64; 2]) {
        self.n += 1.0;
        for k in 0..2 {
            let delta = x[k] - self.mean[k];
            self.mean[k] += delta / self.n;
            self.m2[k] += delta * (x[k] - self.mean[k]);
        }
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let mut out = Moments {
            n,
            ..Default::default()
        };
        for k in 0..2 {
            let delta = other.mean[k] - self.mean[k];
            out.mean[k] = self.mean[k] + delta * other.n / n;
            out.m2[k] = self.m2[k] + other.m2[k] + delta * delta * self.n * other.n / n;
        }
        out
    }

    fn standard_error(&self, k: usize) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2[k] / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Replicates per reduction block. Fixed so that the merge tree does not
/// depend on the thread count.
const BLOCK: usize = 256;

fn replicate_values(config: &ScenarioConfig, replicate: u64) -> Result<[f64; 2]> {
    let ensemble = generate(config, replicate)?;
    let analysis = analyze(
        &ensemble,
        &config.rule,
        &config.procedure,
        config.q,
        config.metric,
        config.adjustment,
    )?;
    let c_s = analysis
        .average_error()
        .ok_or_else(|| Error::InvariantViolation("generated ensemble lacks truth".into()))?;
    Ok([c_s, analysis.selection.r as f64 / config.m as f64])
}

fn run_blocks(config: &ScenarioConfig) -> Result<Moments> {
    let blocks = config.replicates.div_ceil(BLOCK);
    let partials: Vec<Result<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(config.replicates);
            let mut acc = Moments::default();
            for rep in start..end {
                acc.push(replicate_values(config, rep as u64)?);
            }
            Ok(acc)
        })
        .collect();
    partials
        .into_iter()
        .try_fold(Moments::default(), |acc, part| Ok(acc.merge(part?)))
}

/// Estimates `E(C_S)` and `E(|S|/m)` on the current rayon pool.
pub fn estimate(config: &ScenarioConfig) -> Result<SimEstimate> {
    config.validate()?;
    let moments = run_blocks(config)?;
    Ok(SimEstimate {
        e_cs_hat: moments.mean[0],
        e_sel_frac_hat: moments.mean[1],
        se: moments.standard_error(0),
        se_sel_frac: moments.standard_error(1),
        replicates: config.replicates,
    })
}

/// [`estimate`] on a dedicated pool of `threads` workers.
pub fn estimate_with_threads(config: &ScenarioConfig, threads: usize) -> Result<SimEstimate> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| estimate(config))
}

fn known_concordant(rule: &SelectionRule) -> bool {
    match rule {
        SelectionRule::MinPThreshold(_) | SelectionRule::TopKMinP(_) => true,
        SelectionRule::GlobalNullTest { procedure, .. } => procedure.is_stepwise(),
        _ => false,
    }
}

/// Estimates the quantity controlled under positive dependence:
/// `E(sum_{i in S} V_i / max(R, 1))` when Bonferroni tests the selected
/// families, `E(sum_{i in S} Q_i / max(R, 1))` when BH does, both with the
/// `R_min` levels. The configured metric and adjustment are overridden.
///
/// Rules outside the known-concordant set are screened with
/// [`check_concordant`] on the first replicate and refused if a violation
/// turns up.
pub fn prds_control_check(config: &ScenarioConfig) -> Result<SimEstimate> {
    let metric = match config.procedure {
        Procedure::Bonferroni => ErrorMetric::Pfer,
        Procedure::BenjaminiHochberg => ErrorMetric::Fdr,
        ref other => {
            return Err(Error::InvalidParameter(format!(
                "positive-dependence check supports bonferroni or bh, not {other}"
            )))
        }
    };
    if !known_concordant(&config.rule) {
        let ensemble = generate(config, 0)?;
        let report = check_concordant(&config.rule, &ensemble, 500, config.seed)?;
        if let Some(w) = report.witness {
            return Err(Error::NonConcordant(format!(
                "raising p-value {} of family {} from {} to {} raised R_min of family {} from {} to {}",
                w.hypothesis,
                w.changed_family,
                w.old_value,
                w.new_value,
                w.family,
                w.r_min_before,
                w.r_min_after
            )));
        }
    }
    let config = config
        .clone()
        .with_metric(metric)
        .with_adjustment(Adjustment::General);
    estimate(&config)
}
