//! Parsers for the rule, procedure and metric flags.

use famsel::selection::Combiner;
use famsel::{ErrorMetric, Procedure, SelectionRule};

/// A selection rule as written on the command line. The level of a
/// global-null rule defaults to `q`, which is only known later.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleSpec {
    MinP(f64),
    TopK(usize),
    Global {
        combiner: Combiner,
        procedure: Procedure,
        level: Option<f64>,
    },
}

impl RuleSpec {
    pub fn resolve(&self, q: f64) -> SelectionRule {
        match self {
            RuleSpec::MinP(t) => SelectionRule::MinPThreshold(*t),
            RuleSpec::TopK(k) => SelectionRule::TopKMinP(*k),
            RuleSpec::Global {
                combiner,
                procedure,
                level,
            } => SelectionRule::GlobalNullTest {
                combiner: *combiner,
                procedure: procedure.clone(),
                level: level.unwrap_or(q),
            },
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("invalid {what} '{s}'"))
}

fn parse_usize(s: &str, what: &str) -> Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("invalid {what} '{s}'"))
}

pub fn parse_combiner(s: &str) -> Result<Combiner, String> {
    match s {
        "bonferroni" | "minp" => Ok(Combiner::BonferroniMin),
        "simes" => Ok(Combiner::Simes),
        "fisher" => Ok(Combiner::Fisher),
        "stouffer" => Ok(Combiner::Stouffer),
        _ => Err(format!(
            "unknown combiner '{s}' (expected bonferroni, simes, fisher or stouffer)"
        )),
    }
}

/// `bonferroni`, `holm`, `hochberg`, `bh`, `twostage` or `lr:K`.
pub fn parse_procedure(s: &str) -> Result<Procedure, String> {
    match s {
        "bonferroni" => Ok(Procedure::Bonferroni),
        "holm" => Ok(Procedure::Holm),
        "hochberg" => Ok(Procedure::Hochberg),
        "bh" => Ok(Procedure::BenjaminiHochberg),
        "twostage" => Ok(Procedure::TwoStageAdaptive),
        _ => match s.strip_prefix("lr:") {
            Some(k) => Ok(Procedure::LehmannRomano {
                k: parse_usize(k, "k")?,
            }),
            None => Err(format!(
                "unknown procedure '{s}' (expected bonferroni, holm, hochberg, bh, twostage or lr:K)"
            )),
        },
    }
}

/// `minp:T`, `topk:K` or `global:COMBINER:PROCEDURE[:LEVEL]`.
pub fn parse_rule(s: &str) -> Result<RuleSpec, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("rule '{s}' needs a parameter, e.g. minp:0.05"))?;
    match kind {
        "minp" => Ok(RuleSpec::MinP(parse_f64(rest, "threshold")?)),
        "topk" => Ok(RuleSpec::TopK(parse_usize(rest, "k")?)),
        "global" => {
            let (combiner, procedure) = rest
                .split_once(':')
                .ok_or_else(|| format!("rule '{s}' needs global:COMBINER:PROCEDURE"))?;
            let combiner = parse_combiner(combiner)?;
            // A trailing number is the level unless it belongs to lr:K.
            if let Some((head, tail)) = procedure.rsplit_once(':') {
                if let (Ok(procedure), Ok(level)) = (parse_procedure(head), tail.parse::<f64>()) {
                    return Ok(RuleSpec::Global {
                        combiner,
                        procedure,
                        level: Some(level),
                    });
                }
            }
            Ok(RuleSpec::Global {
                combiner,
                procedure: parse_procedure(procedure)?,
                level: None,
            })
        }
        _ => Err(format!("unknown rule '{kind}' (expected minp, topk or global)")),
    }
}

/// `pfer`, `fwer`, `fdr`, `fdx:GAMMA`, `kfwer:K` or `kfdr:K`.
pub fn parse_metric(s: &str) -> Result<ErrorMetric, String> {
    let (kind, arg) = match s.split_once(':') {
        Some((kind, arg)) => (kind, Some(arg)),
        None => (s, None),
    };
    let metric = match (kind, arg) {
        ("pfer", None) => ErrorMetric::Pfer,
        ("fwer", None) => ErrorMetric::Fwer,
        ("fdr", None) => ErrorMetric::Fdr,
        ("fdx", Some(g)) => ErrorMetric::Fdx {
            gamma: parse_f64(g, "gamma")?,
        },
        ("kfwer", Some(k)) => ErrorMetric::KFwer {
            k: parse_usize(k, "k")?,
        },
        ("kfdr", Some(k)) => ErrorMetric::KFdr {
            k: parse_usize(k, "k")?,
        },
        _ => {
            return Err(format!(
                "unknown metric '{s}' (expected pfer, fwer, fdr, fdx:GAMMA, kfwer:K or kfdr:K)"
            ))
        }
    };
    metric.validate().map_err(|e| e.to_string())?;
    Ok(metric)
}
