use std::fs::File;
use std::io::{self, BufWriter, Write};

use famsel::selection::{check_concordant, check_simple, select};
use famsel::sim::{
    closed_form_example1, estimate, generate, prds_control_check, Dependence, ScenarioConfig,
    SimEstimate, TruthModel,
};
use famsel::{
    analyze as run_analysis, iterative_simple_adjusted, Adjustment, ErrorMetric, PValueEnsemble,
    Procedure, SelectionRule,
};
use serde::Serialize;
use serde_json::json;

use crate::input::read_path;
use crate::report::{write_json, AnalysisConfig, AnalysisReport, Metadata};
use crate::{
    AdjustMode, AnalyzeArgs, CheckArgs, CliError, Format, OutputArgs, SimulateArgs, Suite,
    Table1Args,
};

/// Rows of the selection-bias table: `(m, n)`.
pub const TABLE1_ROWS: [(usize, usize); 4] = [(20, 100), (100, 20), (100, 10), (100, 2)];

fn open(out: &OutputArgs) -> Result<Box<dyn Write>, CliError> {
    Ok(match &out.output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", path.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_q(q: f64) -> Result<(), CliError> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--q {q} must lie in (0, 1)")))
    }
}

fn resolve_adjustment(mode: AdjustMode, rule: &SelectionRule) -> Result<Adjustment, CliError> {
    Ok(match mode {
        AdjustMode::Auto if rule.is_simple() => Adjustment::Simple,
        AdjustMode::Auto | AdjustMode::General => Adjustment::General,
        AdjustMode::Simple => Adjustment::Simple,
        AdjustMode::None => Adjustment::Unadjusted,
        AdjustMode::Iterative => {
            return Err(CliError::Config(
                "the iterative adjustment is only available for analyze".into(),
            ))
        }
    })
}

fn adjustment_name(a: Adjustment) -> &'static str {
    match a {
        Adjustment::Unadjusted => "none",
        Adjustment::Simple => "simple",
        Adjustment::General => "general",
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    check_q(args.q)?;
    let input = read_path(&args.input)?;
    let rule = args.rule.resolve(args.q);
    rule.validate(input.ensemble.m())?;
    let metric = ErrorMetric::Fwer;
    let (analysis, adjustment) = if args.adjust == AdjustMode::Iterative {
        if !rule.is_simple() {
            return Err(CliError::Config(format!(
                "the iterative adjustment needs a simple rule; {rule} is not"
            )));
        }
        let a = iterative_simple_adjusted(&input.ensemble, &rule, &args.procedure, args.q, metric, None)?;
        (a, "iterative")
    } else {
        let adjustment = resolve_adjustment(args.adjust, &rule)?;
        let a = run_analysis(&input.ensemble, &rule, &args.procedure, args.q, metric, adjustment)?;
        (a, adjustment_name(adjustment))
    };
    let config = AnalysisConfig {
        q: args.q,
        rule: rule.to_string(),
        procedure: args.procedure.to_string(),
        adjustment: adjustment.into(),
    };
    let report = AnalysisReport::new(config, &analysis, &input, args.adjust == AdjustMode::Iterative);
    let out = open(&args.out)?;
    match args.format {
        Format::Csv => report.write_csv(out),
        Format::Json | Format::Text => write_json(&report, out),
    }
}

#[derive(Debug, Serialize)]
struct Table1Row {
    m: usize,
    n: usize,
    sel_exact: f64,
    e_cs_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<SimEstimate>,
    /// Whether a Monte Carlo value sits more than 3 SE from the exact one.
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<bool>,
}

pub fn table1(args: &Table1Args) -> Result<(), CliError> {
    check_q(args.q)?;
    let mut rows = Vec::new();
    for (k, (m, n)) in TABLE1_ROWS.into_iter().enumerate() {
        let (e_cs_exact, sel_exact) = closed_form_example1(args.q, m, n);
        let monte_carlo = if args.reps > 0 {
            let cfg = ScenarioConfig::selection_bias_example(m, n, args.q)
                .with_replicates(args.reps)
                .with_seed(args.seed.wrapping_add(k as u64));
            Some(estimate(&cfg)?)
        } else {
            None
        };
        let discrepancy = monte_carlo.as_ref().map(|e| {
            (e.e_cs_hat - e_cs_exact).abs() > 3.0 * e.se
                || (e.e_sel_frac_hat - sel_exact).abs() > 3.0 * e.se_sel_frac
        });
        rows.push(Table1Row {
            m,
            n,
            sel_exact,
            e_cs_exact,
            monte_carlo,
            discrepancy,
        });
    }

    let mut out = open(&args.out)?;
    match args.format {
        Format::Json => write_json(
            &json!({
                "q": args.q,
                "reps": args.reps,
                "rows": rows,
                "metadata": Metadata::new(None, (args.reps > 0).then_some(args.seed)),
            }),
            out,
        )?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "m", "n", "sel_exact", "e_cs_exact", "sel_mc", "sel_se", "e_cs_mc", "e_cs_se",
                "discrepancy",
            ])?;
            for r in &rows {
                let mc = r.monte_carlo.as_ref();
                let fmt = |f: fn(&SimEstimate) -> f64| mc.map(|e| f(e).to_string()).unwrap_or_default();
                w.write_record([
                    r.m.to_string(),
                    r.n.to_string(),
                    r.sel_exact.to_string(),
                    r.e_cs_exact.to_string(),
                    fmt(|e| e.e_sel_frac_hat),
                    fmt(|e| e.se_sel_frac),
                    fmt(|e| e.e_cs_hat),
                    fmt(|e| e.se),
                    r.discrepancy.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
        Format::Text => {
            write!(out, "{:>5} {:>5} {:>10} {:>10}", "m", "n", "E|S|/m", "E(C_S)")?;
            if args.reps > 0 {
                write!(out, " {:>17} {:>17}", "MC E|S|/m", "MC E(C_S)")?;
            }
            writeln!(out)?;
            for r in &rows {
                write!(out, "{:>5} {:>5} {:>10.4} {:>10.4}", r.m, r.n, r.sel_exact, r.e_cs_exact)?;
                if let Some(e) = &r.monte_carlo {
                    let sel = format!("{:.4}±{:.4}", e.e_sel_frac_hat, e.se_sel_frac);
                    let ecs = format!("{:.4}±{:.4}", e.e_cs_hat, e.se);
                    write!(out, " {sel:>17} {ecs:>17}")?;
                    if r.discrepancy == Some(true) {
                        write!(out, "  > 3 SE")?;
                    }
                }
                writeln!(out)?;
            }
            out.flush()?;
        }
    }
    match rows.iter().filter(|r| r.discrepancy == Some(true)).count() {
        0 => Ok(()),
        k => Err(CliError::Violation(format!(
            "{k} rows differ from the exact values by more than 3 SE"
        ))),
    }
}

fn truth_model(args: &crate::TruthArgs) -> TruthModel {
    match args.effect {
        Some(effect) if !args.all_null => TruthModel::Mixed {
            signal_families: args.signal_families,
            non_null_fraction: args.non_null_fraction,
            effect,
        },
        _ => TruthModel::AllNull,
    }
}

fn config_json(cfg: &ScenarioConfig, prds: bool) -> serde_json::Value {
    json!({
        "m": cfg.m,
        "n": cfg.family_sizes,
        "q": cfg.q,
        "rule": cfg.rule.to_string(),
        "procedure": cfg.procedure.to_string(),
        "metric": cfg.metric,
        "adjustment": adjustment_name(cfg.adjustment),
        "truth": cfg.truth,
        "dependence": cfg.dependence,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "prds": prds,
    })
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_q(args.q)?;
    let rule = args
        .rule
        .as_ref()
        .map_or(SelectionRule::MinPThreshold(args.q), |r| r.resolve(args.q));
    let mode = if args.unadjusted { AdjustMode::None } else { args.adjust };
    let adjustment = resolve_adjustment(mode, &rule)?;
    let mut cfg = ScenarioConfig::new(args.m, args.n, rule, args.procedure.clone())
        .with_q(args.q)
        .with_metric(args.metric)
        .with_adjustment(adjustment)
        .with_truth(truth_model(&args.truth))
        .with_replicates(args.reps)
        .with_seed(args.seed);
    if let Some(rho) = args.rho {
        cfg = cfg.with_dependence(Dependence::Equicorrelated(rho));
    }
    let est = if args.prds {
        let est = prds_control_check(&cfg)?;
        cfg.metric = match cfg.procedure {
            Procedure::Bonferroni => ErrorMetric::Pfer,
            _ => ErrorMetric::Fdr,
        };
        cfg.adjustment = Adjustment::General;
        est
    } else {
        estimate(&cfg)?
    };
    let out = open(&args.out)?;
    match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["e_cs_hat", "se", "e_sel_frac_hat", "se_sel_frac", "replicates"])?;
            w.write_record([
                est.e_cs_hat.to_string(),
                est.se.to_string(),
                est.e_sel_frac_hat.to_string(),
                est.se_sel_frac.to_string(),
                est.replicates.to_string(),
            ])?;
            w.flush()?;
            Ok(())
        }
        Format::Json | Format::Text => write_json(
            &json!({
                "config": config_json(&cfg, args.prds),
                "estimates": est,
                "metadata": Metadata::new(None, Some(args.seed)),
            }),
            out,
        ),
    }
}

/// Ensembles searched by the falsifiers: the given file, or a stream of
/// simulated ensembles with strong signals in half of the families, whose
/// sizes cycle through `m` in 2..=8 and `n` in 1..=3 unless fixed.
fn check_ensembles(
    args: &CheckArgs,
    rule: &SelectionRule,
) -> Result<Vec<PValueEnsemble>, CliError> {
    if let Some(path) = &args.input {
        let ens = read_path(path)?.ensemble;
        rule.validate(ens.m())?;
        return Ok(vec![ens]);
    }
    let truth = TruthModel::Mixed {
        signal_families: 0.5,
        non_null_fraction: 0.5,
        effect: 3.0,
    };
    let mut out = Vec::new();
    let mut last_error = None;
    for k in 0..args.ensembles {
        let m = args.m.unwrap_or(2 + k % 7);
        let n = args.n.unwrap_or(1 + (k / 7) % 3);
        let cfg = ScenarioConfig::new(m, n, rule.clone(), Procedure::Bonferroni)
            .with_q(args.q)
            .with_truth(truth)
            .with_seed(args.seed);
        match generate(&cfg, k as u64) {
            Ok(ens) => out.push(ens),
            Err(e) => last_error = Some(e),
        }
    }
    match (out.is_empty(), last_error) {
        (true, Some(e)) => Err(e.into()),
        (true, None) => Err(CliError::Config("--ensembles must be at least 1".into())),
        _ => Ok(out),
    }
}

fn p_values(ens: &PValueEnsemble) -> Vec<Vec<f64>> {
    ens.families().iter().map(|f| f.p_values.clone()).collect()
}

fn default_metric(procedure: &Procedure) -> ErrorMetric {
    match procedure {
        Procedure::Bonferroni => ErrorMetric::Pfer,
        Procedure::Holm | Procedure::Hochberg => ErrorMetric::Fwer,
        Procedure::LehmannRomano { k } => ErrorMetric::KFwer { k: *k },
        _ => ErrorMetric::Fdr,
    }
}

pub fn check(args: &CheckArgs) -> Result<(), CliError> {
    check_q(args.q)?;
    let rule = args.rule.resolve(args.q);
    let (passed, detail) = match args.suite {
        Suite::Simple => {
            let ensembles = check_ensembles(args, &rule)?;
            let mut witness = None;
            let mut families_checked = 0;
            'search: for (k, ens) in ensembles.iter().enumerate() {
                for &i in &select(&rule, ens)?.selected {
                    families_checked += 1;
                    let seed = args.seed.wrapping_add(k as u64);
                    let report = check_simple(&rule, ens, i, args.trials, seed)?;
                    if let Some(w) = report.witness {
                        witness = Some(json!({
                            "ensemble": p_values(ens),
                            "family": i,
                            "replacement": w.replacement,
                            "selected_before": w.original_count,
                            "selected_after": w.perturbed_count,
                        }));
                        break 'search;
                    }
                }
            }
            let detail = json!({
                "ensembles": ensembles.len(),
                "families_checked": families_checked,
                "trials_per_family": args.trials,
                "witness": witness,
            });
            (witness.is_none(), detail)
        }
        Suite::Concordant => {
            let ensembles = check_ensembles(args, &rule)?;
            let mut witness = None;
            for (k, ens) in ensembles.iter().enumerate() {
                let report = check_concordant(&rule, ens, args.trials, args.seed.wrapping_add(k as u64))?;
                if let Some(w) = report.witness {
                    witness = Some(json!({ "ensemble": p_values(ens), "change": w }));
                    break;
                }
            }
            let detail = json!({
                "ensembles": ensembles.len(),
                "trials_per_ensemble": args.trials,
                "witness": witness,
            });
            (witness.is_none(), detail)
        }
        Suite::Control => {
            let adjustment = resolve_adjustment(AdjustMode::Auto, &rule)?;
            let cfg = ScenarioConfig::new(
                args.m.unwrap_or(20),
                args.n.unwrap_or(5),
                rule.clone(),
                args.procedure.clone(),
            )
            .with_q(args.q)
            .with_metric(default_metric(&args.procedure))
            .with_adjustment(adjustment)
            .with_truth(TruthModel::Mixed {
                signal_families: 0.3,
                non_null_fraction: 0.5,
                effect: 2.5,
            })
            .with_replicates(args.reps)
            .with_seed(args.seed);
            let est = estimate(&cfg)?;
            let bound = args.q + 3.0 * est.se;
            let detail = json!({
                "config": config_json(&cfg, false),
                "estimates": est,
                "bound": bound,
            });
            (est.e_cs_hat <= bound, detail)
        }
    };
    let suite = match args.suite {
        Suite::Simple => "simple",
        Suite::Concordant => "concordant",
        Suite::Control => "control",
    };
    let report = json!({
        "suite": suite,
        "rule": rule.to_string(),
        "passed": passed,
        "detail": detail,
        "metadata": Metadata::new(None, Some(args.seed)),
    });
    write_json(&report, open(&args.out)?)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Violation(format!("{suite} check failed for {rule}")))
    }
}
