//! Selection-adjusted multiple testing over families of hypotheses.
//!
//! An analysis starts from a [`PValueEnsemble`]: `m` families, each a
//! vector of p-values. A [`SelectionRule`] picks the families worth
//! following up, and a within-family [`Procedure`] is then run on each
//! selected family at a level that accounts for the selection. The
//! resulting error, averaged over the selected families, is controlled at
//! `q` for any [`ErrorMetric`] that is an expectation of a per-family
//! count.
//!
//! ```
//! use famsel::{analyze, Adjustment, ErrorMetric, PValueEnsemble, Procedure, SelectionRule};
//!
//! let ens = PValueEnsemble::from_p_values(vec![
//!     vec![0.001, 0.2, 0.6],
//!     vec![0.04, 0.5, 0.9],
//!     vec![0.3, 0.7, 0.8],
//! ])?;
//! let rule = SelectionRule::MinPThreshold(0.05);
//! let out = analyze(&ens, &rule, &Procedure::Bonferroni, 0.05, ErrorMetric::Fwer, Adjustment::Simple)?;
//! assert_eq!(out.selection.selected, vec![0, 1]);
//! // Two of three families selected: each is tested at 2 * 0.05 / 3.
//! assert!((out.decisions[0].adjusted_level - 0.1 / 3.0).abs() < 1e-15);
//! # Ok::<(), famsel::Error>(())
//! ```

pub mod adjust;
pub mod dist;
pub mod ensemble;
pub mod error;
pub mod metric;
pub mod procedures;
pub mod selection;
pub mod sim;

pub use adjust::{
    analyze, guaranteed_rejection_analysis, iterative_simple_adjusted, selection_adjusted,
    simple_selection_adjusted, unadjusted, AdjustedAnalysis, Adjustment,
};
pub use ensemble::{Family, PValueEnsemble};
pub use error::{Error, Result};
pub use metric::{average_over_selected, ErrorMetric, FamilyDecision};
pub use procedures::Procedure;
pub use selection::{
    check_concordant, check_simple, r_min, select, select_with_r_min, Combiner, SelectionOutcome,
    SelectionRule,
};
pub use sim::{estimate, estimate_with_threads, prds_control_check, ScenarioConfig, SimEstimate};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/adjustment.md")]
    mod adjustment {}
    #[doc = include_str!("../../../book/src/r_min.md")]
    mod r_min {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
