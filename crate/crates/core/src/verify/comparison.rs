//! The comparison implication, the uniqueness-set implication and the
//! discrete duality inequality, checked on concrete data.

use std::io::{BufWriter, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{AdjointDensity, ConvexityDefect, TimeSlab};
use crate::grid::GridFunction;
use crate::mather::{DiscreteMeasure, UniquenessSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Hypothesis and conclusion both hold.
    Pass,
    /// Hypothesis holds, conclusion fails: a counterexample.
    Fail,
    /// Hypothesis fails, so nothing is asserted.
    Silent,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureIntegral {
    pub v1: f64,
    pub v2: f64,
    /// `∫ v2 dμ - ∫ v1 dμ`.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// Smallest `∫ (v2 - v1) dμ` over the measures.
    pub hypothesis_margin: f64,
    /// Smallest `v2 - v1` over nodes and components.
    pub conclusion_margin: f64,
    /// Node and 1-based component where the conclusion margin is attained.
    pub worst_node: usize,
    pub worst_component: usize,
    pub integrals: Vec<MeasureIntegral>,
    pub verdict: Verdict,
    pub note: String,
    pub tol_hyp: f64,
    pub tol_con: f64,
}

impl ComparisonReport {
    pub fn hypothesis_holds(&self) -> bool {
        self.hypothesis_margin >= -self.tol_hyp
    }

    pub fn conclusion_holds(&self) -> bool {
        self.conclusion_margin >= -self.tol_con
    }

    /// Rows `measure,int_v1,int_v2,margin` with measures numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "measure,int_v1,int_v2,margin")?;
        for (k, r) in self.integrals.iter().enumerate() {
            writeln!(w, "{},{:e},{:e},{:e}", k + 1, r.v1, r.v2, r.margin)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// If `∫ v1 dμ ≤ ∫ v2 dμ` for every measure (within `tol_hyp`), checks
/// `v1 ≤ v2` everywhere within `tol_con`. Margins are recorded either way.
pub fn check_comparison(
    v1: &GridFunction,
    v2: &GridFunction,
    measures: &[DiscreteMeasure],
    tol_hyp: f64,
    tol_con: f64,
) -> Result<ComparisonReport> {
    v1.check_same_grid(v2)?;
    if measures.is_empty() {
        return Err(Error::Precondition("comparison needs at least one measure".into()));
    }
    let mut integrals = Vec::with_capacity(measures.len());
    for mu in measures {
        if mu.grid() != v1.grid() {
            return Err(Error::GridMismatch(
                "measure and functions live on different grids".into(),
            ));
        }
        let a = mu.integrate_nodal(v1.values());
        let b = mu.integrate_nodal(v2.values());
        integrals.push(MeasureIntegral {
            v1: a,
            v2: b,
            margin: b - a,
        });
    }
    let hypothesis_margin = integrals.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let m = v1.grid().components();
    let (worst, conclusion_margin) = v2
        .values()
        .iter()
        .zip(v1.values())
        .map(|(b, a)| b - a)
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc });
    let mut report = ComparisonReport {
        hypothesis_margin,
        conclusion_margin,
        worst_node: worst / m,
        worst_component: worst % m + 1,
        integrals,
        verdict: Verdict::Silent,
        note: String::new(),
        tol_hyp,
        tol_con,
    };
    if !report.hypothesis_holds() {
        report.note = "hypothesis not satisfied, comparison silent".into();
    } else if report.conclusion_holds() {
        report.verdict = Verdict::Pass;
        report.note = "hypothesis and conclusion hold".into();
    } else {
        report.verdict = Verdict::Fail;
        report.note = format!(
            "hypothesis holds but v1 - v2 = {:e} at node {}, component {}",
            -conclusion_margin, report.worst_node, report.worst_component
        );
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessCheck {
    /// Largest `|v1 - v2|` on the set.
    pub max_on_set: f64,
    /// Largest `|v1 - v2|` everywhere.
    pub max_global: f64,
    /// The functions disagree on the set, so nothing is asserted.
    pub vacuous: bool,
    /// Whether the implication held.
    pub holds: bool,
    pub tol: f64,
    pub tol_global: f64,
}

/// If `|v1 - v2| ≤ tol` on the set, checks `|v1 - v2| ≤ tol_global`
/// everywhere.
pub fn uniqueness_set_check(
    v1: &GridFunction,
    v2: &GridFunction,
    set: &UniquenessSet,
    tol: f64,
    tol_global: f64,
) -> Result<UniquenessCheck> {
    v1.check_same_grid(v2)?;
    if set.is_empty() {
        return Err(Error::Precondition("empty uniqueness set".into()));
    }
    if set.grid() != v1.grid() {
        return Err(Error::GridMismatch("set and functions live on different grids".into()));
    }
    let max_on_set = set
        .iter()
        .map(|(node, i)| (v1.get(node, i) - v2.get(node, i)).abs())
        .fold(0.0, f64::max);
    let max_global = v1.max_abs_diff(v2)?;
    let vacuous = max_on_set > tol;
    Ok(UniquenessCheck {
        max_on_set,
        max_global,
        vacuous,
        holds: vacuous || max_global <= tol_global,
        tol,
        tol_global,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    /// `(u1 - u2)(x0, 1, k)`.
    pub lhs: f64,
    /// Trapezoid time average of `h^d Σ (u1 - u2) σ`, i.e. `∫ (u1 - u2) dν`.
    pub rhs: f64,
    /// Smallest and largest pairing over the frames.
    pub pairing_min: f64,
    pub pairing_max: f64,
    /// Convexity slack allowed on top of the right-hand side:
    /// `T max(0, sup defect) / (2ε)`, the time average of `(T - t) sup D / ε`.
    pub slack: f64,
    /// The sharper bound from the positive part of the per-step defect.
    pub integrated_slack: f64,
    pub holds: bool,
}

/// `(u1 - u2)(x0, 1, k) ≤ ∫ (u1 - u2) dν + slack`, with `ν` the time average
/// of the adjoint density built along `u2` and `slack` from the convexity
/// defect.
pub fn duality_check(
    u1: &TimeSlab,
    u2: &TimeSlab,
    sigma: &AdjointDensity,
    defect: &ConvexityDefect,
) -> Result<DualityReport> {
    u1.check_compatible(u2)?;
    u2.check_compatible(&sigma.slab)?;
    let last = u1.len() - 1;
    let lhs = u1.frame(last).get(sigma.source_node, sigma.component)
        - u2.frame(last).get(sigma.source_node, sigma.component);
    let vol = u1.grid().cell_volume();
    let pairings: Vec<f64> = (0..u1.len())
        .map(|n| {
            let w = u1.frame(n).values().iter().zip(u2.frame(n).values()).map(|(a, b)| a - b);
            w.zip(sigma.slab.frame(n).values()).map(|(a, s)| a * s).sum::<f64>() * vol
        })
        .collect();
    let steps = (pairings.len() - 1) as f64;
    let inner: f64 = pairings[1..last].iter().sum();
    let rhs = (inner + 0.5 * (pairings[0] + pairings[last])) / steps;
    let pairing_min = pairings.iter().copied().fold(f64::INFINITY, f64::min);
    let pairing_max = pairings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = u1.times()[last] - u1.times()[0];
    let slack = span * defect.max.max(0.0) / (2.0 * sigma.epsilon);
    Ok(DualityReport {
        lhs,
        rhs,
        pairing_min,
        pairing_max,
        slack,
        integrated_slack: defect.slack,
        holds: lhs <= rhs + defect.slack.min(slack) + 1e-12,
    })
}
