//! Ranking candidate parameters by posterior score and comparing the top-k
//! sets of several estimators.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::LogRatio;
use crate::posterior::PosteriorEvaluator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub candidates: Array2<f64>,
    pub estimators: Vec<String>,
    /// `scores[e][c]`: score of candidate `c` under estimator `e`.
    pub scores: Vec<Vec<f64>>,
    /// `order[e]`: candidate indices from best to worst.
    pub order: Vec<Vec<usize>>,
    pub k: usize,
    /// `overlap[i][j] = |top-k(i) ∩ top-k(j)|`.
    pub overlap: Vec<Vec<usize>>,
}

/// Descending by score; equal scores keep candidate order, `-inf` sorts last.
pub fn ranking_order(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::NonFinite("candidate score"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(idx)
}

/// Builds the table from precomputed scores, one vector per estimator.
pub fn rank_scores(
    candidates: Array2<f64>,
    estimators: Vec<String>,
    scores: Vec<Vec<f64>>,
    k: usize,
) -> Result<RankingTable> {
    if candidates.nrows() == 0 {
        return Err(Error::invalid("ranking needs at least one candidate"));
    }
    check_dim("estimator labels", scores.len(), estimators.len())?;
    if k == 0 || k > candidates.nrows() {
        return Err(Error::invalid(format!("k must be in 1..={}", candidates.nrows())));
    }
    let mut order = Vec::with_capacity(scores.len());
    for s in &scores {
        check_dim("candidate scores", candidates.nrows(), s.len())?;
        order.push(ranking_order(s)?);
    }
    let top: Vec<Vec<bool>> = order
        .iter()
        .map(|o| {
            let mut mask = vec![false; candidates.nrows()];
            for &c in &o[..k] {
                mask[c] = true;
            }
            mask
        })
        .collect();
    let overlap = top
        .iter()
        .map(|a| {
            top.iter()
                .map(|b| a.iter().zip(b).filter(|(x, y)| **x && **y).count())
                .collect()
        })
        .collect();
    Ok(RankingTable {
        candidates,
        estimators,
        scores,
        order,
        k,
        overlap,
    })
}

/// Scores every candidate with `log_posterior(x_target, θ_c)` of each
/// evaluator; pairwise models use their evaluator's fixed θ' bank, so all
/// candidates see the same Monte Carlo noise.
pub fn rank_candidates<M: LogRatio>(
    evaluators: &[(String, &PosteriorEvaluator<M>)],
    x_target: &[f64],
    candidates: ArrayView2<'_, f64>,
    k: usize,
) -> Result<RankingTable> {
    if evaluators.is_empty() {
        return Err(Error::invalid("ranking needs at least one estimator"));
    }
    let mut scores = Vec::with_capacity(evaluators.len());
    for (_, ev) in evaluators {
        check_dim("candidate dimension", ev.model.theta_dim(), candidates.ncols())?;
        check_dim("target observation", ev.model.x_dim(), x_target.len())?;
        scores.push(ev.log_posterior_rows(x_target, candidates)?);
    }
    let labels = evaluators.iter().map(|(l, _)| l.clone()).collect();
    rank_scores(candidates.to_owned(), labels, scores, k)
}

impl RankingTable {
    /// Position (0 = best) of every candidate under estimator `e`.
    pub fn ranks(&self, e: usize) -> Vec<usize> {
        let mut ranks = vec![0; self.order[e].len()];
        for (pos, &c) in self.order[e].iter().enumerate() {
            ranks[c] = pos;
        }
        ranks
    }

    /// One row per candidate in input order:
    /// `candidate,theta0,..,<est>_score,<est>_rank,..`. Ties in score are
    /// broken by candidate index.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["candidate".to_string()];
        header.extend((0..self.candidates.ncols()).map(|j| format!("theta{j}")));
        for e in &self.estimators {
            header.push(format!("{e}_score"));
            header.push(format!("{e}_rank"));
        }
        let mut out = header.join(",");
        out.push('\n');
        let ranks: Vec<Vec<usize>> = (0..self.estimators.len()).map(|e| self.ranks(e)).collect();
        for (c, row) in self.candidates.rows().into_iter().enumerate() {
            let mut fields = vec![c.to_string()];
            fields.extend(row.iter().map(|v| format!("{v:?}")));
            for e in 0..self.estimators.len() {
                fields.push(format!("{:?}", self.scores[e][c]));
                fields.push(ranks[e][c].to_string());
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn overlap_csv(&self) -> String {
        let mut out = format!("estimator,{}\n", self.estimators.join(","));
        for (name, row) in self.estimators.iter().zip(&self.overlap) {
            let values: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{name},{}", values.join(","));
        }
        out
    }
}
