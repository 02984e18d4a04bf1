use serde_json::{json, Value};

use super::{Corpus, EmotionLabel, Label, RawAnnotation, Speaker, StrategyLabel};
use crate::canonical::round_decimals;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KappaError {
    #[error("row {item} sums to {got}, expected {expected} raters")]
    RowSumMismatch { item: usize, got: u64, expected: u64 },
    #[error("row {item} has {got} categories, expected {expected}")]
    RaggedRow { item: usize, got: usize, expected: usize },
    #[error("fewer than 2 items")]
    TooFewItems,
    #[error("fewer than 2 raters")]
    TooFewRaters,
    #[error("fewer than 2 categories")]
    TooFewCategories,
    #[error("degenerate marginal")]
    DegenerateMarginal,
    #[error("no annotated turns")]
    NoAnnotatedTurns,
}

/// Fleiss' kappa for a matrix of per-item category counts.
///
/// `ratings[i][j]` is the number of raters assigning item `i` to category
/// `j`; every row must sum to `n_raters`.
pub fn fleiss_kappa(ratings: &[Vec<u64>], n_raters: u64) -> Result<f64, KappaError> {
    if n_raters < 2 {
        return Err(KappaError::TooFewRaters);
    }
    if ratings.len() < 2 {
        return Err(KappaError::TooFewItems);
    }
    let k = ratings[0].len();
    if k < 2 {
        return Err(KappaError::TooFewCategories);
    }
    let mut column = vec![0u64; k];
    let mut agreement_sum = 0.0;
    let n = n_raters as f64;
    for (item, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(KappaError::RaggedRow { item, got: row.len(), expected: k });
        }
        let sum: u64 = row.iter().sum();
        if sum != n_raters {
            return Err(KappaError::RowSumMismatch { item, got: sum, expected: n_raters });
        }
        let sq: u64 = row.iter().map(|c| c * c).sum();
        agreement_sum += (sq - n_raters) as f64 / (n * (n - 1.0));
        for (c, v) in column.iter_mut().zip(row) {
            *c += v;
        }
    }
    let n_items = ratings.len() as f64;
    let p_bar = agreement_sum / n_items;
    let total = ratings.len() as u64 * n_raters;
    if column.contains(&total) {
        // All mass in one category: chance agreement is 1.
        return if p_bar == 1.0 { Ok(1.0) } else { Err(KappaError::DegenerateMarginal) };
    }
    let p_e: f64 = column
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p
        })
        .sum();
    if p_bar == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelAgreement {
    pub kappa: f64,
    pub n_items: usize,
    /// Turns skipped for missing or incomplete annotations.
    pub n_excluded: usize,
    pub n_raters: u64,
}

/// First-pass agreement on the stored raw annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub emotion: LabelAgreement,
    /// `None` when fewer than two therapist turns carry strategy annotations.
    pub strategy: Option<LabelAgreement>,
}

fn agreement(rows: Vec<Vec<u64>>, n_raters: u64, n_excluded: usize) -> Result<LabelAgreement, KappaError> {
    Ok(LabelAgreement {
        kappa: fleiss_kappa(&rows, n_raters)?,
        n_items: rows.len(),
        n_excluded,
        n_raters,
    })
}

fn counts<L: Label>(labels: impl Iterator<Item = L>) -> Vec<u64> {
    let mut row = vec![0u64; L::ALL.len()];
    for l in labels {
        row[l.index()] += 1;
    }
    row
}

pub fn agreement_report(corpus: &Corpus) -> Result<AgreementReport, KappaError> {
    let annotated: Vec<_> = corpus
        .turns()
        .filter_map(|(_, t)| t.raw_annotations.as_ref().map(|a| (t, a)))
        .filter(|(_, a)| a.len() >= 2)
        .collect();
    let Some((_, first)) = annotated.first() else {
        return Err(KappaError::NoAnnotatedTurns);
    };
    let n_raters = first.len() as u64;
    let total_turns = corpus.turns().count();
    let therapist_turns = corpus.turns().filter(|(_, t)| t.speaker == Speaker::Therapist).count();

    let usable: Vec<_> = annotated.iter().filter(|(_, a)| a.len() as u64 == n_raters).collect();
    let emotion_rows: Vec<Vec<u64>> = usable
        .iter()
        .map(|(_, a)| counts::<EmotionLabel>(a.values().map(|r: &RawAnnotation| r.emotion)))
        .collect();
    let emotion = agreement(emotion_rows.clone(), n_raters, total_turns - emotion_rows.len())?;

    let strategy_rows: Vec<Vec<u64>> = usable
        .iter()
        .filter(|(t, a)| t.speaker == Speaker::Therapist && a.values().all(|r| r.strategy.is_some()))
        .map(|(_, a)| counts::<StrategyLabel>(a.values().filter_map(|r| r.strategy)))
        .collect();
    let strategy = if strategy_rows.len() >= 2 {
        let excluded = therapist_turns - strategy_rows.len();
        Some(agreement(strategy_rows, n_raters, excluded)?)
    } else {
        None
    };
    Ok(AgreementReport { emotion, strategy })
}

impl LabelAgreement {
    fn to_report(&self) -> Value {
        json!({
            "kappa": round_decimals(self.kappa, 6),
            "n_items": self.n_items,
            "n_excluded": self.n_excluded,
            "n_raters": self.n_raters,
        })
    }
}

impl AgreementReport {
    /// Kappa values are rounded to six decimals.
    pub fn to_report(&self) -> Value {
        json!({
            "emotion": self.emotion.to_report(),
            "strategy": self.strategy.as_ref().map(LabelAgreement::to_report),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook evaluation: P_i per item, then P̄ and P̄e from the marginals.
    fn closed_form(rows: &[Vec<u64>], n: u64) -> f64 {
        let n = n as f64;
        let items = rows.len() as f64;
        let p_i: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().map(|&c| (c as f64) * (c as f64 - 1.0)).sum::<f64>() / (n * (n - 1.0)))
            .collect();
        let p_bar = p_i.iter().sum::<f64>() / items;
        let k = rows[0].len();
        let p_e: f64 = (0..k)
            .map(|j| {
                let pj = rows.iter().map(|r| r[j] as f64).sum::<f64>() / (items * n);
                pj * pj
            })
            .sum();
        (p_bar - p_e) / (1.0 - p_e)
    }

    #[test]
    fn perfect_agreement_is_one() {
        let rows = vec![vec![2, 0], vec![0, 2], vec![2, 0], vec![0, 2], vec![2, 0]];
        assert_eq!(fleiss_kappa(&rows, 2).unwrap(), 1.0);
    }

    #[test]
    fn four_item_case_matches_hand_evaluation() {
        // P_i = 1,1,1,0 -> P̄ = 3/4; p_A = 5/8, p_B = 3/8 -> P̄e = 17/32; κ = 7/15.
        let rows = vec![vec![2, 0], vec![2, 0], vec![0, 2], vec![1, 1]];
        let k = fleiss_kappa(&rows, 2).unwrap();
        assert!((k - 7.0 / 15.0).abs() < 1e-12);
        assert!((k - closed_form(&rows, 2)).abs() < 1e-12);
    }

    #[test]
    fn total_disagreement_is_negative() {
        let rows = vec![vec![1, 1]; 6];
        let k = fleiss_kappa(&rows, 2).unwrap();
        assert!(k < 0.0);
        assert!((k - -1.0).abs() < 1e-12);
    }

    #[test]
    fn single_category_mass() {
        let rows = vec![vec![3, 0], vec![3, 0]];
        assert_eq!(fleiss_kappa(&rows, 3).unwrap(), 1.0);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(fleiss_kappa(&[vec![2, 0]], 2), Err(KappaError::TooFewItems));
        assert_eq!(
            fleiss_kappa(&[vec![2, 0], vec![1, 0]], 2),
            Err(KappaError::RowSumMismatch { item: 1, got: 1, expected: 2 })
        );
        assert_eq!(fleiss_kappa(&[vec![2], vec![2]], 2), Err(KappaError::TooFewCategories));
        assert_eq!(fleiss_kappa(&[vec![1, 0], vec![1, 0]], 1), Err(KappaError::TooFewRaters));
    }
}
