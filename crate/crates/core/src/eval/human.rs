use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Fluency,
    Identification,
    Comfort,
    Suggestions,
    Overall,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Fluency,
        Dimension::Identification,
        Dimension::Comfort,
        Dimension::Suggestions,
        Dimension::Overall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Fluency => "fluency",
            Dimension::Identification => "identification",
            Dimension::Comfort => "comfort",
            Dimension::Suggestions => "suggestions",
            Dimension::Overall => "overall",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| EvalError::UnknownDimension(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Win,
    Tie,
    Loss,
}

impl FromStr for Verdict {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "win" => Ok(Verdict::Win),
            "tie" => Ok(Verdict::Tie),
            "loss" | "lose" => Ok(Verdict::Loss),
            other => Err(EvalError::UnknownVerdict(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub n: u64,
    pub win: f64,
    pub tie: f64,
    pub loss: f64,
}

/// Percentages per judged dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct HumanEvalTally {
    pub dimensions: BTreeMap<Dimension, WinTieLoss>,
}

pub fn human_eval_tally<'a>(judgments: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<HumanEvalTally, EvalError> {
    let mut counts: BTreeMap<Dimension, [u64; 3]> = BTreeMap::new();
    for (dim, verdict) in judgments {
        let d: Dimension = dim.parse()?;
        let v: Verdict = verdict.parse()?;
        counts.entry(d).or_default()[v as usize] += 1;
    }
    let pct = |x: u64, n: u64| 100.0 * x as f64 / n as f64;
    let dimensions = counts
        .into_iter()
        .map(|(d, [w, t, l])| {
            let n = w + t + l;
            (
                d,
                WinTieLoss {
                    n,
                    win: pct(w, n),
                    tie: pct(t, n),
                    loss: pct(l, n),
                },
            )
        })
        .collect();
    Ok(HumanEvalTally { dimensions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fluency_row() {
        let mut j = vec![("fluency", "win"); 48];
        j.extend(vec![("fluency", "tie"); 7]);
        j.extend(vec![("fluency", "loss"); 45]);
        let t = human_eval_tally(j).unwrap();
        let f = &t.dimensions[&Dimension::Fluency];
        assert_eq!((f.win, f.tie, f.loss), (48.0, 7.0, 45.0));
        assert_eq!(t.dimensions.len(), 1);
    }

    #[test]
    fn wins_only() {
        let t = human_eval_tally(vec![("fluency", "win"); 10]).unwrap();
        let f = &t.dimensions[&Dimension::Fluency];
        assert_eq!((f.win, f.tie, f.loss), (100.0, 0.0, 0.0));
    }

    #[test]
    fn unknown_dimension() {
        assert!(matches!(
            human_eval_tally([("speed", "win")]),
            Err(EvalError::UnknownDimension(_))
        ));
        assert!(matches!(
            human_eval_tally([("comfort", "draw")]),
            Err(EvalError::UnknownVerdict(_))
        ));
    }
}
