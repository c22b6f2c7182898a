//! Exponential consensus ranking over docking programs and comparison of
//! candidate score sets with background sets.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("score table has no molecules or no programs")]
    EmptyTable,
    #[error("score set {0:?} is empty")]
    EmptySet(String),
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("no direction declared for program {0:?}")]
    MissingDirection(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// scores[molecule][program]; `None` when a program produced no score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub molecules: Vec<String>,
    pub programs: Vec<String>,
    pub directions: Vec<Direction>,
    pub scores: Vec<Vec<Option<f64>>>,
}

#[derive(Deserialize)]
struct Row {
    molecule_id: String,
    program: String,
    score: String,
}

impl ScoreTable {
    /// Long-format CSV `molecule_id,program,score` plus a direction per
    /// program. Empty, `NA` and `nan` scores count as missing. Molecules and
    /// programs keep first-appearance order.
    pub fn from_csv(reader: impl Read, directions: &HashMap<String, Direction>) -> Result<Self, ConsensusError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut molecules, mut programs) = (Vec::new(), Vec::new());
        let (mut mol_ix, mut prog_ix) = (HashMap::new(), HashMap::new());
        let mut cells = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let m = *mol_ix.entry(row.molecule_id.clone()).or_insert_with(|| {
                molecules.push(row.molecule_id.clone());
                molecules.len() - 1
            });
            let p = *prog_ix.entry(row.program.clone()).or_insert_with(|| {
                programs.push(row.program.clone());
                programs.len() - 1
            });
            let s = row.score.to_ascii_lowercase();
            let score = if s.is_empty() || s == "na" || s == "nan" {
                None
            } else {
                let v: f64 = s.parse().map_err(|_| ConsensusError::Malformed { line: i + 2, msg: format!("score {:?}", row.score) })?;
                v.is_finite().then_some(v)
            };
            cells.push((m, p, score));
        }
        let mut scores = vec![vec![None; programs.len()]; molecules.len()];
        for (m, p, s) in cells {
            scores[m][p] = s;
        }
        let directions = programs
            .iter()
            .map(|p| directions.get(p).copied().ok_or_else(|| ConsensusError::MissingDirection(p.clone())))
            .collect::<Result<_, _>>()?;
        Ok(ScoreTable { molecules, programs, directions, scores })
    }

    /// Fractional ranks (1 = best, ties share the mean rank) for one
    /// program; molecules without a score get rank N.
    pub fn ranks(&self, program: usize) -> Vec<f64> {
        let n = self.molecules.len();
        let dir = self.directions[program];
        let mut scored: Vec<(usize, f64)> =
            (0..n).filter_map(|m| self.scores[m][program].map(|s| (m, s))).collect();
        scored.sort_by(|a, b| {
            let o = a.1.total_cmp(&b.1);
            if dir == Direction::HigherIsBetter { o.reverse() } else { o }
        });
        let mut ranks = vec![n as f64; n];
        let mut i = 0;
        while i < scored.len() {
            let mut j = i + 1;
            while j < scored.len() && scored[j].1 == scored[i].1 {
                j += 1;
            }
            // positions i+1 ..= j share their mean
            let mean = (i + 1 + j) as f64 / 2.0;
            for &(m, _) in &scored[i..j] {
                ranks[m] = mean;
            }
            i = j;
        }
        ranks
    }
}

/// σ = max(1, 5% of the library size).
pub fn default_sigma(n_molecules: usize) -> f64 {
    (0.05 * n_molecules as f64).max(1.0)
}

/// ECR(j) = Σ_p (1/σ)·exp(−rank_p(j)/σ), aligned with `table.molecules`.
pub fn ecr_scores(table: &ScoreTable, sigma: f64, exec: Exec) -> Result<Vec<f64>, ConsensusError> {
    if table.molecules.is_empty() || table.programs.is_empty() {
        return Err(ConsensusError::EmptyTable);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ConsensusError::BadSigma(sigma));
    }
    let ranks = par::map_range(exec, table.programs.len(), |p| table.ranks(p));
    Ok((0..table.molecules.len())
        .map(|m| ranks.iter().map(|r| (-r[m] / sigma).exp() / sigma).sum())
        .collect())
}

/// Median with the mean of the middle pair for even sizes.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Share of `set` below `probe`, counting ties as half, in percent.
pub fn percentile_of(probe: f64, set: &[f64]) -> Option<f64> {
    if set.is_empty() {
        return None;
    }
    let below = set.iter().filter(|&&x| x < probe).count() as f64;
    let equal = set.iter().filter(|&&x| x == probe).count() as f64;
    Some(100.0 * (below + 0.5 * equal) / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSummary {
    pub name: String,
    pub n: usize,
    pub median: f64,
    pub probe_percentile: Option<f64>,
    pub candidate_median_exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub candidate_n: usize,
    pub candidate_median: f64,
    pub probe: Option<f64>,
    pub backgrounds: Vec<BackgroundSummary>,
}

/// Higher scores are better throughout (ECR scale).
pub fn background_report(
    candidates: &[f64],
    backgrounds: &BTreeMap<String, Vec<f64>>,
    probe: Option<f64>,
) -> Result<ConsensusReport, ConsensusError> {
    let candidate_median = median(candidates).ok_or_else(|| ConsensusError::EmptySet("candidates".into()))?;
    let backgrounds = backgrounds
        .iter()
        .map(|(name, set)| {
            let m = median(set).ok_or_else(|| ConsensusError::EmptySet(name.clone()))?;
            Ok(BackgroundSummary {
                name: name.clone(),
                n: set.len(),
                median: m,
                probe_percentile: probe.and_then(|p| percentile_of(p, set)),
                candidate_median_exceeds: candidate_median > m,
            })
        })
        .collect::<Result<_, ConsensusError>>()?;
    Ok(ConsensusReport { candidate_n: candidates.len(), candidate_median, probe, backgrounds })
}

/// One score per non-empty, non-comment line; with several tab or comma
/// separated columns the last one is the score. Non-numeric lines before the
/// first score are taken as headers.
pub fn read_score_list(reader: impl Read) -> Result<Vec<f64>, ConsensusError> {
    let mut text = String::new();
    let mut r = reader;
    r.read_to_string(&mut text).map_err(|e| ConsensusError::Malformed { line: 0, msg: e.to_string() })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(['\t', ',']).next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue,
            Err(_) => return Err(ConsensusError::Malformed { line: i + 1, msg: format!("score {field:?}") }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_percentile() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[0.1, 0.2]), Some(0.15000000000000002));
        assert_eq!(median(&[]), None);
        assert_eq!(percentile_of(5.0, &[5.0, 5.0, 5.0]), Some(50.0));
        assert_eq!(percentile_of(5.0, &[1.0, 2.0, 9.0, 10.0]), Some(50.0));
        assert_eq!(percentile_of(0.0, &[1.0]), Some(0.0));
    }

    #[test]
    fn score_list_header_and_columns() {
        let v = read_score_list("id,ecr\na,0.5\nb,0.25\n".as_bytes()).unwrap();
        assert_eq!(v, [0.5, 0.25]);
        assert!(read_score_list("0.1\nx\n".as_bytes()).is_err());
        assert_eq!(read_score_list("# c\nid,ecr\nq,1e-3\n".as_bytes()).unwrap(), [1e-3]);
    }
}
