//! Exact match, validity and fingerprint-similarity means over
//! (generated, reference) pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprints::{tanimoto, FpSpec};
use crate::molstring::{parse_smiles, write_smiles, Molecule};
use crate::par::{self, Exec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("reference {index} does not parse: {text}")]
    InvalidReference { index: usize, text: String },
}

/// Similarity means are over valid generations only; with `n_valid == 0`
/// they are reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_pairs: usize,
    pub n_valid: usize,
    pub exact: f64,
    pub maccs_fts: f64,
    pub rdk_fts: f64,
    pub morgan_fts: f64,
    pub validity: f64,
}

impl EvalReport {
    pub const TSV_HEADER: &'static str = "n_pairs\tn_valid\texact\tmaccs_fts\trdk_fts\tmorgan_fts\tvalidity";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.n_pairs, self.n_valid, self.exact, self.maccs_fts, self.rdk_fts, self.morgan_fts, self.validity
        )
    }
}

/// Fingerprint families behind the three similarity columns.
pub struct Families {
    pub maccs: FpSpec,
    pub rdk: FpSpec,
    pub morgan: FpSpec,
}

impl Default for Families {
    fn default() -> Self {
        Families { maccs: FpSpec::maccs(), rdk: FpSpec::rdk(), morgan: FpSpec::morgan() }
    }
}

struct PairScore {
    exact: bool,
    fts: Option<[f64; 3]>,
}

fn similarity(spec: &FpSpec, a: &Molecule, b: &Molecule) -> f64 {
    let fa = spec.compute(a).expect("default fingerprint parameters are valid");
    let fb = spec.compute(b).expect("default fingerprint parameters are valid");
    tanimoto(&fa, &fb).expect("same spec on both sides")
}

/// True iff both strings parse and have equal canonical forms (stereo kept).
pub fn exact_match(generated: &str, reference: &str) -> bool {
    match (parse_smiles(generated), parse_smiles(reference)) {
        (Ok(g), Ok(r)) => write_smiles(&g, true) == write_smiles(&r, true),
        _ => false,
    }
}

pub fn evaluate_pairs<S: AsRef<str> + Sync>(pairs: &[(S, S)]) -> Result<EvalReport, MetricsError> {
    evaluate_pairs_with(Exec::default(), &Families::default(), pairs)
}

pub fn evaluate_pairs_with<S: AsRef<str> + Sync>(
    exec: Exec,
    families: &Families,
    pairs: &[(S, S)],
) -> Result<EvalReport, MetricsError> {
    let refs: Vec<Result<Molecule, usize>> =
        par::map_range(exec, pairs.len(), |i| parse_smiles(pairs[i].1.as_ref()).map_err(|_| i));
    let refs: Vec<Molecule> = refs
        .into_iter()
        .collect::<Result<_, usize>>()
        .map_err(|index| MetricsError::InvalidReference { index, text: pairs[index].1.as_ref().to_owned() })?;

    let scores: Vec<PairScore> = par::map_range(exec, pairs.len(), |i| {
        let Ok(g) = parse_smiles(pairs[i].0.as_ref()) else {
            return PairScore { exact: false, fts: None };
        };
        let r = &refs[i];
        PairScore {
            exact: write_smiles(&g, true) == write_smiles(r, true),
            fts: Some([
                similarity(&families.maccs, &g, r),
                similarity(&families.rdk, &g, r),
                similarity(&families.morgan, &g, r),
            ]),
        }
    });

    let n = pairs.len();
    let valid: Vec<[f64; 3]> = scores.iter().filter_map(|s| s.fts).collect();
    let n_valid = valid.len();
    let mean = |k: usize| {
        if n_valid == 0 {
            0.0
        } else {
            par::pairwise_sum(&valid.iter().map(|v| v[k]).collect::<Vec<_>>()) / n_valid as f64
        }
    };
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(EvalReport {
        n_pairs: n,
        n_valid,
        exact: frac(scores.iter().filter(|s| s.exact).count()),
        maccs_fts: mean(0),
        rdk_fts: mean(1),
        morgan_fts: mean(2),
        validity: frac(n_valid),
    })
}

/// Reads `generated<TAB>reference` lines; a first line equal to
/// `generated<TAB>reference` is treated as a header. Blank lines are skipped.
pub fn read_pairs_tsv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (k == 0 && line.trim_end() == "generated\treference") {
            continue;
        }
        let (g, r) = line.split_once('\t').ok_or_else(|| format!("line {}: expected two tab-separated columns", k + 1))?;
        out.push((g.to_owned(), r.trim_end_matches('\r').to_owned()));
    }
    Ok(out)
}
