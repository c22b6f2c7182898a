//! ChEBI-20 loading, PubChem description filtering, description
//! normalization, tokenizer-compatibility filtering and seeded subsampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapternet::smiles_tokens;
use crate::molstring::{parse_smiles, strip_stereo, write_smiles, Element};
use crate::par::{self, Exec};
use crate::sampler::uniform;

pub const HEADER: &str = "CID\tSMILES\tdescription";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub cid: String,
    pub smiles: String,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: duplicate CID {cid}")]
    DuplicateCid { cid: String, line: usize },
    #[error("asked for {n} records out of {len}")]
    SampleTooLarge { n: usize, len: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_string(), source }
}

/// Reads `CID<TAB>SMILES<TAB>description` rows after the header line.
/// SMILES are kept as written; chemistry checks happen in the filters.
pub fn read_records(reader: impl Read) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err("<input>"))?;
        let line = line.trim_end_matches('\r');
        if i == 0 {
            if line.trim() != HEADER {
                return Err(DatasetError::MalformedRow { line: 1, msg: format!("expected header {HEADER:?}") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(DatasetError::MalformedRow { line: line_no, msg: format!("{} columns, expected 3", cols.len()) });
        }
        let (cid, smiles, description) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if cid.is_empty() || smiles.is_empty() || description.is_empty() {
            return Err(DatasetError::MalformedRow { line: line_no, msg: "empty field".into() });
        }
        if !seen.insert(cid.to_string()) {
            return Err(DatasetError::DuplicateCid { cid: cid.to_string(), line: line_no });
        }
        out.push(DatasetRecord { cid: cid.into(), smiles: smiles.into(), description: description.into() });
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let p = path.display().to_string();
    read_records(File::open(path).map_err(io_err(&p))?)
}

pub fn write_records(w: &mut impl Write, records: &[DatasetRecord]) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.cid, r.smiles, r.description)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chebi20 {
    pub train: Vec<DatasetRecord>,
    pub validation: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

pub const CHEBI20_FILES: [&str; 3] = ["train.txt", "validation.txt", "test.txt"];

/// Loads the three split files from a directory.
pub fn load_chebi20(dir: &Path) -> Result<Chebi20, DatasetError> {
    let [train, validation, test] = CHEBI20_FILES.map(|f| read_records_file(&dir.join(f)));
    Ok(Chebi20 { train: train?, validation: validation?, test: test? })
}

/// Drop counts per rule. A record breaking several rules counts under each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub per_rule: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl FilterReport {
    fn build(input: usize, verdicts: &[Vec<&'static str>], rules: &[&str]) -> Self {
        let mut per_rule: BTreeMap<String, usize> = rules.iter().map(|r| (r.to_string(), 0)).collect();
        for v in verdicts {
            for r in v {
                *per_rule.get_mut(*r).expect("declared rule") += 1;
            }
        }
        let dropped = verdicts.iter().filter(|v| !v.is_empty()).count();
        FilterReport { input, kept: input - dropped, dropped, per_rule, notes: Vec::new() }
    }
}

fn keep_passing(records: &[DatasetRecord], verdicts: &[Vec<&'static str>]) -> Vec<DatasetRecord> {
    records.iter().zip(verdicts).filter(|(_, v)| v.is_empty()).map(|(r, _)| r.clone()).collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn canonical(smiles: &str) -> Option<String> {
    parse_smiles(smiles).ok().map(|m| write_smiles(&m, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PubchemFilter {
    /// Descriptions need strictly more words than this.
    pub min_words: usize,
    /// Case-insensitive phrases that disqualify a description.
    pub banned_phrases: Vec<String>,
    /// Canonical SMILES to remove (overlap with another dataset).
    pub exclude: HashSet<String>,
}

impl Default for PubchemFilter {
    fn default() -> Self {
        PubchemFilter { min_words: 30, banned_phrases: vec!["natural product".into()], exclude: HashSet::new() }
    }
}

impl PubchemFilter {
    /// Canonicalizes and stores an exclusion list; unparseable entries are skipped.
    pub fn exclude_smiles<'a>(mut self, smiles: impl IntoIterator<Item = &'a str>) -> Self {
        self.exclude.extend(smiles.into_iter().filter_map(canonical));
        self
    }
}

pub const PUBCHEM_RULES: [&str; 5] = ["unparseable", "short_description", "banned_phrase", "one_to_many", "excluded"];

/// Every rule is a predicate over the input set (one-to-many is decided on
/// the full input), so the surviving set does not depend on rule order.
pub fn filter_pubchem(records: &[DatasetRecord], cfg: &PubchemFilter, exec: Exec) -> (Vec<DatasetRecord>, FilterReport) {
    let canon: Vec<Option<String>> = par::map(exec, records, |r| canonical(&r.smiles));
    let mut targets: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (r, c) in records.iter().zip(&canon) {
        targets.entry(r.description.trim()).or_default().insert(c.as_deref().unwrap_or(r.smiles.as_str()));
    }
    let banned: Vec<String> = cfg.banned_phrases.iter().map(|p| p.to_lowercase()).collect();
    let verdicts: Vec<Vec<&'static str>> = records
        .iter()
        .zip(&canon)
        .map(|(r, c)| {
            let mut v = Vec::new();
            if c.is_none() {
                v.push("unparseable");
            }
            if word_count(&r.description) <= cfg.min_words {
                v.push("short_description");
            }
            let lower = r.description.to_lowercase();
            if banned.iter().any(|p| lower.contains(p.as_str())) {
                v.push("banned_phrase");
            }
            if targets[r.description.trim()].len() > 1 {
                v.push("one_to_many");
            }
            if c.as_ref().is_some_and(|c| cfg.exclude.contains(c)) {
                v.push("excluded");
            }
            v
        })
        .collect();
    (keep_passing(records, &verdicts), FilterReport::build(records.len(), &verdicts, &PUBCHEM_RULES))
}

const NAME_PREFIXES: [&str; 2] = ["The molecule", "This molecule"];
const TRAILER: &str = "with data available";

/// Replaces a leading compound name (everything before the first " is " or
/// " are ") with "This molecule" and drops a trailing "with data available".
pub fn normalize_description(text: &str) -> String {
    let mut s = text.trim().to_string();
    let body = s.trim_end_matches('.').trim_end();
    if let Some(head) = body.strip_suffix(TRAILER) {
        let had_period = s.ends_with('.');
        s = head.trim_end().trim_end_matches(',').trim_end().to_string();
        if had_period {
            s.push('.');
        }
    }
    if NAME_PREFIXES.iter().any(|p| s.starts_with(p)) {
        return s;
    }
    let verb = [" is ", " are "].iter().filter_map(|v| s.find(v).map(|i| (i, *v))).min();
    match verb {
        Some((i, v)) if i > 0 => format!("This molecule{v}{}", &s[i + v.len()..]),
        _ => s,
    }
}

/// Heavy-atom elements of the MOSES training set.
pub const MOSES_ELEMENTS: [Element; 7] = [Element::C, Element::N, Element::S, Element::O, Element::F, Element::CL, Element::BR];

/// Token alphabet of a MOSES-trained SMILES tokenizer: organic-subset atoms
/// from the MOSES elements, aromatic forms, [nH] and [H], bond symbols,
/// branches and single-digit ring closures. No charges, isotopes or stereo.
pub fn moses_alphabet() -> HashSet<String> {
    let mut a: HashSet<String> = ["C", "N", "O", "S", "F", "Cl", "Br", "c", "n", "o", "s", "[nH]", "[H]", "-", "=", "#", "(", ")"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    a.extend((1..=9).map(|d| d.to_string()));
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatFilter {
    pub allowed_elements: Vec<Element>,
    pub strip_stereo: bool,
    /// Tokens the target tokenizer knows; `None` skips the check.
    pub alphabet: Option<HashSet<String>>,
}

impl Default for CompatFilter {
    fn default() -> Self {
        CompatFilter { allowed_elements: MOSES_ELEMENTS.to_vec(), strip_stereo: true, alphabet: Some(moses_alphabet()) }
    }
}

pub const COMPAT_RULES: [&str; 3] = ["unparseable", "element", "tokenization"];

/// Strips stereo (when asked), rewrites SMILES canonically, then drops
/// records with heavy atoms outside the allowed set or tokens outside the
/// alphabet.
pub fn compat_filter(records: &[DatasetRecord], cfg: &CompatFilter, exec: Exec) -> (Vec<DatasetRecord>, FilterReport) {
    let results: Vec<(Option<String>, Vec<&'static str>)> = par::map(exec, records, |r| {
        let Ok(m) = parse_smiles(&r.smiles) else {
            return (None, vec!["unparseable"]);
        };
        let m = if cfg.strip_stereo { strip_stereo(&m) } else { m };
        let smiles = write_smiles(&m, true);
        let mut v = Vec::new();
        if m.atoms().iter().any(|a| a.element != Element::H && !cfg.allowed_elements.contains(&a.element)) {
            v.push("element");
        }
        if let Some(alpha) = &cfg.alphabet {
            let ok = smiles_tokens(&smiles).is_some_and(|t| t.iter().all(|t| alpha.contains(t)));
            if !ok {
                v.push("tokenization");
            }
        }
        (Some(smiles), v)
    });
    let verdicts: Vec<Vec<&'static str>> = results.iter().map(|(_, v)| v.clone()).collect();
    let kept = records
        .iter()
        .zip(results)
        .filter(|(_, (_, v))| v.is_empty())
        .map(|(r, (s, _))| DatasetRecord { smiles: s.expect("parsed"), ..r.clone() })
        .collect();
    (kept, FilterReport::build(records.len(), &verdicts, &COMPAT_RULES))
}

/// Seeded sample without replacement, returned in input order.
pub fn sample_subset(records: &[DatasetRecord], n: usize, seed: u64) -> Result<Vec<DatasetRecord>, DatasetError> {
    let len = records.len();
    if n > len {
        return Err(DatasetError::SampleTooLarge { n, len });
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = i + ((uniform(&mut rng) * (len - i) as f64) as usize).min(len - i - 1);
        idx.swap(i, j);
    }
    let mut chosen = idx[..n].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| records[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_description("4-methylphenol is a member of phenols with data available."),
            "This molecule is a member of phenols."
        );
        assert_eq!(normalize_description("The molecule is a peptide."), "The molecule is a peptide.");
        assert_eq!(normalize_description("no verb here"), "no verb here");
    }

    #[test]
    fn header_and_columns() {
        assert!(read_records("".as_bytes()).unwrap().is_empty());
        assert!(matches!(read_records("x\ty\n".as_bytes()), Err(DatasetError::MalformedRow { line: 1, .. })));
        let two = format!("{HEADER}\n1\tCCO\n");
        assert!(matches!(read_records(two.as_bytes()), Err(DatasetError::MalformedRow { line: 2, .. })));
        let dup = format!("{HEADER}\n1\tCCO\ta\n1\tCC\tb\n");
        assert!(matches!(read_records(dup.as_bytes()), Err(DatasetError::DuplicateCid { line: 3, .. })));
    }
}
