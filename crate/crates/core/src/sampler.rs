//! Seeded multinomial sampling, temperature escalation and the four-way
//! molecule filter with per-draw accounting.

use std::collections::HashSet;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapternet::{Inference, Mat, ModelError, ModelParams, MolSyntax, MolTokenizer, BOS, EOS};
use crate::molstring::{self, decode_selfies, split_selfies, Molecule};

/// Uniform in [0, 1) from the top 53 bits of one draw.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from softmax(logits / temperature), scanning tokens in
/// index order. Consumes exactly one uniform.
pub fn sample_token(logits: &[f64], temperature: f64, rng: &mut impl RngCore) -> usize {
    assert!(temperature > 0.0, "temperature must be positive");
    let u = uniform(rng);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Anything that scores the next molecule token given the prefix (which
/// starts with BOS).
pub trait TokenModel {
    fn next_logits(&self, prefix: &[u32]) -> Vec<f64>;
    /// Body token ids to the output string.
    fn render(&self, ids: &[u32]) -> String;
    fn syntax(&self) -> MolSyntax;
}

/// Trained network bound to one prompt; text states are computed once.
pub struct ConditionedModel<'a> {
    inference: Inference<'a>,
    text_states: Mat,
    tokenizer: &'a MolTokenizer,
}

impl<'a> ConditionedModel<'a> {
    pub fn new(params: &'a ModelParams, tokenizer: &'a MolTokenizer, text: &[u32]) -> Result<Self, ModelError> {
        let inference = Inference::new(params);
        let text_states = inference.text_states(text)?;
        if tokenizer.vocab.len() != params.config().mol_vocab {
            return Err(ModelError::Vocab(format!(
                "tokenizer has {} molecule tokens, model expects {}",
                tokenizer.vocab.len(),
                params.config().mol_vocab
            )));
        }
        Ok(ConditionedModel { inference, text_states, tokenizer })
    }

    pub fn max_len(&self) -> usize {
        self.inference.config().max_mol_len
    }
}

impl TokenModel for ConditionedModel<'_> {
    fn next_logits(&self, prefix: &[u32]) -> Vec<f64> {
        let logits = self.inference.logits_with(&self.text_states, prefix).expect("prefix within model limits");
        logits.row(logits.rows - 1).to_vec()
    }

    fn render(&self, ids: &[u32]) -> String {
        self.tokenizer.decode(ids)
    }

    fn syntax(&self) -> MolSyntax {
        self.tokenizer.syntax
    }
}

/// y_t ~ P(y | y_<t, T) from BOS until EOS or `max_len` body tokens.
pub fn generate_one(model: &dyn TokenModel, max_len: usize, temperature: f64, rng: &mut impl RngCore) -> String {
    let mut prefix = vec![BOS];
    while prefix.len() <= max_len {
        let t = sample_token(&model.next_logits(&prefix), temperature, rng) as u32;
        if t == EOS {
            break;
        }
        prefix.push(t);
    }
    model.render(&prefix[1..])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterOutcome {
    Pass,
    Invalid,
    NaturalLanguage,
    Salts,
    SingleElement,
}

/// Filter verdict plus the dedup key (canonical SMILES when the molecular
/// part parses, otherwise the trimmed string).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classified {
    pub outcome: FilterOutcome,
    pub key: String,
}

/// Splits off trailing text the way toolkits read a title after whitespace.
fn head_tail(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

/// Leading run of bracketed SELFIES symbols, then whatever follows.
fn selfies_head_tail(s: &str) -> (&str, &str) {
    let s = s.trim();
    let mut end = 0;
    while s[end..].starts_with('[') {
        match s[end..].find(']') {
            Some(j) => end += j + 1,
            None => break,
        }
    }
    (&s[..end], s[end..].trim_start())
}

fn molecule_outcome(m: &Molecule) -> FilterOutcome {
    if m.num_components() > 1 {
        return FilterOutcome::Salts;
    }
    let first = m.atoms().first().map(|a| a.element);
    let one_element = m.atoms().iter().all(|a| Some(a.element) == first);
    let has_h = m.atoms().iter().any(|a| a.hydrogens() > 0);
    let is_h = first.is_some_and(|e| e.atomic_number() == 1);
    if one_element && (!has_h || is_h) {
        FilterOutcome::SingleElement
    } else {
        FilterOutcome::Pass
    }
}

/// Checks in fixed order: Invalid, NaturalLanguage, Salts, SingleElement.
pub fn classify(candidate: &str, syntax: MolSyntax) -> Classified {
    let (head, tail) = match syntax {
        MolSyntax::Smiles => head_tail(candidate),
        MolSyntax::Selfies => selfies_head_tail(candidate),
    };
    let parsed = if head.is_empty() {
        None
    } else {
        match syntax {
            MolSyntax::Smiles => molstring::parse_smiles(head).ok(),
            MolSyntax::Selfies => decode_selfies(head).ok().filter(|_| !split_selfies(head).is_empty()),
        }
    };
    let Some(m) = parsed else {
        return Classified { outcome: FilterOutcome::Invalid, key: candidate.trim().to_string() };
    };
    let canon = molstring::write_smiles(&m, true);
    if !tail.is_empty() {
        return Classified { outcome: FilterOutcome::NaturalLanguage, key: format!("{canon} {tail}") };
    }
    Classified { outcome: molecule_outcome(&m), key: canon }
}

/// SMILES-syntax filter.
pub fn classify_filter(candidate: &str) -> FilterOutcome {
    classify(candidate, MolSyntax::Smiles).outcome
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub sample: u64,
    pub duplicate: u64,
    pub unique: u64,
    pub invalid: u64,
    pub nl: u64,
    pub salts: u64,
    pub se: u64,
    pub success: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample {sample} - duplicate {duplicate} != unique {unique}")]
    UniqueMismatch { sample: u64, duplicate: u64, unique: u64 },
    #[error("unique {unique} != success + invalid + nl + salts + se = {parts}")]
    PartsMismatch { unique: u64, parts: u64 },
    #[error("{0} exceeds sample")]
    Overflow(&'static str),
}

impl GenerationStats {
    /// Derives unique and success from the raw counters.
    pub fn from_counts(sample: u64, duplicate: u64, invalid: u64, nl: u64, salts: u64, se: u64) -> Result<Self, StatsError> {
        let unique = sample.checked_sub(duplicate).ok_or(StatsError::Overflow("duplicate"))?;
        let success = unique.checked_sub(invalid + nl + salts + se).ok_or(StatsError::Overflow("filter counts"))?;
        let s = GenerationStats { sample, duplicate, unique, invalid, nl, salts, se, success };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), StatsError> {
        if self.sample.checked_sub(self.duplicate) != Some(self.unique) {
            return Err(StatsError::UniqueMismatch { sample: self.sample, duplicate: self.duplicate, unique: self.unique });
        }
        let parts = self.success + self.invalid + self.nl + self.salts + self.se;
        if parts != self.unique {
            return Err(StatsError::PartsMismatch { unique: self.unique, parts });
        }
        Ok(())
    }

    /// success / unique; 0 when nothing unique was drawn.
    pub fn success_rate(&self) -> f64 {
        if self.unique == 0 {
            0.0
        } else {
            self.success as f64 / self.unique as f64
        }
    }

    fn record(&mut self, outcome: FilterOutcome) {
        self.unique += 1;
        match outcome {
            FilterOutcome::Pass => self.success += 1,
            FilterOutcome::Invalid => self.invalid += 1,
            FilterOutcome::NaturalLanguage => self.nl += 1,
            FilterOutcome::Salts => self.salts += 1,
            FilterOutcome::SingleElement => self.se += 1,
        }
    }
}

/// Streaming dedup + filter bookkeeping shared by live runs and replays.
#[derive(Debug, Clone)]
pub struct Tally {
    syntax: MolSyntax,
    seen: HashSet<String>,
    stats: GenerationStats,
    molecules: Vec<String>,
}

impl Tally {
    pub fn new(syntax: MolSyntax) -> Self {
        Tally { syntax, seen: HashSet::new(), stats: GenerationStats::default(), molecules: Vec::new() }
    }

    /// Counts one draw; returns its outcome, or `None` for a duplicate.
    pub fn push(&mut self, candidate: &str) -> Option<FilterOutcome> {
        self.stats.sample += 1;
        let c = classify(candidate, self.syntax);
        if !self.seen.insert(c.key.clone()) {
            self.stats.duplicate += 1;
            return None;
        }
        self.stats.record(c.outcome);
        if c.outcome == FilterOutcome::Pass {
            self.molecules.push(c.key);
        }
        Some(c.outcome)
    }

    pub fn stats(&self) -> GenerationStats {
        self.stats
    }

    /// Canonical SMILES of Pass molecules in first-seen order.
    pub fn molecules(&self) -> &[String] {
        &self.molecules
    }
}

/// Replays a log of generated strings, stopping once `target` molecules
/// pass (if given). Identities are checked before returning.
pub fn replay<'a>(
    log: impl IntoIterator<Item = &'a str>,
    syntax: MolSyntax,
    target: Option<u64>,
) -> Result<(Vec<String>, GenerationStats), StatsError> {
    let mut tally = Tally::new(syntax);
    for line in log {
        if target.is_some_and(|t| tally.stats.success >= t) {
            break;
        }
        tally.push(line);
    }
    tally.stats.check()?;
    Ok((tally.molecules, tally.stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Body tokens per molecule.
    pub max_len: usize,
    pub base_temperature: f64,
    pub base_seed: u64,
    /// First temperature after the base one.
    pub first_escalation: f64,
    pub escalation_step: f64,
    pub max_temperature: f64,
    pub per_temperature_cap: usize,
    /// Draws per seeded batch; batch b uses seed base_seed + b.
    pub batch_size: usize,
    pub target_unique: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_len: 96,
            base_temperature: 1.0,
            base_seed: 42,
            first_escalation: 1.5,
            escalation_step: 0.5,
            max_temperature: 4.5,
            per_temperature_cap: 1000,
            batch_size: 100,
            target_unique: 100,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let ok = self.base_temperature > 0.0
            && self.base_temperature <= self.max_temperature
            && self.escalation_step > 0.0
            && self.per_temperature_cap >= 1
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(GenerationError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Base temperature, then first_escalation, first_escalation + step, ...
    /// up to and including max_temperature.
    pub fn temperatures(&self) -> Vec<f64> {
        let mut out = vec![self.base_temperature];
        let mut k = 0u32;
        loop {
            let t = self.first_escalation + f64::from(k) * self.escalation_step;
            if t > self.max_temperature + 1e-9 {
                break;
            }
            if t > self.base_temperature + 1e-9 {
                out.push(t);
            }
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub molecules: Vec<String>,
    pub stats: GenerationStats,
    /// Temperatures in the order they were sampled at.
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("reached {} of {target} molecules at max temperature", partial.molecules.len())]
    TargetUnreached { target: u64, partial: Box<GenerationRun> },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Samples until `target_unique` molecules pass the filter, escalating the
/// temperature after `per_temperature_cap` draws at each level.
pub fn generate_unique_set(model: &dyn TokenModel, cfg: &GenerationConfig) -> Result<GenerationRun, GenerationError> {
    cfg.validate()?;
    let mut tally = Tally::new(model.syntax());
    let mut visited = Vec::new();
    let mut batch = 0u64;
    for temperature in cfg.temperatures() {
        visited.push(temperature);
        let mut drawn = 0;
        while drawn < cfg.per_temperature_cap && tally.stats.success < cfg.target_unique {
            let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.base_seed.wrapping_add(batch));
            batch += 1;
            let n = cfg.batch_size.min(cfg.per_temperature_cap - drawn);
            for _ in 0..n {
                tally.push(&generate_one(model, cfg.max_len, temperature, &mut rng));
                drawn += 1;
                if tally.stats.success >= cfg.target_unique {
                    break;
                }
            }
        }
        if tally.stats.success >= cfg.target_unique {
            break;
        }
    }
    tally.stats.check()?;
    let run = GenerationRun { molecules: tally.molecules, stats: tally.stats, temperatures: visited };
    if run.stats.success < cfg.target_unique {
        return Err(GenerationError::TargetUnreached { target: cfg.target_unique, partial: Box::new(run) });
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_logits() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(1);
        let l = [10.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
        assert!((0..100).all(|_| sample_token(&l, 1.0, &mut rng) == 0));
        let l = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
        assert!((0..100).all(|_| sample_token(&l, 3.0, &mut rng) == 2));
    }

    #[test]
    fn one_uniform_per_token() {
        let mut a = Xoshiro256StarStar::seed_from_u64(9);
        let mut b = a.clone();
        sample_token(&[0.1, 0.2, 0.3], 1.0, &mut a);
        b.next_u64();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn filter_examples() {
        assert_eq!(classify_filter("[H+].[H+].[H+].CN(C=O)C=O.CI"), FilterOutcome::Salts);
        assert_eq!(classify_filter("CN (C)CI via minimal irritation on minimal water condition.CNC"), FilterOutcome::NaturalLanguage);
        assert_eq!(classify_filter("II"), FilterOutcome::SingleElement);
        assert_eq!(classify_filter("CCO"), FilterOutcome::Pass);
        assert_eq!(classify_filter(""), FilterOutcome::Invalid);
        assert_eq!(classify_filter("C1CC"), FilterOutcome::Invalid);
        assert_eq!(classify_filter("CCC"), FilterOutcome::Pass);
        assert_eq!(classify_filter("[H][H]"), FilterOutcome::SingleElement);
        assert_eq!(classify_filter("[C-]#[C-]"), FilterOutcome::SingleElement);
        assert_eq!(classify_filter("  CCO  "), FilterOutcome::Pass);
    }

    #[test]
    fn selfies_filter() {
        assert_eq!(classify("[C][C][O]", MolSyntax::Selfies).outcome, FilterOutcome::Pass);
        assert_eq!(classify("[C][C][O] hello", MolSyntax::Selfies).outcome, FilterOutcome::NaturalLanguage);
        assert_eq!(classify("", MolSyntax::Selfies).outcome, FilterOutcome::Invalid);
        assert_eq!(classify("[I][I]", MolSyntax::Selfies).outcome, FilterOutcome::SingleElement);
        assert_eq!(classify("[C][C][O]", MolSyntax::Selfies).key, "CCO");
    }

    #[test]
    fn stats_identities() {
        let s = GenerationStats::from_counts(260, 31, 113, 8, 4, 4).unwrap();
        assert_eq!((s.unique, s.success), (229, 100));
        assert!(GenerationStats::from_counts(10, 11, 0, 0, 0, 0).is_err());
        let bad = GenerationStats { sample: 5, unique: 4, success: 4, ..Default::default() };
        assert!(matches!(bad.check(), Err(StatsError::UniqueMismatch { .. })));
    }

    #[test]
    fn temperature_schedule() {
        let t = GenerationConfig::default().temperatures();
        assert_eq!(t, vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5]);
        let c = GenerationConfig { base_temperature: 2.0, ..Default::default() };
        assert_eq!(c.temperatures(), vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5]);
    }
}
