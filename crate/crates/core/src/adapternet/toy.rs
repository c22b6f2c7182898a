//! Synthetic (template description, molecule) corpus for desk-scale runs.

use super::tokenizer::{MolSyntax, MolTokenizer, TextTokenizer};
use super::train::{Example, TrainConfig};
use super::ModelError;

/// Scaffold name and SMILES; a substituent is written in front of it.
pub const SCAFFOLDS: [(&str, &str); 10] = [
    ("benzene", "c1ccccc1"),
    ("cyclohexane", "C1CCCCC1"),
    ("pyridine", "c1ccncc1"),
    ("cyclopentane", "C1CCCC1"),
    ("thiophene", "c1cccs1"),
    ("furan", "c1ccco1"),
    ("naphthalene", "c1ccc2ccccc2c1"),
    ("piperidine", "C1CCNCC1"),
    ("cyclopropane", "C1CC1"),
    ("pyrrole", "c1cc[nH]c1"),
];

/// Substituent name and SMILES prefix ending at the attachment atom.
pub const SUBSTITUENTS: [(&str, &str); 20] = [
    ("methyl", "C"),
    ("ethyl", "CC"),
    ("propyl", "CCC"),
    ("butyl", "CCCC"),
    ("isopropyl", "CC(C)"),
    ("hydroxy", "O"),
    ("amino", "N"),
    ("methoxy", "CO"),
    ("ethoxy", "CCO"),
    ("hydroxymethyl", "OC"),
    ("aminomethyl", "NC"),
    ("methylamino", "CN"),
    ("fluoro", "F"),
    ("chloro", "Cl"),
    ("bromo", "Br"),
    ("iodo", "I"),
    ("cyano", "N#C"),
    ("trifluoromethyl", "FC(F)(F)"),
    ("sulfanyl", "S"),
    ("chloromethyl", "ClC"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyPair {
    pub description: String,
    pub smiles: String,
    pub held_out: bool,
}

/// All 200 scaffold × substituent pairs. A pair is held out when
/// `(substituent + 3·scaffold) mod 5 == 1`: 40 pairs, every scaffold and
/// substituent still present in the training part, and no held-out molecule
/// longer than the longest training molecule.
pub fn toy_pairs() -> Vec<ToyPair> {
    let mut out = Vec::with_capacity(200);
    for (si, (sname, ssmi)) in SCAFFOLDS.iter().enumerate() {
        for (ri, (rname, rsmi)) in SUBSTITUENTS.iter().enumerate() {
            out.push(ToyPair {
                description: format!("the molecule is a {sname} ring that carries one {rname} group ."),
                smiles: format!("{rsmi}{ssmi}"),
                held_out: (ri + 3 * si) % 5 == 1,
            });
        }
    }
    out
}

/// Tokenized toy task.
pub struct ToyTask {
    pub text: TextTokenizer,
    pub mol: MolTokenizer,
    pub train: Vec<Example>,
    pub held_out: Vec<Example>,
}

impl ToyTask {
    pub fn build() -> Result<Self, ModelError> {
        let pairs = toy_pairs();
        let text = TextTokenizer::fit(pairs.iter().map(|p| p.description.as_str()));
        let mol = MolTokenizer::fit(MolSyntax::Smiles, pairs.iter().map(|p| p.smiles.as_str()));
        let (mut train, mut held_out) = (Vec::new(), Vec::new());
        for p in &pairs {
            let ex = Example { text: text.encode(&p.description), mol: mol.encode(&p.smiles)? };
            if p.held_out {
                held_out.push(ex);
            } else {
                train.push(ex);
            }
        }
        Ok(ToyTask { text, mol, train, held_out })
    }

    /// Unlabelled molecule corpus for decoder pretraining: every toy
    /// molecule, no descriptions. The decoder plays the part of a model
    /// pretrained on a large molecule corpus, so it knows the molecules but
    /// never sees which text goes with which.
    pub fn decoder_corpus(&self) -> Vec<Vec<u32>> {
        self.train.iter().chain(&self.held_out).map(|e| e.mol.clone()).collect()
    }

    /// Toy-scale schedule: 300 decoder steps, 1000 adapter steps at half the
    /// Noam rate, batch 16, warmup 400.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig { seed, max_steps: 1000, pretrain_steps: 300, lr_factor: 0.5, ..TrainConfig::default() };
        cfg.model.text_vocab = self.text.vocab.len();
        cfg.model.mol_vocab = self.mol.vocab.len();
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molstring::parse_smiles;

    #[test]
    fn every_pair_is_a_valid_distinct_molecule() {
        let pairs = toy_pairs();
        assert_eq!(pairs.len(), 200);
        assert_eq!(pairs.iter().filter(|p| p.held_out).count(), 40);
        let mut canon: Vec<String> = pairs.iter().map(|p| crate::molstring::canonicalize(&p.smiles).unwrap()).collect();
        canon.sort();
        canon.dedup();
        assert_eq!(canon.len(), 200);
        for p in &pairs {
            assert!(parse_smiles(&p.smiles).is_ok(), "{}", p.smiles);
        }
    }

    #[test]
    fn held_out_lengths_are_covered_by_training() {
        let task = ToyTask::build().unwrap();
        let longest = task.train.iter().map(|e| e.mol.len()).max().unwrap();
        assert!(task.held_out.iter().all(|e| e.mol.len() <= longest));
        for (si, _) in SCAFFOLDS.iter().enumerate() {
            let n = toy_pairs().iter().skip(si * 20).take(20).filter(|p| !p.held_out).count();
            assert_eq!(n, 16);
        }
    }
}
