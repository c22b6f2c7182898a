//! SMILES and SELFIES parsing, validation, canonical writing and interconversion.

mod canon;
mod element;
mod graph;
mod parse;
mod rings;
mod selfies;
mod stereo;
mod write;

use thiserror::Error;

pub use element::Element;
pub use graph::{Atom, Bond, BondOrder, BondStereo, Chirality, Molecule};
pub use selfies::{
    decode_selfies, decode_tokens, encode_selfies, fuzz_alphabet, split_selfies, SelfiesError, SelfiesTokens,
    INDEX_ALPHABET, NO_ATOMS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("bad token at {pos}: {msg}")]
    Lex { pos: usize, msg: String },
    #[error("unclosed branch opened at {pos}")]
    UnclosedBranch { pos: usize },
    #[error("unclosed ring bond {label}")]
    UnclosedRing { label: u16 },
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("valence violation on atom {atom}")]
    ValenceViolation { atom: usize },
    #[error("aromatic system has no Kekule assignment")]
    KekulizationFailure,
}

/// Parses a SMILES string into a validated molecule.
pub fn parse_smiles(text: &str) -> Result<Molecule, ParseError> {
    parse::parse(text)
}

/// Writes SMILES. With `canonical`, the output depends only on the molecular
/// graph (including stereo), never on input atom order.
pub fn write_smiles(m: &Molecule, canonical: bool) -> String {
    if canonical {
        canon::canonical_smiles(m)
    } else {
        write::write_in_atom_order(m)
    }
}

/// Removes chirality and directional bond marks.
pub fn strip_stereo(m: &Molecule) -> Molecule {
    m.without_stereo()
}

/// Parse then canonicalize; `None` when the text does not parse.
pub fn canonicalize(text: &str) -> Option<String> {
    parse_smiles(text).ok().map(|m| write_smiles(&m, true))
}
