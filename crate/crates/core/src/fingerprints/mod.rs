//! Circular, path and structural-key fingerprints with Tanimoto similarity.
//!
//! All hashing is 64-bit FNV-1a over little-endian `u32` fields, so bit
//! positions are reproducible in any language. Fingerprints are computed on
//! the aromatized form of a molecule; bond codes are 1/2/3 for single,
//! double, triple and 4 for aromatic.

mod keys;

use std::fmt;

use thiserror::Error;

use crate::molstring::Molecule;
use crate::par::{self, Exec};

pub use keys::{Key, KeySet, KeyView};

pub const DEFAULT_NBITS: usize = 2048;
pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_MAX_LEN: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprints come from different schemes: {0} vs {1}")]
    SchemeMismatch(String, String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed fingerprint text: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scheme {
    Circular { radius: u32 },
    Path { max_len: u32 },
    Keys { set: String },
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Circular { radius } => write!(f, "circ{radius}"),
            Scheme::Path { max_len } => write!(f, "path{max_len}"),
            Scheme::Keys { set } => write!(f, "keys-{set}"),
        }
    }
}

impl Scheme {
    fn parse(tag: &str) -> Option<Scheme> {
        if let Some(set) = tag.strip_prefix("keys-") {
            return (!set.is_empty()).then(|| Scheme::Keys { set: set.to_owned() });
        }
        if let Some(r) = tag.strip_prefix("circ") {
            return r.parse().ok().map(|radius| Scheme::Circular { radius });
        }
        tag.strip_prefix("path")?.parse().ok().map(|max_len| Scheme::Path { max_len })
    }
}

/// Fixed-width bit vector tagged with the scheme that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FingerprintBitset {
    scheme: Scheme,
    nbits: usize,
    words: Vec<u64>,
}

impl FingerprintBitset {
    pub fn empty(scheme: Scheme, nbits: usize) -> Self {
        FingerprintBitset { scheme, nbits, words: vec![0; nbits.div_ceil(64)] }
    }

    /// Builds a bitset from explicit positions; positions wrap modulo `nbits`.
    pub fn from_bits(scheme: Scheme, nbits: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::empty(scheme, nbits);
        for b in bits {
            fp.set(b % nbits);
        }
        fp
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Set positions in increasing order.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.nbits).filter(|&i| self.get(i)).collect()
    }

    /// True when every bit of `self` is also set in `other`.
    pub fn is_subset(&self, other: &FingerprintBitset) -> bool {
        self.words.len() == other.words.len() && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// `tag/nbits:hex`, bytes in little-endian order with bit 0 as the low bit
    /// of the first byte.
    pub fn to_hex(&self) -> String {
        let mut out = format!("{}/{}:", self.scheme, self.nbits);
        for i in 0..self.nbits.div_ceil(8) {
            let byte = (self.words[i / 8] >> ((i % 8) * 8)) as u8;
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn from_hex(text: &str) -> Result<Self, FingerprintError> {
        let bad = || FingerprintError::Malformed(text.to_owned());
        let (head, hex) = text.split_once(':').ok_or_else(bad)?;
        let (tag, nbits) = head.split_once('/').ok_or_else(bad)?;
        let scheme = Scheme::parse(tag).ok_or_else(bad)?;
        let nbits: usize = nbits.parse().map_err(|_| bad())?;
        if nbits == 0 || hex.len() != nbits.div_ceil(8) * 2 || !hex.is_ascii() {
            return Err(bad());
        }
        let mut fp = Self::empty(scheme, nbits);
        for i in 0..nbits.div_ceil(8) {
            let byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
            fp.words[i / 8] |= (byte as u64) << ((i % 8) * 8);
        }
        if (nbits..fp.words.len() * 64).any(|i| fp.get(i)) {
            return Err(bad());
        }
        Ok(fp)
    }
}

/// |a ∧ b| / |a ∨ b|; two empty bitsets are identical (1.0).
pub fn tanimoto(a: &FingerprintBitset, b: &FingerprintBitset) -> Result<f64, FingerprintError> {
    if a.scheme != b.scheme || a.nbits != b.nbits {
        return Err(FingerprintError::SchemeMismatch(
            format!("{}/{}", a.scheme, a.nbits),
            format!("{}/{}", b.scheme, b.nbits),
        ));
    }
    let (mut and, mut or) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        and += (x & y).count_ones();
        or += (x | y).count_ones();
    }
    Ok(if or == 0 { 1.0 } else { and as f64 / or as f64 })
}

/// 64-bit FNV-1a over little-endian `u32` fields.
#[derive(Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn write_u32(&mut self, v: u32) {
        for byte in v.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    /// Low half first.
    pub fn write_u64(&mut self, v: u64) {
        self.write_u32(v as u32);
        self.write_u32((v >> 32) as u32);
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a_u32s(fields: &[u32]) -> u64 {
    let mut h = Fnv1a::default();
    for &f in fields {
        h.write_u32(f);
    }
    h.finish()
}

fn check_nbits(nbits: usize) -> Result<(), FingerprintError> {
    if nbits.is_power_of_two() {
        Ok(())
    } else {
        Err(FingerprintError::InvalidParameter(format!("nbits {nbits} is not a power of two")))
    }
}

/// Radius-0 atom invariant: element, charge, degree, hydrogens.
pub fn atom_invariant(m: &Molecule, i: usize) -> u64 {
    let a = m.atom(i);
    fnv1a_u32s(&[
        a.element.atomic_number() as u32,
        a.formal_charge as i32 as u32,
        m.degree(i) as u32,
        a.hydrogens() as u32,
    ])
}

/// Environment identifiers of every atom at radius `0..=radius`,
/// `ids[r][atom]`.
///
/// Radius r > 0 hashes `r`, the atom's own radius r-1 id, then each
/// (bond code, neighbour id at r-1) pair in ascending order.
pub fn circular_ids(m: &Molecule, radius: u32) -> Vec<Vec<u64>> {
    let m = m.aromatized();
    let n = m.num_atoms();
    let mut ids = vec![(0..n).map(|i| atom_invariant(&m, i)).collect::<Vec<u64>>()];
    for r in 1..=radius {
        let prev = &ids[r as usize - 1];
        let next = (0..n)
            .map(|i| {
                let mut env: Vec<(u32, u64)> =
                    m.neighbors(i).iter().map(|&(j, b)| (m.bond(b).order.code(), prev[j])).collect();
                env.sort_unstable();
                let mut h = Fnv1a::default();
                h.write_u32(r);
                h.write_u64(prev[i]);
                for (code, id) in env {
                    h.write_u32(code);
                    h.write_u64(id);
                }
                h.finish()
            })
            .collect();
        ids.push(next);
    }
    ids
}

pub fn circular_fp(m: &Molecule, radius: u32, nbits: usize) -> Result<FingerprintBitset, FingerprintError> {
    if radius > 4 {
        return Err(FingerprintError::InvalidParameter(format!("radius {radius} outside 0..=4")));
    }
    check_nbits(nbits)?;
    let bits = circular_ids(m, radius).into_iter().flatten().map(|id| (id % nbits as u64) as usize);
    Ok(FingerprintBitset::from_bits(Scheme::Circular { radius }, nbits, bits))
}

/// Hash inputs of every simple path of `1..=max_len` bonds, one entry per
/// undirected path.
///
/// A traversal is serialized as the bond count, then element and charge of
/// the first atom, then (bond code, element, charge) per step. Of the two
/// traversal directions the lexicographically smaller field list is kept.
pub fn path_keys(m: &Molecule, max_len: u32) -> Vec<Vec<u32>> {
    let m = m.aromatized();
    let n = m.num_atoms();
    let fields = |i: usize| {
        let a = m.atom(i);
        [a.element.atomic_number() as u32, a.formal_charge as i32 as u32]
    };
    let serialize = |atoms: &[usize], bonds: &[usize], rev: bool| {
        let k = bonds.len();
        let at = |t: usize| if rev { atoms[k - t] } else { atoms[t] };
        let bd = |t: usize| if rev { bonds[k - 1 - t] } else { bonds[t] };
        let mut out = vec![k as u32];
        out.extend(fields(at(0)));
        for t in 0..k {
            out.push(m.bond(bd(t)).order.code());
            out.extend(fields(at(t + 1)));
        }
        out
    };

    let mut out = Vec::new();
    let mut atoms = Vec::new();
    let mut bonds = Vec::new();
    let mut on_path = vec![false; n];
    fn walk(
        m: &Molecule,
        max_len: usize,
        atoms: &mut Vec<usize>,
        bonds: &mut Vec<usize>,
        on_path: &mut [bool],
        emit: &mut dyn FnMut(&[usize], &[usize]),
    ) {
        let last = *atoms.last().unwrap();
        for &(next, b) in m.neighbors(last) {
            if on_path[next] {
                continue;
            }
            atoms.push(next);
            bonds.push(b);
            // Each undirected path is seen from both ends; keep the one that
            // starts at the lower atom index.
            if atoms[0] < next {
                emit(atoms, bonds);
            }
            if bonds.len() < max_len {
                on_path[next] = true;
                walk(m, max_len, atoms, bonds, on_path, emit);
                on_path[next] = false;
            }
            atoms.pop();
            bonds.pop();
        }
    }
    let mut emit = |a: &[usize], b: &[usize]| {
        let fwd = serialize(a, b, false);
        let rev = serialize(a, b, true);
        out.push(fwd.min(rev));
    };
    for start in 0..n {
        atoms.push(start);
        on_path[start] = true;
        walk(&m, max_len as usize, &mut atoms, &mut bonds, &mut on_path, &mut emit);
        on_path[start] = false;
        atoms.pop();
    }
    out
}

pub fn path_fp(m: &Molecule, max_len: u32, nbits: usize) -> Result<FingerprintBitset, FingerprintError> {
    if !(1..=7).contains(&max_len) {
        return Err(FingerprintError::InvalidParameter(format!("max_len {max_len} outside 1..=7")));
    }
    check_nbits(nbits)?;
    let bits = path_keys(m, max_len).into_iter().map(|k| (fnv1a_u32s(&k) % nbits as u64) as usize);
    Ok(FingerprintBitset::from_bits(Scheme::Path { max_len }, nbits, bits))
}

/// Bit k is set iff key k holds.
pub fn key_fp(m: &Molecule, keys: &KeySet) -> FingerprintBitset {
    let view = KeyView::new(m);
    let bits = keys.keys().iter().enumerate().filter(|(_, k)| (k.test)(&view)).map(|(i, _)| i);
    FingerprintBitset::from_bits(Scheme::Keys { set: keys.id().to_owned() }, keys.nbits(), bits)
}

/// A fingerprint family with its parameters.
#[derive(Debug, Clone)]
pub enum FpSpec {
    Circular { radius: u32, nbits: usize },
    Path { max_len: u32, nbits: usize },
    Keys(KeySet),
}

impl FpSpec {
    pub fn morgan() -> Self {
        FpSpec::Circular { radius: DEFAULT_RADIUS, nbits: DEFAULT_NBITS }
    }

    pub fn rdk() -> Self {
        FpSpec::Path { max_len: DEFAULT_MAX_LEN, nbits: DEFAULT_NBITS }
    }

    pub fn maccs() -> Self {
        FpSpec::Keys(KeySet::default_keys())
    }

    /// Parses `circ`, `circN`, `path`, `pathN` or `keys`, default widths.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "circ" | "morgan" => Some(Self::morgan()),
            "path" | "rdk" => Some(Self::rdk()),
            "keys" | "maccs" => Some(Self::maccs()),
            _ => match Scheme::parse(name)? {
                Scheme::Circular { radius } => Some(FpSpec::Circular { radius, nbits: DEFAULT_NBITS }),
                Scheme::Path { max_len } => Some(FpSpec::Path { max_len, nbits: DEFAULT_NBITS }),
                Scheme::Keys { .. } => None,
            },
        }
    }

    pub fn compute(&self, m: &Molecule) -> Result<FingerprintBitset, FingerprintError> {
        match self {
            FpSpec::Circular { radius, nbits } => circular_fp(m, *radius, *nbits),
            FpSpec::Path { max_len, nbits } => path_fp(m, *max_len, *nbits),
            FpSpec::Keys(keys) => Ok(key_fp(m, keys)),
        }
    }

    pub fn compute_many(&self, exec: Exec, mols: &[Molecule]) -> Result<Vec<FingerprintBitset>, FingerprintError> {
        par::map(exec, mols, |m| self.compute(m)).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molstring::parse_smiles;

    fn mol(s: &str) -> Molecule {
        parse_smiles(s).unwrap()
    }

    #[test]
    fn fnv_reference_vector() {
        // FNV-1a 64 of the bytes 01 00 00 00.
        let mut h = Fnv1a::default();
        for b in [1u8, 0, 0, 0] {
            h.0 ^= b as u64;
            h.0 = h.0.wrapping_mul(0x100000001b3);
        }
        assert_eq!(fnv1a_u32s(&[1]), h.finish());
        assert_eq!(fnv1a_u32s(&[]), 0xcbf29ce484222325);
    }

    #[test]
    fn hand_enumerated_counts() {
        assert_eq!(circular_fp(&mol("C"), 0, 2048).unwrap().count_ones(), 1);
        assert_eq!(circular_fp(&mol("c1ccccc1"), 1, 2048).unwrap().count_ones(), 2);
        assert_eq!(path_fp(&mol("CC"), 7, 2048).unwrap().count_ones(), 1);
        assert_eq!(path_fp(&mol("CCO"), 1, 2048).unwrap().count_ones(), 2);
    }

    #[test]
    fn tanimoto_examples() {
        let s = Scheme::Path { max_len: 7 };
        let a = FingerprintBitset::from_bits(s.clone(), 64, [1, 2, 3]);
        let b = FingerprintBitset::from_bits(s.clone(), 64, [3, 4]);
        let c = FingerprintBitset::from_bits(s.clone(), 64, [10]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.25);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let e = FingerprintBitset::empty(s.clone(), 64);
        assert_eq!(tanimoto(&e, &e).unwrap(), 1.0);
        let other = FingerprintBitset::from_bits(Scheme::Circular { radius: 2 }, 64, [1]);
        assert!(matches!(tanimoto(&a, &other), Err(FingerprintError::SchemeMismatch(..))));
    }

    #[test]
    fn hex_roundtrip() {
        let fp = circular_fp(&mol("Cc1ccc(O)cc1"), 2, 2048).unwrap();
        let hex = fp.to_hex();
        assert!(hex.starts_with("circ2/2048:"));
        assert_eq!(FingerprintBitset::from_hex(&hex).unwrap(), fp);
        let small = FingerprintBitset::from_bits(Scheme::Keys { set: "default".into() }, 16, [0, 9]);
        assert_eq!(small.to_hex(), "keys-default/16:0102");
        assert!(FingerprintBitset::from_hex("circ2/2048:zz").is_err());
    }

    #[test]
    fn parameter_checks() {
        assert!(circular_fp(&mol("C"), 5, 2048).is_err());
        assert!(circular_fp(&mol("C"), 2, 1000).is_err());
        assert!(path_fp(&mol("C"), 0, 2048).is_err());
        assert!(path_fp(&mol("C"), 8, 2048).is_err());
    }
}
