//! Structural keys: a configurable list of named graph predicates standing in
//! for the 166 SMARTS-defined MACCS keys.

use std::fmt;

use crate::molstring::{BondOrder, Element, Molecule};

/// Precomputed facts shared by all predicates of one molecule.
pub struct KeyView {
    pub mol: Molecule,
    /// Simple cycles of at most 8 atoms.
    pub cycles: Vec<Vec<usize>>,
}

impl KeyView {
    pub fn new(m: &Molecule) -> Self {
        let mol = m.aromatized();
        let cycles = mol.cycles(8);
        KeyView { mol, cycles }
    }

    pub fn count_element(&self, e: Element) -> usize {
        self.mol.atoms().iter().filter(|a| a.element == e).count()
    }

    fn any_atom(&self, f: impl Fn(usize) -> bool) -> bool {
        (0..self.mol.num_atoms()).any(f)
    }

    fn z(&self, i: usize) -> u8 {
        self.mol.atom(i).element.atomic_number()
    }

    fn has_ring_size(&self, k: usize) -> bool {
        self.cycles.iter().any(|c| c.len() == k)
    }

    /// Neighbours of `i` reached through a bond of `order`.
    fn nbrs_by(&self, i: usize, order: BondOrder) -> impl Iterator<Item = usize> + '_ {
        self.mol.neighbors(i).iter().filter(move |&&(_, b)| self.mol.bond(b).order == order).map(|&(n, _)| n)
    }

    fn is_carbonyl_c(&self, i: usize) -> bool {
        self.z(i) == 6 && self.nbrs_by(i, BondOrder::Double).any(|n| self.z(n) == 8)
    }
}

#[derive(Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub test: fn(&KeyView) -> bool,
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

#[derive(Debug, Clone)]
pub struct KeySet {
    id: String,
    keys: Vec<Key>,
}

impl KeySet {
    pub fn new(id: impl Into<String>, keys: Vec<Key>) -> Self {
        KeySet { id: id.into(), keys }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.keys.iter().position(|k| k.name == name)
    }

    /// Smallest power of two that holds every key, at least 64.
    pub fn nbits(&self) -> usize {
        self.keys.len().max(64).next_power_of_two()
    }

    /// The shipped key list, id "default".
    pub fn default_keys() -> Self {
        KeySet::new("default", DEFAULT_KEYS.to_vec())
    }
}

macro_rules! key {
    ($name:literal, $f:expr) => {
        Key { name: $name, test: $f }
    };
}

const DEFAULT_KEYS: &[Key] = &[
    key!("has_boron", |v| v.count_element(Element::B) > 0),
    key!("has_nitrogen", |v| v.count_element(Element::N) > 0),
    key!("has_oxygen", |v| v.count_element(Element::O) > 0),
    key!("has_fluorine", |v| v.count_element(Element::F) > 0),
    key!("has_phosphorus", |v| v.count_element(Element::P) > 0),
    key!("has_sulfur", |v| v.count_element(Element::S) > 0),
    key!("has_chlorine", |v| v.count_element(Element::CL) > 0),
    key!("has_bromine", |v| v.count_element(Element::BR) > 0),
    key!("has_iodine", |v| v.count_element(Element::I) > 0),
    key!("has_halogen", |v| v.any_atom(|i| v.mol.atom(i).element.is_halogen())),
    key!("has_uncommon_element", |v| v.any_atom(|i| !matches!(v.z(i), 1 | 5..=9 | 15..=17 | 35 | 53))),
    key!("has_charge", |v| v.any_atom(|i| v.mol.atom(i).formal_charge != 0)),
    key!("has_positive_charge", |v| v.any_atom(|i| v.mol.atom(i).formal_charge > 0)),
    key!("has_negative_charge", |v| v.any_atom(|i| v.mol.atom(i).formal_charge < 0)),
    key!("multiple_fragments", |v| v.mol.num_components() > 1),
    key!("has_ring", |v| v.mol.cyclomatic_number() > 0),
    key!("two_or_more_rings", |v| v.mol.cyclomatic_number() >= 2),
    key!("three_or_more_rings", |v| v.mol.cyclomatic_number() >= 3),
    key!("has_3_ring", |v| v.has_ring_size(3)),
    key!("has_4_ring", |v| v.has_ring_size(4)),
    key!("has_5_ring", |v| v.has_ring_size(5)),
    key!("has_6_ring", |v| v.has_ring_size(6)),
    key!("has_7_or_8_ring", |v| v.has_ring_size(7) || v.has_ring_size(8)),
    key!("has_aromatic_ring", |v| v.any_atom(|i| v.mol.atom(i).aromatic)),
    key!("aromatic_heteroatom", |v| v.any_atom(|i| v.mol.atom(i).aromatic && v.z(i) != 6)),
    key!("heteroatom_in_ring", |v| v.any_atom(|i| v.z(i) != 6 && v.mol.is_ring_atom(i))),
    key!("fused_rings", |v| {
        let mut seen = vec![0u8; v.mol.num_atoms()];
        v.cycles.iter().any(|c| {
            let shared = c.iter().filter(|&&a| seen[a] > 0).count();
            c.iter().for_each(|&a| seen[a] += 1);
            shared >= 2
        })
    }),
    key!("has_double_bond", |v| v.mol.bonds().iter().any(|b| b.order == BondOrder::Double)),
    key!("has_triple_bond", |v| v.mol.bonds().iter().any(|b| b.order == BondOrder::Triple)),
    key!("carbon_carbon_double", |v| v
        .mol
        .bonds()
        .iter()
        .any(|b| b.order == BondOrder::Double && v.z(b.begin) == 6 && v.z(b.end) == 6)),
    key!("carbonyl", |v| v.any_atom(|i| v.is_carbonyl_c(i))),
    key!("hydroxyl", |v| v.any_atom(|i| v.z(i) == 8 && v.mol.atom(i).hydrogens() == 1 && v.mol.degree(i) == 1)),
    key!("carboxyl", |v| v.any_atom(|i| v.is_carbonyl_c(i)
        && v.nbrs_by(i, BondOrder::Single).any(|n| v.z(n) == 8 && v.mol.degree(n) == 1))),
    key!("amide", |v| v.any_atom(|i| v.is_carbonyl_c(i) && v.nbrs_by(i, BondOrder::Single).any(|n| v.z(n) == 7))),
    key!("ester_or_ether", |v| v.any_atom(|i| v.z(i) == 8
        && !v.mol.atom(i).aromatic
        && v.nbrs_by(i, BondOrder::Single).filter(|&n| v.z(n) == 6).count() == 2)),
    key!("primary_or_secondary_amine", |v| v.any_atom(|i| v.z(i) == 7
        && !v.mol.atom(i).aromatic
        && v.mol.atom(i).hydrogens() >= 1
        && v.mol.neighbors(i).iter().all(|&(n, b)| v.mol.bond(b).order == BondOrder::Single && !v.is_carbonyl_c(n)))),
    key!("nitrile", |v| v.any_atom(|i| v.z(i) == 7 && v.nbrs_by(i, BondOrder::Triple).any(|n| v.z(n) == 6))),
    key!("nitrogen_oxygen_bond", |v| v.mol.bonds().iter().any(|b| {
        let (x, y) = (v.z(b.begin), v.z(b.end));
        (x, y) == (7, 8) || (x, y) == (8, 7)
    })),
    key!("sulfonyl", |v| v.any_atom(|i| v.z(i) == 16 && v.nbrs_by(i, BondOrder::Double).filter(|&n| v.z(n) == 8).count() >= 2)),
    key!("thiol_or_thioether", |v| v.any_atom(|i| v.z(i) == 16
        && !v.mol.atom(i).aromatic
        && v.mol.neighbors(i).iter().all(|&(_, b)| v.mol.bond(b).order == BondOrder::Single))),
    key!("phosphate_like", |v| v.any_atom(|i| v.z(i) == 15 && v.mol.neighbors(i).iter().filter(|&&(n, _)| v.z(n) == 8).count() >= 3)),
    key!("methyl", |v| v.any_atom(|i| v.z(i) == 6 && v.mol.degree(i) == 1 && v.mol.atom(i).hydrogens() == 3)),
    key!("quaternary_carbon", |v| v.any_atom(|i| v.z(i) == 6 && v.mol.degree(i) == 4)),
    key!("two_or_more_nitrogens", |v| v.count_element(Element::N) >= 2),
    key!("three_or_more_oxygens", |v| v.count_element(Element::O) >= 3),
    key!("more_than_10_heavy_atoms", |v| v.mol.heavy_atom_count() > 10),
    key!("more_than_20_heavy_atoms", |v| v.mol.heavy_atom_count() > 20),
    key!("has_isotope", |v| v.any_atom(|i| v.mol.atom(i).isotope.is_some())),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprints::key_fp;
    use crate::molstring::parse_smiles;

    fn on(smiles: &str, key: &str) -> bool {
        let keys = KeySet::default_keys();
        key_fp(&parse_smiles(smiles).unwrap(), &keys).get(keys.position(key).unwrap())
    }

    #[test]
    fn benzene_keys() {
        assert!(on("c1ccccc1", "has_aromatic_ring"));
        assert!(on("c1ccccc1", "has_6_ring"));
        assert!(!on("c1ccccc1", "has_charge"));
        assert!(!on("c1ccccc1", "fused_rings"));
        assert!(on("c1ccc2ccccc2c1", "fused_rings"));
    }

    #[test]
    fn functional_groups() {
        assert!(on("CC(=O)O", "carboxyl"));
        assert!(on("CC(=O)N", "amide"));
        assert!(!on("CC(=O)N", "primary_or_secondary_amine"));
        assert!(on("CCN", "primary_or_secondary_amine"));
        assert!(on("CC#N", "nitrile"));
        assert!(on("CS(=O)(=O)C", "sulfonyl"));
        assert!(on("COC", "ester_or_ether"));
        assert!(on("[Na+].[Cl-]", "multiple_fragments"));
        assert!(on("C[Se]C", "has_uncommon_element"));
    }

    #[test]
    fn empty_set_is_all_zero() {
        let keys = KeySet::new("none", Vec::new());
        let fp = key_fp(&parse_smiles("c1ccccc1").unwrap(), &keys);
        assert_eq!(fp.count_ones(), 0);
        assert_eq!(fp.nbits(), 64);
    }

    #[test]
    fn default_set_size() {
        let keys = KeySet::default_keys();
        assert!(keys.keys().len() >= 40);
        assert_eq!(keys.nbits(), 64);
        let mut names: Vec<_> = keys.keys().iter().map(|k| k.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), keys.keys().len());
    }
}
