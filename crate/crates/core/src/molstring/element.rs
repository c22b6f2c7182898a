use std::fmt;

const SYMBOLS: [&str; 119] = [
    "", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// A chemical element, stored as its atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=118).contains(&z).then_some(Element(z))
    }

    pub fn from_symbol(sym: &str) -> Option<Element> {
        SYMBOLS
            .iter()
            .position(|s| !s.is_empty() && *s == sym)
            .map(|z| Element(z as u8))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize]
    }

    /// Members of the SMILES organic subset (writable without brackets).
    pub fn is_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }

    /// Elements allowed to carry the aromatic flag.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16)
    }

    pub fn is_halogen(self) -> bool {
        matches!(self.0, 9 | 17 | 35 | 53)
    }

    /// Allowed valence states for a charge-neutral atom, ascending.
    fn neutral_valences(z: i32) -> Option<&'static [u8]> {
        Some(match z {
            0 => &[0],
            1 => &[1],
            2 | 10 | 18 | 36 | 54 | 86 => &[0],
            3 | 11 | 19 | 37 | 55 => &[1],
            4 | 12 | 20 | 38 | 56 => &[2],
            5 | 13 => &[3],
            6 | 14 | 32 => &[4],
            7 => &[3],
            8 => &[2],
            9 | 17 | 35 | 53 => &[1],
            15 | 33 | 51 => &[3, 5],
            16 | 34 | 52 => &[2, 4, 6],
            _ => return None,
        })
    }

    /// Allowed valence states (total bond order plus hydrogens) for this element
    /// at a given formal charge, using the isoelectronic neighbour's table.
    /// `None` means the element is outside the table and is not checked.
    pub fn valences(self, charge: i8) -> Option<&'static [u8]> {
        let z = self.0 as i32 - charge as i32;
        if z <= 0 {
            return Some(&[0]);
        }
        // Anions shifted past a noble gas would borrow the next period's table.
        let is_noble = |z: i32| matches!(z, 2 | 10 | 18 | 36 | 54 | 86);
        let own = self.0 as i32;
        if charge < 0 && (own..z).any(is_noble) {
            return None;
        }
        Element::neutral_valences(z)
    }

    pub fn max_valence(self, charge: i8) -> Option<u8> {
        self.valences(charge).and_then(|v| v.last().copied())
    }

    /// Lowest allowed valence that accommodates `used`, or `None` when even the
    /// highest one is exceeded (or the element is unknown to the table).
    pub fn target_valence(self, charge: i8, used: u32) -> Option<u8> {
        self.valences(charge)?
            .iter()
            .copied()
            .find(|&v| v as u32 >= used)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
