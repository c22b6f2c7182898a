use std::collections::BTreeMap;

use super::element::Element;
use super::graph::{Atom, BondOrder, BondStereo, Chirality, MolBuilder, Molecule};
use super::ParseError;

#[derive(Clone, Copy)]
struct PendingBond {
    order: Option<BondOrder>,
    stereo: BondStereo,
    pos: usize,
}

struct OpenRing {
    atom: usize,
    bond: PendingBond,
    /// Index into the opener's written-neighbour list reserved for the partner.
    slot: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    mol: MolBuilder,
    /// Neighbours of each atom in the order they are written.
    written: Vec<Vec<usize>>,
    had_prev: Vec<bool>,
}

pub(crate) fn parse(text: &str) -> Result<Molecule, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        mol: MolBuilder::new(),
        written: Vec::new(),
        had_prev: Vec::new(),
    };
    p.run()?;
    let Parser { mut mol, written, had_prev, .. } = p;
    for (i, order) in written.into_iter().enumerate() {
        if mol.atom(i).chirality != Chirality::None {
            mol.set_chiral_ref(i, order, usize::from(had_prev[i]));
        }
    }
    mol.finish()
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn lex_err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Lex { pos: self.pos, msg: msg.into() }
    }

    fn syntax_err(&self, pos: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { pos, msg: msg.into() }
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<PendingBond> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut rings: BTreeMap<u16, OpenRing> = BTreeMap::new();
        // True right after '(' or '.', where a bond symbol or atom must follow.
        let mut fresh_branch = false;

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let p = prev.ok_or_else(|| self.syntax_err(start, "branch without atom"))?;
                    if pending.is_some() {
                        return Err(self.syntax_err(start, "bond before branch"));
                    }
                    branches.push((p, start));
                    self.pos += 1;
                    fresh_branch = true;
                    continue;
                }
                b')' => {
                    let (p, _) = branches.pop().ok_or_else(|| self.syntax_err(start, "unbalanced ')'"))?;
                    if pending.is_some() || fresh_branch {
                        return Err(self.syntax_err(start, "empty branch or dangling bond"));
                    }
                    prev = Some(p);
                    self.pos += 1;
                    continue;
                }
                b'.' => {
                    if pending.is_some() || fresh_branch {
                        return Err(self.syntax_err(start, "dot after bond"));
                    }
                    if !branches.is_empty() {
                        return Err(self.syntax_err(start, "dot inside branch"));
                    }
                    prev = None;
                    self.pos += 1;
                    continue;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() {
                        return Err(self.syntax_err(start, "two bond symbols"));
                    }
                    if prev.is_none() {
                        return Err(self.syntax_err(start, "bond without preceding atom"));
                    }
                    let (order, stereo) = match c {
                        b'-' => (Some(BondOrder::Single), BondStereo::None),
                        b'=' => (Some(BondOrder::Double), BondStereo::None),
                        b'#' => (Some(BondOrder::Triple), BondStereo::None),
                        b':' => (Some(BondOrder::Aromatic), BondStereo::None),
                        b'/' => (Some(BondOrder::Single), BondStereo::Up),
                        _ => (Some(BondOrder::Single), BondStereo::Down),
                    };
                    pending = Some(PendingBond { order, stereo, pos: start });
                    self.pos += 1;
                    continue;
                }
                b'0'..=b'9' | b'%' => {
                    let label = self.ring_label()?;
                    let atom = prev.ok_or_else(|| self.syntax_err(start, "ring bond without atom"))?;
                    if fresh_branch {
                        return Err(self.syntax_err(start, "ring bond at branch start"));
                    }
                    let bond = pending.take().unwrap_or(PendingBond {
                        order: None,
                        stereo: BondStereo::None,
                        pos: start,
                    });
                    match rings.remove(&label) {
                        None => {
                            self.written[atom].push(usize::MAX);
                            let slot = self.written[atom].len() - 1;
                            rings.insert(label, OpenRing { atom, bond, slot });
                        }
                        Some(open) => self.close_ring(open, atom, bond, start)?,
                    }
                    continue;
                }
                _ => {}
            }

            let atom = self.atom()?;
            let idx = self.mol.add_atom(atom);
            self.written.push(Vec::new());
            self.had_prev.push(prev.is_some());
            if let Some(p) = prev {
                let bond = pending.take().unwrap_or(PendingBond {
                    order: None,
                    stereo: BondStereo::None,
                    pos: start,
                });
                let order = bond.order.unwrap_or_else(|| self.default_order(p, idx));
                self.mol.add_bond(p, idx, order, bond.stereo);
                self.written[p].push(idx);
                self.written[idx].push(p);
            }
            prev = Some(idx);
            fresh_branch = false;
        }

        if let Some((_, pos)) = branches.last() {
            return Err(ParseError::UnclosedBranch { pos: *pos });
        }
        if pending.is_some() || fresh_branch {
            return Err(self.syntax_err(self.src.len(), "input ends inside a bond"));
        }
        if let Some((&label, _)) = rings.iter().next() {
            return Err(ParseError::UnclosedRing { label });
        }
        if self.mol.num_atoms() == 0 {
            return Err(ParseError::EmptyInput);
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.mol.atom(a).aromatic && self.mol.atom(b).aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn close_ring(&mut self, open: OpenRing, atom: usize, bond: PendingBond, pos: usize) -> Result<(), ParseError> {
        if open.atom == atom {
            return Err(self.syntax_err(pos, "ring bond to itself"));
        }
        if self.mol.find_bond(open.atom, atom).is_some() {
            return Err(self.syntax_err(pos, "duplicate bond"));
        }
        let order = match (open.bond.order, bond.order) {
            (Some(a), Some(b)) if a != b => {
                return Err(self.syntax_err(bond.pos, "conflicting ring bond orders"));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => self.default_order(open.atom, atom),
        };
        // Marks at either digit are read from that digit's atom towards its partner;
        // stored relative to opener -> closer.
        let stereo = match (open.bond.stereo, bond.stereo) {
            (BondStereo::None, s) => BondStereo::from_sign(-s.sign()),
            (s, _) => s,
        };
        self.mol.add_bond(open.atom, atom, order, stereo);
        self.written[open.atom][open.slot] = atom;
        self.written[atom].push(open.atom);
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u16, ParseError> {
        let c = self.peek().unwrap();
        if c == b'%' {
            let digits = self.src.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u16)
                }
                _ => Err(self.lex_err("'%' needs two digits")),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u16)
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let c = self.peek().unwrap();
        if c == b'[' {
            return self.bracket_atom();
        }
        let two = self.src.get(self.pos..self.pos + 2);
        let (element, aromatic, len) = match (c, two) {
            (b'C', Some(b"Cl")) => (Element::CL, false, 2),
            (b'B', Some(b"Br")) => (Element::BR, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            (b'*', _) => return Err(self.lex_err("wildcard atoms are not supported")),
            (b'$', _) => return Err(self.lex_err("quadruple bonds are not supported")),
            _ => return Err(self.lex_err(format!("unexpected character {:?}", c as char))),
        };
        self.pos += len;
        let mut atom = Atom::organic(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn bracket_atom(&mut self) -> Result<Atom, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let mut isotope = None;
        let digits = self.number(4);
        if let Some(n) = digits {
            if n == 0 {
                return Err(self.lex_err("isotope must be positive"));
            }
            isotope = Some(n as u16);
        }

        let (element, aromatic) = self.bracket_symbol()?;
        let mut atom = Atom::bracket(element, 0, 0);
        atom.aromatic = aromatic;
        atom.isotope = isotope;

        if self.peek() == Some(b'@') {
            self.pos += 1;
            atom.chirality = if self.peek() == Some(b'@') {
                self.pos += 1;
                Chirality::Cw
            } else {
                Chirality::Ccw
            };
            if matches!(self.peek(), Some(b'A'..=b'Z')) && self.peek() != Some(b'H') {
                return Err(self.lex_err("only @ and @@ chirality is supported"));
            }
        }

        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = match self.peek() {
                Some(d @ b'0'..=b'9') => {
                    self.pos += 1;
                    d - b'0'
                }
                _ => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let s = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.number(2) {
                charge = s * n as i32;
            } else {
                charge = s;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += s;
                }
            }
        }
        if !(-4..=4).contains(&charge) {
            return Err(ParseError::Syntax { pos: open, msg: format!("charge {charge} out of range") });
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number(6).is_none() {
                return Err(self.lex_err("atom class needs digits"));
            }
        }
        if self.peek() != Some(b']') {
            return Err(self.lex_err("expected ']'"));
        }
        self.pos += 1;
        atom.explicit_h = Some(h);
        atom.formal_charge = charge as i8;
        Ok(atom)
    }

    fn bracket_symbol(&mut self) -> Result<(Element, bool), ParseError> {
        let rest = &self.src[self.pos..];
        let Some(&first) = rest.first() else {
            return Err(self.lex_err("unterminated bracket atom"));
        };
        if first.is_ascii_lowercase() {
            for (sym, e) in [("b", Element::B), ("c", Element::C), ("n", Element::N), ("o", Element::O), ("p", Element::P), ("s", Element::S)] {
                if rest.starts_with(sym.as_bytes()) {
                    // "se"/"as" style aromatic symbols are outside the supported subset.
                    if rest.get(1).is_some_and(u8::is_ascii_lowercase) {
                        break;
                    }
                    self.pos += 1;
                    return Ok((e, true));
                }
            }
            return Err(self.lex_err("unsupported aromatic symbol"));
        }
        if !first.is_ascii_uppercase() {
            return Err(self.lex_err("expected element symbol"));
        }
        if let Some(&second) = rest.get(1) {
            if second.is_ascii_lowercase() {
                let sym = std::str::from_utf8(&rest[..2]).unwrap();
                if let Some(e) = Element::from_symbol(sym) {
                    self.pos += 2;
                    return Ok((e, false));
                }
            }
        }
        let sym = std::str::from_utf8(&rest[..1]).unwrap();
        let e = Element::from_symbol(sym).ok_or_else(|| self.lex_err(format!("unknown element {sym}")))?;
        self.pos += 1;
        Ok((e, false))
    }

    fn number(&mut self, max_digits: usize) -> Option<u32> {
        let start = self.pos;
        while self.pos - start < max_digits && self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(s: &str) -> ParseError {
        parse(s).unwrap_err()
    }

    #[test]
    fn methylphenol_shape() {
        let m = parse("Cc1ccc(O)cc1").unwrap();
        assert_eq!(m.heavy_atom_count(), 8);
        assert_eq!(m.atoms().iter().filter(|a| a.element == Element::O).count(), 1);
        assert_eq!(m.cyclomatic_number(), 1);
        assert_eq!(m.atoms().iter().filter(|a| a.aromatic).count(), 6);
    }

    #[test]
    fn error_kinds() {
        assert_eq!(err(""), ParseError::EmptyInput);
        assert_eq!(err("C("), ParseError::UnclosedBranch { pos: 1 });
        assert_eq!(err("C1CC"), ParseError::UnclosedRing { label: 1 });
        assert_eq!(err("c1ccc1"), ParseError::KekulizationFailure);
        assert_eq!(err("C(C)(C)(C)(C)C"), ParseError::ValenceViolation { atom: 0 });
        assert!(matches!(err("C*"), ParseError::Lex { .. }));
        assert!(matches!(err("C$C"), ParseError::Lex { .. }));
        assert!(matches!(err("C)"), ParseError::Syntax { .. }));
        assert!(matches!(err("[C+5]"), ParseError::Syntax { .. }));
    }

    #[test]
    fn hydrogens_and_charges() {
        let m = parse("[NH4+].[O-]C(=O)C").unwrap();
        assert_eq!(m.atom(0).hydrogens(), 4);
        assert_eq!(m.atom(0).formal_charge, 1);
        assert_eq!(m.atom(1).formal_charge, -1);
        assert_eq!(m.num_components(), 2);
        let pyrrole = parse("c1cc[nH]c1").unwrap();
        assert_eq!(pyrrole.atom(3).hydrogens(), 1);
        assert_eq!(pyrrole.atom(0).hydrogens(), 1);
        let dmso = parse("CS(=O)C").unwrap();
        assert_eq!(dmso.atom(1).hydrogens(), 0);
        let phosphate = parse("OP(=O)(O)O").unwrap();
        assert_eq!(phosphate.atom(1).hydrogens(), 0);
    }

    #[test]
    fn percent_ring_labels_and_ring_bond_orders() {
        let a = parse("C%12CCCCC%12").unwrap();
        assert_eq!(a.num_bonds(), 6);
        let b = parse("C=1CCCCC1").unwrap();
        assert_eq!(b.bonds().iter().filter(|x| x.order == BondOrder::Double).count(), 1);
        assert!(matches!(err("C=1CCCCC#1"), ParseError::Syntax { .. }));
        assert!(matches!(err("C11"), ParseError::Syntax { .. }));
    }

    #[test]
    fn furan_thiophene_and_fused_rings_parse() {
        for s in ["c1ccoc1", "c1ccsc1", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1", "O=c1cccc[nH]1", "c1ccncc1", "c1cc2ccc3cccc4ccc(c1)c2c34"] {
            parse(s).unwrap_or_else(|e| panic!("{s}: {e}"));
        }
    }
}
