//! SELFIES-style token strings.
//!
//! Decoding is a derivation state machine whose state is the remaining bond
//! capacity of the current atom, so any token sequence yields a molecule that
//! respects the valence table. Branch and ring lengths are written with index
//! tokens read as base-16 digits over [`INDEX_ALPHABET`].

use std::fmt;

use thiserror::Error;

use super::element::Element;
use super::graph::{Atom, BondOrder, BondStereo, MolBuilder, Molecule};

/// Index tokens in digit order (value 0..=15).
pub const INDEX_ALPHABET: [&str; 16] = [
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]", "[=Branch2]",
    "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]", "[#C]", "[S]", "[P]",
];

/// Capacity assumed for elements outside the valence table.
const UNKNOWN_CAPACITY: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelfiesError {
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("decode failure: {reason}")]
    DecodeFailure { reason: String },
}

/// Reason attached to [`SelfiesError::DecodeFailure`] when nothing was derived.
pub const NO_ATOMS: &str = "no atoms derived";

/// An ordered list of bracket tokens.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SelfiesTokens(pub Vec<String>);

impl SelfiesTokens {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for SelfiesTokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Splits text into `[...]` tokens. Text outside brackets becomes its own
/// token, which the decoder skips.
pub fn split_selfies(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        if rest.starts_with('[') {
            match rest.find(']') {
                Some(end) => {
                    out.push(rest[..=end].to_string());
                    rest = &rest[end + 1..];
                }
                None => {
                    out.push(rest.to_string());
                    break;
                }
            }
        } else {
            let end = rest.find('[').unwrap_or(rest.len());
            out.push(rest[..end].to_string());
            rest = &rest[end..];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Atom { order: u32, atom: Atom, capacity: u32 },
    Branch { order: u32, digits: usize },
    Ring { order: u32, digits: usize },
    Eos,
    Skip,
}

fn bond_prefix(body: &str) -> (u32, &str) {
    if let Some(b) = body.strip_prefix('=') {
        (2, b)
    } else if let Some(b) = body.strip_prefix('#') {
        (3, b)
    } else {
        (1, body)
    }
}

fn classify(tok: &str) -> Token {
    let Some(body) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) else {
        return Token::Skip;
    };
    match body {
        "EOS" => return Token::Eos,
        "nop" => return Token::Skip,
        _ => {}
    }
    let (order, rest) = bond_prefix(body);
    for (name, is_branch) in [("Branch", true), ("Ring", false)] {
        if let Some(k) = rest.strip_prefix(name) {
            return match k {
                "1" | "2" | "3" => {
                    let digits = k.parse().unwrap();
                    if is_branch {
                        Token::Branch { order, digits }
                    } else {
                        Token::Ring { order, digits }
                    }
                }
                _ => Token::Skip,
            };
        }
    }
    parse_atom_body(rest).map_or(Token::Skip, |(atom, capacity)| Token::Atom { order, atom, capacity })
}

/// Atom body: a bare organic symbol, or `{isotope}{symbol}{@...}H{n}{+n|-n}`.
fn parse_atom_body(body: &str) -> Option<(Atom, u32)> {
    if let Some(e) = Element::from_symbol(body).filter(|e| e.is_organic_subset()) {
        let cap = e.max_valence(0).map_or(UNKNOWN_CAPACITY, u32::from);
        return Some((Atom::organic(e), cap));
    }
    let b = body.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let isotope: Option<u16> = if i > 0 { Some(body[..i].parse().ok().filter(|&v| v > 0)?) } else { None };
    let start = i;
    if i >= b.len() || !b[i].is_ascii_uppercase() {
        return None;
    }
    i += 1;
    if i < b.len() && b[i].is_ascii_lowercase() {
        i += 1;
    }
    let element = Element::from_symbol(&body[start..i])?;
    while i < b.len() && b[i] == b'@' {
        i += 1;
    }
    let mut h = 0u8;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        let d0 = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        h = if i == d0 { 1 } else { body[d0..i].parse().ok().filter(|&v| v <= 9)? };
    }
    let mut charge: i32 = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        i += 1;
        let d0 = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        charge = sign * if i == d0 { 1 } else { body[d0..i].parse::<i32>().ok()? };
    }
    if i != b.len() || !(-4..=4).contains(&charge) {
        return None;
    }
    let mut atom = Atom::bracket(element, h, charge as i8);
    atom.isotope = isotope;
    let cap = match element.max_valence(charge as i8) {
        Some(v) => (v as u32).saturating_sub(h as u32),
        None => UNKNOWN_CAPACITY,
    };
    Some((atom, cap))
}

fn index_value(tok: &str) -> u32 {
    INDEX_ALPHABET.iter().position(|t| *t == tok).unwrap_or(0) as u32
}

struct Derivation<'a> {
    tokens: &'a [String],
    cursor: usize,
    atoms: Vec<Atom>,
    capacity: Vec<u32>,
    bonds: Vec<(usize, usize, u32)>,
    rings: Vec<(usize, usize, u32)>,
    stopped: bool,
}

impl Derivation<'_> {
    fn read_index(&mut self, digits: usize, end: usize) -> u32 {
        let mut q = 0u32;
        for _ in 0..digits {
            if self.cursor >= end {
                break;
            }
            q = q * 16 + index_value(&self.tokens[self.cursor]);
            self.cursor += 1;
        }
        q
    }

    fn run(&mut self, end: usize, mut state: Option<u32>, mut prev: Option<usize>) {
        while state.is_none_or(|s| s > 0) && self.cursor < end && !self.stopped {
            let tok = classify(&self.tokens[self.cursor]);
            self.cursor += 1;
            match tok {
                Token::Eos => self.stopped = true,
                Token::Skip => {}
                Token::Branch { order, digits } => {
                    let Some(s) = state.filter(|&s| s > 1) else { continue };
                    let q = self.read_index(digits, end) as usize;
                    let init = (s - 1).min(order);
                    let branch_end = end.min(self.cursor + q + 1);
                    self.run(branch_end, Some(init), prev);
                    if !self.stopped {
                        self.cursor = self.cursor.max(branch_end);
                    }
                    state = Some(s - init);
                }
                Token::Ring { order, digits } => {
                    let (Some(s), Some(p)) = (state, prev) else { continue };
                    let q = self.read_index(digits, end) as usize;
                    let ring_order = order.min(s);
                    self.rings.push((p.saturating_sub(q + 1), p, ring_order));
                    state = Some(s - ring_order);
                }
                Token::Atom { order, atom, capacity } => match (state, prev) {
                    (Some(s), Some(p)) => {
                        if capacity == 0 {
                            continue;
                        }
                        let bo = order.min(s).min(capacity);
                        let idx = self.push_atom(atom, capacity);
                        self.bonds.push((p, idx, bo));
                        state = Some(capacity - bo);
                        prev = Some(idx);
                    }
                    _ => {
                        let idx = self.push_atom(atom, capacity);
                        state = Some(capacity);
                        prev = Some(idx);
                    }
                },
            }
        }
    }

    fn push_atom(&mut self, atom: Atom, capacity: u32) -> usize {
        self.atoms.push(atom);
        self.capacity.push(capacity);
        self.atoms.len() - 1
    }
}

/// Decodes a token string. Fails only when no atom can be derived.
pub fn decode_selfies(text: &str) -> Result<Molecule, SelfiesError> {
    decode_tokens(&split_selfies(text))
}

pub fn decode_tokens(tokens: &[String]) -> Result<Molecule, SelfiesError> {
    let mut d = Derivation {
        tokens,
        cursor: 0,
        atoms: Vec::new(),
        capacity: Vec::new(),
        bonds: Vec::new(),
        rings: Vec::new(),
        stopped: false,
    };
    d.run(tokens.len(), None, None);
    if d.atoms.is_empty() {
        return Err(SelfiesError::DecodeFailure { reason: NO_ATOMS.into() });
    }

    let n = d.atoms.len();
    let mut used = vec![0u32; n];
    let mut orders: Vec<(usize, usize, u32)> = Vec::new();
    for &(a, b, o) in &d.bonds {
        used[a] += o;
        used[b] += o;
        orders.push((a, b, o));
    }
    for &(a, b, o) in &d.rings {
        if a == b {
            continue;
        }
        let free = (d.capacity[a] - used[a]).min(d.capacity[b] - used[b]);
        let existing = orders.iter().position(|&(x, y, _)| (x == a && y == b) || (x == b && y == a));
        let add = match existing {
            Some(k) => o.min(free).min(3 - orders[k].2),
            None => o.min(free),
        };
        if add == 0 {
            continue;
        }
        match existing {
            Some(k) => orders[k].2 += add,
            None => orders.push((a, b, add)),
        }
        used[a] += add;
        used[b] += add;
    }

    let mut mb = MolBuilder::new();
    for atom in d.atoms {
        mb.add_atom(atom);
    }
    for (a, b, o) in orders {
        mb.add_bond(a, b, BondOrder::from_valence(o), BondStereo::None);
    }
    mb.finish().map_err(|e| SelfiesError::DecodeFailure { reason: format!("derived graph rejected: {e}") })
}

fn atom_token(m: &Molecule, i: usize, order: BondOrder) -> String {
    let a = m.atom(i);
    let prefix = match order {
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        _ => "",
    };
    let used = m.total_bond_order(i);
    let organic_h = a
        .element
        .target_valence(0, used)
        .map(|v| v as u32 - used);
    let organic = a.element.is_organic_subset()
        && a.formal_charge == 0
        && a.isotope.is_none()
        && organic_h == Some(a.hydrogens() as u32);
    if organic {
        return format!("[{prefix}{}]", a.element.symbol());
    }
    let iso = a.isotope.map(|v| v.to_string()).unwrap_or_default();
    let h = a.hydrogens();
    let hpart = if h > 0 || (a.formal_charge == 0 && a.isotope.is_none()) {
        format!("H{h}")
    } else {
        String::new()
    };
    let charge = match a.formal_charge {
        0 => String::new(),
        c if c > 0 => format!("+{c}"),
        c => format!("-{}", -c),
    };
    format!("[{prefix}{iso}{}{hpart}{charge}]", a.element.symbol())
}

fn index_tokens(q: usize, out: &mut Vec<String>) -> usize {
    let digits = if q < 16 {
        1
    } else if q < 256 {
        2
    } else {
        3
    };
    for k in (0..digits).rev() {
        out.push(INDEX_ALPHABET[(q >> (4 * k)) & 15].to_string());
    }
    digits
}

struct Encoder<'a> {
    m: &'a Molecule,
    pre: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<(usize, usize)>>,
    ring_close: Vec<Vec<(usize, usize)>>,
}

impl Encoder<'_> {
    fn emit(&self, u: usize, order: BondOrder, out: &mut Vec<String>) -> Result<(), SelfiesError> {
        out.push(atom_token(self.m, u, order));
        for &(v, b) in &self.ring_close[u] {
            let q = self.pre[u] - self.pre[v] - 1;
            let prefix = match self.m.kekule_order(b) {
                BondOrder::Double => "=",
                BondOrder::Triple => "#",
                _ => "",
            };
            let mut idx = Vec::new();
            let digits = index_tokens(q, &mut idx);
            out.push(format!("[{prefix}Ring{digits}]"));
            out.extend(idx);
        }
        let kids = &self.children[u];
        for (k, &(v, b)) in kids.iter().enumerate() {
            let o = self.m.kekule_order(b);
            if k + 1 == kids.len() {
                self.emit(v, o, out)?;
                continue;
            }
            let mut branch = Vec::new();
            self.emit(v, o, &mut branch)?;
            if branch.len() > 4096 {
                return Err(SelfiesError::UnsupportedFeature("branch longer than 4096 tokens".into()));
            }
            let prefix = match o {
                BondOrder::Double => "=",
                BondOrder::Triple => "#",
                _ => "",
            };
            let mut idx = Vec::new();
            let digits = index_tokens(branch.len() - 1, &mut idx);
            out.push(format!("[{prefix}Branch{digits}]"));
            out.extend(idx);
            out.extend(branch);
        }
        Ok(())
    }
}

/// Encodes a single-fragment, stereo-free molecule.
pub fn encode_selfies(m: &Molecule) -> Result<SelfiesTokens, SelfiesError> {
    if m.num_atoms() == 0 {
        return Err(SelfiesError::UnsupportedFeature("empty molecule".into()));
    }
    if m.num_components() > 1 {
        return Err(SelfiesError::UnsupportedFeature("multiple fragments".into()));
    }
    if m.has_stereo() {
        return Err(SelfiesError::UnsupportedFeature("stereochemistry (strip it first)".into()));
    }
    let n = m.num_atoms();
    let mut enc = Encoder {
        m,
        pre: vec![usize::MAX; n],
        parent: vec![None; n],
        children: vec![Vec::new(); n],
        ring_close: vec![Vec::new(); n],
    };
    // Depth-first tree with neighbours in index order.
    let mut counter = 0;
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    enc.pre[0] = 0;
    counter += 1;
    let mut parent_bond = vec![usize::MAX; n];
    while let Some(top) = stack.last_mut() {
        let u = top.0;
        let nbrs = m.neighbors(u);
        if top.1 == nbrs.len() {
            stack.pop();
            continue;
        }
        let (v, b) = nbrs[top.1];
        top.1 += 1;
        if b == parent_bond[u] {
            continue;
        }
        if enc.pre[v] == usize::MAX {
            enc.pre[v] = counter;
            counter += 1;
            enc.parent[v] = Some(u);
            parent_bond[v] = b;
            enc.children[u].push((v, b));
            stack.push((v, 0));
        } else if enc.pre[v] < enc.pre[u] {
            enc.ring_close[u].push((v, b));
        }
    }
    let mut out = Vec::new();
    enc.emit(0, BondOrder::Single, &mut out)?;
    Ok(SelfiesTokens(out))
}

/// Tokens a robust decoder should tolerate: atoms with all bond prefixes,
/// charged bracket atoms, branches, rings, and control tokens.
pub fn fuzz_alphabet() -> Vec<String> {
    let mut out = Vec::new();
    for sym in ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B"] {
        for p in ["", "=", "#"] {
            out.push(format!("[{p}{sym}]"));
        }
    }
    for body in ["N+1", "O-1", "NH1+1", "C-1", "S+1", "B-1", "Cl-1", "OH0", "CH1", "13C", "Se", "Na+1", "Fe"] {
        out.push(format!("[{body}]"));
        out.push(format!("[={body}]"));
    }
    for kind in ["Branch", "Ring"] {
        for p in ["", "=", "#"] {
            for k in 1..=3 {
                out.push(format!("[{p}{kind}{k}]"));
            }
        }
    }
    out.extend(["[EOS]", "[nop]", "[Xx]", "[Ring9]"].map(String::from));
    out
}
