use serde::{Deserialize, Serialize};

use super::element::Element;
use super::rings;
use super::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer order for Kekulé bonds; aromatic bonds count as 1 here.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable numeric code used by hashing and canonical invariants.
    pub fn code(self) -> u32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    pub(crate) fn from_valence(v: u32) -> BondOrder {
        match v {
            1 => BondOrder::Single,
            2 => BondOrder::Double,
            _ => BondOrder::Triple,
        }
    }
}

/// Directional single-bond marker, read from `Bond::begin` to `Bond::end`:
/// `Up` is `/`, `Down` is `\`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondStereo {
    None,
    Up,
    Down,
}

impl BondStereo {
    pub(crate) fn sign(self) -> i8 {
        match self {
            BondStereo::None => 0,
            BondStereo::Up => 1,
            BondStereo::Down => -1,
        }
    }

    pub(crate) fn from_sign(s: i8) -> BondStereo {
        match s.signum() {
            1 => BondStereo::Up,
            -1 => BondStereo::Down,
            _ => BondStereo::None,
        }
    }
}

/// Tetrahedral parity. `Ccw` is `@`, `Cw` is `@@`.
///
/// Stored relative to the atom's reference neighbour order: the implicit
/// hydrogen or lone pair (if any) first, then bonded neighbours by ascending
/// atom index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chirality {
    None,
    Ccw,
    Cw,
}

impl Chirality {
    pub(crate) fn flipped(self) -> Chirality {
        match self {
            Chirality::Ccw => Chirality::Cw,
            Chirality::Cw => Chirality::Ccw,
            Chirality::None => Chirality::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// `Some` for bracket atoms, whose hydrogen count is stated explicitly.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    pub chirality: Chirality,
    hydrogens: u8,
}

impl Atom {
    /// Organic-subset atom whose hydrogens are derived from the valence table.
    pub fn organic(element: Element) -> Atom {
        Atom {
            element,
            aromatic: false,
            formal_charge: 0,
            explicit_h: None,
            isotope: None,
            chirality: Chirality::None,
            hydrogens: 0,
        }
    }

    /// Bracket atom with an explicit hydrogen count.
    pub fn bracket(element: Element, hydrogens: u8, charge: i8) -> Atom {
        Atom {
            explicit_h: Some(hydrogens),
            formal_charge: charge,
            ..Atom::organic(element)
        }
    }

    /// Total attached hydrogens (explicit or implicit).
    pub fn hydrogens(&self) -> u8 {
        self.hydrogens
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// Neighbour slot in a stereo ordering: a bonded atom or the implicit H / lone pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    Atom(usize),
    Phantom,
}

/// An immutable, validated molecular graph.
///
/// Every `Molecule` has passed the valence table and, when it carries aromatic
/// flags, admits a Kekulé assignment (kept alongside the stored bond orders).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    kekule: Vec<BondOrder>,
    adj: Vec<Vec<(usize, usize)>>,
    ring_bond: Vec<bool>,
}

impl Molecule {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bond(&self, b: usize) -> &Bond {
        &self.bonds[b]
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbour, bond index)` pairs sorted by neighbour index.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj[a].iter().find(|&&(n, _)| n == b).map(|&(_, bond)| bond)
    }

    /// Kekulé order of a bond (equal to the stored order for non-aromatic bonds).
    pub fn kekule_order(&self, b: usize) -> BondOrder {
        self.kekule[b]
    }

    pub fn is_ring_bond(&self, b: usize) -> bool {
        self.ring_bond[b]
    }

    pub fn is_ring_atom(&self, i: usize) -> bool {
        self.adj[i].iter().any(|&(_, b)| self.ring_bond[b])
    }

    /// Sum of Kekulé bond orders on an atom (hydrogens excluded).
    pub fn total_bond_order(&self, i: usize) -> u32 {
        self.adj[i].iter().map(|&(_, b)| self.kekule[b].valence()).sum()
    }

    /// Number of independent cycles (bonds - atoms + components).
    pub fn cyclomatic_number(&self) -> usize {
        (self.bonds.len() + self.num_components()).saturating_sub(self.atoms.len())
    }

    /// Simple cycles of up to `max_len` atoms, each as an atom sequence
    /// starting at its lowest index.
    pub fn cycles(&self, max_len: usize) -> Vec<Vec<usize>> {
        let allowed: Vec<bool> = (0..self.atoms.len()).map(|i| self.is_ring_atom(i)).collect();
        rings::simple_cycles(&self.adj, &allowed, &self.ring_bond, max_len)
    }

    /// Connected-component label for every atom, numbered by first atom.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.atoms.len()];
        let mut next = 0;
        for start in 0..self.atoms.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn num_components(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Atom indices of each connected component.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let labels = self.component_labels();
        let mut out = vec![Vec::new(); self.num_components()];
        for (i, l) in labels.into_iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Atoms other than hydrogen (explicit `[H]` atoms are not heavy).
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub fn has_stereo(&self) -> bool {
        self.atoms.iter().any(|a| a.chirality != Chirality::None)
            || self.bonds.iter().any(|b| b.stereo != BondStereo::None)
    }

    /// True when the atom takes part in a Kekulé double bond inside its aromatic system.
    pub(crate) fn is_pi_atom(&self, i: usize) -> bool {
        self.atoms[i].aromatic
            && self.adj[i].iter().any(|&(_, b)| {
                self.bonds[b].order == BondOrder::Aromatic && self.kekule[b] == BondOrder::Double
            })
    }

    /// Whether a tetrahedral centre carries an implicit hydrogen or lone pair slot.
    pub(crate) fn has_phantom(&self, i: usize) -> bool {
        self.adj[i].len() == 3
    }

    /// Reference neighbour order that `Atom::chirality` is expressed against.
    pub(crate) fn reference_order(&self, i: usize) -> Vec<Slot> {
        let mut out = Vec::with_capacity(4);
        if self.has_phantom(i) {
            out.push(Slot::Phantom);
        }
        out.extend(self.adj[i].iter().map(|&(n, _)| Slot::Atom(n)));
        out
    }

    /// Copy with all aromatic flags replaced by the stored Kekulé assignment.
    pub fn kekulized(&self) -> Molecule {
        let mut m = self.clone();
        for a in &mut m.atoms {
            a.aromatic = false;
        }
        for (b, k) in m.bonds.iter_mut().zip(&self.kekule) {
            b.order = *k;
        }
        m
    }

    /// Copy with aromaticity re-derived from the Kekulé structure.
    ///
    /// This is the normal form used by canonical writing and fingerprints, so
    /// aromatic and Kekulé spellings of one molecule coincide.
    pub fn aromatized(&self) -> Molecule {
        let (atom_arom, bond_arom) = perceive_aromaticity(&self.atoms, &self.kekule, &self.adj, &self.ring_bond);
        let (atom_arom, bond_arom) = writable_aromatic(&self.atoms, &self.kekule, &self.bonds, &self.adj, atom_arom, bond_arom);
        let mut m = self.clone();
        for (a, f) in m.atoms.iter_mut().zip(&atom_arom) {
            a.aromatic = *f;
        }
        for (i, b) in m.bonds.iter_mut().enumerate() {
            b.order = if bond_arom[i] { BondOrder::Aromatic } else { self.kekule[i] };
        }
        m
    }

    /// Copy with every chirality and directional bond marker removed.
    pub fn without_stereo(&self) -> Molecule {
        let mut m = self.clone();
        for a in &mut m.atoms {
            a.chirality = Chirality::None;
        }
        for b in &mut m.bonds {
            b.stereo = BondStereo::None;
        }
        m
    }

    /// The induced subgraph on `atoms` (ascending indices), renumbered from zero.
    pub fn subgraph(&self, atoms: &[usize]) -> Molecule {
        let mut map = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in atoms.iter().enumerate() {
            map[old] = new;
        }
        debug_assert!(atoms.windows(2).all(|w| w[0] < w[1]), "subgraph atoms must be ascending");
        let mut bonds = Vec::new();
        let mut kekule = Vec::new();
        let mut ring_bond = Vec::new();
        for (i, b) in self.bonds.iter().enumerate() {
            if map[b.begin] != usize::MAX && map[b.end] != usize::MAX {
                bonds.push(Bond { begin: map[b.begin], end: map[b.end], ..b.clone() });
                kekule.push(self.kekule[i]);
                ring_bond.push(self.ring_bond[i]);
            }
        }
        let adj = build_adj(atoms.len(), &bonds);
        Molecule {
            atoms: atoms.iter().map(|&i| self.atoms[i].clone()).collect(),
            bonds,
            kekule,
            adj,
            ring_bond,
        }
    }

    /// Relabels atoms: atom `i` becomes atom `perm[i]`. Bond list order is kept.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let n = self.atoms.len();
        let mut atoms = vec![None; n];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = Some(self.atoms[old].clone());
        }
        let mut atoms: Vec<Atom> = atoms.into_iter().map(|a| a.expect("perm is a bijection")).collect();
        let bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| Bond {
                begin: perm[b.begin],
                end: perm[b.end],
                ..b.clone()
            })
            .collect();
        let adj = build_adj(n, &bonds);
        for old in 0..n {
            let chir = self.atoms[old].chirality;
            if chir == Chirality::None {
                continue;
            }
            // Old reference order, relabelled, versus the new reference order.
            let mapped: Vec<Slot> = self
                .reference_order(old)
                .into_iter()
                .map(|s| match s {
                    Slot::Atom(a) => Slot::Atom(perm[a]),
                    Slot::Phantom => Slot::Phantom,
                })
                .collect();
            let new = perm[old];
            let mut target = Vec::new();
            if self.has_phantom(old) {
                target.push(Slot::Phantom);
            }
            target.extend(adj[new].iter().map(|&(nb, _)| Slot::Atom(nb)));
            atoms[new].chirality = if permutation_is_odd(&mapped, &target) { chir.flipped() } else { chir };
        }
        Molecule {
            atoms,
            bonds,
            kekule: self.kekule.clone(),
            ring_bond: self.ring_bond.clone(),
            adj,
        }
    }
}

pub(crate) fn build_adj(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.begin].push((b.end, i));
        adj[b.end].push((b.begin, i));
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

/// Parity of the permutation taking sequence `a` to sequence `b` (same items).
pub(crate) fn permutation_is_odd<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    let idx: Vec<usize> = b
        .iter()
        .map(|x| a.iter().position(|y| y == x).expect("same items"))
        .collect();
    let mut inversions = 0usize;
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            if idx[i] > idx[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// Incremental molecule construction; `finish` validates and derives hydrogens.
#[derive(Clone, Debug, Default)]
pub(crate) struct MolBuilder {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Neighbour order a chirality mark was written against, with the index at
    /// which an implicit H / lone pair sits in that order.
    chiral_ref: Vec<Option<(Vec<usize>, usize)>>,
}

impl MolBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.chiral_ref.push(None);
        self.atoms.len() - 1
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn add_bond(&mut self, begin: usize, end: usize, order: BondOrder, stereo: BondStereo) -> usize {
        self.bonds.push(Bond { begin, end, order, stereo });
        self.bonds.len() - 1
    }

    pub fn find_bond(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|x| (x.begin == a && x.end == b) || (x.begin == b && x.end == a))
    }

    pub fn set_chiral_ref(&mut self, atom: usize, order: Vec<usize>, phantom_at: usize) {
        self.chiral_ref[atom] = Some((order, phantom_at));
    }

    pub fn finish(self) -> Result<Molecule, ParseError> {
        let MolBuilder { mut atoms, mut bonds, chiral_ref } = self;
        let n = atoms.len();
        for b in &bonds {
            if b.begin == b.end || b.begin >= n || b.end >= n {
                return Err(ParseError::Syntax { pos: 0, msg: "bond to itself".into() });
            }
        }
        let adj = build_adj(n, &bonds);
        for list in &adj {
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(ParseError::Syntax { pos: 0, msg: "duplicate bond".into() });
            }
        }
        let ring_bond = rings::ring_bonds(n, &adj, bonds.len());

        for (i, b) in bonds.iter_mut().enumerate() {
            if b.order != BondOrder::Aromatic {
                continue;
            }
            if !atoms[b.begin].aromatic || !atoms[b.end].aromatic {
                return Err(ParseError::Syntax { pos: 0, msg: "aromatic bond between non-aromatic atoms".into() });
            }
            if !ring_bond[i] {
                b.order = BondOrder::Single;
            }
        }

        // Hydrogens and pi-electron needs.
        let mut pi = vec![false; n];
        for i in 0..n {
            let a = &atoms[i];
            if a.aromatic && !a.element.can_be_aromatic() {
                return Err(ParseError::Syntax { pos: 0, msg: format!("{} cannot be aromatic", a.element) });
            }
            let mut fixed = 0u32;
            let mut n_arom = 0u32;
            for &(_, bi) in &adj[i] {
                match bonds[bi].order {
                    BondOrder::Aromatic => n_arom += 1,
                    o => fixed += o.valence(),
                }
            }
            if a.aromatic && n_arom == 0 {
                return Err(ParseError::KekulizationFailure);
            }
            let (h, needs_pi) = match a.explicit_h {
                None => infer_organic(a.element, a.aromatic, fixed, n_arom).ok_or(ParseError::ValenceViolation { atom: i })?,
                Some(h) => {
                    let used = fixed + n_arom + h as u32;
                    match a.element.valences(a.formal_charge) {
                        None => (h, a.aromatic),
                        Some(_) => {
                            let v = a
                                .element
                                .target_valence(a.formal_charge, used)
                                .ok_or(ParseError::ValenceViolation { atom: i })?;
                            (h, a.aromatic && v as u32 > used)
                        }
                    }
                }
            };
            atoms[i].hydrogens = h;
            pi[i] = needs_pi;
        }

        let kekule = kekulize(&bonds, &adj, &pi).ok_or(ParseError::KekulizationFailure)?;

        for i in 0..n {
            let a = &atoms[i];
            if let Some(max) = a.element.max_valence(a.formal_charge) {
                let total: u32 = adj[i].iter().map(|&(_, b)| kekule[b].valence()).sum::<u32>() + a.hydrogens as u32;
                if total > max as u32 {
                    return Err(ParseError::ValenceViolation { atom: i });
                }
            }
        }

        if atoms.iter().any(|a| a.aromatic) {
            let (perceived, _) = perceive_aromaticity(&atoms, &kekule, &adj, &ring_bond);
            if atoms.iter().zip(&perceived).any(|(a, p)| a.aromatic && !p) {
                return Err(ParseError::KekulizationFailure);
            }
        }

        // Chirality: drop marks on atoms that cannot be tetrahedral centres,
        // re-express the rest against the reference order.
        for i in 0..n {
            if atoms[i].chirality == Chirality::None {
                continue;
            }
            let d = adj[i].len();
            let h = atoms[i].hydrogens as usize;
            let valid = (d == 4 && h == 0) || (d == 3 && h <= 1);
            if !valid {
                atoms[i].chirality = Chirality::None;
                continue;
            }
            if let Some((order, phantom_at)) = &chiral_ref[i] {
                let mut written: Vec<Slot> = order.iter().map(|&x| Slot::Atom(x)).collect();
                let phantom = d == 3;
                if phantom {
                    written.insert((*phantom_at).min(written.len()), Slot::Phantom);
                }
                let mut reference = Vec::new();
                if phantom {
                    reference.push(Slot::Phantom);
                }
                reference.extend(adj[i].iter().map(|&(x, _)| Slot::Atom(x)));
                let same_items = written.len() == reference.len() && reference.iter().all(|s| written.contains(s));
                if !same_items {
                    atoms[i].chirality = Chirality::None;
                } else if permutation_is_odd(&written, &reference) {
                    atoms[i].chirality = atoms[i].chirality.flipped();
                }
            }
        }

        Ok(Molecule { atoms, bonds, kekule, adj, ring_bond })
    }
}

/// Hydrogen count and pi-electron need of an organic-subset atom given the sum
/// of its non-aromatic bond orders and its number of aromatic bonds.
pub(crate) fn infer_organic(element: Element, aromatic: bool, fixed: u32, n_arom: u32) -> Option<(u8, bool)> {
    let used = fixed + n_arom;
    let v = element.target_valence(0, used)? as u32;
    let rem = v - used;
    if aromatic {
        if rem >= 1 {
            Some(((rem - 1) as u8, true))
        } else {
            Some((0, false))
        }
    } else {
        Some((rem as u8, false))
    }
}

/// Perfect matching of pi atoms over aromatic bonds. Returns full Kekulé orders.
fn kekulize(bonds: &[Bond], adj: &[Vec<(usize, usize)>], pi: &[bool]) -> Option<Vec<BondOrder>> {
    let mut orders: Vec<BondOrder> = bonds
        .iter()
        .map(|b| if b.order == BondOrder::Aromatic { BondOrder::Single } else { b.order })
        .collect();
    if !pi.iter().any(|&p| p) {
        return Some(orders);
    }
    let mut mate: Vec<Option<usize>> = vec![None; pi.len()];
    let mut budget = 200_000usize;
    if !match_rec(bonds, adj, pi, &mut mate, &mut budget) {
        return None;
    }
    for (i, m) in mate.iter().enumerate() {
        if let Some(b) = *m {
            if bonds[b].begin == i || bonds[b].end == i {
                orders[b] = BondOrder::Double;
            }
        }
    }
    Some(orders)
}

fn match_rec(
    bonds: &[Bond],
    adj: &[Vec<(usize, usize)>],
    pi: &[bool],
    mate: &mut Vec<Option<usize>>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    // Most constrained unmatched pi atom first.
    let mut best: Option<(usize, usize)> = None;
    for u in 0..pi.len() {
        if !pi[u] || mate[u].is_some() {
            continue;
        }
        let options = adj[u]
            .iter()
            .filter(|&&(v, b)| pi[v] && mate[v].is_none() && bonds[b].order == BondOrder::Aromatic)
            .count();
        if best.is_none_or(|(_, c)| options < c) {
            best = Some((u, options));
            if options <= 1 {
                break;
            }
        }
    }
    let Some((u, options)) = best else {
        return true;
    };
    if options == 0 {
        return false;
    }
    let candidates: Vec<(usize, usize)> = adj[u]
        .iter()
        .copied()
        .filter(|&(v, b)| pi[v] && mate[v].is_none() && bonds[b].order == BondOrder::Aromatic)
        .collect();
    for (v, b) in candidates {
        mate[u] = Some(b);
        mate[v] = Some(b);
        if match_rec(bonds, adj, pi, mate, budget) {
            return true;
        }
        mate[u] = None;
        mate[v] = None;
    }
    false
}

/// Pi-electron contribution of an atom to any ring it sits in, or `None` when
/// the atom cannot be part of an aromatic ring.
fn pi_contribution(
    atom: &Atom,
    i: usize,
    kekule: &[BondOrder],
    adj: &[Vec<(usize, usize)>],
    atoms: &[Atom],
    ring_bond: &[bool],
) -> Option<u32> {
    if !atom.element.can_be_aromatic() || !adj[i].iter().any(|&(_, b)| ring_bond[b]) {
        return None;
    }
    let mut doubles = adj[i].iter().filter(|&&(_, b)| kekule[b] == BondOrder::Double);
    if adj[i].iter().any(|&(_, b)| kekule[b] == BondOrder::Triple) {
        return None;
    }
    match (doubles.next(), doubles.next()) {
        (Some(_), Some(_)) => None,
        (Some(&(nb, b)), None) => {
            if ring_bond[b] {
                Some(1)
            } else if matches!(atoms[nb].element, Element::O | Element::N | Element::S) {
                Some(0)
            } else {
                None
            }
        }
        (None, _) => {
            let conn = adj[i].len() + atom.hydrogens as usize;
            match (atom.element, atom.formal_charge, conn) {
                (Element::N | Element::P, 0, 3) => Some(2),
                (Element::O | Element::S, 0, 2) => Some(2),
                (Element::N, -1, 2) => Some(2),
                (Element::C, -1, 3) => Some(2),
                (Element::B, 0, 3) => Some(0),
                (Element::C, 1, 3) => Some(0),
                _ => None,
            }
        }
    }
}

/// Whether an aromatic atom written with these bonds reads back with the same
/// pi-electron role, either in organic-subset form or as a bracket atom.
fn reads_back(atom: &Atom, fixed: u32, n_arom: u32, pi: bool) -> bool {
    let organic_form = atom.element.is_organic_subset()
        && atom.isotope.is_none()
        && atom.formal_charge == 0
        && atom.chirality == Chirality::None;
    if organic_form && infer_organic(atom.element, true, fixed, n_arom) == Some((atom.hydrogens, pi)) {
        return true;
    }
    let used = fixed + n_arom + atom.hydrogens as u32;
    match atom.element.valences(atom.formal_charge) {
        None => pi,
        Some(_) => atom
            .element
            .target_valence(atom.formal_charge, used)
            .is_some_and(|v| (v as u32 > used) == pi),
    }
}

/// Drops aromatic flags that a SMILES reader could not reproduce, until stable.
fn writable_aromatic(
    atoms: &[Atom],
    kekule: &[BondOrder],
    bonds: &[Bond],
    adj: &[Vec<(usize, usize)>],
    mut atom_arom: Vec<bool>,
    mut bond_arom: Vec<bool>,
) -> (Vec<bool>, Vec<bool>) {
    loop {
        for (i, b) in bonds.iter().enumerate() {
            if bond_arom[i] && !(atom_arom[b.begin] && atom_arom[b.end]) {
                bond_arom[i] = false;
            }
        }
        let mut changed = false;
        for i in 0..atoms.len() {
            if !atom_arom[i] {
                continue;
            }
            let (mut fixed, mut n_arom, mut pi) = (0u32, 0u32, false);
            for &(_, b) in &adj[i] {
                if bond_arom[b] {
                    n_arom += 1;
                    pi |= kekule[b] == BondOrder::Double;
                } else {
                    fixed += kekule[b].valence();
                }
            }
            if n_arom == 0 || !reads_back(&atoms[i], fixed, n_arom, pi) {
                atom_arom[i] = false;
                changed = true;
            }
        }
        if !changed {
            return (atom_arom, bond_arom);
        }
    }
}

const MAX_RING: usize = 8;
const MAX_UNION_ATOMS: usize = 24;

/// Hückel-rule aromaticity over rings of up to eight atoms and fused unions of
/// up to three such rings. Returns (aromatic atoms, aromatic bonds).
pub(crate) fn perceive_aromaticity(
    atoms: &[Atom],
    kekule: &[BondOrder],
    adj: &[Vec<(usize, usize)>],
    ring_bond: &[bool],
) -> (Vec<bool>, Vec<bool>) {
    let n = atoms.len();
    let contrib: Vec<Option<u32>> = (0..n)
        .map(|i| pi_contribution(&atoms[i], i, kekule, adj, atoms, ring_bond))
        .collect();
    let allowed: Vec<bool> = contrib.iter().map(Option::is_some).collect();
    let mut atom_arom = vec![false; n];
    let mut bond_arom = vec![false; kekule.len()];
    if !allowed.iter().any(|&a| a) {
        return (atom_arom, bond_arom);
    }
    let cycles = rings::simple_cycles(adj, &allowed, ring_bond, MAX_RING);
    if cycles.is_empty() {
        return (atom_arom, bond_arom);
    }
    let cycle_bonds: Vec<Vec<usize>> = cycles.iter().map(|c| rings::cycle_bonds(adj, c)).collect();

    let huckel = |members: &[usize]| -> bool {
        let total: u32 = members.iter().map(|&a| contrib[a].unwrap()).sum();
        let singles = members.iter().filter(|&&a| contrib[a] == Some(1)).count();
        total % 4 == 2 && singles >= 2
    };
    let mark = |atoms_in: &[usize], bonds_in: &[usize], atom_arom: &mut Vec<bool>, bond_arom: &mut Vec<bool>| {
        for &a in atoms_in {
            atom_arom[a] = true;
        }
        for &b in bonds_in {
            bond_arom[b] = true;
        }
    };

    let mut ok = vec![false; cycles.len()];
    for (ci, c) in cycles.iter().enumerate() {
        if huckel(c) {
            ok[ci] = true;
            mark(c, &cycle_bonds[ci], &mut atom_arom, &mut bond_arom);
        }
    }
    if ok.iter().all(|&x| x) {
        return (atom_arom, bond_arom);
    }

    let shares_bond = |a: usize, b: usize| cycle_bonds[a].iter().any(|x| cycle_bonds[b].contains(x));
    let union_of = |ids: &[usize]| -> (Vec<usize>, Vec<usize>) {
        let mut at: Vec<usize> = ids.iter().flat_map(|&i| cycles[i].iter().copied()).collect();
        at.sort_unstable();
        at.dedup();
        let mut bd: Vec<usize> = ids.iter().flat_map(|&i| cycle_bonds[i].iter().copied()).collect();
        bd.sort_unstable();
        bd.dedup();
        (at, bd)
    };
    let k = cycles.len();
    for i in 0..k {
        for j in i + 1..k {
            if (ok[i] && ok[j]) || !shares_bond(i, j) {
                continue;
            }
            let (at, bd) = union_of(&[i, j]);
            if at.len() <= MAX_UNION_ATOMS && huckel(&at) {
                mark(&at, &bd, &mut atom_arom, &mut bond_arom);
            }
        }
    }
    if k <= 40 {
        for i in 0..k {
            for j in i + 1..k {
                if !shares_bond(i, j) {
                    continue;
                }
                for l in j + 1..k {
                    if ok[i] && ok[j] && ok[l] {
                        continue;
                    }
                    if !(shares_bond(i, l) || shares_bond(j, l)) {
                        continue;
                    }
                    let (at, bd) = union_of(&[i, j, l]);
                    if at.len() <= MAX_UNION_ATOMS && huckel(&at) {
                        mark(&at, &bd, &mut atom_arom, &mut bond_arom);
                    }
                }
            }
        }
    }
    (atom_arom, bond_arom)
}
