use super::graph::{infer_organic, permutation_is_odd, BondOrder, Chirality, Molecule, Slot};
use super::stereo::{assign_marks, double_bond_configs};

/// Depth-first spanning structure of a molecule for one atom ranking.
struct Layout {
    /// Atoms in output order.
    preorder: Vec<usize>,
    /// Component roots in output order.
    roots: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
    children: Vec<Vec<(usize, usize)>>,
    ring_open: Vec<Vec<(usize, usize)>>,
    ring_close: Vec<Vec<(usize, usize)>>,
}

fn layout(m: &Molecule, rank: &[usize]) -> Layout {
    let n = m.num_atoms();
    let mut lay = Layout {
        preorder: Vec::with_capacity(n),
        roots: Vec::new(),
        parent: vec![None; n],
        children: vec![Vec::new(); n],
        ring_open: vec![Vec::new(); n],
        ring_close: vec![Vec::new(); n],
    };
    let mut pre = vec![usize::MAX; n];
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| rank[i]);
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = m.neighbors(i).to_vec();
            v.sort_by_key(|&(x, _)| rank[x]);
            v
        })
        .collect();

    for &root in &by_rank {
        if pre[root] != usize::MAX {
            continue;
        }
        lay.roots.push(root);
        // Explicit stack of (atom, next neighbour slot).
        pre[root] = lay.preorder.len();
        lay.preorder.push(root);
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.last_mut() {
            let u = top.0;
            if top.1 == sorted_nbrs[u].len() {
                stack.pop();
                continue;
            }
            let (v, b) = sorted_nbrs[u][top.1];
            top.1 += 1;
            if lay.parent[u].is_some_and(|(_, pb)| pb == b) {
                continue;
            }
            if pre[v] == usize::MAX {
                pre[v] = lay.preorder.len();
                lay.preorder.push(v);
                lay.parent[v] = Some((u, b));
                lay.children[u].push((v, b));
                stack.push((v, 0));
            } else if pre[v] < pre[u] {
                lay.ring_close[u].push((v, b));
                lay.ring_open[v].push((u, b));
            }
        }
    }
    lay
}

fn bond_symbol(m: &Molecule, u: usize, v: usize, b: usize, mark: i8) -> &'static str {
    match m.bond(b).order {
        BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Single => match mark {
            1 => "/",
            -1 => "\\",
            _ if m.atom(u).aromatic && m.atom(v).aromatic => "-",
            _ => "",
        },
    }
}

fn atom_token(m: &Molecule, i: usize, chirality: Chirality, out: &mut String) {
    let a = m.atom(i);
    let mut fixed = 0u32;
    let mut n_arom = 0u32;
    for &(_, b) in m.neighbors(i) {
        match m.bond(b).order {
            BondOrder::Aromatic => n_arom += 1,
            o => fixed += o.valence(),
        }
    }
    let pi = a.aromatic && m.is_pi_atom(i);
    let organic = a.element.is_organic_subset()
        && a.isotope.is_none()
        && a.formal_charge == 0
        && chirality == Chirality::None
        && infer_organic(a.element, a.aromatic, fixed, n_arom) == Some((a.hydrogens(), pi));
    let sym = a.element.symbol();
    let push_sym = |out: &mut String| {
        if a.aromatic {
            out.push_str(&sym.to_ascii_lowercase());
        } else {
            out.push_str(sym);
        }
    };
    if organic {
        push_sym(out);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        out.push_str(&iso.to_string());
    }
    push_sym(out);
    match chirality {
        Chirality::Ccw => out.push('@'),
        Chirality::Cw => out.push_str("@@"),
        Chirality::None => {}
    }
    match a.hydrogens() {
        0 => {}
        1 => out.push('H'),
        h => {
            out.push('H');
            out.push_str(&h.to_string());
        }
    }
    match a.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            out.push('+');
            out.push_str(&c.to_string());
        }
        c => {
            out.push('-');
            out.push_str(&(-c).to_string());
        }
    }
    out.push(']');
}

fn ring_label(d: usize, out: &mut String) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push('%');
        out.push_str(&format!("{d:02}"));
    }
}

/// Writes every component, each starting at its lowest-ranked atom and
/// visiting neighbours in rank order; components joined by '.'.
pub(crate) fn write_ranked(m: &Molecule, rank: &[usize]) -> String {
    write_components(m, rank).join(".")
}

/// Like [`write_ranked`], also returning atoms in output order.
pub(crate) fn write_with_order(m: &Molecule, rank: &[usize]) -> (String, Vec<usize>) {
    let lay = layout(m, rank);
    let s = render(m, &lay).join(".");
    (s, lay.preorder)
}

pub(crate) fn write_components(m: &Molecule, rank: &[usize]) -> Vec<String> {
    render(m, &layout(m, rank))
}

fn render(m: &Molecule, lay: &Layout) -> Vec<String> {
    let nb = m.num_bonds();

    // Written direction and output position of every bond, for stereo marks.
    let mut from = vec![usize::MAX; nb];
    let mut pos = vec![usize::MAX; nb];
    let configs = double_bond_configs(m);
    let marks = if configs.is_empty() {
        vec![0i8; nb]
    } else {
        let mut key = vec![(usize::MAX, 0usize, 0usize); nb];
        for (k, &u) in lay.preorder.iter().enumerate() {
            if let Some((p, b)) = lay.parent[u] {
                from[b] = p;
                key[b] = (k, 0, 0);
            }
            for (j, &(_, b)) in lay.ring_open[u].iter().enumerate() {
                from[b] = u;
                key[b] = (k, 1, j);
            }
        }
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by_key(|&b| key[b]);
        for (p, b) in order.into_iter().enumerate() {
            pos[b] = p;
        }
        assign_marks(m, &configs, &from, &pos)
    };

    let mut w = Writer {
        m,
        lay,
        marks: &marks,
        digit_of: vec![usize::MAX; nb],
        in_use: Vec::new(),
    };
    lay.roots
        .iter()
        .map(|&r| {
            let mut out = String::new();
            w.atom(r, &mut out);
            out
        })
        .collect()
}

struct Writer<'a> {
    m: &'a Molecule,
    lay: &'a Layout,
    marks: &'a [i8],
    digit_of: Vec<usize>,
    in_use: Vec<bool>,
}

impl Writer<'_> {
    fn free_digit(&mut self, reserved: &[usize]) -> usize {
        let d = (1..)
            .find(|&d| !self.in_use.get(d).copied().unwrap_or(false) && !reserved.contains(&d))
            .unwrap();
        if self.in_use.len() <= d {
            self.in_use.resize(d + 1, false);
        }
        self.in_use[d] = true;
        d
    }

    fn atom(&mut self, u: usize, out: &mut String) {
        self.emit_atom(u, out);
        let kids = &self.lay.children[u];
        for (k, &(v, b)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(bond_symbol(self.m, u, v, b, self.marks[b]));
            self.atom(v, out);
            if !last {
                out.push(')');
            }
        }
    }

    fn emit_atom(&mut self, u: usize, out: &mut String) {
        let m = self.m;
        let lay = self.lay;
        let a = m.atom(u);

        let mut written: Vec<Slot> = Vec::with_capacity(4);
        if let Some((p, _)) = lay.parent[u] {
            written.push(Slot::Atom(p));
        }
        let chirality = if a.chirality == Chirality::None {
            Chirality::None
        } else {
            if m.has_phantom(u) {
                written.push(Slot::Phantom);
            }
            written.extend(lay.ring_close[u].iter().map(|&(v, _)| Slot::Atom(v)));
            written.extend(lay.ring_open[u].iter().map(|&(v, _)| Slot::Atom(v)));
            written.extend(lay.children[u].iter().map(|&(v, _)| Slot::Atom(v)));
            if permutation_is_odd(&m.reference_order(u), &written) {
                a.chirality.flipped()
            } else {
                a.chirality
            }
        };
        atom_token(m, u, chirality, out);

        let mut closed = Vec::new();
        for &(_, b) in &lay.ring_close[u] {
            let d = self.digit_of[b];
            ring_label(d, out);
            closed.push(d);
        }
        for &(v, b) in &lay.ring_open[u] {
            out.push_str(bond_symbol(m, u, v, b, self.marks[b]));
            let d = self.free_digit(&closed);
            self.digit_of[b] = d;
            ring_label(d, out);
        }
        for d in closed {
            self.in_use[d] = false;
        }
    }
}

/// Non-canonical SMILES following stored atom order.
pub(crate) fn write_in_atom_order(m: &Molecule) -> String {
    let rank: Vec<usize> = (0..m.num_atoms()).collect();
    write_ranked(m, &rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molstring::parse_smiles;

    fn rt(s: &str) -> String {
        write_in_atom_order(&parse_smiles(s).unwrap())
    }

    #[test]
    fn atom_order_writing_reproduces_simple_input() {
        for s in ["CCO", "CC(N)C(=O)O", "Cc1ccc(O)cc1", "C1CCCCC1", "[NH4+]", "C#N", "c1ccc2ccccc2c1", "[13CH4]", "CC.O"] {
            assert_eq!(rt(s), s);
        }
    }

    #[test]
    fn chirality_survives_writing() {
        for s in ["N[C@@H](C)C(=O)O", "N[C@H](C)C(=O)O", "[C@@H](N)(C)C(=O)O", "C[C@]1(O)CCCN1"] {
            let m = parse_smiles(s).unwrap();
            let again = parse_smiles(&write_in_atom_order(&m)).unwrap();
            assert_eq!(m, again, "{s}");
        }
    }

    #[test]
    fn double_bond_marks_survive_writing() {
        for s in ["F/C=C/F", "F/C=C\\F", "C(\\F)=C/F", "C/C=C/C=C/C"] {
            let m = parse_smiles(s).unwrap();
            let w = write_in_atom_order(&m);
            let again = parse_smiles(&w).unwrap();
            assert_eq!(double_bond_configs(&m), double_bond_configs(&again), "{s} -> {w}");
        }
    }
}
