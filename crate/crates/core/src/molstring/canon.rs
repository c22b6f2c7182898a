//! Canonical atom ranking: invariant refinement with an individualize-refine
//! search for ties, keeping the lexicographically smallest output string.

use super::graph::Molecule;
use super::write::write_with_order;

/// Leaf budget for the tie-breaking search.
const MAX_LEAVES: usize = 4096;

pub(crate) fn canonical_smiles(m: &Molecule) -> String {
    let arom = m.aromatized();
    let mut parts: Vec<String> = arom
        .components()
        .iter()
        .map(|atoms| canonical_component(&arom.subgraph(atoms)))
        .collect();
    parts.sort();
    parts.join(".")
}

fn dense_ranks<K: Ord>(keys: &[K]) -> Vec<u32> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut out = vec![0u32; keys.len()];
    let mut r = 0u32;
    for w in 0..idx.len() {
        if w > 0 && keys[idx[w]] != keys[idx[w - 1]] {
            r += 1;
        }
        out[idx[w]] = r;
    }
    out
}

fn class_count(ranks: &[u32]) -> usize {
    ranks.iter().max().map_or(0, |&m| m as usize + 1)
}

/// Graph invariants, ascending: degree, element, isotope, charge, hydrogens,
/// total bond order, ring membership, aromaticity.
pub(crate) fn initial_ranks(m: &Molecule) -> Vec<u32> {
    let keys: Vec<_> = (0..m.num_atoms())
        .map(|i| {
            let a = m.atom(i);
            (
                m.degree(i),
                a.element.atomic_number(),
                a.isotope.unwrap_or(0),
                a.formal_charge,
                a.hydrogens(),
                m.total_bond_order(i),
                m.is_ring_atom(i),
                a.aromatic,
            )
        })
        .collect();
    dense_ranks(&keys)
}

/// Morgan-style refinement until the number of classes stops growing.
pub(crate) fn refine(m: &Molecule, mut ranks: Vec<u32>) -> Vec<u32> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(u32, Vec<(u32, u32)>)> = (0..m.num_atoms())
            .map(|i| {
                let mut env: Vec<(u32, u32)> = m
                    .neighbors(i)
                    .iter()
                    .map(|&(n, b)| (ranks[n], m.bond(b).order.code()))
                    .collect();
                env.sort_unstable();
                (ranks[i], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        let c = class_count(&next);
        ranks = next;
        if c == classes {
            return ranks;
        }
        classes = c;
    }
}

struct Search<'a> {
    m: &'a Molecule,
    best: Option<(String, Vec<usize>)>,
    /// Automorphisms found from leaves that produced equal strings.
    autos: Vec<Vec<usize>>,
    leaves_left: usize,
}

impl Search<'_> {
    fn visit(&mut self, ranks: Vec<u32>, path: &mut Vec<usize>) {
        let n = ranks.len();
        if class_count(&ranks) == n {
            self.leaf(&ranks);
            return;
        }
        // First non-singleton cell.
        let mut size = vec![0usize; n];
        for &r in &ranks {
            size[r as usize] += 1;
        }
        let target = (0..n).find(|&r| size[r] > 1).unwrap() as u32;
        let cell: Vec<usize> = (0..n).filter(|&i| ranks[i] == target).collect();

        let mut explored: Vec<usize> = Vec::new();
        for &y in &cell {
            if self.leaves_left == 0 {
                return;
            }
            if !explored.is_empty() && self.same_orbit(path, &explored, y) {
                continue;
            }
            let keys: Vec<(u32, bool)> = (0..n).map(|i| (ranks[i], ranks[i] == target && i != y)).collect();
            let split = refine(self.m, dense_ranks(&keys));
            path.push(y);
            self.visit(split, path);
            path.pop();
            explored.push(y);
        }
    }

    fn leaf(&mut self, ranks: &[u32]) {
        self.leaves_left = self.leaves_left.saturating_sub(1);
        let ranks: Vec<usize> = ranks.iter().map(|&r| r as usize).collect();
        let (s, order) = write_with_order(self.m, &ranks);
        match &self.best {
            Some((b, _)) if s > *b => {}
            Some((b, best_order)) if s == *b => {
                let mut gamma = vec![0usize; order.len()];
                for (k, &a) in best_order.iter().enumerate() {
                    gamma[a] = order[k];
                }
                if gamma.iter().enumerate().any(|(i, &g)| i != g) {
                    self.autos.push(gamma);
                }
            }
            _ => self.best = Some((s, order)),
        }
    }

    /// Whether `y` shares an orbit with an explored atom under the known
    /// automorphisms that fix every atom on the current path.
    fn same_orbit(&self, path: &[usize], explored: &[usize], y: usize) -> bool {
        let n = self.m.num_atoms();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut any = false;
        for g in &self.autos {
            if path.iter().any(|&p| g[p] != p) {
                continue;
            }
            any = true;
            for (i, &gi) in g.iter().enumerate() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, gi));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        if !any {
            return false;
        }
        let ry = find(&mut parent, y);
        explored.iter().any(|&x| find(&mut parent, x) == ry)
    }
}

/// Canonical string of one connected molecule.
fn canonical_component(m: &Molecule) -> String {
    if m.num_atoms() == 0 {
        return String::new();
    }
    let ranks = refine(m, initial_ranks(m));
    let mut search = Search { m, best: None, autos: Vec::new(), leaves_left: MAX_LEAVES };
    search.visit(ranks, &mut Vec::new());
    search.best.map(|(s, _)| s).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use crate::molstring::{parse_smiles, write_smiles};

    fn canon(s: &str) -> String {
        write_smiles(&parse_smiles(s).unwrap(), true)
    }

    #[test]
    fn simple_canonical_forms() {
        assert_eq!(canon("OCC"), "CCO");
        assert_eq!(canon("CCO"), "CCO");
        assert_eq!(canon("Oc1ccc(C)cc1"), "Cc1ccc(O)cc1");
        assert_eq!(canon("OC1=CC=C(C)C=C1"), "Cc1ccc(O)cc1");
        assert_eq!(canon("OC(=O)C(C)N"), "CC(N)C(=O)O");
    }

    #[test]
    fn stereo_is_kept_and_can_be_stripped() {
        let ala = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        let written = write_smiles(&ala, true);
        assert!(written.contains('@'));
        assert_eq!(write_smiles(&crate::molstring::strip_stereo(&ala), true), "CC(N)C(=O)O");
        let d = canon("N[C@H](C)C(=O)O");
        assert_ne!(written, d);
        let butene = parse_smiles("C/C=C\\C").unwrap();
        assert_eq!(write_smiles(&crate::molstring::strip_stereo(&butene), true), "CC=CC");
    }

    #[test]
    fn kekule_and_aromatic_inputs_agree() {
        assert_eq!(canon("C1=CC=CC=C1"), canon("c1ccccc1"));
        assert_eq!(canon("C1=CC2=CC=CC=C2C=C1"), canon("c1ccc2ccccc2c1"));
        assert_eq!(canon("O=C1C=CC=CN1"), canon("O=c1cccc[nH]1"));
    }

    #[test]
    fn fragments_sorted() {
        assert_eq!(canon("O.CC"), canon("CC.O"));
    }
}
