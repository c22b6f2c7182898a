#![allow(dead_code)]

use chemlinker::molstring::{parse_smiles, Molecule};
use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::UnGraph;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub mod oracles;

pub fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn corpus() -> Vec<String> {
    fixture("corpus500.smi").lines().map(str::to_owned).collect()
}

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

pub fn shuffled(n: usize, rng: &mut impl RngCore) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

fn as_graph(m: &Molecule) -> UnGraph<(u8, i8, u8, Option<u16>, bool), u32> {
    let a = m.aromatized();
    let mut g = UnGraph::default();
    let nodes: Vec<_> = a
        .atoms()
        .iter()
        .map(|x| g.add_node((x.element.atomic_number(), x.formal_charge, x.hydrogens(), x.isotope, x.aromatic)))
        .collect();
    for b in a.bonds() {
        g.add_edge(nodes[b.begin], nodes[b.end], b.order.code());
    }
    g
}

/// Graph isomorphism on element, charge, hydrogens, isotope and bond order,
/// computed by petgraph independently of the canonical writer.
pub fn isomorphic(a: &Molecule, b: &Molecule) -> bool {
    a.num_atoms() == b.num_atoms()
        && a.num_bonds() == b.num_bonds()
        && is_isomorphic_matching(&as_graph(a), &as_graph(b), |x, y| x == y, |x, y| x == y)
}

pub fn mol(s: &str) -> Molecule {
    parse_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}
