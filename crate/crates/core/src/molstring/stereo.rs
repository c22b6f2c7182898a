//! Double-bond geometry: reading it from directional marks and regenerating
//! marks for a given writing order.

use super::graph::{BondOrder, Molecule};

/// A stereo double bond `a=b`. `cis` tells whether the lowest-index neighbour
/// of `a` and the lowest-index neighbour of `b` are on the same side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct DoubleBondStereo {
    pub bond: usize,
    pub a: usize,
    pub b: usize,
    pub ref_a: usize,
    pub ref_b: usize,
    pub cis: bool,
}

/// Side sign of neighbour `n` of double-bond atom `x`, from a mark stored
/// relative to the bond's begin -> end direction.
fn side(m: &Molecule, x: usize, e: usize) -> i8 {
    let bond = m.bond(e);
    let s = bond.stereo.sign();
    if bond.begin == x {
        s
    } else {
        -s
    }
}

/// Side of the reference (lowest-index) neighbour of `x`, seen across `other`.
fn reference_side(m: &Molecule, x: usize, other: usize) -> Option<(usize, i8)> {
    let nbrs: Vec<(usize, usize)> = m.neighbors(x).iter().copied().filter(|&(n, _)| n != other).collect();
    let reference = nbrs.first()?.0;
    let mut found: Option<i8> = None;
    for &(n, e) in &nbrs {
        let s = side(m, x, e);
        if s == 0 {
            continue;
        }
        let s_ref = if n == reference { s } else { -s };
        match found {
            Some(prev) if prev != s_ref => return None,
            _ => found = Some(s_ref),
        }
    }
    found.map(|s| (reference, s))
}

/// Double bonds whose geometry is fixed by the directional marks.
pub(crate) fn double_bond_configs(m: &Molecule) -> Vec<DoubleBondStereo> {
    let mut out = Vec::new();
    if !m.bonds().iter().any(|b| b.stereo.sign() != 0) {
        return out;
    }
    for (i, bond) in m.bonds().iter().enumerate() {
        if bond.order != BondOrder::Double || m.is_ring_bond(i) {
            continue;
        }
        let (a, b) = (bond.begin, bond.end);
        if !(2..=3).contains(&m.degree(a)) || !(2..=3).contains(&m.degree(b)) {
            continue;
        }
        let (Some((ref_a, sa)), Some((ref_b, sb))) = (reference_side(m, a, b), reference_side(m, b, a)) else {
            continue;
        };
        out.push(DoubleBondStereo { bond: i, a, b, ref_a, ref_b, cis: sa == sb });
    }
    out
}

/// Directional marks for a writing order.
///
/// `from[e]` is the atom bond `e` is written from and `pos[e]` its position in
/// the output. The result holds, per bond, the mark sign as written
/// (+1 for `/`, -1 for `\`, 0 for none).
pub(crate) fn assign_marks(m: &Molecule, configs: &[DoubleBondStereo], from: &[usize], pos: &[usize]) -> Vec<i8> {
    let mut marks = vec![0i8; m.num_bonds()];
    let mut order: Vec<&DoubleBondStereo> = configs.iter().collect();
    order.sort_by_key(|c| pos[c.bond]);

    for c in order {
        // Side of the reference neighbour on the `a` end, once known.
        let mut s_ref_a: Option<i8> = None;
        let markable = |x: usize, other: usize| -> Vec<(usize, usize)> {
            m.neighbors(x)
                .iter()
                .copied()
                .filter(|&(n, e)| n != other && m.bond(e).order == BondOrder::Single)
                .collect()
        };
        let sides = [(c.a, c.b, c.ref_a), (c.b, c.a, c.ref_b)];
        for (k, &(x, other, reference)) in sides.iter().enumerate() {
            for (n, e) in markable(x, other) {
                if marks[e] == 0 {
                    continue;
                }
                let s = if from[e] == x { marks[e] } else { -marks[e] };
                let s_ref = if n == reference { s } else { -s };
                let s_a = if k == 0 || c.cis { s_ref } else { -s_ref };
                s_ref_a.get_or_insert(s_a);
            }
        }
        let s_ref_a = match s_ref_a {
            Some(s) => s,
            None => {
                // Nothing fixed yet: the earliest written bond gets '/'.
                let first = sides
                    .iter()
                    .enumerate()
                    .flat_map(|(k, &(x, other, reference))| {
                        markable(x, other).into_iter().map(move |(n, e)| (k, x, reference, n, e))
                    })
                    .min_by_key(|&(_, _, _, _, e)| pos[e]);
                let Some((k, x, reference, n, e)) = first else { continue };
                let s = if from[e] == x { 1 } else { -1 };
                let s_ref = if n == reference { s } else { -s };
                if k == 0 || c.cis {
                    s_ref
                } else {
                    -s_ref
                }
            }
        };
        let s_ref_b = if c.cis { s_ref_a } else { -s_ref_a };
        for (x, other, reference, s_ref) in [(c.a, c.b, c.ref_a, s_ref_a), (c.b, c.a, c.ref_b, s_ref_b)] {
            let bonds = markable(x, other);
            if bonds.iter().any(|&(_, e)| marks[e] != 0) {
                continue;
            }
            let Some(&(n, e)) = bonds.iter().min_by_key(|&&(_, e)| pos[e]) else { continue };
            let s = if n == reference { s_ref } else { -s_ref };
            marks[e] = if from[e] == x { s } else { -s };
        }
    }
    marks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molstring::parse_smiles;

    #[test]
    fn trans_and_cis_from_marks() {
        let trans = parse_smiles("F/C=C/F").unwrap();
        let cis = parse_smiles("F/C=C\\F").unwrap();
        assert!(!double_bond_configs(&trans)[0].cis);
        assert!(double_bond_configs(&cis)[0].cis);
        let same_trans = parse_smiles("F\\C=C\\F").unwrap();
        assert!(!double_bond_configs(&same_trans)[0].cis);
        let branch = parse_smiles("C(\\F)=C/F").unwrap();
        // "C(\F)" places F below C, same as "F/C".
        assert!(!double_bond_configs(&branch)[0].cis);
    }

    #[test]
    fn unmarked_double_bond_has_no_config() {
        let m = parse_smiles("FC=CF").unwrap();
        assert!(double_bond_configs(&m).is_empty());
        let one_side = parse_smiles("F/C=CF").unwrap();
        assert!(double_bond_configs(&one_side).is_empty());
    }
}
