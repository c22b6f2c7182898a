//! Independent reimplementations used as test oracles.

use std::collections::BTreeSet;

use chemlinker::molstring::Molecule;

/// Byte-wise FNV-1a 64, written out independently of the library hasher.
pub fn fnv(fields: &[u32]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for f in fields {
        for byte in f.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(1099511628211);
        }
    }
    h
}

fn split(id: u64) -> [u32; 2] {
    [id as u32, (id >> 32) as u32]
}

/// Environment of `a` at radius `r`, recomputed from scratch by recursion.
fn env(m: &Molecule, a: usize, r: u32) -> u64 {
    let atom = m.atom(a);
    if r == 0 {
        return fnv(&[
            atom.element.atomic_number() as u32,
            atom.formal_charge as i32 as u32,
            m.neighbors(a).len() as u32,
            atom.hydrogens() as u32,
        ]);
    }
    let mut nb: Vec<(u32, u64)> = m.neighbors(a).iter().map(|&(n, b)| (m.bond(b).order.code(), env(m, n, r - 1))).collect();
    nb.sort();
    let mut fields = vec![r];
    fields.extend(split(env(m, a, r - 1)));
    for (code, id) in nb {
        fields.push(code);
        fields.extend(split(id));
    }
    fnv(&fields)
}

pub fn oracle_circular(m: &Molecule, radius: u32, nbits: usize) -> BTreeSet<usize> {
    let m = m.aromatized();
    let mut out = BTreeSet::new();
    for a in 0..m.num_atoms() {
        for r in 0..=radius {
            out.insert((env(&m, a, r) % nbits as u64) as usize);
        }
    }
    out
}

/// Largest bond-order sum allowed by a hand-written table for the
/// element/charge pairs the fuzz alphabet can produce.
pub fn max_valence(z: u8, charge: i8) -> Option<u32> {
    Some(match (z, charge) {
        (5, 0) => 3,
        (5, -1) => 4,
        (6, 0) => 4,
        (6, -1) => 3,
        (7, 0) => 3,
        (7, 1) => 4,
        (8, 0) => 2,
        (8, -1) => 1,
        (9 | 17 | 35 | 53, 0) => 1,
        (17, -1) => 0,
        (15, 0) => 5,
        (16, 0) => 6,
        (16, 1) => 5,
        (34, 0) => 6,
        (11, 1) => 0,
        _ => return None,
    })
}

/// Every atom within the table's bond-order limit.
pub fn valence_ok(m: &Molecule) -> Result<(), String> {
    for i in 0..m.num_atoms() {
        let a = m.atom(i);
        let used: u32 = m.neighbors(i).iter().map(|&(_, b)| m.kekule_order(b).valence()).sum::<u32>()
            + a.hydrogens() as u32;
        if let Some(max) = max_valence(a.element.atomic_number(), a.formal_charge) {
            if used > max {
                return Err(format!("atom {i} uses {used} > {max}"));
            }
        }
    }
    Ok(())
}
