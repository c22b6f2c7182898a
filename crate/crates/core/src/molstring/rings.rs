//! Ring bookkeeping: bridge detection and bounded simple-cycle enumeration.

/// Marks every bond that lies on at least one cycle (i.e. is not a bridge).
pub(crate) fn ring_bonds(n_atoms: usize, adj: &[Vec<(usize, usize)>], n_bonds: usize) -> Vec<bool> {
    let mut in_ring = vec![true; n_bonds];
    let mut disc = vec![usize::MAX; n_atoms];
    let mut low = vec![0usize; n_atoms];
    let mut timer = 0usize;
    for root in 0..n_atoms {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative Tarjan: (atom, bond used to enter, next neighbour slot).
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.last_mut() {
            let (u, via) = (top.0, top.1);
            if top.2 < adj[u].len() {
                let (v, b) = adj[u][top.2];
                top.2 += 1;
                if b == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, b, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        in_ring[via] = false;
                    }
                }
            }
        }
    }
    in_ring
}

/// Enumerates simple cycles of length `3..=max_len` through atoms flagged in
/// `allowed`, using only bonds flagged in `bond_ok`. Each cycle is reported once,
/// starting at its lowest atom index.
pub(crate) fn simple_cycles(
    adj: &[Vec<(usize, usize)>],
    allowed: &[bool],
    bond_ok: &[bool],
    max_len: usize,
) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(max_len);
    let mut on_path = vec![false; adj.len()];
    for start in 0..adj.len() {
        if !allowed[start] {
            continue;
        }
        path.clear();
        path.push(start);
        on_path[start] = true;
        extend(adj, allowed, bond_ok, max_len, start, &mut path, &mut on_path, &mut out);
        on_path[start] = false;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extend(
    adj: &[Vec<(usize, usize)>],
    allowed: &[bool],
    bond_ok: &[bool],
    max_len: usize,
    start: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    let last = *path.last().unwrap();
    for &(next, b) in &adj[last] {
        if !bond_ok[b] {
            continue;
        }
        if next == start && path.len() >= 3 {
            if path[1] < path[path.len() - 1] {
                out.push(path.clone());
            }
            continue;
        }
        if next <= start || !allowed[next] || on_path[next] || path.len() >= max_len {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        extend(adj, allowed, bond_ok, max_len, start, path, on_path, out);
        on_path[next] = false;
        path.pop();
    }
}

/// Bond indices traversed by a cycle given as an atom sequence.
pub(crate) fn cycle_bonds(adj: &[Vec<(usize, usize)>], cycle: &[usize]) -> Vec<usize> {
    (0..cycle.len())
        .map(|i| {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            adj[a].iter().find(|&&(n, _)| n == b).map(|&(_, bond)| bond).expect("cycle edge")
        })
        .collect()
}
