use std::collections::VecDeque;

use super::CsrMatrix;

/// Lower and upper bandwidth `(kl, ku)` of a square sparse matrix.
pub fn bandwidth(a: &CsrMatrix) -> (usize, usize) {
    a.iter().fold((0, 0), |(kl, ku), (r, c, _)| {
        if r >= c {
            (kl.max(r - c), ku)
        } else {
            (kl, ku.max(c - r))
        }
    })
}

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in a.iter() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| degree[v]).expect("unvisited vertex");
        let start = pseudo_peripheral(&adj, &degree, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| degree[w]);
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap_or(0);
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut v = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, v);
        let depth = levels.iter().flatten().copied().max().unwrap_or(0);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        v = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(depth))
            .min_by_key(|(w, _)| degree[*w])
            .map(|(w, _)| w)
            .unwrap_or(v);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    #[test]
    fn shuffled_tridiagonal_recovers_narrow_band() {
        let n = 50;
        let shuffle: Vec<usize> = (0..n).map(|i| (i * 17) % n).collect();
        let trip = (0..n).flat_map(|i| {
            let mut v = vec![(shuffle[i], shuffle[i], C64::new(2.0, 0.0))];
            if i + 1 < n {
                v.push((shuffle[i], shuffle[i + 1], C64::new(-1.0, 0.0)));
                v.push((shuffle[i + 1], shuffle[i], C64::new(-1.0, 0.0)));
            }
            v
        });
        let a = CsrMatrix::from_triplets(n, n, trip);
        assert!(bandwidth(&a).0 > 1);
        let perm = reverse_cuthill_mckee(&a);
        let mut seen = perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert_eq!(bandwidth(&a.permute_symmetric(&perm)), (1, 1));
    }
}
