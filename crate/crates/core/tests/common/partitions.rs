//! Brute-force non-crossing partitions for exact oracles.

use num_traits::One;

/// All set partitions of `0..n` as block lists, via restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn grow(i: usize, n: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            let blocks = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut parts = vec![vec![]; blocks];
            for (k, &l) in labels.iter().enumerate() {
                parts[l].push(k);
            }
            out.push(parts);
            return;
        }
        let top = labels.iter().copied().max().map_or(0, |m| m + 1);
        for l in 0..=top {
            labels.push(l);
            grow(i + 1, n, labels, out);
            labels.pop();
        }
    }
    let mut out = vec![];
    grow(0, n, &mut vec![], &mut out);
    out
}

pub fn is_non_crossing(p: &[Vec<usize>]) -> bool {
    let block_of = |x: usize| p.iter().position(|b| b.contains(&x)).unwrap();
    let n: usize = p.iter().map(Vec::len).sum();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let (ba, bb) = (block_of(a), block_of(b));
                    if ba != bb && ba == block_of(c) && bb == block_of(d) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn nc_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    set_partitions(n).into_iter().filter(|p| is_non_crossing(p)).collect()
}

/// Kreweras complement as the cycles of `π⁻¹ ∘ γ`, `γ = (0 1 … n-1)`.
pub fn kreweras(p: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    let mut perm = vec![0; n];
    for block in p {
        for (i, &x) in block.iter().enumerate() {
            perm[x] = block[(i + 1) % block.len()];
        }
    }
    let mut inv = vec![0; n];
    for (x, &y) in perm.iter().enumerate() {
        inv[y] = x;
    }
    let sigma: Vec<usize> = (0..n).map(|x| inv[(x + 1) % n]).collect();
    let mut seen = vec![false; n];
    let mut cycles = vec![];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = vec![];
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cycle.push(x);
            x = sigma[x];
        }
        cycles.push(cycle);
    }
    cycles
}

pub fn product_over_blocks<T: Clone + One + std::ops::Mul<Output = T>>(p: &[Vec<usize>], seq: &[T]) -> T {
    p.iter().fold(T::one(), |acc, b| acc * seq[b.len()].clone())
}
