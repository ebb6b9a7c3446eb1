pub(crate) use petgraph::unionfind::UnionFind;

/// Sets ordered by smallest member, members ascending.
pub(crate) fn sets(uf: UnionFind<usize>) -> Vec<Vec<usize>> {
    let labels = uf.into_labeling();
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (x, &r) in labels.iter().enumerate() {
        by_root[r].push(x);
    }
    let mut sets: Vec<Vec<usize>> = by_root.into_iter().filter(|s| !s.is_empty()).collect();
    sets.sort_by_key(|s| s[0]);
    sets
}
