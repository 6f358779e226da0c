//! Static directed networks with r-stage neighbourhoods and connection weights.
//!
//! Neighbourhoods follow out-edges: `j` is a first-stage neighbour of `i`
//! when `adjacency[i][j] == 1`. The r-th stage set of `i` is the set of nodes
//! whose shortest out-path distance from `i` is exactly `r`; node `i` itself
//! never appears in any of its own stages. Each non-empty stage carries equal
//! weights `1 / |stage|`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjacency of the five-node reference network used by the simulation
/// studies, stored row by row exactly as printed (it is not symmetric).
pub const FIVE_NODE_ADJACENCY: [[u8; 5]; 5] = [
    [0, 1, 0, 1, 1],
    [1, 0, 0, 0, 0],
    [0, 0, 0, 1, 1],
    [0, 0, 1, 0, 1],
    [1, 0, 1, 0, 0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    adjacency: Vec<Vec<u8>>,
    node_ids: Vec<String>,
    /// `stages[i][r - 1]` holds the sorted r-th stage neighbours of node `i`.
    stages: Vec<Vec<Vec<usize>>>,
}

impl Network {
    /// Builds a network from a square 0/1 adjacency matrix with zero diagonal.
    pub fn from_adjacency(adjacency: Vec<Vec<u8>>) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::Adjacency("empty matrix".into()));
        }
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Adjacency(format!(
                    "row {} has {} entries, expected {n} (matrix must be square)",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &a) in row.iter().enumerate() {
                if a > 1 {
                    return Err(Error::Adjacency(format!(
                        "entry ({}, {}) is {a}; entries must be 0 or 1",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if row[i] != 0 {
                return Err(Error::Adjacency(format!(
                    "self-loop at node {}; the diagonal must be zero",
                    i + 1
                )));
            }
        }
        let stages = (0..n).map(|i| bfs_stages(&adjacency, i)).collect();
        let node_ids = (1..=n).map(|i| i.to_string()).collect();
        Ok(Self {
            adjacency,
            node_ids,
            stages,
        })
    }

    /// Builds a network from an edge list over `n` nodes. Undirected edges are
    /// inserted in both directions.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], undirected: bool) -> Result<Self> {
        let mut adjacency = vec![vec![0u8; n]; n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::NodeIndex {
                    index: a.max(b),
                    nodes: n,
                });
            }
            adjacency[a][b] = 1;
            if undirected {
                adjacency[b][a] = 1;
            }
        }
        Self::from_adjacency(adjacency)
    }

    /// The five-node network of the simulation studies.
    pub fn five_node() -> Self {
        let adjacency = FIVE_NODE_ADJACENCY.iter().map(|r| r.to_vec()).collect();
        Self::from_adjacency(adjacency).expect("reference adjacency is valid")
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.node_count() {
            return Err(Error::Dimension(format!(
                "{} node identifiers for {} nodes",
                ids.len(),
                self.node_count()
            )));
        }
        self.node_ids = ids;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from][to] == 1
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.adjacency[i].iter().filter(|&&a| a == 1).count()
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.node_count() {
            return Err(Error::NodeIndex {
                index: i,
                nodes: self.node_count(),
            });
        }
        Ok(())
    }

    /// The r-th stage neighbours of node `i` (0-based), sorted. Empty once the
    /// reachable set is exhausted.
    pub fn stage_neighbours(&self, i: usize, r: usize) -> Result<&[usize]> {
        self.check_node(i)?;
        if r == 0 {
            return Err(Error::InvalidArgument("stage index must be >= 1".into()));
        }
        Ok(self.stages[i].get(r - 1).map_or(&[][..], |s| s.as_slice()))
    }

    /// Equal allocation over the r-th stage of node `i`.
    pub fn stage_weights(&self, i: usize, r: usize) -> Result<Vec<(usize, f64)>> {
        let set = self.stage_neighbours(i, r)?;
        if set.is_empty() {
            return Ok(Vec::new());
        }
        let w = 1.0 / set.len() as f64;
        Ok(set.iter().map(|&q| (q, w)).collect())
    }

    /// Number of non-empty stages of node `i`.
    pub fn max_stage(&self, i: usize) -> usize {
        self.stages[i].len()
    }

    /// Largest finite stage over all nodes (the directed eccentricity bound).
    pub fn diameter(&self) -> usize {
        self.stages.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Weighted neighbour sum `sum_{q in N^(r)(i)} w_{i,q} x_q` with unchecked
    /// indices; `x` is indexed by node.
    pub(crate) fn stage_sum(&self, i: usize, r: usize, x: &[f64]) -> f64 {
        match self.stages[i].get(r - 1) {
            Some(set) if !set.is_empty() => {
                set.iter().map(|&q| x[q]).sum::<f64>() / set.len() as f64
            }
            _ => 0.0,
        }
    }

    /// Raw stage list with unchecked indices.
    pub(crate) fn stage(&self, i: usize, r: usize) -> &[usize] {
        self.stages[i].get(r - 1).map_or(&[][..], |s| s.as_slice())
    }

    /// `[W^(r)]_{l,m} = w_{l,m} 1{m in N^(r)(l)}`.
    pub fn stage_matrix(&self, r: usize) -> DMatrix<f64> {
        let n = self.node_count();
        let mut w = DMatrix::zeros(n, n);
        for l in 0..n {
            let set = self.stage(l, r);
            for &m in set {
                w[(l, m)] = 1.0 / set.len() as f64;
            }
        }
        w
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut adjacency = vec![vec![0u8; n]; n];
        let mut ids = vec![String::new(); n];
        for i in 0..n {
            ids[perm[i]] = self.node_ids[i].clone();
            for j in 0..n {
                adjacency[perm[i]][perm[j]] = self.adjacency[i][j];
            }
        }
        Self::from_adjacency(adjacency)?.with_node_ids(ids)
    }
}

fn bfs_stages(adjacency: &[Vec<u8>], source: usize) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    let mut stages: Vec<Vec<usize>> = Vec::new();
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if adjacency[u][v] == 1 && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                if stages.len() < dist[v] {
                    stages.push(Vec::new());
                }
                stages[dist[v] - 1].push(v);
                queue.push_back(v);
            }
        }
    }
    for s in &mut stages {
        s.sort_unstable();
    }
    stages
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Stage sets computed literally from the set recursion, used as an
    /// independent check on the BFS layering.
    fn recursive_stage(net: &Network, i: usize, r: usize) -> Vec<usize> {
        let n = net.node_count();
        let neighbours = |set: &[usize]| -> Vec<usize> {
            let mut out: Vec<usize> = (0..n)
                .filter(|&j| set.iter().any(|&a| net.has_edge(a, j)))
                .collect();
            out.sort_unstable();
            out
        };
        let mut lower: Vec<Vec<usize>> = vec![neighbours(&[i])
            .into_iter()
            .filter(|&j| j != i)
            .collect()];
        for _ in 1..r {
            let prev = lower.last().unwrap().clone();
            let next: Vec<usize> = neighbours(&prev)
                .into_iter()
                .filter(|&j| j != i && lower.iter().all(|s| !s.contains(&j)))
                .collect();
            lower.push(next);
        }
        lower[r - 1].clone()
    }

    #[test]
    fn five_node_first_stage() {
        let net = Network::five_node();
        // 1-based {2,4,5}
        assert_eq!(net.stage_neighbours(0, 1).unwrap(), &[1, 3, 4]);
        assert_eq!(net.stage_neighbours(0, 2).unwrap(), &[2]);
        assert!(net.stage_neighbours(0, 3).unwrap().is_empty());
    }

    #[test]
    fn five_node_weights() {
        let net = Network::five_node();
        let w = net.stage_weights(0, 1).unwrap();
        assert_eq!(w.len(), 3);
        for (q, wq) in &w {
            assert!([1, 3, 4].contains(q));
            assert!((wq - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(net.stage_weights(1, 1).unwrap(), vec![(0, 1.0)]);
        assert!(net.stage_weights(1, 5).unwrap().is_empty());
    }

    #[test]
    fn edgeless_graph() {
        let net = Network::from_adjacency(vec![vec![0; 3]; 3]).unwrap();
        for i in 0..3 {
            assert!(net.stage_neighbours(i, 1).unwrap().is_empty());
        }
        assert_eq!(net.diameter(), 0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(Network::from_adjacency(vec![vec![1, 0], vec![0, 0]]).is_err());
        assert!(Network::from_adjacency(vec![vec![0, 2], vec![0, 0]]).is_err());
        assert!(Network::from_adjacency(vec![vec![0, 1, 0], vec![0, 0]]).is_err());
        let net = Network::five_node();
        assert!(matches!(
            net.stage_neighbours(5, 1),
            Err(Error::NodeIndex { index: 5, nodes: 5 })
        ));
    }

    #[test]
    fn stage_matrix_rows_sum_to_one() {
        let net = Network::five_node();
        let w = net.stage_matrix(1);
        for l in 0..5 {
            assert!((w.row(l).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bfs_matches_set_recursion() {
        let net = Network::five_node();
        for i in 0..5 {
            for r in 1..=4 {
                assert_eq!(
                    net.stage_neighbours(i, r).unwrap(),
                    recursive_stage(&net, i, r).as_slice()
                );
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn adjacency(n: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
            proptest::collection::vec(proptest::collection::vec(0u8..2, n), n).prop_map(
                |mut m| {
                    for (i, row) in m.iter_mut().enumerate() {
                        row[i] = 0;
                    }
                    m
                },
            )
        }

        proptest! {
            #[test]
            fn stages_partition_reachable_set(m in (2usize..9).prop_flat_map(adjacency)) {
                let net = Network::from_adjacency(m).unwrap();
                let n = net.node_count();
                for i in 0..n {
                    let mut seen = vec![false; n];
                    for r in 1..=n {
                        let set = net.stage_neighbours(i, r).unwrap();
                        let expect = recursive_stage(&net, i, r);
                        prop_assert_eq!(set, expect.as_slice());
                        for &q in set {
                            prop_assert!(q != i);
                            prop_assert!(!seen[q]);
                            seen[q] = true;
                        }
                        let w: f64 = net.stage_weights(i, r).unwrap().iter().map(|x| x.1).sum();
                        if !set.is_empty() {
                            prop_assert!((w - 1.0).abs() < 1e-12);
                        }
                    }
                }
            }

            #[test]
            fn relabel_equivariance(m in (2usize..8).prop_flat_map(adjacency), seed in 0u64..1000) {
                let net = Network::from_adjacency(m).unwrap();
                let n = net.node_count();
                let mut perm: Vec<usize> = (0..n).collect();
                // deterministic shuffle
                let mut s = seed;
                for k in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    perm.swap(k, (s >> 33) as usize % (k + 1));
                }
                let moved = net.relabel(&perm).unwrap();
                for i in 0..n {
                    for r in 1..=n {
                        let mut mapped: Vec<usize> = net.stage_neighbours(i, r).unwrap()
                            .iter().map(|&q| perm[q]).collect();
                        mapped.sort_unstable();
                        prop_assert_eq!(moved.stage_neighbours(perm[i], r).unwrap(), mapped.as_slice());
                    }
                }
            }
        }
    }
}
