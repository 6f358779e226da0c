//! Synthetic county-style fixture: a 62-node planar lattice and a 783-step
//! GNARI(2,[1,1]) series with node-specific innovation means.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::{CountSeries, ModelOrder, ParamVector};
use crate::error::Result;
use crate::gnari::{gnari_bound, GnariModel};
use crate::harness::io::{write_adjacency_csv, write_series_csv};
use crate::network::Network;

pub const FIXTURE_SEED: u64 = 20_200_301;
pub const FIXTURE_NODES: usize = 62;
pub const FIXTURE_LEN: usize = 783;
const LATTICE_COLUMNS: usize = 8;

pub fn county_ids() -> Vec<String> {
    (1..=FIXTURE_NODES).map(|i| format!("county_{i:02}")).collect()
}

/// Undirected edges of a triangulated grid (8 columns): each node touches
/// its right, lower and lower-right neighbours, giving interior degree 6.
pub fn lattice_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for k in 0..FIXTURE_NODES {
        let (r, c) = (k / LATTICE_COLUMNS, k % LATTICE_COLUMNS);
        let mut link = |rr: usize, cc: usize| {
            let j = rr * LATTICE_COLUMNS + cc;
            if cc < LATTICE_COLUMNS && j < FIXTURE_NODES {
                edges.push((k, j));
            }
        };
        link(r, c + 1);
        link(r + 1, c);
        link(r + 1, c + 1);
    }
    edges
}

pub fn lattice_network() -> Result<Network> {
    Network::from_edges(FIXTURE_NODES, &lattice_edges(), true)?.with_node_ids(county_ids())
}

pub fn fixture_model(net: &Network) -> Result<GnariModel> {
    let order = ModelOrder::new(vec![1, 1]).local_intercept(true);
    let mut values = vec![0.45, 0.15, 0.25, 0.05];
    values.extend((0..net.node_count()).map(|i| 2.0 + ((i * 7) % 13) as f64));
    let bounds = order.layout(net.node_count()).iter().map(gnari_bound).collect();
    let params = ParamVector::new(&order, net.node_ids(), values, bounds)?;
    GnariModel::new(net.clone(), order, params)
}

pub fn generate_fixture(seed: u64) -> Result<(Network, CountSeries)> {
    let net = lattice_network()?;
    let model = fixture_model(&net)?;
    let series = model
        .simulate(FIXTURE_LEN, 300, &mut ChaCha8Rng::seed_from_u64(seed))?
        .with_node_ids(county_ids())?;
    Ok((net, series))
}

/// Writes `county_edges.csv`, `county_adjacency.csv`, `county_series.csv`
/// and the five-node `five_node.csv` adjacency into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (net, series) = generate_fixture(seed)?;
    let ids = county_ids();
    let edges = dir.join("county_edges.csv");
    let mut w = csv::Writer::from_path(&edges)?;
    w.write_record(["from", "to"])?;
    for (a, b) in lattice_edges() {
        w.write_record([&ids[a], &ids[b]])?;
    }
    w.flush()?;
    let adjacency = dir.join("county_adjacency.csv");
    write_adjacency_csv(&net, &adjacency)?;
    let series_path = dir.join("county_series.csv");
    write_series_csv(&series, &series_path)?;
    let five = dir.join("five_node.csv");
    write_adjacency_csv(&Network::five_node(), &five)?;
    Ok(vec![edges, adjacency, series_path, five])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::io::{read_edge_list_csv, read_series_csv};

    #[test]
    fn lattice_shape() {
        let net = lattice_network().unwrap();
        assert_eq!(net.node_count(), 62);
        let degrees: Vec<usize> = (0..62).map(|i| net.out_degree(i)).collect();
        assert_eq!(*degrees.iter().max().unwrap(), 6);
        assert!(degrees.iter().all(|&d| d >= 2));
        assert!(net.diameter() >= 7);
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), 5).unwrap();
        let s = read_series_csv(dir.path().join("county_series.csv")).unwrap();
        assert_eq!((s.len(), s.node_count()), (783, 62));
        let net = read_edge_list_csv(dir.path().join("county_edges.csv"), Some(s.node_ids().to_vec())).unwrap();
        assert_eq!(net, lattice_network().unwrap());
        assert_eq!(generate_fixture(5).unwrap().1, s);
    }
}
