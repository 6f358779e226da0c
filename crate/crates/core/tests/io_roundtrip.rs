use countnet::design::{CountSeries, ModelOrder};
use countnet::gnari::{fit_gnari_cls, GnariModel};
use countnet::harness::io::*;
use countnet::network::Network;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn series_csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(0u64..1_000_000, 3), 1..40)) {
        let s = CountSeries::from_time_rows(&rows, 3).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        prop_assert_eq!(read_series(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn split_preserves_order(len in 2usize..60, cut in 1usize..59) {
        prop_assume!(cut < len);
        let s = CountSeries::from_node_rows(vec![(0..len as u64).collect()]).unwrap();
        let (a, b) = split_train_test(&s, cut).unwrap();
        let joined: Vec<u64> = a.node(0).iter().chain(b.node(0)).copied().collect();
        prop_assert_eq!(joined, (0..len as u64).collect::<Vec<_>>());
    }
}

#[test]
fn fit_json_round_trip() {
    let net = Network::five_node();
    let m = GnariModel::global(net.clone(), vec![1], &[0.5], &[vec![0.4]], 10.0).unwrap();
    let s = m.simulate(200, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let fit = fit_gnari_cls(&s, &net, &ModelOrder::new(vec![1])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    write_fit_json(&fit, &path).unwrap();
    let back = read_fit_json(&path, net.node_ids()).unwrap();
    assert_eq!(back.params.values(), fit.params.values());
    assert_eq!(back.order, fit.order);
    assert_eq!(back.covariance, fit.covariance);
    assert!(read_fit_json(dir.path().join("missing.json"), net.node_ids()).is_err());
}

#[test]
fn bundled_fixture_matches_generator() {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let s = read_series_csv(dir.join("county_series.csv")).unwrap();
    assert_eq!((s.len(), s.node_count()), (783, 62));
    let (net, generated) = countnet::harness::fixture::generate_fixture(countnet::harness::fixture::FIXTURE_SEED).unwrap();
    assert_eq!(generated, s);
    assert_eq!(read_adjacency_csv(dir.join("county_adjacency.csv")).unwrap(), net);
    assert_eq!(read_edge_list_csv(dir.join("county_edges.csv"), Some(s.node_ids().to_vec())).unwrap(), net);
    assert_eq!(read_adjacency_csv(dir.join("five_node.csv")).unwrap(), Network::five_node());
    let (train, test) = split_train_test(&s, 700).unwrap();
    assert_eq!((train.len(), test.len()), (700, 83));
}
