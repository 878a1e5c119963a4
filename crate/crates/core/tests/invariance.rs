mod common;

use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use sparse_sbm::covariates::DyadTable;
use sparse_sbm::design::{encode, ModelSpec};
use sparse_sbm::glm::{fit_mle, Family};
use sparse_sbm::graph_io::{parse_edge_list, EdgeListOptions, EdgeMode, Graph, Partition};

fn edge_text(rows: &[(String, String, u32)], weighted: bool) -> String {
    rows.iter()
        .map(|(a, b, w)| if weighted { format!("{a},{b},{w}\n") } else { format!("{a},{b}\n") })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn edge_list_order_does_not_matter(seed in 0u64..10_000, weighted in any::<bool>()) {
        let inst = if weighted { random_counts(12, 3, seed) } else { random_binary(12, 3, 0.3, seed) };
        let mode = inst.graph.mode();
        let mut rows: Vec<(String, String, u32)> = inst
            .graph
            .edges()
            .iter()
            .map(|&(a, b, w)| (a.to_string(), b.to_string(), w))
            .collect();
        let opts = EdgeListOptions { has_header: false, extra_nodes: inst.ids.clone() };
        let g1 = parse_edge_list(&edge_text(&rows, weighted), Path::new("a.csv"), mode, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        for (k, r) in rows.iter_mut().enumerate() {
            if k % 2 == 0 {
                std::mem::swap(&mut r.0, &mut r.1);
            }
        }
        let g2 = parse_edge_list(&edge_text(&rows, weighted), Path::new("b.csv"), mode, &opts).unwrap();
        prop_assert_eq!(&g1, &g2);
        prop_assert_eq!(&g1, &inst.graph);
    }
}

/// Same network with node ids renamed so that their sorted order changes.
fn renamed_nodes(inst: &Instance, perm: &[usize]) -> (Graph, Partition) {
    let new_id = |i: usize| format!("m{:02}", perm[i]);
    let index: BTreeMap<&str, usize> = inst.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let edges: Vec<(String, String, u32)> = inst
        .graph
        .edges()
        .iter()
        .map(|&(a, b, w)| (new_id(index[a]), new_id(index[b]), w))
        .collect();
    let ids: Vec<String> = (0..inst.ids.len()).map(new_id).collect();
    let graph = Graph::from_edges(ids.clone(), &edges, inst.graph.mode()).unwrap();
    let assignment = (0..inst.ids.len())
        .map(|i| (new_id(i), inst.labels[inst.blocks[i]].clone()))
        .collect();
    (graph, Partition::from_labels(assignment).unwrap())
}

#[test]
fn node_relabeling_leaves_the_fit_unchanged() {
    for seed in 0..5u64 {
        let inst = random_binary(16, 3, 0.35, 900 + seed);
        let fit = fit_mle(&eq1_design(&inst), inst.table.response(), Family::BernoulliLogit).unwrap();
        let mut perm: Vec<usize> = (0..16).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (g, part) = renamed_nodes(&inst, &perm);
        let table = DyadTable::from_graph(&g);
        let x = encode(&table, &part, &ModelSpec::degree_corrected()).unwrap();
        let other = fit_mle(&x, table.response(), Family::BernoulliLogit).unwrap();
        assert!((fit.log_likelihood - other.log_likelihood).abs() < 1e-8);
        for r in 0..3 {
            for s in 0..3 {
                assert!((fit.phi_matrix[r][s] - other.phi_matrix[r][s]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn block_relabeling_permutes_phi() {
    for seed in 0..5u64 {
        let inst = random_counts(15, 4, 950 + seed);
        let spec = ModelSpec::covariate_poisson(vec![]);
        let x = encode(&inst.table, &inst.partition, &spec).unwrap();
        let fit = fit_mle(&x, inst.table.response(), Family::PoissonLog).unwrap();
        // reverse the block order: b00 -> z3, b01 -> z2, ...
        let rename = |l: &str| format!("z{}", 3 - l[1..].parse::<usize>().unwrap());
        let part = inst.partition.relabel(rename).unwrap();
        let x2 = encode(&inst.table, &part, &spec).unwrap();
        let other = fit_mle(&x2, inst.table.response(), Family::PoissonLog).unwrap();
        assert!((fit.log_likelihood - other.log_likelihood).abs() < 1e-8);
        for r in 0..4 {
            for s in 0..4 {
                assert!((fit.phi_matrix[r][s] - other.phi_matrix[3 - r][3 - s]).abs() < 1e-6);
            }
        }
        for r in 0..4 {
            let label = format!("gamma[b{r:02}]");
            let renamed = format!("gamma[z{}]", 3 - r);
            let folded = |f: &sparse_sbm::glm::FitResult, name: &str| {
                f.coefficient(name).unwrap_or_else(|| {
                    -f.coefficients
                        .iter()
                        .filter(|c| c.name.starts_with("gamma["))
                        .map(|c| c.value)
                        .sum::<f64>()
                })
            };
            assert!((folded(&fit, &label) - folded(&other, &renamed)).abs() < 1e-6);
        }
    }
}

#[test]
fn duplicate_rows_accumulate_by_mode() {
    let opts = EdgeListOptions::default();
    let g = parse_edge_list("a,b,2\nb,a,3\n", Path::new("w.csv"), EdgeMode::Weighted, &opts).unwrap();
    assert_eq!(g.weight(0, 1), 5);
    let g = parse_edge_list("a,b\nb,a\n", Path::new("b.csv"), EdgeMode::Binary, &opts).unwrap();
    assert_eq!(g.weight(0, 1), 1);
}
