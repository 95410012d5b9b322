use proptest::prelude::*;

use subeig::amg::{aggregate, amg_setup, ideal_coarse_space, tentative_prolongation, AmgParams, StrengthGraph};
use subeig::gmg::{build_hierarchy, fem_pencil, gmg_eigensolve, mesh_condition_violated, Domain, GmgHierarchy};
use subeig::inverse::{IpmConfig, Tracker};
use subeig::linalg::SparseSymMatrix;
use subeig::projection::eta_k_oracle;

fn graph_laplacian(n: usize, edges: &[(usize, usize)]) -> SparseSymMatrix {
    let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    for &(i, j) in edges {
        if i != j {
            t.extend([(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)]);
        }
    }
    SparseSymMatrix::from_triplets(n, &t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_partitions_the_vertices(n in 1usize..60, edges in proptest::collection::vec((0usize..60, 0usize..60), 0..120)) {
        let edges: Vec<_> = edges.into_iter().filter(|&(i, j)| i < n && j < n).collect();
        let g = StrengthGraph::from_edges(n, &edges);
        let aggs = aggregate(&g);
        let sizes = aggs.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().all(|&s| s > 0));
        // Each aggregate is connected in the graph.
        for members in aggs.members() {
            let mut seen = vec![members[0]];
            let mut frontier = vec![members[0]];
            while let Some(v) = frontier.pop() {
                for &(w, _) in &g.adj[v] {
                    if aggs.assignment[w] == aggs.assignment[v] && !seen.contains(&w) {
                        seen.push(w);
                        frontier.push(w);
                    }
                }
            }
            prop_assert_eq!(seen.len(), members.len());
        }
        let p = tentative_prolongation(&aggs, None).unwrap().to_dense();
        prop_assert!(p.t_matmul(&p).unwrap().identity_defect() <= 1e-15);
    }

    #[test]
    fn galerkin_identity_on_every_level(n in 20usize..200, extra in proptest::collection::vec((0usize..200, 0usize..200), 0..60)) {
        let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        edges.extend(extra.into_iter().filter(|&(i, j)| i < n && j < n));
        let a = graph_laplacian(n, &edges);
        let h = amg_setup(&a, None, AmgParams { direct_limit: 200, ..AmgParams::default() }).unwrap();
        for l in 0..h.len() - 1 {
            prop_assert!(h.levels[l + 1].a.n() < h.levels[l].a.n());
            let g = h.levels[l].a.galerkin(h.levels[l].p.as_ref().unwrap()).unwrap();
            prop_assert!(g.max_abs_diff(&h.levels[l + 1].a).unwrap() <= 1e-12 * g.max_abs());
        }
    }
}

#[test]
fn gmg_limit_is_the_fine_grid_spectrum_for_every_coarse_mesh() {
    let cfg = IpmConfig { k: 3, track_exact: true, ..IpmConfig::default() };
    let hier = GmgHierarchy::between(Domain::Interval, 8, 128).unwrap();
    let fine = hier.finest_level();
    let tracker = Tracker::new(&hier.pencils[fine].pencil()).unwrap();
    for coarse in 0..3 {
        let run = gmg_eigensolve(&hier, coarse, &cfg, 11, Some(&tracker)).unwrap();
        assert!(run.report.converged(), "coarse level {coarse}");
        assert!(!run.mesh_condition_violated);
        for i in 0..3 {
            let exact = tracker.exact.values[i];
            assert!((run.report.final_values[i] - exact).abs() <= 1e-8 * exact);
        }
        assert_eq!(run.report.meta["H"], serde_json::json!(hier.mesh.levels[coarse].h));
    }
}

#[test]
fn mesh_condition_flag_follows_the_measured_rate() {
    let hier = GmgHierarchy::between(Domain::Interval, 4, 64).unwrap();
    let cfg = IpmConfig { k: 1, track_exact: true, ..IpmConfig::default() };
    let mut run = gmg_eigensolve(&hier, 0, &cfg, 5, None).unwrap();
    assert!(!mesh_condition_violated(&run.report));
    let row = run.report.rows.iter_mut().find(|r| r.rate_resolved).unwrap();
    row.measured_rate = Some(1.0);
    assert!(mesh_condition_violated(&run.report));
}

#[test]
fn eta_halves_with_the_coarse_mesh() {
    let hier = GmgHierarchy::new(build_hierarchy(Domain::Interval, 3, 5).unwrap()).unwrap();
    let fine = hier.finest_level();
    let p = hier.pencils[fine].pencil();
    let etas: Vec<f64> = (0..3)
        .map(|c| eta_k_oracle(&p, &hier.coarse_space(fine, c).unwrap()).unwrap())
        .collect();
    for w in etas.windows(2) {
        let ratio = w[1] / w[0];
        assert!((ratio - 0.5).abs() <= 0.15, "ratio {ratio}");
    }
}

#[test]
fn ideal_space_eta_is_bounded_by_the_next_eigenvalue() {
    let p = fem_pencil(Domain::Interval, 81).unwrap().pencil();
    let exact = p.exact_eigs().unwrap();
    for nc in [4, 8, 16] {
        let eta = eta_k_oracle(&p, &ideal_coarse_space(&p, nc).unwrap()).unwrap();
        assert!(eta <= 1.0 / exact.values[nc].sqrt() + 1e-10);
    }
    assert!(ideal_coarse_space(&p, 80).is_err());
}
