use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use adcons::export::format_sig;
use adcons::graph::{self, Graph, WeightState};
use adcons::performance;
use adcons::protocol::{self, SystemState};
use adcons::riccati::{self, Mode, PerformanceSpec, PlantModel};

fn matrix(rows: usize, cols: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-range..range, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(d, d, 1.0).prop_map(move |g| &g * g.transpose() + DMatrix::identity(d, d) * 0.1)
}

fn graph_and_state() -> impl Strategy<Value = (Graph, SystemState)> {
    (2usize..7, 1usize..4).prop_flat_map(|(n, d)| {
        let pairs = graph::pair_count(n);
        (
            prop::collection::vec(any::<bool>(), pairs),
            prop::collection::vec(-5.0..5.0f64, n * d),
            prop::collection::vec(1.0..4.0f64, pairs),
        )
            .prop_map(move |(mask, x, w)| {
                let edges = graph::pairs(n)
                    .zip(mask)
                    .filter(|(_, m)| *m)
                    .map(|(e, _)| e);
                let g = Graph::new(n, edges).unwrap();
                let weights = WeightState::from_values(n, w).unwrap();
                (
                    g,
                    SystemState::new(0.0, DVector::from_vec(x), weights, d).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_laplacian_is_symmetric_with_zero_rows((g, s) in graph_and_state()) {
        let l = graph::weighted_laplacian(&g, &s.weights).unwrap();
        prop_assert!((&l - l.transpose()).amax() == 0.0);
        for i in 0..l.nrows() {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
        }
        prop_assert!(l.symmetric_eigen().eigenvalues.min() > -1e-10);
    }

    #[test]
    fn cost_rate_ignores_common_offset((_g, s) in graph_and_state(), shift in -10.0..10.0f64) {
        let d = s.state_dim();
        let n = s.agent_count();
        let q = DMatrix::identity(d, d);
        let base = performance::cost_rate(&s.x, &q, n).unwrap();
        let shifted = DVector::from_fn(n * d, |k, _| s.x[k] + shift * (1 + k % d) as f64);
        let moved = performance::cost_rate(&shifted, &q, n).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn inputs_sum_to_zero((g, s) in graph_and_state()) {
        let d = s.state_dim();
        let ku = DMatrix::from_fn(1, d, |_, j| 0.3 + j as f64);
        let u = protocol::control_inputs(&s, &g, &ku).unwrap();
        let total: f64 = u.iter().sum();
        prop_assert!(total.abs() < 1e-9);
    }

    #[test]
    fn switch_resets_only_new_edges((old, s) in graph_and_state(), mask_seed in any::<u64>()) {
        let n = s.agent_count();
        let edges = graph::pairs(n).enumerate().filter(|(j, _)| (mask_seed >> (j % 64)) & 1 == 1).map(|(_, e)| e);
        let new = Graph::new(n, edges).unwrap();
        let after = protocol::apply_switch(&s, &old, &new).unwrap();
        for (i, k) in graph::pairs(n) {
            let w = after.weights.get(i, k);
            if new.has_edge(i, k) && !old.has_edge(i, k) {
                prop_assert_eq!(w, 1.0);
            } else {
                prop_assert_eq!(w, s.weights.get(i, k));
            }
        }
        prop_assert_eq!(&after.x, &s.x);
    }

    #[test]
    fn linear_design_is_stabilizing(
        (a, q) in (1usize..5).prop_flat_map(|d| (matrix(d, d, 2.0), spd(d))),
        gamma in 0.2..20.0f64,
    ) {
        // full actuation is always stabilizable
        let d = a.nrows();
        let plant = PlantModel::new(a.clone(), DMatrix::identity(d, d)).unwrap();
        let spec = PerformanceSpec::new(q, gamma).unwrap();
        let gains = riccati::synthesize_linear(&plant, &spec).unwrap();
        prop_assert!(gains.structure_defect() < 1e-12);
        prop_assert!(gains.certificate.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        let closed = &a - &gains.certificate * gamma;
        let max_re = closed.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(max_re < 0.0);
        let residual = riccati::riccati_residual(&gains.certificate, &plant, &spec, Mode::Linear).unwrap();
        let scale = 1.0 + gains.certificate.amax() * (1.0 + a.amax());
        prop_assert!(residual.abs() < 1e-8 * scale);
    }

    #[test]
    fn significant_digit_format_round_trips(v in prop::num::f64::NORMAL) {
        let text = format_sig(v, 9);
        let back: f64 = text.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-9 * v.abs());
        prop_assert_eq!(format_sig(back, 9), text);
    }
}
