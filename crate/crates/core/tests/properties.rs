//! Invariants of the dynamics and instrumentation over random instances.

use proptest::prelude::*;
use tradepost_core::dynamics::{
    exchange, lazy_pr_step, pr_step, run, tft_step, RunOptions, Snapshot, TftState,
};
use tradepost_core::econ::normalize_money;
use tradepost_core::equilibrium::{eg_objective, solve_equilibrium};
use tradepost_core::lyapunov::{g_value, h_value, kl_decomposition_residual, kl_divergence};
use tradepost_core::{Allocation, Economy, MarketState, Matrix, Mode};

/// Valuations with roughly a third of the entries zero, patched so every
/// row and column has a positive entry.
fn economy(n: usize) -> impl Strategy<Value = Economy> {
    prop::collection::vec((any::<bool>(), any::<bool>(), 1.0f64..100.0), n * n).prop_map(move |v| {
        let mut a = Matrix::from_fn(n, |i, j| {
            let (z1, z2, x) = v[i * n + j];
            if z1 && z2 {
                0.0
            } else {
                x
            }
        });
        for i in 0..n {
            if a.row(i).iter().all(|&x| x == 0.0) {
                a[(i, i)] = 1.0;
            }
        }
        for j in 0..n {
            if (0..n).all(|i| a[(i, j)] == 0.0) {
                a[(j, j)] = 1.0;
            }
        }
        Economy::non_lazy(a).unwrap()
    })
}

/// Positive bids on each row's support with random budgets.
fn instance(max_n: usize) -> impl Strategy<Value = (Economy, MarketState)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            economy(n),
            prop::collection::vec(0.05f64..1.0, n * n),
            prop::collection::vec(0.1f64..1.0, n),
        )
            .prop_map(move |(e, w, budgets)| {
                let mut bids = Matrix::zeros(n);
                for i in 0..n {
                    let total: f64 = (0..n)
                        .filter(|&j| e.valuation(i, j) > 0.0)
                        .map(|j| w[i * n + j])
                        .sum();
                    for j in 0..n {
                        if e.valuation(i, j) > 0.0 {
                            bids[(i, j)] = w[i * n + j] / total * budgets[i];
                        }
                    }
                }
                let s = normalize_money(&MarketState::without_bank(bids).unwrap()).unwrap();
                (e, s)
            })
    })
}

fn alphas(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..=1.0, n)
}

fn row_sum_gap(s: &MarketState) -> f64 {
    s.bids
        .row_sums()
        .iter()
        .zip(&s.budget)
        .map(|(r, b)| (r - b).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pr_keeps_rows_money_and_support((e, s) in instance(7)) {
        let mut cur = s.clone();
        for _ in 0..50 {
            let next = pr_step(&e, &cur).unwrap();
            prop_assert!(row_sum_gap(&next) <= 1e-12);
            prop_assert!((next.total_money() - cur.total_money()).abs() <= 1e-12);
            for (b0, b) in s.bids.as_slice().iter().zip(next.bids.as_slice()) {
                if *b0 == 0.0 {
                    prop_assert_eq!(*b, 0.0);
                }
            }
            cur = next;
        }
    }

    #[test]
    fn lazy_keeps_rows_money_and_support(
        (e, s, alpha) in instance(7).prop_flat_map(|(e, s)| {
            let n = e.n();
            (Just(e), Just(s), alphas(n))
        }),
        matching in any::<bool>(),
    ) {
        let e = e.with_alpha(alpha).unwrap();
        let s = if matching { s.with_matching_bank(e.alpha()) } else { s };
        let mut cur = s.clone();
        for _ in 0..50 {
            let next = lazy_pr_step(&e, &cur).unwrap();
            prop_assert!(row_sum_gap(&next) <= 1e-12);
            prop_assert!((next.total_money() - cur.total_money()).abs() <= 1e-12);
            for (b0, b) in s.bids.as_slice().iter().zip(next.bids.as_slice()) {
                if *b0 == 0.0 {
                    prop_assert_eq!(*b, 0.0);
                }
            }
            cur = next;
        }
    }

    #[test]
    fn lazy_with_alpha_one_is_pr((e, s) in instance(7)) {
        let mut a = s.clone();
        let mut b = s;
        for _ in 0..20 {
            a = pr_step(&e, &a).unwrap();
            b = lazy_pr_step(&e, &b).unwrap();
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn allocations_clear_priced_goods((e, s) in instance(8)) {
        let ex = exchange(&e, &s.bids);
        for (j, col) in ex.allocation.col_sums().iter().enumerate() {
            if ex.prices[j] > 0.0 {
                prop_assert!((col - 1.0).abs() <= 1e-12);
            }
        }
        let total: f64 = ex.prices.iter().sum();
        prop_assert!((total - s.budget.iter().sum::<f64>()).abs() <= 1e-12);
    }

    #[test]
    fn tft_keeps_fractions_and_support((e, s) in instance(6)) {
        // with every valuation positive each player values what it receives
        let n = e.n();
        let e = Economy::non_lazy(Matrix::from_fn(n, |i, j| e.valuation(i, j).max(1.0))).unwrap();
        let mut y = TftState::from_bids(&s.bids).unwrap();
        for _ in 0..30 {
            let next = tft_step(&e, &y).unwrap();
            for g in 0..n {
                let row: f64 = next.y.row(g).iter().sum();
                prop_assert!((row - 1.0).abs() <= 1e-12);
                for p in 0..n {
                    // good g only goes to player p if p gave good g's owner something
                    if y.y[(p, g)] == 0.0 {
                        prop_assert_eq!(next.y[(g, p)], 0.0);
                    }
                }
            }
            y = next;
        }
    }

    #[test]
    fn runs_are_deterministic((e, s) in instance(5), lazy in any::<bool>()) {
        let mode = if lazy { Mode::Lazy } else { Mode::Pr };
        let e = if lazy { e.with_uniform_alpha(0.5).unwrap() } else { e };
        let a = run(&e, Snapshot::Market(s.clone()), &RunOptions::new(mode, 40)).unwrap();
        let b = run(&e, Snapshot::Market(s), &RunOptions::new(mode, 40)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalize_scales_uniformly((_, s) in instance(5), factor in 0.01f64..100.0) {
        let mut scaled = s.clone();
        scaled.bids.scale(factor);
        scaled.budget.iter_mut().for_each(|b| *b *= factor);
        let back = normalize_money(&scaled).unwrap();
        prop_assert!((back.total_money() - 1.0).abs() <= 1e-12);
        prop_assert!(back.bids.max_abs_diff(&s.bids) <= 1e-12);
    }

    #[test]
    fn decomposition_identity_holds(
        (b, b2) in (1usize..=8).prop_flat_map(|n| (
            prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..1.0], n * n),
            prop::collection::vec(0.001f64..1.0, n * n),
        ).prop_map(move |(u, v)| (
            Matrix::from_fn(n, |i, j| u[i * n + j]),
            Matrix::from_fn(n, |i, j| v[i * n + j]),
        )))
    ) {
        prop_assert!(kl_decomposition_residual(&b, &b2).unwrap() <= 1e-12);
    }

    #[test]
    fn kl_is_non_negative(
        (p, q) in (1usize..10).prop_flat_map(|n| (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
        ))
    ) {
        let sp: f64 = p.iter().sum();
        prop_assume!(sp > 0.0);
        let sq: f64 = q.iter().sum();
        let p: Vec<f64> = p.iter().map(|x| x / sp).collect();
        let q: Vec<f64> = q.iter().map(|x| x / sq).collect();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
    }

    #[test]
    fn h_is_non_positive(
        (p, b, alpha) in (1usize..8).prop_flat_map(|n| (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
            alphas(n),
        ))
    ) {
        let n = p.len();
        let e = Economy::non_lazy(Matrix::filled(n, 1.0)).unwrap();
        let c = solve_equilibrium(&e, 1e-12, 10).unwrap();
        prop_assert!(h_value(&c, &p, &b, &alpha).unwrap() <= 1e-12);
        prop_assert_eq!(h_value(&c, &p, &b, &vec![1.0; n]).unwrap(), 0.0);
        prop_assert!(h_value(&c, &p, &p, &alpha).unwrap().abs() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Equilibrium utilities maximize the price-weighted log utility over
    /// feasible allocations, so `g` is never positive.
    #[test]
    fn equilibrium_utilities_maximize_eg(
        (e, _) in instance(6),
        draws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 36), 100),
    ) {
        let n = e.n();
        let c = solve_equilibrium(&e, 1e-10, 1_000_000).unwrap();
        let best = eg_objective(&c.p_star, &c.u_star).unwrap();
        for d in draws {
            let mut x = Matrix::from_fn(n, |i, j| if e.valuation(i, j) > 0.0 { d[i * n + j] + 1e-3 } else { 0.0 });
            for (j, col) in x.col_sums().into_iter().enumerate() {
                for i in 0..n {
                    x[(i, j)] /= col;
                }
            }
            let u = tradepost_core::dynamics::utilities(&e, &Allocation(x));
            let value = eg_objective(&c.p_star, &u).unwrap();
            let g = g_value(&c, &u).unwrap();
            let differs = u.iter().zip(c.u_star.iter()).any(|(a, b)| (a - b).abs() > 1e-6 * b);
            if differs {
                prop_assert!(value < best);
                prop_assert!(g < 0.0);
            } else {
                prop_assert!(value <= best + 1e-9);
                prop_assert!(g <= 1e-9);
            }
        }
    }
}
