mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{best_hit_mass, jacobi_singular_values, kkt_sum_to_one, random_tensor, rng};
use tcache::caching::{file_mass, hit_rate, mpc_place, oracle_place};
use tcache::completion::{objective, FwConfig, FwSolver, UpdateRule};
use tcache::ingest::{assign_bs, build_demand_tensor, IngestConfig, RatingsRecord};
use tcache::linalg::truncated_svd;
use tcache::prediction::{fit_predict, DemandHistory, PredictorConfig, PredictorMode};
use tcache::tensor::{fold, unfold, DenseTensor, Matrix, Shape, SparseTensor, UnfoldSpec};

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (3usize..=5).prop_flat_map(|n| prop::collection::vec(1usize..=4, n)).prop_map(|d| Shape::new(d).unwrap())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(shape in shape_strategy(), seed in any::<u64>()) {
        let x = random_tensor(&shape, seed);
        for k in 0..shape.order() {
            for d in 1..shape.order() {
                let spec = UnfoldSpec::new(k, d);
                let m = unfold(&x, spec).unwrap();
                prop_assert_eq!(m.rows() * m.cols(), shape.len());
                let (rows, cols) = spec.dims(&shape).unwrap();
                prop_assert_eq!((rows, cols), (m.rows(), m.cols()));
                let back = fold(&m, spec, &shape).unwrap();
                prop_assert_eq!(back.values(), x.values());
            }
        }
    }

    #[test]
    fn unfold_is_linear(shape in shape_strategy(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_tensor(&shape, seed);
        let y = random_tensor(&shape, seed.wrapping_add(1));
        let mut z = x.clone();
        z.scale(a);
        z.axpy(b, &y).unwrap();
        let n = shape.order();
        let spec = UnfoldSpec::new(seed as usize % n, 1 + (seed as usize / n) % (n - 1));
        let (mx, my, mz) = (unfold(&x, spec).unwrap(), unfold(&y, spec).unwrap(), unfold(&z, spec).unwrap());
        for i in 0..mz.values().len() {
            let want = a * mx.values()[i] + b * my.values()[i];
            prop_assert!((mz.values()[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn squared_norm_is_self_inner(shape in shape_strategy(), seed in any::<u64>()) {
        let x = random_tensor(&shape, seed);
        let n = x.fro_norm();
        prop_assert!(rel_close(n * n, x.inner(&x).unwrap(), 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn svd_matches_jacobi_oracle(rows in 1usize..=50, cols in 1usize..=50, r in 1usize..=50, seed in any::<u64>()) {
        let mut g = rng(seed);
        let m = Matrix::from_fn(rows, cols, |_, _| g.random_range(-1.0..1.0));
        let r = r.min(rows).min(cols);
        let svd = truncated_svd(&m, r, seed).unwrap();
        let dense: Vec<Vec<f64>> = (0..rows).map(|i| (0..cols).map(|j| m.get(i, j)).collect()).collect();
        let oracle = jacobi_singular_values(&dense);
        prop_assert_eq!(svd.sigma.len(), r);
        for (s, o) in svd.sigma.iter().zip(&oracle) {
            prop_assert!((s - o).abs() <= 1e-6 * oracle[0], "{} vs {}", s, o);
        }
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.sigma.iter().all(|&s| s >= 0.0));
        let again = truncated_svd(&m, r, seed).unwrap();
        prop_assert_eq!(
            svd.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            again.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn solver_trace_and_ledger(
        shape in shape_strategy(),
        seed in any::<u64>(),
        budget in 1usize..=10,
        fraction in 0.2f64..1.0,
        rank_one in any::<bool>(),
    ) {
        let truth = random_tensor(&shape, seed);
        let mut g = rng(seed ^ 0x5eed);
        let mut offsets: Vec<usize> = (0..shape.len()).filter(|_| g.random_bool(fraction)).collect();
        if offsets.is_empty() {
            offsets.push(0);
        }
        let observed = SparseTensor::from_dense_at(&truth, &offsets).unwrap();
        let n = shape.order();
        let cfg = FwConfig {
            rank_budget: budget,
            shift: 1 + (seed as usize) % (n - 1),
            update_rule: if rank_one { UpdateRule::RankOne } else { UpdateRule::MultiRank },
            seed,
            ..FwConfig::default()
        };
        let mut solver = FwSolver::new(&observed, &cfg).unwrap();
        let mut last_obj = objective(&solver.state().x, &observed).unwrap();
        let mut appends = 0;
        while solver.step().unwrap().is_some() {
            appends += 1;
            let state = solver.state();
            let obj = objective(&state.x, &observed).unwrap();
            prop_assert!(obj <= last_obj * (1.0 + 1e-12) + 1e-300, "objective rose {} -> {}", last_obj, obj);
            last_obj = obj;
            prop_assert!(state.total_rank() <= budget);
            for k in 0..n {
                let cap = UnfoldSpec::new(k, cfg.shift).min_dim(&shape).unwrap();
                prop_assert!(state.mode_ranks[k] <= cap);
                prop_assert_eq!(state.mode_ranks[k], state.components.mode(k).rank());
            }
            prop_assert!(state.representation_error().unwrap() <= 1e-8);
        }
        prop_assert!(appends <= budget);
        let trace = &solver.state().trace;
        prop_assert_eq!(trace[0].rse, 1.0);
        prop_assert!(trace.windows(2).all(|w| w[1].rse <= w[0].rse * (1.0 + 1e-12)));
    }
}

fn random_simplex(g: &mut impl Rng, files: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..files).map(|_| g.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Slots following `p_t = sum_m c_m p_{t-m}` from random starting shares.
fn recursive_history(files: usize, window: usize, coef: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut g = rng(seed);
    let mut slots: Vec<Vec<f64>> = (0..coef.len()).map(|_| random_simplex(&mut g, files)).collect();
    while slots.len() < window {
        let t = slots.len();
        slots.push((0..files).map(|f| coef.iter().enumerate().map(|(m, c)| c * slots[t - 1 - m][f]).sum()).collect());
    }
    slots
}

fn history(slots: &[Vec<f64>]) -> DemandHistory {
    let wrapped: Vec<Vec<Vec<f64>>> = slots.iter().map(|s| vec![s.clone()]).collect();
    DemandHistory::from_shares(&wrapped).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forecasts_stay_on_simplex(
        files in 2usize..20,
        window in 3usize..12,
        order_frac in 0.0f64..1.0,
        seed in any::<u64>(),
        ls in any::<bool>(),
    ) {
        let mut g = rng(seed);
        let slots: Vec<Vec<f64>> = (0..window).map(|_| random_simplex(&mut g, files)).collect();
        let order = 1 + ((window - 2) as f64 * order_frac) as usize;
        let mode = if ls { PredictorMode::LeastSquares } else { PredictorMode::Mean };
        let fc = fit_predict(&history(&slots), &PredictorConfig { order, mode }, 0).unwrap();
        prop_assert!(fc.shares.iter().all(|&p| p >= 0.0));
        prop_assert!((fc.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        prop_assert!((fc.coefficients.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn forecast_commutes_with_file_permutation(files in 2usize..16, window in 4usize..10, seed in any::<u64>()) {
        let mut g = rng(seed);
        let slots: Vec<Vec<f64>> = (0..window).map(|_| random_simplex(&mut g, files)).collect();
        let mut perm: Vec<usize> = (0..files).collect();
        for i in (1..files).rev() {
            perm.swap(i, g.random_range(0..=i));
        }
        let shuffled: Vec<Vec<f64>> = slots.iter().map(|s| perm.iter().map(|&p| s[p]).collect()).collect();
        let cfg = PredictorConfig { order: 2, mode: PredictorMode::LeastSquares };
        let a = fit_predict(&history(&slots), &cfg, 0).unwrap();
        let b = fit_predict(&history(&shuffled), &cfg, 0).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((b.shares[i] - a.shares[p]).abs() <= 1e-9);
        }
    }

    #[test]
    fn mean_equals_least_squares_on_uniform_recursion(files in 3usize..16, order in 1usize..4, seed in any::<u64>()) {
        let coef = vec![1.0 / order as f64; order];
        let slots = recursive_history(files, 3 * order + 4, &coef, seed);
        let h = history(&slots);
        let ls = fit_predict(&h, &PredictorConfig { order, mode: PredictorMode::LeastSquares }, 0).unwrap();
        let mean = fit_predict(&h, &PredictorConfig { order, mode: PredictorMode::Mean }, 0).unwrap();
        prop_assume!(!ls.fallback);
        for (a, b) in ls.shares.iter().zip(&mean.shares) {
            prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
        }
    }

    #[test]
    fn feasible_unconstrained_solution_is_returned(files in 4usize..16, w in prop::collection::vec(0.1f64..1.0, 2..=3), seed in any::<u64>()) {
        let s: f64 = w.iter().sum();
        let coef: Vec<f64> = w.iter().map(|v| v / s).collect();
        let order = coef.len();
        let slots = recursive_history(files, 4 * order + 4, &coef, seed);
        let fc = fit_predict(&history(&slots), &PredictorConfig { order, mode: PredictorMode::LeastSquares }, 0).unwrap();
        prop_assume!(!fc.fallback);
        let mut z = Vec::new();
        let mut y = Vec::new();
        for t in order..slots.len() {
            for f in 0..files {
                z.push((1..=order).map(|m| slots[t - m][f]).collect::<Vec<_>>());
                y.push(slots[t][f]);
            }
        }
        let oracle = kkt_sum_to_one(&z, &y);
        for (c, o) in fc.coefficients.iter().zip(&oracle) {
            prop_assert!((c - o).abs() <= 1e-8, "{:?} vs {:?}", fc.coefficients, oracle);
        }
    }
}

fn random_slot(files: usize, num_bs: usize, seed: u64) -> DenseTensor {
    let mut g = rng(seed);
    let shape = Shape::new(vec![files, files, num_bs]).unwrap();
    DenseTensor::from_fn(shape, |_| if g.random_bool(0.3) { g.random_range(0.0..5.0) } else { 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hit_rate_bounds_and_oracle_dominance(files in 1usize..24, num_bs in 1usize..4, cap_frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let slot = random_slot(files, num_bs, seed);
        let capacity = ((files as f64) * cap_frac).round() as usize;
        let mut g = rng(seed ^ 1);
        for b in 0..num_bs {
            let scores: Vec<f64> = (0..files).map(|_| g.random_range(0.0..1.0)).collect();
            let plan = mpc_place(&scores, capacity).unwrap();
            prop_assert!(plan.is_feasible());
            prop_assert_eq!(plan.cached_files().len(), capacity);
            let got = hit_rate(&slot, &plan, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&got.hit_rate));
            let best = hit_rate(&slot, &oracle_place(&slot, b, capacity).unwrap(), b).unwrap();
            prop_assert!(best.hit_rate >= got.hit_rate);
            if !best.zero_demand {
                let mass = file_mass(&slot, b);
                let total: f64 = mass.iter().sum();
                prop_assert!((best.hit_rate - best_hit_mass(&mass, capacity) / total).abs() <= 1e-12);
            }
            let full = hit_rate(&slot, &mpc_place(&scores, files).unwrap(), b).unwrap();
            prop_assert!(full.zero_demand || full.hit_rate == 1.0);
        }
    }

    #[test]
    fn hit_rate_grows_with_capacity(files in 1usize..24, seed in any::<u64>()) {
        let slot = random_slot(files, 1, seed);
        let mut g = rng(seed ^ 2);
        let scores: Vec<f64> = (0..files).map(|_| g.random_range(0.0..1.0)).collect();
        let mut last = 0.0;
        for capacity in 0..=files {
            let h = hit_rate(&slot, &mpc_place(&scores, capacity).unwrap(), 0).unwrap().hit_rate;
            prop_assert!(h >= last - 1e-15);
            last = h;
        }
    }
}

fn records_strategy() -> impl Strategy<Value = Vec<RatingsRecord>> {
    prop::collection::vec((0u64..40, 0u64..30, 0u8..=5, 0i64..(200 * 86_400)), 1..300).prop_map(|v| {
        v.into_iter()
            .map(|(user_id, movie_id, stars, t)| RatingsRecord {
                user_id,
                movie_id,
                rating: stars as f64,
                timestamp: 1 + t,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_conserves_and_partitions(records in records_strategy(), num_bs in 1usize..4, seed in any::<u64>()) {
        let cfg = IngestConfig { top_f: 8, num_bs, slot_days: 30, seed, ..IngestConfig::default() };
        let movies: std::collections::BTreeSet<u64> = records.iter().map(|r| r.movie_id).collect();
        prop_assume!(movies.len() >= cfg.top_f);
        let a = build_demand_tensor(&records, &cfg).unwrap();
        let b = build_demand_tensor(&records, &cfg).unwrap();
        prop_assert_eq!(a.slots.len(), b.slots.len());
        for (x, y) in a.slots.iter().zip(&b.slots) {
            prop_assert_eq!(x.values(), y.values());
        }
        let kept: Vec<&RatingsRecord> = records.iter().filter(|r| a.movie_ids.contains(&r.movie_id)).collect();
        prop_assert_eq!(kept.len(), a.kept_ratings);
        let total: f64 = a.slots.iter().map(|s| s.values().iter().sum::<f64>()).sum();
        prop_assert_eq!(total, a.kept_ratings as f64);
        for bs in 0..num_bs {
            let want = kept.iter().filter(|r| assign_bs(r.user_id, num_bs, seed) == bs).count() as f64;
            let got: f64 = a.slots.iter().map(|s| file_mass(s, bs).iter().sum::<f64>()).sum();
            prop_assert_eq!(got, want);
        }
    }
}
