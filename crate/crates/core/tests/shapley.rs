use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trusteq_core::attribution::FnGame;
use trusteq_core::kshap::{exact_shapley, solve_kernel_shap, table_game, KshapConfig};
use trusteq_core::ValueFunction;

/// Shapley values by averaging marginal contributions over every ordering.
fn permutation_oracle(d: usize, v: &dyn Fn(usize) -> f64) -> Vec<f64> {
    fn permute(
        k: usize,
        order: &mut Vec<usize>,
        d: usize,
        v: &dyn Fn(usize) -> f64,
        acc: &mut [f64],
        n: &mut f64,
    ) {
        if k == d {
            let mut set = 0usize;
            for &p in order.iter() {
                let before = v(set);
                set |= 1 << p;
                acc[p] += v(set) - before;
            }
            *n += 1.0;
            return;
        }
        for i in k..d {
            order.swap(k, i);
            permute(k + 1, order, d, v, acc, n);
            order.swap(k, i);
        }
    }
    let mut acc = vec![0.0; d];
    let mut n = 0.0;
    permute(0, &mut (0..d).collect(), d, v, &mut acc, &mut n);
    acc.iter().map(|a| a / n).collect()
}

/// Shapley values by the subset formula with weights |S|!(d-|S|-1)!/d!.
fn subset_oracle(d: usize, v: &dyn Fn(usize) -> f64) -> Vec<f64> {
    let fact: Vec<f64> = (0..=d)
        .scan(1.0, |f, i| {
            if i > 0 {
                *f *= i as f64;
            }
            Some(*f)
        })
        .collect();
    let mut phi = vec![0.0; d];
    for set in 0usize..(1 << d) {
        let s = set.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if set & (1 << i) == 0 {
                let w = fact[s] * fact[d - s - 1] / fact[d];
                *p += w * (v(set | (1 << i)) - v(set));
            }
        }
    }
    phi
}

fn random_table(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..1usize << d)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect()
}

fn exact_cfg() -> KshapConfig {
    KshapConfig {
        exact_threshold: 10,
        ..KshapConfig::default()
    }
}

#[test]
fn oracles_agree_with_each_other() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 2..=6 {
        let table = random_table(d, &mut rng);
        let v = |s: usize| table[s];
        let a = permutation_oracle(d, &v);
        let b = subset_oracle(d, &v);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_mode_matches_brute_force_shapley() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for d in 3..=10 {
        for _ in 0..20 {
            let table = random_table(d, &mut rng);
            let oracle = subset_oracle(d, &|s| table[s]);
            let game = table_game(d, table.clone());
            let brute = exact_shapley(&game).unwrap();
            let sol = solve_kernel_shap(&game, &exact_cfg(), &mut rng).unwrap();
            assert!(sol.exact);
            for i in 0..d {
                assert!((brute[i] - oracle[i]).abs() < 1e-9, "d={d} brute {i}");
                assert!(
                    (sol.phi[i] - oracle[i]).abs() < 1e-6,
                    "d={d} kshap {i}: {} vs {}",
                    sol.phi[i],
                    oracle[i]
                );
            }
        }
    }
}

#[test]
fn efficiency_holds_in_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (d, cfg) in [
        (8, exact_cfg()),
        (
            16,
            KshapConfig {
                exact_threshold: 0,
                budget: 300,
                ..KshapConfig::default()
            },
        ),
        (
            20,
            KshapConfig {
                exact_threshold: 0,
                budget: 2048,
                ..KshapConfig::default()
            },
        ),
    ] {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let game = FnGame::new(d, move |m: &[bool]| {
            let lin: f64 = m.iter().zip(&w).filter(|(b, _)| **b).map(|(_, x)| x).sum();
            lin.tanh() + if m[0] && m[1] { 0.5 } else { 0.0 }
        });
        let sol = solve_kernel_shap(&game, &cfg, &mut rng).unwrap();
        let sum: f64 = sol.phi.iter().sum();
        assert!(
            (sum - (sol.full_value - sol.base_value)).abs() < 1e-6,
            "d={d}"
        );
    }
}

#[test]
fn symmetric_players_share_credit() {
    // players 0 and 1 only matter together
    let game = FnGame::new(5, |m: &[bool]| {
        f64::from(u8::from(m[0] && m[1])) + 0.3 * f64::from(u8::from(m[4]))
    });
    let sol = solve_kernel_shap(&game, &exact_cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!((sol.phi[0] - 0.5).abs() < 1e-9);
    assert!((sol.phi[1] - 0.5).abs() < 1e-9);
    assert!(sol.phi[2].abs() < 1e-9 && sol.phi[3].abs() < 1e-9);
    assert!((sol.phi[4] - 0.3).abs() < 1e-9);
}

#[test]
fn sampled_mode_is_seed_deterministic() {
    let mut table_rng = ChaCha8Rng::seed_from_u64(9);
    let table = random_table(14, &mut table_rng);
    let game = table_game(14, table);
    let cfg = KshapConfig {
        exact_threshold: 0,
        budget: 512,
        ..KshapConfig::default()
    };
    let a = solve_kernel_shap(&game, &cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let b = solve_kernel_shap(&game, &cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let c = solve_kernel_shap(&game, &cfg, &mut ChaCha8Rng::seed_from_u64(78)).unwrap();
    assert_eq!(a.phi, b.phi);
    assert_ne!(a.phi, c.phi);
}

fn smooth_game(d: usize, rng: &mut ChaCha8Rng) -> impl ValueFunction {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pairs: Vec<(usize, usize, f64)> = (0..d)
        .map(|_| {
            (
                rng.random_range(0..d),
                rng.random_range(0..d),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    FnGame::new(d, move |m: &[bool]| {
        let lin: f64 = m.iter().zip(&w).filter(|(b, _)| **b).map(|(_, x)| x).sum();
        let inter: f64 = pairs
            .iter()
            .filter(|(i, j, _)| m[*i] && m[*j])
            .map(|(_, _, c)| c)
            .sum();
        (lin + inter).tanh()
    })
}

#[test]
fn sampled_error_shrinks_as_budget_doubles() {
    let d = 14;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let games: Vec<_> = (0..6).map(|_| smooth_game(d, &mut rng)).collect();
    let references: Vec<Vec<f64>> = games
        .iter()
        .map(|g| {
            let all: Vec<Vec<bool>> = (0..1usize << d)
                .map(|s| (0..d).map(|i| s & (1 << i) != 0).collect())
                .collect();
            let values = g.evaluate(&all).unwrap();
            subset_oracle(d, &|s| values[s])
        })
        .collect();
    let mut errors = Vec::new();
    for budget in [256, 512, 1024, 2048] {
        let cfg = KshapConfig {
            exact_threshold: 0,
            budget,
            ..KshapConfig::default()
        };
        let mut total = 0.0;
        for (g, reference) in games.iter().zip(&references) {
            for seed in 0..10 {
                let sol = solve_kernel_shap(g, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert!(!sol.exact);
                total += sol
                    .phi
                    .iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
            }
        }
        errors.push((total / 60.0).sqrt());
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "errors {errors:?}");
    }
}
