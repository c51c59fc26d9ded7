//! Independent oracles: exhaustive searches, Monte-Carlo frequencies and
//! closed forms checked against the library.

use coopnet::config::Traffic;
use coopnet::dense::{self, DenseParams, RingDistribution, RingModel};
use coopnet::engine::{
    pick_pair, run_iteration, run_replication, run_simulation_with_workers, Network, NodeState,
};
use coopnet::geometry::{distance, sample_topology};
use coopnet::{run_simulation, Architecture, BehaviorState, Endpoint, SimConfig, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pair_frequencies_two_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let topo = sample_topology(2, 1.0, Architecture::AdHoc, &mut rng).unwrap();
    let draws = 10_000;
    let first = (0..draws)
        .filter(|_| pick_pair(&topo, &mut rng) == (0, Endpoint::Node(1)))
        .count();
    let f = first as f64 / draws as f64;
    assert!((f - 0.5).abs() <= 0.02, "{f}");
}

#[test]
fn pair_frequencies_thirty_nodes() {
    let m = 30;
    let cells = m * (m - 1);
    let draws = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let topo = sample_topology(m, 1.0, Architecture::AdHoc, &mut rng).unwrap();
    let mut counts = vec![0usize; m * m];
    for _ in 0..draws {
        let (tx, rx) = pick_pair(&topo, &mut rng);
        let Endpoint::Node(rx) = rx else {
            panic!("ad hoc pair hit the sink")
        };
        assert_ne!(tx, rx);
        counts[tx * m + rx] += 1;
    }
    let p = 1.0 / cells as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    let mut beyond3 = 0;
    let mut chi2 = 0.0;
    for tx in 0..m {
        for rx in 0..m {
            if tx == rx {
                assert_eq!(counts[tx * m + rx], 0);
                continue;
            }
            let f = counts[tx * m + rx] as f64 / draws as f64;
            let z = (f - p).abs() / se;
            assert!(z <= 5.0, "pair ({tx},{rx}) is {z:.2} s.e. off");
            if z > 3.0 {
                beyond3 += 1;
            }
            let expected = draws as f64 * p;
            chi2 += (counts[tx * m + rx] as f64 - expected).powi(2) / expected;
        }
    }
    // 870 cells at 3 s.e. give ~2.3 expected exceedances (sd ~1.5).
    assert!(beyond3 <= 10, "{beyond3} cells beyond 3 s.e.");
    // chi-square with 869 dof: mean 869, sd ~41.7.
    assert!((chi2 - 869.0).abs() < 5.0 * 41.7, "chi2 = {chi2}");
}

#[test]
fn central_pairs_always_hit_sink() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let topo = sample_topology(30, 1.0, Architecture::CentralSink, &mut rng).unwrap();
    for _ in 0..10_000 {
        assert_eq!(pick_pair(&topo, &mut rng).1, Endpoint::Sink);
    }
}

#[test]
fn defector_iteration_bookkeeping() {
    let cfg = SimConfig::desk(Architecture::AdHoc, Strategy::Def);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let topo = sample_topology(30, 1.0, Architecture::AdHoc, &mut rng).unwrap();
    let net = Network::new(topo.clone(), &cfg).unwrap();
    let mut state = NodeState::new(BehaviorState::uniform(30, false));
    let mut expected = 0.0;
    let g = run_iteration(&net, &mut state, 10, &mut rng, |o| {
        assert!(!o.assisted);
        let d = distance(topo.nodes[o.tx], topo.position(o.rx));
        assert!((o.tx_energy - d.powi(4)).abs() <= 1e-12 * (1.0 + o.tx_energy));
        expected -= (1.0 - 0.39f64.powi(4)) * d.powi(4);
    });
    assert!(g.iter().all(|&v| v <= 0.0));
    let total: f64 = g.iter().sum();
    assert!((total - expected).abs() <= 1e-12 * expected.abs());
}

fn quick(arch: Architecture, strategy: Strategy) -> SimConfig {
    let mut cfg = SimConfig::desk(arch, strategy);
    cfg.replications = 4;
    cfg.iterations = 12;
    cfg.slots = 200;
    cfg
}

#[test]
fn constant_strategies_keep_counts() {
    for arch in [Architecture::AdHoc, Architecture::CentralSink] {
        let def = run_simulation(&quick(arch, Strategy::Def)).unwrap();
        assert!(def
            .replications
            .iter()
            .all(|r| r.coop_counts.iter().all(|&c| c == 0)));
        let coop = run_simulation(&quick(arch, Strategy::Coop)).unwrap();
        assert!(coop
            .replications
            .iter()
            .all(|r| r.coop_counts.iter().all(|&c| c == 30)));
    }
    let minimal = run_simulation(&quick(Architecture::CentralSink, Strategy::Minimal)).unwrap();
    assert!(minimal
        .replications
        .iter()
        .all(|r| r.coop_counts.iter().all(|&c| c == 30)));
}

#[test]
fn adaptive_runs_start_without_cooperators() {
    for s in [Strategy::Tft, Strategy::Wsls] {
        let r = run_simulation(&quick(Architecture::AdHoc, s)).unwrap();
        for rep in &r.replications {
            assert_eq!(rep.coop_counts[0], 0);
            assert!(rep.coop_counts[1] >= 1);
        }
    }
}

fn pair_log(cfg: &SimConfig, rep: usize) -> Vec<(usize, usize, Endpoint)> {
    let mut log = Vec::new();
    run_replication(cfg, rep, |n, o| log.push((n, o.tx, o.rx))).unwrap();
    log
}

#[test]
fn strategies_share_traffic() {
    for traffic in [Traffic::Repeated, Traffic::Fresh] {
        for arch in [Architecture::AdHoc, Architecture::CentralSink] {
            let mut def = quick(arch, Strategy::Def);
            def.traffic = traffic;
            let reference = pair_log(&def, 2);
            for s in [Strategy::Coop, Strategy::Tft, Strategy::Wsls] {
                assert_eq!(
                    pair_log(&def.with_strategy(s), 2),
                    reference,
                    "{traffic} {arch} {s}"
                );
            }
        }
    }
}

#[test]
fn traffic_schedules() {
    let mut cfg = quick(Architecture::AdHoc, Strategy::Def);
    let slots = cfg.slots;
    let log = pair_log(&cfg, 0);
    let first: Vec<_> = log[..slots].iter().map(|e| (e.1, e.2)).collect();
    let second: Vec<_> = log[slots..2 * slots].iter().map(|e| (e.1, e.2)).collect();
    assert_eq!(first, second);
    cfg.traffic = Traffic::Fresh;
    let log = pair_log(&cfg, 0);
    let first: Vec<_> = log[..slots].iter().map(|e| (e.1, e.2)).collect();
    let second: Vec<_> = log[slots..2 * slots].iter().map(|e| (e.1, e.2)).collect();
    assert_ne!(first, second);
}

#[test]
fn worker_count_does_not_change_results() {
    for (arch, s) in [
        (Architecture::AdHoc, Strategy::Tft),
        (Architecture::CentralSink, Strategy::Wsls),
        (Architecture::CentralSink, Strategy::Minimal),
    ] {
        let cfg = quick(arch, s);
        let one = run_simulation_with_workers(&cfg, 1).unwrap();
        let three = run_simulation_with_workers(&cfg, 3).unwrap();
        assert_eq!(one, three);
        assert_eq!(one, run_simulation_with_workers(&cfg, 1).unwrap());
    }
}

#[test]
fn q_min_matches_grid_search() {
    let n = 1_000_000;
    let (grid_y, grid_q) = (0..=n)
        .map(|k| {
            let y = k as f64 / n as f64;
            (y, (1.0 - y).powi(4) + y.powi(3))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let (y, q) = dense::q_min(1.0, 4.0).unwrap();
    assert!((q - grid_q).abs() <= 1e-6, "{q} vs {grid_q}");
    assert!((y - grid_y).abs() <= 2e-6, "{y} vs {grid_y}");
    assert!(q <= grid_q + 1e-15);
}

#[test]
fn quadratic_closed_forms() {
    let (y, q) = dense::q_min(1.0, 2.0).unwrap();
    assert!((y - 0.5).abs() <= 1e-8 && (q - 0.75).abs() <= 1e-8);
    for x in [0.1, 0.37, 1.0, 2.5, 7.0] {
        let (y, q) = dense::q_min(x, 2.0).unwrap();
        assert!((q - 0.75 * x * x).abs() <= 1e-10 * x * x);
        assert!((y - 0.5 * x).abs() <= 1e-9 * x);
    }
    assert_eq!(dense::q_value(1.0, 0.0, 4.0).unwrap(), 1.0);
    assert_eq!(dense::q_value(1.0, 0.5, 2.0).unwrap(), 0.75);
    assert!(dense::q_value(1.0, 1.5, 2.0).is_err());
    assert!(dense::q_value(-1.0, 0.0, 2.0).is_err());
}

#[test]
fn minimal_energy_values() {
    let e = |r: f64, a: f64| {
        dense::minimal_total_energy(&DenseParams::new(r, a, 1.0).unwrap()).unwrap()
    };
    assert!((e(1.0, 2.0) - 0.25).abs() <= 1e-7);
    assert!((e(2.0, 2.0) - 2.0).abs() <= 2e-7);
    for a in [1.5, 2.0, 2.7, 3.0, 4.0, 5.5] {
        for r in [0.5, 1.0, 3.0] {
            let p = DenseParams::new(r, a, 2.0).unwrap();
            let quad = dense::minimal_total_energy(&p).unwrap();
            let closed = dense::minimal_total_energy_closed_form(&p).unwrap();
            assert!(
                (quad - closed).abs() <= 1e-7 * closed,
                "alpha {a} R {r}: {quad} vs {closed}"
            );
        }
    }
}

#[test]
fn ring_examples() {
    let r = 0.5;
    let two = RingModel::new(2, r).unwrap();
    let direct = RingDistribution::new(vec![vec![1.0], vec![1.0, 0.0]]).unwrap();
    let e = dense::ring_energy_profile(&two, &direct, 2.0).unwrap();
    assert!((e[0] - r * r).abs() < 1e-15 && (e[1] - 4.0 * r * r).abs() < 1e-15);
    let relay = RingDistribution::new(vec![vec![1.0], vec![0.0, 1.0]]).unwrap();
    let e = dense::ring_energy_profile(&two, &relay, 2.0).unwrap();
    assert!((e[0] - 3.0 * r * r).abs() < 1e-15 && (e[1] - r * r).abs() < 1e-15);
    let (mean, _) = dense::mean_and_variance(&two, &relay, 2.0).unwrap();
    assert!((mean - 2.0 * r * r).abs() < 1e-15);

    let best = dense::min_total_assignment(&two, 2.0);
    assert_eq!(best.row(2), &[0.0, 1.0]);
    assert_eq!(best.row(1), &[1.0]);
}

#[test]
fn discrete_optimum_tracks_half_radius() {
    let model = RingModel::for_radius(1.0, 200).unwrap();
    let best = dense::min_total_assignment(&model, 2.0);
    for i in 1..=200 {
        let j = best.row(i).iter().position(|&p| p == 1.0).unwrap();
        // (i-j)^2 + i*j is minimised at i/2; odd rings tie and take the smaller j.
        assert_eq!(j, i / 2, "ring {i}");
        let ratio = j as f64 / i as f64;
        if i >= 20 && (i % 2 == 0 || i >= 50) {
            assert!((ratio - 0.5).abs() <= 0.02 * 0.5, "ring {i}: j*={j}");
        }
    }
}

#[test]
fn discrete_matches_continuous_minimum() {
    let alpha = 4.0;
    let model = RingModel::for_radius(1.0, 400).unwrap();
    let best = dense::min_total_assignment(&model, alpha);
    let (mean, _) = dense::mean_and_variance(&model, &best, alpha).unwrap();
    // Continuous per-ring average: (1/R) * integral_0^R q(x) dx.
    let continuous =
        dense::minimal_total_energy(&DenseParams::new(1.0, alpha, 1.0).unwrap()).unwrap();
    let gap = (mean - continuous).abs() / continuous;
    assert!(gap < 0.02, "relative gap {gap}");
}

fn random_rows(rings: usize, rng: &mut ChaCha8Rng) -> RingDistribution {
    let rows = (1..=rings)
        .map(|i| {
            let raw: Vec<f64> = (0..i).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    RingDistribution::new(rows).unwrap()
}

#[test]
fn min_total_beats_random_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for alpha in [2.0, 4.0] {
        let model = RingModel::for_radius(1.0, 12).unwrap();
        let best = dense::min_total_assignment(&model, alpha);
        let (best_mean, _) = dense::mean_and_variance(&model, &best, alpha).unwrap();
        for _ in 0..1000 {
            let (mean, _) =
                dense::mean_and_variance(&model, &random_rows(12, &mut rng), alpha).unwrap();
            assert!(best_mean <= mean);
        }
    }
}

/// Exhaustive 1e-3 grid over the two free rows of the N=3 ring model.
fn grid_variance_n3(alpha: f64, r: f64) -> f64 {
    let steps = 1000usize;
    let h = 1.0 / steps as f64;
    let ra = r.powf(alpha);
    let pw = |v: f64| v.powf(alpha);
    // Transmit coefficient (i-j)^alpha and relay coefficient i * j^(alpha-1).
    let t = |i: usize, j: usize| pw((i - j) as f64);
    let c = |i: usize, j: usize| i as f64 * (j as f64).powf(alpha - 1.0);
    let mut best = f64::INFINITY;
    for a in 0..=steps {
        let p21 = a as f64 * h;
        let p20 = 1.0 - p21;
        let e1_base = t(1, 0) + p21 * c(2, 1);
        let e2_base = p20 * t(2, 0) + p21 * t(2, 1);
        for b in 0..=steps {
            let p31 = b as f64 * h;
            let e1 = ra * (e1_base + p31 * c(3, 1));
            for k in 0..=(steps - b) {
                let p32 = k as f64 * h;
                let p30 = 1.0 - p31 - p32;
                let e2 = ra * (e2_base + p32 * c(3, 2));
                let e3 = ra * (p30 * t(3, 0) + p31 * t(3, 1) + p32 * t(3, 2));
                let mean = (e1 + e2 + e3) / 3.0;
                let var = ((e1 - mean).powi(2) + (e2 - mean).powi(2) + (e3 - mean).powi(2)) / 3.0;
                if var < best {
                    best = var;
                }
            }
        }
    }
    best
}

#[test]
fn balance_matches_exhaustive_grid_at_three_rings() {
    let model = RingModel::for_radius(1.0, 3).unwrap();
    let out = dense::balance_optimize(&model, 2.0, 20_000, 1e-12);
    let grid = grid_variance_n3(2.0, model.width);
    assert!(
        (out.variance - grid).abs() <= 1e-3,
        "{} vs grid {}",
        out.variance,
        grid
    );
    assert!(out.variance <= grid + 1e-12);
}

#[test]
fn balance_dominates_baselines_at_fifty_rings() {
    for alpha in [2.0, 4.0] {
        let model = RingModel::for_radius(1.0, 50).unwrap();
        let out = dense::balance_optimize(&model, alpha, 5_000, 1e-9);
        assert!(out.distribution.feasibility_residual() <= 1e-8);
        assert!(out.distribution.min_entry() >= 0.0);
        let (_, uniform) =
            dense::mean_and_variance(&model, &RingDistribution::uniform(50), alpha).unwrap();
        let best = dense::min_total_assignment(&model, alpha);
        let (_, min_total) = dense::mean_and_variance(&model, &best, alpha).unwrap();
        assert!(out.variance <= uniform && out.variance <= min_total);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        let (_, check) = dense::mean_and_variance(&model, &out.distribution, alpha).unwrap();
        assert!((check - out.variance).abs() <= 1e-12 * check.max(1e-300));
    }
}
