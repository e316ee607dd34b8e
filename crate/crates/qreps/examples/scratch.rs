use qreps::agent::{run_qreps, run_qreps_simulator, AgentConfig, LossKind, SimulatorConfig};
use qreps::features::FeatureMap;
use qreps::envs;
use qreps::features::Theta;
use qreps::lbe::{lbe, LossContext};
use qreps::mdp::{exact_occupancy, StationaryPolicy};
use qreps::oracle::{action_gap, expectation_elbe, expectation_elbe_minimizer};
use qreps::saddle::{GradMode, LearnerRule, SamplerRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn default_cfg() -> AgentConfig {
    AgentConfig {
        eta: 0.5,
        alpha: 0.5,
        beta: 0.1,
        beta_prime: 0.1,
        inner_steps: 300,
        iterations: 200,
        batch_size: 200,
        horizon: 200,
        loss: LossKind::Elbe,
        learner: LearnerRule::Sgd,
        sampler: SamplerRule::ExponentiatedGradient,
        grad: GradMode::Exact,
        warm_start: true,
        explore: 0.0,
    }
}

fn bias_curve() {
    // Bias at the expectation-side minimizer and at zero, per eta.
    let mdp = envs::two_state_stochastic().with_discount(0.9).unwrap();
    let prior = StationaryPolicy::uniform(2, 2);
    let occ = exact_occupancy(&mdp, &prior).unwrap();
    println!("eta  gap_at_expectation_min  gap_at_zero");
    for eta in [0.1, 0.5, 2.0, 10.0] {
        let ctx = LossContext::new(&mdp, &prior, Some(&occ), eta, 0.5).unwrap();
        let (theta_e, _) = expectation_elbe_minimizer(&ctx, 1e-7, 200_000).unwrap();
        let gap_min = expectation_elbe(&ctx, &theta_e).unwrap() - lbe(&theta_e, &ctx).unwrap();
        let zero = Theta(vec![0.0; 4]);
        let gap_zero = expectation_elbe(&ctx, &zero).unwrap() - lbe(&zero, &ctx).unwrap();
        println!("{eta:>5}  {gap_min:.9}  {gap_zero:.9}");
    }
}

fn gamma_arg() -> f64 {
    std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0)
}

fn exact_eta() {
    // Exact-loss agent across the eta grid (gamma from argv).
    let gamma = gamma_arg();
    let mdp = envs::two_state_stochastic().with_discount(gamma).unwrap();
    for eta in [0.1, 0.5, 2.0, 10.0] {
        let mut cfg = default_cfg();
        cfg.eta = eta;
        cfg.alpha = eta;
        cfg.loss = LossKind::ExactLbe;
        cfg.iterations = 100;
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
        let last = rec.points.last().unwrap();
        let best = rec
            .points
            .iter()
            .map(|p| p.return_normalized)
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "eta {eta:>5}: final {:.4} best {:.4} ({:?})",
            last.return_normalized,
            best,
            t0.elapsed()
        );
    }
}

fn elbe_seeds() {
    let gamma = gamma_arg();
    let mdp = envs::two_state_stochastic().with_discount(gamma).unwrap();
    // eta = 10, elbe: count risk-seeking finishes (go-mass at x0 >= 0.9).
    for (label, eta, loss) in [
        ("elbe eta=10", 10.0, LossKind::Elbe),
        ("elbe eta=0.1", 0.1, LossKind::Elbe),
        ("elbe eta=0.5", 0.5, LossKind::Elbe),
        ("selbe eta=10", 10.0, LossKind::Selbe),
    ] {
        let t0 = Instant::now();
        let mut go_count = 0;
        let mut ret_count = 0;
        let mut finals = Vec::new();
        for seed in 0..10 {
            let mut cfg = default_cfg();
            cfg.eta = eta;
            cfg.alpha = eta;
            cfg.loss = loss;
            cfg.batch_size = 100;
            cfg.iterations = 100;
            cfg.grad = GradMode::Exact;
            cfg.warm_start = true;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
            let go_mass = rec.final_policy.prob(0, 1);
            let norm = rec.points.last().unwrap().return_normalized;
            if go_mass >= 0.9 {
                go_count += 1;
            }
            if norm >= 0.95 {
                ret_count += 1;
            }
            finals.push((go_mass, norm));
        }
        println!(
            "{label}: go>=0.9 in {go_count}/10, norm>=0.95 in {ret_count}/10 ({:?})",
            t0.elapsed()
        );
        for (g, n) in &finals {
            print!(" ({g:.3},{n:.3})");
        }
        println!();
    }
}

fn bench() {
    // Table-1 rows, 10 seeds, 200 episodes each.
    let rows: Vec<(&str, AgentConfig)> = vec![
        ("two-state-stochastic", default_cfg()),
        ("single-chain", {
            let mut c = default_cfg();
            c.eta = 5.0;
            c.alpha = 5.0;
            c.beta = 0.05;
            c
        }),
        ("double-chain", {
            let mut c = default_cfg();
            c.beta = 0.01;
            c
        }),
        ("river-swim", {
            let mut c = default_cfg();
            c.eta = 2.5;
            c.alpha = 2.5;
            c.beta = 0.01;
            c
        }),
        ("wide-tree", {
            let mut c = default_cfg();
            c.beta_prime = 0.05;
            c
        }),
        ("windy-gridworld", {
            let mut c = default_cfg();
            c.beta_prime = 0.03;
            c
        }),
        ("two-state-deterministic", {
            let mut c = default_cfg();
            c.beta = 0.05;
            c
        }),
    ];
    let gamma = gamma_arg();
    let grad = match std::env::args().nth(3).as_deref() {
        Some("sampled") => GradMode::Sampled,
        _ => GradMode::Exact,
    };
    let warm = !matches!(std::env::args().nth(4).as_deref(), Some("cold"));
    let eps: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    for (name, mut cfg) in rows {
        let mdp = envs::by_name(name).unwrap().with_discount(gamma).unwrap();
        cfg.grad = grad;
        cfg.warm_start = warm;
        cfg.explore = eps;
        let t0 = Instant::now();
        let mut final_mean = 0.0;
        let mut mins = Vec::new();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
            let norm = rec.points.last().unwrap().return_normalized;
            final_mean += norm / 10.0;
            mins.push(norm);
        }
        mins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "{name}: mean final {final_mean:.4} min {:.4} max {:.4} ({:?})",
            mins[0],
            mins[9],
            t0.elapsed()
        );
    }
}

fn gap() {
    // Final-iteration evaluation-step action gap at x0 across alpha.
    let mdp = envs::two_state_stochastic();
    let mut gaps = Vec::new();
    for alpha in [1.0, 10.0, 100.0, 1000.0] {
        let mut cfg = default_cfg();
        cfg.alpha = alpha;
        cfg.eta = 0.5;
        cfg.loss = LossKind::ExactLbe;
        cfg.iterations = 50;
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
        let g = action_gap(rec.theta_steps.last().unwrap(), 2, 0);
        println!("alpha {alpha:>6}: final-step gap {g:.6e} ({:?})", t0.elapsed());
        gaps.push((alpha, g));
    }
    // log-log least squares slope
    let n = gaps.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (a, g) in &gaps {
        let x = a.ln();
        let y = g.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("log-log slope {slope:.4}");
}

fn elbe_min() {
    use qreps::lbe::value_function;
    use qreps::mdp::{finite_horizon_occupancy, sample_batch_episodic};
    use qreps::saddle::{minmax_solve, InnerOptConfig, PreparedBatch};

    let mdp = envs::two_state_stochastic();
    let prior = StationaryPolicy::uniform(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = sample_batch_episodic(&mdp, &prior, 600, 200, &mut rng).unwrap();
    let fh = finite_horizon_occupancy(&mdp, &prior, 200).unwrap();
    for eta in [0.1, 0.5, 10.0] {
        let prepared = PreparedBatch::from_tabular(&batch, &mdp, &prior, eta, 0.5, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 40_000,
            beta: 0.02,
            beta_prime: 0.0,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::BestResponse,
            grad: GradMode::Exact,
        };
        let out = minmax_solve(&prepared, &cfg, None, &mut rng).unwrap();
        let th = &out.theta_last;
        println!(
            "empirical eta {eta:>5}: Q(x0)=[{:+.4} {:+.4}] Q(x1)=[{:+.4} {:+.4}] loss {:.6}",
            th.0[0], th.0[1], th.0[2], th.0[3],
            prepared.empirical_loss(th).unwrap()
        );
        // exact counterpart at discount 1 with the finite-horizon reference
        let ctx = LossContext::new(&mdp, &prior, Some(&fh), eta, 0.5).unwrap();
        let (texact, rep) = qreps::oracle::exact_lbe_minimizer(&ctx).unwrap();
        let fmap = qreps::features::FeatureMap::tabular(2, 2);
        println!(
            "exact     eta {eta:>5}: Q(x0)=[{:+.4} {:+.4}] Q(x1)=[{:+.4} {:+.4}] loss {:.6} V(x0) {:.4} V(x1) {:.4}",
            texact.0[0], texact.0[1], texact.0[2], texact.0[3],
            rep.loss,
            value_function(&texact, &fmap, &prior, 0.5, 0).unwrap(),
            value_function(&texact, &fmap, &prior, 0.5, 1).unwrap(),
        );
    }
}

fn inner_probe() {
    use qreps::mdp::sample_batch_episodic;
    use qreps::saddle::{minmax_solve, InnerOptConfig, PreparedBatch};

    let mdp = envs::two_state_stochastic();
    let prior = StationaryPolicy::uniform(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = sample_batch_episodic(&mdp, &prior, 200, 200, &mut rng).unwrap();
    for eta in [0.1, 0.5] {
        let prepared = PreparedBatch::from_tabular(&batch, &mdp, &prior, eta, 0.5, false).unwrap();
        for steps in [300usize, 1000, 3000] {
            let cfg = InnerOptConfig {
                steps,
                beta: 0.1,
                beta_prime: 0.1,
                learner: LearnerRule::Sgd,
                sampler: SamplerRule::ExponentiatedGradient,
                grad: GradMode::Exact,
            };
            let out = minmax_solve(&prepared, &cfg, None, &mut rng).unwrap();
            let a = &out.theta_avg.0;
            let l = &out.theta_last.0;
            println!(
                "eta {eta:>4} T {steps:>5}: avg Q(x0)=[{:+.4} {:+.4}] (stay-go {:+.4})  last Q(x0)=[{:+.4} {:+.4}] (stay-go {:+.4})",
                a[0], a[1], a[0] - a[1], l[0], l[1], l[0] - l[1]
            );
        }
    }
}

fn phase() {
    // Trace the inner single-sample dynamics from cold start: does it pass
    // through a stay-preferring ridge before sliding to the biased argmin?
    use qreps::mdp::sample_batch_episodic;
    use qreps::saddle::{eg_update, learner_grad_sampled, sampler_grad, PreparedBatch};

    let gamma = gamma_arg();
    let mdp = envs::two_state_stochastic().with_discount(gamma).unwrap();
    let prior = StationaryPolicy::uniform(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = if gamma < 1.0 {
        qreps::mdp::sample_batch(&mdp, &prior, 600, &mut rng).unwrap()
    } else {
        sample_batch_episodic(&mdp, &prior, 600, 200, &mut rng).unwrap()
    };
    let checkpoints = [100usize, 300, 1000, 3000, 10000, 30000];
    for eta in [0.1, 0.5] {
        let prep = PreparedBatch::from_tabular(&batch, &mdp, &prior, eta, eta, false).unwrap();
        let n = 600;
        let mut theta = Theta::zeros(prep.theta_dim());
        let mut z = vec![1.0 / n as f64; n];
        let mut sum = theta.clone();
        let mut count = 1usize;
        let mut next_cp = 0;
        for step in 1..=30000usize {
            let h = sampler_grad(&theta, &z, &prep).unwrap();
            let nz = eg_update(&z, &h, 0.1).unwrap();
            let g = learner_grad_sampled(&theta, &z, &prep, &mut rng).unwrap();
            theta.axpy(-0.1, &g);
            z = nz;
            sum.axpy(1.0, &theta);
            count += 1;
            if next_cp < checkpoints.len() && step == checkpoints[next_cp] {
                let t = &theta.0;
                let a: Vec<f64> = sum.0.iter().map(|v| v / count as f64).collect();
                println!(
                    "eta {eta:>4} T {step:>6}: last gap {:+.3} lvl(x1) {:+.2}  avg gap {:+.3} lvl(x1) {:+.2}",
                    t[0] - t[1],
                    0.5 * (t[2] + t[3]),
                    a[0] - a[1],
                    0.5 * (a[2] + a[3]),
                );
                next_cp += 1;
            }
        }
    }
}

fn scan() {
    let mdp = envs::two_state_stochastic();
    for grad in [GradMode::Exact, GradMode::Sampled] {
        for warm in [true, false] {
            for steps in [30usize, 100, 300] {
                for beta in [0.01, 0.03, 0.1] {
                    let mut cfg = default_cfg();
                    cfg.inner_steps = steps;
                    cfg.beta = beta;
                    cfg.grad = grad;
                    cfg.warm_start = warm;
                    let mut mean = 0.0;
                    for seed in 0..5 {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
                        mean += rec.points.last().unwrap().return_normalized / 5.0;
                    }
                    println!(
                        "{:?} warm={warm} T={steps:<4} beta={beta:<5}: mean final {mean:.3}",
                        grad
                    );
                }
            }
        }
    }
}

fn pop_min() {
    use qreps::mdp::sample_batch_episodic;
    use qreps::saddle::{minmax_solve, InnerOptConfig, PreparedBatch};

    let mdp = envs::two_state_stochastic();
    let uniform = StationaryPolicy::uniform(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = sample_batch_episodic(&mdp, &uniform, 20_000, 200, &mut rng).unwrap();
    for eta in [0.1, 0.5, 10.0] {
        let prepared =
            PreparedBatch::from_tabular(&batch, &mdp, &uniform, eta, eta, false).unwrap();
        let cfg = InnerOptConfig {
            steps: 60_000,
            beta: 0.05,
            beta_prime: 0.0,
            learner: LearnerRule::Sgd,
            sampler: SamplerRule::BestResponse,
            grad: GradMode::Exact,
        };
        let out = minmax_solve(&prepared, &cfg, None, &mut rng).unwrap();
        let th = &out.theta_last.0;
        println!(
            "population eta {eta:>5}: Q(x0)=[{:+.4} {:+.4}] stay-go {:+.4}",
            th[0],
            th[1],
            th[0] - th[1]
        );
    }
}

fn gap_dist() {
    use qreps::mdp::sample_batch_episodic;
    use qreps::saddle::{minmax_solve, InnerOptConfig, PreparedBatch};

    let mdp = envs::two_state_stochastic();
    // measure at the uniform policy and at a go-tilted policy
    let tilted = StationaryPolicy::new(2, 2, vec![0.2, 0.8, 0.5, 0.5]).unwrap();
    let uniform = StationaryPolicy::uniform(2, 2);
    for (pname, pol) in [("uniform", &uniform), ("go-0.8", &tilted)] {
        for (eta, n) in [(0.1, 100), (0.1, 200), (0.5, 200)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut gaps = Vec::new();
            let mut gaps_plain = Vec::new();
            for _ in 0..30 {
                let batch = sample_batch_episodic(&mdp, pol, n, 200, &mut rng).unwrap();
                let mut stripped = batch.clone();
                for tr in &mut stripped.entries {
                    tr.terminal = false;
                }
                let cfg = InnerOptConfig {
                    steps: 20_000,
                    beta: 0.05,
                    beta_prime: 0.0,
                    learner: LearnerRule::Sgd,
                    sampler: SamplerRule::BestResponse,
                    grad: GradMode::Exact,
                };
                for (b, dest) in [(&batch, &mut gaps), (&stripped, &mut gaps_plain)] {
                    let prepared =
                        PreparedBatch::from_tabular(b, &mdp, pol, eta, eta, false).unwrap();
                    let out = minmax_solve(&prepared, &cfg, None, &mut rng).unwrap();
                    dest.push(out.theta_last.0[0] - out.theta_last.0[1]);
                }
            }
            for (label, gs) in [("anchored", &gaps), ("plain   ", &gaps_plain)] {
                let mean = gs.iter().sum::<f64>() / gs.len() as f64;
                let var =
                    gs.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / gs.len() as f64;
                let neg = gs.iter().filter(|g| **g < 0.0).count();
                println!(
                    "{pname} eta {eta:>4} N {n:>4} {label}: mean gap {mean:+.4} sd {:.4} negative {neg}/30",
                    var.sqrt()
                );
            }
        }
    }
}

fn run_trace() {
    let mdp = envs::two_state_stochastic();
    let mut cfg = default_cfg();
    cfg.eta = 0.1;
    cfg.batch_size = 100;
    cfg.iterations = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
    let mut acc_gap = 0.0;
    for (k, th) in rec.theta_steps.iter().enumerate() {
        let gap = th.0[0] - th.0[1];
        acc_gap += gap;
        let p = &rec.points[k + 1];
        println!(
            "iter {:>3}: step stay-go {:+.4} acc {:+.4} norm {:.3}",
            k + 1,
            gap,
            acc_gap,
            p.return_normalized
        );
    }
}

fn chain_trace() {
    // One benchmark run in detail: returns, accumulated Q, policy.
    let gamma = gamma_arg();
    let name = std::env::args().nth(3).unwrap_or_else(|| "single-chain".into());
    let (eta, beta, beta_prime) = match name.as_str() {
        "single-chain" => (5.0, 0.05, 0.1),
        "river-swim" => (2.5, 0.01, 0.1),
        "double-chain" => (0.5, 0.01, 0.1),
        "windy-gridworld" => (0.5, 0.1, 0.03),
        _ => (0.5, 0.1, 0.1),
    };
    let mdp = envs::by_name(&name).unwrap().with_discount(gamma).unwrap();
    let mut cfg = default_cfg();
    cfg.eta = eta;
    cfg.alpha = eta;
    cfg.beta = beta;
    cfg.beta_prime = beta_prime;
    cfg.explore = 0.05;
    if matches!(std::env::args().nth(4).as_deref(), Some("exact")) {
        cfg.loss = LossKind::ExactLbe;
    }
    if let Some(e) = std::env::args().nth(5).and_then(|s| s.parse::<f64>().ok()) {
        cfg.eta = e;
        cfg.alpha = e;
    }
    if let Some(e) = std::env::args().nth(6).and_then(|s| s.parse::<f64>().ok()) {
        cfg.explore = e;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rec = run_qreps(&mdp, &cfg, &mut rng).unwrap();
    for (k, p) in rec.points.iter().enumerate() {
        if k % 20 == 0 || k + 1 == rec.points.len() {
            println!("iter {k:>3}: norm {:.3}", p.return_normalized);
        }
    }
    // accumulated Q table (sum of per-iteration theta steps) and final policy
    let dim = rec.theta_steps[0].0.len();
    let a_n = mdp.n_actions();
    let mut acc = vec![0.0; dim];
    for th in &rec.theta_steps {
        for (i, v) in th.0.iter().enumerate() {
            acc[i] += v;
        }
    }
    println!("accumulated Q | final policy:");
    for x in 0..mdp.n_states().min(12) {
        let qs: Vec<String> = (0..a_n).map(|a| format!("{:+8.3}", acc[x * a_n + a])).collect();
        let ps: Vec<String> = (0..a_n).map(|a| format!("{:.2}", rec.final_policy.prob(x, a))).collect();
        println!("  state {x}: {} | {}", qs.join(" "), ps.join(" "));
    }
    let th = rec.theta_steps.last().unwrap();
    println!("last-iteration Q step:");
    for x in 0..mdp.n_states().min(12) {
        let qs: Vec<String> = (0..a_n).map(|a| format!("{:+8.4}", th.0[x * a_n + a])).collect();
        println!("  state {x}: {}", qs.join(" "));
    }
}

fn cartpole() {
    // Table-1 cart-pole row: eta=alpha=0.01, beta=0.08, gamma=0.99, Adam,
    // best-response sampler, ReLU-200 features, update every 4 episodes.
    let seeds: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let episodes: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let inner: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed0: u64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SimulatorConfig {
        eta: 0.01,
        alpha: 0.01,
        beta: 0.08,
        beta_prime: 0.1,
        inner_steps: inner,
        episodes,
        update_every: 4,
        discount: 0.99,
        learner: LearnerRule::AdaptiveMoment,
        sampler: SamplerRule::BestResponse,
        grad: GradMode::Exact,
    };
    let sim = envs::CartPole;
    let mut finals = Vec::new();
    for seed in seed0..seed0 + seeds {
        let t0 = Instant::now();
        let fmap = FeatureMap::random_relu(4, 200, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = run_qreps_simulator(&sim, fmap, &cfg, &mut rng).unwrap();
        let tail: Vec<f64> = rec.episode_returns.iter().rev().take(20).copied().collect();
        let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let best50 = rec
            .episode_returns
            .chunks(50)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        finals.push(tail_mean);
        println!(
            "seed {seed}: last-20 mean {tail_mean:.1}, best 50-block mean {best50:.1} ({:.1?})",
            t0.elapsed()
        );
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    println!("overall last-20 mean over {seeds} seeds: {mean:.1}");
}

fn cartpole_curve() {
    // 10-seed mean episode-return curve with a trailing-20 smoothing
    // window, reported every 20 episodes.
    let episodes: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let cfg = SimulatorConfig {
        eta: 0.01,
        alpha: 0.01,
        beta: 0.08,
        beta_prime: 0.1,
        inner_steps: 300,
        episodes,
        update_every: 4,
        discount: 0.99,
        learner: LearnerRule::AdaptiveMoment,
        sampler: SamplerRule::BestResponse,
        grad: GradMode::Exact,
    };
    let sim = envs::CartPole;
    let mut curves = Vec::new();
    for seed in 0..10u64 {
        let t0 = Instant::now();
        let fmap = FeatureMap::random_relu(4, 200, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = run_qreps_simulator(&sim, fmap, &cfg, &mut rng).unwrap();
        println!(
            "seed {seed} done ({:.1?}), last-20 {:.1}",
            t0.elapsed(),
            rec.episode_returns.iter().rev().take(20).sum::<f64>() / 20.0
        );
        curves.push(rec.episode_returns);
    }
    let mut peak: f64 = f64::NEG_INFINITY;
    for ep in (19..episodes).step_by(10) {
        let mut m = 0.0;
        for c in &curves {
            let w = &c[ep + 1 - 20..=ep];
            m += w.iter().sum::<f64>() / 20.0 / 10.0;
        }
        peak = peak.max(m);
        if (ep + 1) % 20 == 0 {
            println!("episode {:>3}: smoothed 10-seed mean {m:.1}", ep + 1);
        }
    }
    println!("peak smoothed mean: {peak:.1}");
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match which.as_str() {
        "bias-curve" => bias_curve(),
        "exact-eta" => exact_eta(),
        "elbe-seeds" => elbe_seeds(),
        "bench" => bench(),
        "cartpole" => cartpole(),
        "cartpole-curve" => cartpole_curve(),
        "gap" => gap(),
        "elbe-min" => elbe_min(),
        "inner-probe" => inner_probe(),
        "run-trace" => run_trace(),
        "gap-dist" => gap_dist(),
        "pop-min" => pop_min(),
        "scan" => scan(),
        "phase" => phase(),
        "chain-trace" => chain_trace(),
        _ => {
            bias_curve();
            exact_eta();
            elbe_seeds();
            bench();
            gap();
        }
    }
}
