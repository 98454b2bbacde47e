//! Acceptance criteria. Each test prints one `ACCEPTANCE` line with its
//! verdict and the measured numbers; run with `--nocapture` to see them.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use gridcascade_core::acpf::{solve_base_case, PfOptions};
use gridcascade_core::agent::{gradcheck, AgentConfig, Checkpoint};
use gridcascade_core::case::{fixtures, Network, ServiceMask};
use gridcascade_core::env::{compute_reward, Action, CascadeEnv, EnvConfig, RewardInputs, Verdict};
use gridcascade_core::harness::{self, Baseline, SeedStreams};
use gridcascade_core::topology::{detect_islands, partition_edges};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {id} {verdict}: {detail}");
}

fn reference(name: &str) -> Vec<f64> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

/// Max |V| error (p.u.) and max angle error (degrees) against the stored
/// reference, in case bus order.
fn compare_to_reference(net: &Network, tag: &str, opts: &PfOptions) -> (f64, f64, usize) {
    let sol = solve_base_case(net, opts).unwrap();
    assert!(sol.converged, "{tag} base case did not converge");
    let vm = reference(&format!("{tag}_ref_vm.txt"));
    let va = reference(&format!("{tag}_ref_va.txt"));
    let slack = net
        .buses()
        .iter()
        .position(|b| b.kind == gridcascade_core::case::BusKind::Slack)
        .unwrap();
    // Angles are compared relative to the slack bus, since a flat start
    // references the slack at zero.
    let slack_l = sol.buses.iter().position(|&b| b == slack).unwrap();
    let shift = va[slack] - sol.v_ang[slack_l].to_degrees();
    let mut dv = 0.0f64;
    let mut da = 0.0f64;
    for (l, &b) in sol.buses.iter().enumerate() {
        dv = dv.max((sol.v_mag[l] - vm[b]).abs());
        da = da.max((sol.v_ang[l].to_degrees() + shift - va[b]).abs());
    }
    (dv, da, sol.iterations)
}

#[test]
fn criterion_1_power_flow_matches_reference() {
    // The reference solutions were produced without reactive limit
    // enforcement, so the comparison runs the same way.
    let opts = PfOptions {
        tol_mismatch: 1e-8,
        flat_start: true,
        enforce_q_limits: false,
        ..PfOptions::default()
    };
    let net14 = fixtures::ieee14();
    let (dv14, da14, it14) = compare_to_reference(&net14, "ieee14", &opts);
    let runs = 200;
    let t = Instant::now();
    for _ in 0..runs {
        std::hint::black_box(solve_base_case(&net14, &opts).unwrap());
    }
    let ms = t.elapsed().as_secs_f64() * 1e3 / runs as f64;
    let net118 = fixtures::ieee118();
    let (dv118, da118, it118) = compare_to_reference(&net118, "ieee118", &opts);
    let pass = dv14 < 1e-4 && it14 <= 10 && ms < 10.0 && dv118 < 1e-3;
    report(
        "1",
        pass,
        &format!(
            "14-bus max|dV| {dv14:.2e} p.u. (max dθ {da14:.2e} deg) in {it14} iterations, \
             {ms:.3} ms/solve; 118-bus max|dV| {dv118:.2e} p.u. (max dθ {da118:.2e} deg) \
             in {it118} iterations"
        ),
    );
    assert!(pass);
}

fn bfs_components(n: usize, edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![];
        let mut q = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = q.pop_front() {
            comp.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

fn as_set(islands: &[Vec<usize>]) -> BTreeSet<Vec<usize>> {
    islands
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect()
}

#[test]
fn criterion_2_islanding_matches_bfs() {
    let net = fixtures::ieee14();
    let mut mismatches = 0;
    let n_outages = net.n_branches();
    for k in 0..n_outages {
        let mut mask = ServiceMask::from_network(&net);
        mask.branches[k] = false;
        let part = detect_islands(&net, &mask);
        let edges: Vec<_> = (0..net.n_branches())
            .filter(|&j| mask.branches[j])
            .map(|j| net.branch_ends(j))
            .collect();
        if as_set(&part.islands) != bfs_components(net.n_buses(), &edges) {
            mismatches += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 10_000;
    for _ in 0..trials {
        let n = rng.random_range(1..=50);
        let m = rng.random_range(0..=2 * n);
        let edges: Vec<(usize, usize)> = (0..m)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        let keep: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|_| rng.random::<f64>() < 0.7)
            .collect();
        let part = partition_edges(n, keep.iter().copied());
        if as_set(&part.islands) != bfs_components(n, &keep) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0 && n_outages == 20;
    report(
        "2",
        pass,
        &format!(
            "{n_outages} single-line outages + {trials} random masks, {mismatches} mismatches"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_reward_arithmetic() {
    let cfg = EnvConfig::ieee14();
    let base = RewardInputs {
        generation_cost: 10_000.0,
        p_loss: 0.0,
        p_available: 259.0,
        p_total: 259.0,
        converged_islands: 1,
        remaining_islands: 1,
        verdict: Verdict::Ongoing,
    };
    let mut ok = true;
    let b = compute_reward(&base, &cfg);
    ok &= (b.cost_term, b.loss_term, b.convergence_term, b.win_term) == (-300.0, 0.0, 1000.0, 0.0);
    let win = compute_reward(
        &RewardInputs {
            verdict: Verdict::Win,
            p_available: 129.5,
            p_loss: 129.5,
            ..base
        },
        &cfg,
    );
    ok &= win.win_term == 2000.0 * 0.5f64.powf(1.7);
    ok &= win.loss_term == -2000.0 * (129.5 / 259.0);
    let quarter = compute_reward(
        &RewardInputs {
            p_loss: 100.0,
            p_total: 400.0,
            ..base
        },
        &cfg,
    );
    ok &= quarter.loss_term == -500.0;

    // Decomposition identity on every stage of a 100-episode fuzz.
    let mut env = CascadeEnv::new(Arc::new(fixtures::ieee14()), cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0;
    let mut broken = 0;
    for ep in 0..100 {
        env.reset(ep).unwrap();
        loop {
            let a = Action::new((0..5).map(|_| rng.random::<f64>()).collect());
            let out = env.step(&a).unwrap();
            steps += 1;
            let d = out.breakdown;
            let expect_loss = -2000.0 * out.info.p_loss / env.p_total();
            if out.reward != d.cost_term + d.loss_term + d.convergence_term + d.win_term
                || (d.loss_term - expect_loss).abs() > 1e-9
                || (out.verdict != Verdict::Win && d.win_term != 0.0)
            {
                broken += 1;
            }
            if out.done {
                break;
            }
        }
    }
    let pass = ok && broken == 0;
    report(
        "3",
        pass,
        &format!(
            "worked examples exact: {ok}; identity broken on {broken} of {steps} fuzzed stages"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_gradient_check() {
    let mut worst_actor = 0.0f64;
    let mut worst_critic = 0.0f64;
    let draws = 5;
    for seed in 0..draws {
        let g = gradcheck::check(seed, 1e-6);
        worst_actor = worst_actor.max(g.actor_max_rel);
        worst_critic = worst_critic.max(g.critic_max_rel);
    }
    let pass = worst_actor < 1e-4 && worst_critic < 1e-4;
    report(
        "4",
        pass,
        &format!(
            "{draws} draws, max relative error actor {worst_actor:.2e}, critic {worst_critic:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_table1_direction_14bus() {
    let net = Arc::new(fixtures::ieee14());
    let env_cfg = EnvConfig::preset("ieee14").unwrap();
    let agent_cfg = AgentConfig::ieee14();
    let seeds = [0u64, 1, 2];
    let (mut ddpg, mut random, mut half) = (0.0, 0.0, 0.0);
    let t = Instant::now();
    for &s in &seeds {
        let c = harness::compare(
            &env_cfg,
            &agent_cfg,
            &net,
            300,
            1000,
            &SeedStreams::from_master(s),
        )
        .unwrap();
        println!(
            "  seed {s}: ddpg {:.3} random {:.3} max {:.3} half {:.3}",
            c.ddpg.win_rate(),
            c.baseline(Baseline::Random).win_rate(),
            c.baseline(Baseline::Max).win_rate(),
            c.baseline(Baseline::Half).win_rate()
        );
        ddpg += c.ddpg.win_rate();
        random += c.baseline(Baseline::Random).win_rate();
        half += c.baseline(Baseline::Half).win_rate();
    }
    let k = seeds.len() as f64;
    let (ddpg, random, half) = (ddpg / k, random / k, half / k);
    let per_seed = t.elapsed().as_secs_f64() / k;
    let beats_random = ddpg - random >= 0.20;
    let beats_half = ddpg >= half;
    report(
        "5a",
        beats_random,
        &format!(
            "DDPG {:.1}% vs random {:.1}% (+{:.1} pp, need +20)",
            100.0 * ddpg,
            100.0 * random,
            100.0 * (ddpg - random)
        ),
    );
    report(
        "5b",
        beats_half,
        &format!(
            "DDPG {:.1}% vs half {:.1}% ({:.1}s per seed)",
            100.0 * ddpg,
            100.0 * half,
            per_seed
        ),
    );
    assert!(beats_random && beats_half);
}

#[test]
fn criterion_6_118bus_smoke() {
    let net118 = Arc::new(fixtures::ieee118());
    let net14 = Arc::new(fixtures::ieee14());
    let cfg118 = EnvConfig::preset("ieee118").unwrap();
    let cfg14 = EnvConfig::preset("ieee14").unwrap();
    let seeds = SeedStreams::from_master(0);
    let trained = harness::train(
        &cfg118,
        &AgentConfig::ieee118(),
        &net118,
        30,
        &seeds,
        |_| {},
    );
    let eval = trained
        .as_ref()
        .ok()
        .map(|t| harness::evaluate(&t.agent, &cfg118, &net118, 100, &seeds));
    let ran = matches!(eval, Some(Ok(_)));
    let max118 = harness::run_baseline(Baseline::Max, &cfg118, &net118, 100, &seeds)
        .unwrap()
        .win_rate();
    let max14 = harness::run_baseline(Baseline::Max, &cfg14, &net14, 100, &seeds)
        .unwrap()
        .win_rate();
    let ddpg118 = eval.and_then(|e| e.ok()).map_or(f64::NAN, |r| r.win_rate());
    let pass = ran && max118 < max14;
    report(
        "6",
        pass,
        &format!(
            "30 train + 100 eval episodes ran: {ran} (DDPG {:.1}%); max dispatch 118-bus {:.1}% vs 14-bus {:.1}%",
            100.0 * ddpg118,
            100.0 * max118,
            100.0 * max14
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_determinism() {
    let net = Arc::new(fixtures::ieee14());
    let env_cfg = EnvConfig::preset("ieee14").unwrap();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let seeds = SeedStreams::from_master(11);
        let out =
            harness::train(&env_cfg, &AgentConfig::ieee14(), &net, 60, &seeds, |_| {}).unwrap();
        let ck = dir.path().join("checkpoint.json");
        out.agent.checkpoint().save(&ck).unwrap();
        let agent =
            gridcascade_core::agent::Ddpg::from_checkpoint(Checkpoint::load(&ck).unwrap()).unwrap();
        let eval = harness::evaluate(&agent, &env_cfg, &net, 200, &seeds).unwrap();
        let mut files = Vec::new();
        for (name, body) in [
            ("train_report.csv", out.report.report_csv()),
            ("report.csv", eval.report_csv()),
            ("ma_reward.csv", eval.moving_average_csv()),
        ] {
            std::fs::write(dir.path().join(name), body).unwrap();
        }
        for name in [
            "checkpoint.json",
            "train_report.csv",
            "report.csv",
            "ma_reward.csv",
        ] {
            files.push(std::fs::read(dir.path().join(name)).unwrap());
        }
        files
    };
    let a = run();
    let b = run();
    let same = a == b;
    let bytes: usize = a.iter().map(Vec::len).sum();
    report(
        "7",
        same,
        &format!("two train+eval runs, 4 artifacts ({bytes} bytes) byte-identical: {same}"),
    );
    assert!(same);
}
