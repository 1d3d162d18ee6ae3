//! One line per acceptance criterion, then a single assertion over all of them.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qtbs::bottleneck::gradient_graph;
use qtbs::cli::{run, Cli};
use qtbs::fairness::jain_index;
use qtbs::fixtures;
use qtbs::gradients::{forward_grad, gradient_bound, Direction, Perturbation};
use qtbs::network::Network;
use qtbs::oracle::{random_network, random_network_with_ties, random_routed_network, waterfill, FdOracle, Limits};
use qtbs::planner::{accelerate_flow, apply_plan, taper_fold, TaperTemplate};
use qtbs::routing::{all_simple_paths, max_rate_path, rate_if_routed};
use qtbs::{ElementId, FlowId, LinkId, Vertex};

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { ok: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { ok: false, detail: detail.into() }
}

/// Collects failed checks; empty means the criterion holds.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn near(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        if (got - want).abs().is_nan() || (got - want).abs() > tol {
            self.0.push(format!("{what}: got {got}, want {want} +- {tol}"));
        }
    }

    fn that(&mut self, what: &str, ok: bool) {
        if !ok {
            self.0.push(what.to_owned());
        }
    }

    fn finish(self, summary: String) -> Outcome {
        if self.0.is_empty() {
            pass(summary)
        } else {
            fail(self.0.join("; "))
        }
    }
}

fn links(ids: &[&str]) -> Vec<LinkId> {
    ids.iter().map(|s| LinkId::from(*s)).collect()
}

fn fig4() -> Outcome {
    let mut c = Checks::default();
    let net = fixtures::twin_bottleneck();
    let t = Instant::now();
    let s = gradient_graph(&net);
    let g = forward_grad(&s, &Perturbation::link("l1", Direction::Down)).unwrap();
    let t_c = t.elapsed();
    // Response of f2 per unit decrease of c_l1; the signed derivative is -0.5.
    let drift = g.drifts.flow[net.flow_index("f2").unwrap()];
    c.near("twin drift f2", drift, 0.5, 1e-9);
    c.near("twin gradient f2", g.flow("f2").unwrap(), -0.5, 1e-9);

    let net = fixtures::double_path();
    let t = Instant::now();
    let s = gradient_graph(&net);
    let g = forward_grad(&s, &Perturbation::flow("f1", Direction::Down)).unwrap();
    let t_d = t.elapsed();
    c.near("double-path gradient f4", g.flow("f4").unwrap(), -2.0, 1e-9);
    let limit = Duration::from_millis(10);
    c.that(&format!("twin took {t_c:?}"), t_c < limit);
    c.that(&format!("double-path took {t_d:?}"), t_d < limit);
    c.finish(format!("drift 0.5, gradient -2 ({t_c:?}, {t_d:?})"))
}

fn b4() -> Outcome {
    let mut c = Checks::default();
    let net = fixtures::b4();
    let s = gradient_graph(&net);
    for k in [1, 2, 3, 4, 5, 7, 8, 10, 13, 14, 15, 16] {
        let f = format!("f{k}");
        c.near(&f, s.rate(&f).unwrap(), 1.667, 1e-3);
    }
    let short = rate_if_routed(&net, &links(&["l15", "l10"])).unwrap();
    let long = rate_if_routed(&net, &links(&["l16", "l8", "l19"])).unwrap();
    c.near("probe on l15,l10", short, 1.428, 1e-3);
    c.near("probe on l16,l8,l19", long, 2.5, 1e-3);
    match max_rate_path(&net, "DC4", "DC11") {
        Ok(p) => c.that(&format!("max_rate_path gave {:?}", p.links), p.links == links(&["l16", "l8", "l19"])),
        Err(e) => c.that(&format!("max_rate_path: {e}"), false),
    }
    c.finish(format!("probe {short:.3} vs {long:.3}, route l16-l8-l19"))
}

fn fat_tree() -> Outcome {
    let mut c = Checks::default();
    let t = TaperTemplate {
        network: fixtures::fat_tree(),
        scale_links: links(&fixtures::FAT_TREE_SPINE),
        lambda: 20.0,
        tau0: 1.0,
    };
    let s = gradient_graph(&t.at(1.0).unwrap());
    let mut rates: Vec<f64> = s.rates().values().copied().collect();
    rates.sort_by(f64::total_cmp);
    let want: Vec<f64> = [2.5; 8].into_iter().chain([5.0; 4]).collect();
    c.that(
        &format!("tau=1 rates {rates:?}"),
        rates.len() == want.len() && rates.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-9),
    );
    let g = forward_grad(&s, &Perturbation::link("l5", Direction::Down)).unwrap();
    let mut grads: Vec<f64> = g.flow_gradient.values().copied().collect();
    grads.sort_by(f64::total_cmp);
    grads.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    c.that(
        &format!("spine gradients {grads:?}"),
        grads.len() == 2 && (grads[0] + 0.25).abs() <= 1e-9 && (grads[1] - 0.125).abs() <= 1e-9,
    );
    match taper_fold(&t) {
        Ok(r) => {
            c.near("tau*", r.tau_star, 4.0 / 3.0, 1e-6);
            c.near("spine capacity", r.spine_capacity_at_fold, 26.667, 1e-3);
            for (f, v) in &r.rates_at {
                c.near(&format!("folded {f}"), *v, 3.333, 1e-3);
            }
        }
        Err(e) => c.that(&format!("taper_fold: {e}"), false),
    }
    let s2 = gradient_graph(&t.at(2.0).unwrap());
    for l in fixtures::FAT_TREE_SPINE {
        let i = s2.network().link_index(l).unwrap();
        c.that(&format!("{l} out-degree at tau=2"), s2.graph().out_degree(Vertex::Link(i)) == 0);
    }
    c.finish("gradients +0.125/-0.25, tau* 4/3, spine 26.667".into())
}

fn shaping() -> Outcome {
    let mut c = Checks::default();
    let net = fixtures::shaping();
    let s = gradient_graph(&net);
    for (l, v) in [("l2", 5.125), ("l3", 7.375), ("l4", 10.25), ("l6", 12.25)] {
        c.near(&format!("s_{l}"), s.fair_share(l).unwrap(), v, 1e-6);
    }
    let low: Vec<FlowId> = fixtures::SHAPING_LOW_PRIORITY.iter().map(|f| FlowId::from(*f)).collect();
    let plan = match accelerate_flow(&net, "f7", &low, 1.25) {
        Ok(p) => p,
        Err(e) => return fail(format!("accelerate_flow: {e}")),
    };
    c.near("initial target", plan.initial_target_rate, 10.25, 1e-6);
    match plan.stages.first() {
        Some(st) => c.near("stage-1 rho", st.rho, 0.5, 1e-6),
        None => c.that("no stages", false),
    }
    let mut first = plan.clone();
    first.actions.truncate(1);
    let s1 = gradient_graph(&apply_plan(&net, &first).unwrap());
    c.near("stage-1 s_l4", s1.fair_share("l4").unwrap(), 11.25, 1e-6);
    c.near("stage-1 s_l6", s1.fair_share("l6").unwrap(), 11.25, 1e-6);
    let targets: Vec<f64> = plan.actions.iter().map(|a| a.predicted_target_rate).collect();
    let mut path = vec![plan.initial_target_rate];
    for t in targets {
        if (t - path[path.len() - 1]).abs() > 1e-9 {
            path.push(t);
        }
    }
    c.that(
        &format!("target sequence {path:?}"),
        path.len() == 3
            && (path[0] - 10.25).abs() <= 1e-6
            && (path[1] - 11.25).abs() <= 1e-6
            && (path[2] - 16.875).abs() <= 1e-6,
    );
    let after = gradient_graph(&apply_plan(&net, &plan).unwrap());
    c.near("applied target", after.rate("f7").unwrap(), 16.875, 1e-6);
    let mut shaped: Vec<f64> = plan.actions.iter().map(|a| after.rate(a.flow.as_str()).unwrap()).collect();
    shaped.sort_by(f64::total_cmp);
    c.that(
        &format!("shaped rates {shaped:?}"),
        shaped.len() == 3
            && [1.25, 1.875, 5.625].iter().zip(&shaped).all(|(a, b)| (a - b).abs() <= 1e-6),
    );
    c.finish("10.25 -> 11.25 -> 16.875, shaped {1.25, 1.875, 5.625}".into())
}

fn sweep_networks() -> Vec<Network> {
    (0..60u64)
        .map(|seed| {
            let lim = Limits::new(30, 100, 5);
            if seed % 2 == 0 {
                random_network(1000 + seed, lim)
            } else {
                random_network_with_ties(1000 + seed, lim)
            }
        })
        .collect()
}

fn targets(n: &Network) -> Vec<ElementId> {
    n.links()
        .iter()
        .map(|l| ElementId::Link(l.id.clone()))
        .chain(n.flows().iter().map(|f| ElementId::Flow(f.id.clone())))
        .collect()
}

#[derive(Default)]
struct SweepStats {
    checks: usize,
    mismatches: usize,
    /// Perturbations with at least one mismatch, and how many of those move a flow up.
    bad_perturbations: usize,
    bad_flow_up: usize,
    first: Option<String>,
    worst_bound_ratio: f64,
    bound_failures: usize,
}

impl SweepStats {
    fn merge(mut self, o: SweepStats) -> SweepStats {
        self.checks += o.checks;
        self.mismatches += o.mismatches;
        self.bad_perturbations += o.bad_perturbations;
        self.bad_flow_up += o.bad_flow_up;
        self.first = self.first.or(o.first);
        self.worst_bound_ratio = self.worst_bound_ratio.max(o.worst_bound_ratio);
        self.bound_failures += o.bound_failures;
        self
    }
}

fn sweep_one(seed: usize, n: &Network) -> SweepStats {
    let s = gradient_graph(n);
    let fd = FdOracle::new(n);
    let delta = fd.suggest_delta();
    let bound = gradient_bound(&s);
    let mut st = SweepStats::default();
    for x in targets(n) {
        for d in [Direction::Up, Direction::Down] {
            let g = forward_grad(&s, &Perturbation { target: x.clone(), direction: d }).unwrap();
            let o = fd.gradient(&x, d, delta).unwrap();
            let before = st.mismatches;
            let mut compare = |what: String, model: f64, oracle: f64| {
                st.checks += 1;
                if (model - oracle).abs() > 1e-6 {
                    st.mismatches += 1;
                    st.first
                        .get_or_insert_with(|| format!("net {seed} target {x} {d}: {what} model {model} fd {oracle}"));
                }
            };
            for (k, v) in &o.flow {
                compare(format!("flow {k}"), g.flow_gradient[k], *v);
            }
            for (k, v) in &o.link {
                if let Some(v) = v {
                    compare(format!("link {k}"), g.link_gradient[k], *v);
                }
            }
            if st.mismatches > before {
                st.bad_perturbations += 1;
                if matches!(x, ElementId::Flow(_)) && d == Direction::Up {
                    st.bad_flow_up += 1;
                }
            }
            for v in g.flow_gradient.values().chain(g.link_gradient.values()) {
                st.worst_bound_ratio = st.worst_bound_ratio.max(v.abs() / bound);
                if v.abs() > bound + 1e-9 {
                    st.bound_failures += 1;
                }
            }
        }
    }
    st
}

fn oracle_and_bound() -> (Outcome, Outcome) {
    let start = Instant::now();
    let worst = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let n = random_network(seed, Limits::new(50, 200, 6));
            let s = gradient_graph(&n);
            let o = waterfill(&n);
            let mut worst = 0.0f64;
            for (k, v) in s.rates() {
                let w = o.rate[&k];
                worst = worst.max((v - w).abs() / w.abs());
            }
            for (k, v) in s.fair_shares() {
                let w = o.fair_share[&k];
                if v.is_infinite() || w.is_infinite() {
                    if v != w {
                        worst = f64::INFINITY;
                    }
                    continue;
                }
                worst = worst.max((v - w).abs() / w.abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    let nets = sweep_networks();
    let st = nets
        .par_iter()
        .enumerate()
        .map(|(i, n)| sweep_one(i, n))
        .reduce(SweepStats::default, SweepStats::merge);
    let elapsed = start.elapsed();

    let mut c = Checks::default();
    c.that(&format!("solver vs waterfill worst relative error {worst:e}"), worst <= 1e-6);
    c.that(
        &format!(
            "{} of {} gradient entries differ from fd by more than 1e-6 ({} perturbations, {} of them flows moving up), first: {}",
            st.mismatches,
            st.checks,
            st.bad_perturbations,
            st.bad_flow_up,
            st.first.clone().unwrap_or_default()
        ),
        st.mismatches == 0,
    );
    c.that(&format!("took {elapsed:?}"), elapsed < Duration::from_secs(60));
    println!("oracle suite ran in {elapsed:?}");
    let five = c.finish(format!(
        "200 networks within {worst:.1e} relative, {} fd entries match, {elapsed:?}",
        st.checks
    ));

    let mut c = Checks::default();
    c.that(&format!("{} gradients above the bound", st.bound_failures), st.bound_failures == 0);
    let s = gradient_graph(&fixtures::ladder());
    let g = forward_grad(&s, &Perturbation::flow("f0", Direction::Down)).unwrap();
    c.near("ladder |grad f0 -> fc|", g.flow("fc").unwrap().abs(), 2.0, 1e-9);
    c.that("ladder bound below 2", gradient_bound(&s) >= 2.0 - 1e-9);
    let six = c.finish(format!("max |grad|/bound {:.3}, ladder realizes 2", st.worst_bound_ratio));
    (five, six)
}

fn routing() -> Outcome {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut extensions = 0;
    let mut seed = 0u64;
    while extensions < 100 && seed < 10_000 {
        let n = random_routed_network(seed, 7);
        seed += 1;
        let routers: Vec<String> = n.routers().iter().map(|r| r.to_string()).collect();
        let (a, b) = (routers.choose(&mut rng).unwrap(), routers.choose(&mut rng).unwrap());
        if a == b {
            continue;
        }
        let paths = all_simple_paths(&n, a, b).unwrap();
        let long: Vec<&Vec<LinkId>> = paths.iter().filter(|p| p.len() >= 2).collect();
        let Some(p) = long.choose(&mut rng) else { continue };
        let cut = rng.gen_range(1..p.len());
        let shorter = rate_if_routed(&n, &p[..cut]).unwrap();
        let longer = rate_if_routed(&n, p).unwrap();
        c.that(
            &format!("seed {} extending {:?} raised the rate {shorter} -> {longer}", seed - 1, &p[..cut]),
            longer <= shorter + 1e-9,
        );
        extensions += 1;
    }
    c.that(&format!("only {extensions} extensions"), extensions == 100);

    let mut pairs = 0;
    for seed in 0..40u64 {
        let n = random_routed_network(10_000 + seed, 7);
        let routers: Vec<String> = n.routers().iter().map(|r| r.to_string()).collect();
        for a in &routers {
            for b in &routers {
                if a == b {
                    continue;
                }
                let paths = all_simple_paths(&n, a, b).unwrap();
                let best = paths
                    .iter()
                    .map(|p| rate_if_routed(&n, p).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                match max_rate_path(&n, a, b) {
                    Ok(r) => {
                        let got = rate_if_routed(&n, &r.links).unwrap();
                        c.near(&format!("seed {seed} {a}->{b} argmax"), got, best, 1e-9);
                        c.near(&format!("seed {seed} {a}->{b} predicted"), r.predicted_rate, got, 1e-9);
                        pairs += 1;
                    }
                    Err(_) => c.that(&format!("seed {seed} {a}->{b} unreachable but has paths"), paths.is_empty()),
                }
            }
        }
    }
    c.finish(format!("100 extensions never raise the rate, argmax on {pairs} router pairs"))
}

fn jain() -> Outcome {
    let mut c = Checks::default();
    for n in 1..=16usize {
        let equal = vec![2.75; n];
        c.that(&format!("J(equal, n={n})"), jain_index(&equal) == Ok(1.0));
        let mut one = vec![0.0; n];
        one[n / 2] = 3.5;
        c.that(&format!("J(single nonzero, n={n})"), jain_index(&one) == Ok(1.0 / n as f64));
    }
    c.finish("J(equal)=1 and J(single)=1/n for n=1..16".into())
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn cli(args: &[&str]) -> String {
    let cli = Cli::try_parse_from(std::iter::once("qtbs").chain(args.iter().copied())).unwrap();
    run(&cli).unwrap()
}

fn determinism() -> Outcome {
    let mut c = Checks::default();
    let mut runs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in ["b4", "fat_tree", "shaping", "twin_bottleneck", "double_path", "ladder"] {
        let file = fixture_dir().join(format!("{name}.json"));
        let file = file.to_str().unwrap();
        for args in [
            vec!["solve", file, "--format", "json"],
            vec!["solve", file, "--format", "dot"],
            vec!["export", file, "--backward-edges"],
        ] {
            runs.entry(args.join(" ")).or_default();
            let key = args.join(" ");
            for _ in 0..2 {
                let out = cli(&args);
                runs.get_mut(&key).unwrap().push(out);
            }
        }
    }
    let dir = fixture_dir();
    let b4 = dir.join("b4.json");
    let tree = dir.join("fat_tree.json");
    let shaping = dir.join("shaping.json");
    let (b4, tree, shaping) = (b4.to_str().unwrap(), tree.to_str().unwrap(), shaping.to_str().unwrap());
    for args in [
        vec!["route", b4, "--src", "DC4", "--dst", "DC11", "--format", "json"],
        vec!["grad", tree, "--target", "l5", "--direction", "down", "--format", "json"],
        vec!["taper", tree, "--scale-links", "l5,l6", "--lambda", "20", "--format", "json"],
        vec!["shape", shaping, "--target", "f7", "--low-priority", "f1,f3,f4,f8", "--floor", "1.25", "--format", "json"],
    ] {
        let key = args.join(" ");
        for _ in 0..2 {
            let out = cli(&args);
            runs.entry(key.clone()).or_default().push(out);
        }
    }
    for (k, outs) in &runs {
        c.that(&format!("output differs between runs: {k}"), outs[0] == outs[1]);
    }
    c.finish(format!("{} command lines, identical bytes", runs.len()))
}

#[test]
fn acceptance() {
    let (five, six) = oracle_and_bound();
    let results = [
        (1, "small-network gradients", fig4()),
        (2, "B4 rates and probe route", b4()),
        (3, "fat-tree gradients and fold", fat_tree()),
        (4, "shaping sequence", shaping()),
        (5, "oracle equivalence", five),
        (6, "gradient bound", six),
        (7, "routing properties", routing()),
        (8, "Jain's index", jain()),
        (9, "determinism", determinism()),
    ];
    for (n, name, r) in &results {
        println!("[{}] {n} {name}: {}", if r.ok { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed: Vec<i32> = results.iter().filter(|r| !r.2.ok).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
