use proxy_ci::citest::{proxy_ci_test, TestConfig, TestMode};
use proxy_ci::experiments::mix_seed;
use proxy_ci::scm::*;
use rayon::prelude::*;
use std::collections::BTreeMap;

fn menu(s: f64) -> [NoiseSpec; 4] {
    [NoiseSpec::Gaussian { std: s }, NoiseSpec::Uniform { half_width: s },
     NoiseSpec::Exponential { rate: 1.0 / s }, NoiseSpec::Gamma { shape: 2.0, rate: 2.0 / s }]
}

fn rspec(graph: GraphKind, scale: f64, seed: u64) -> ScmSpec {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let all = [FuncKind::Linear, FuncKind::Tanh, FuncKind::Sin, FuncKind::Sigmoid];
    let m = menu(scale);
    ScmSpec {
        graph, effect_strength: 0.0,
        f_link: FuncSpec::new(all[rng.random_range(0..4)], 1.0),
        f_y: FuncSpec::new(all[rng.random_range(0..4)], 1.0),
        f_w: FuncSpec::new(all[rng.random_range(0..4)], 1.0),
        f_xy: FuncSpec::linear(),
        root_noise: NoiseSpec::Gaussian { std: 1.0 },
        noise_link: m[rng.random_range(0..4)],
        noise_y: m[rng.random_range(0..4)],
        noise_w: m[rng.random_range(0..4)],
        smooth: true, jump: None,
    }
}

fn run(graph: GraphKind, scale: f64, n: usize, reps: usize) {
    let cfg = TestConfig::new(0.05, 14, 12, 5, TestMode::SingleLevel).unwrap();
    let out: Vec<(Result<(bool, f64), String>, Option<bool>)> = (0..reps).into_par_iter().map(|rep| {
        let h0 = rspec(graph, scale, mix_seed(&[7, (rep % 20) as u64]));
        let h1 = h0.with_edge(2.0, FuncSpec::linear());
        let s0 = sample_scm(&h0, n, mix_seed(&[1, rep as u64])).unwrap();
        let s1 = sample_scm(&h1, n, mix_seed(&[2, rep as u64])).unwrap();
        let r0 = proxy_ci_test(&s0.x, &s0.y, &s0.w, &cfg).map(|r| (r.reject, r.statistic)).map_err(|e| e.name().to_string());
        let r1 = proxy_ci_test(&s1.x, &s1.y, &s1.w, &cfg).ok().map(|r| r.reject);
        (r0, r1)
    }).collect();
    let mut errs: BTreeMap<String, usize> = BTreeMap::new();
    let (mut rej, mut eval, mut tsum) = (0usize, 0usize, 0.0);
    for (r0, _) in &out {
        match r0 {
            Ok((r, t)) => { eval += 1; if *r { rej += 1; } tsum += t; }
            Err(name) => *errs.entry(name.clone()).or_default() += 1,
        }
    }
    let h1_eval = out.iter().filter(|o| o.1.is_some()).count();
    let h1_rej = out.iter().filter(|o| o.1 == Some(true)).count();
    println!("{graph:?} scale={scale} n={n}: H0 {eval}/{reps} type1={:.3} meanT={:.2} | power={:.3} ({h1_eval}) | {errs:?}",
        rej as f64 / eval.max(1) as f64, tsum / eval.max(1) as f64, h1_rej as f64 / h1_eval.max(1) as f64);
}

fn main() {
    for scale in [0.1, 0.3, 0.5, 1.0] {
        run(GraphKind::Confounder, scale, 1200, 500);
    }
    for scale in [0.3, 0.5, 1.0] {
        run(GraphKind::Mediator, scale, 1200, 500);
    }
    println!("-- power vs n at scale 0.5 --");
    for n in [400, 800, 1200] {
        run(GraphKind::Confounder, 0.5, n, 500);
    }
}
