//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use otgame::entropic_ot::{regularized_lower_value, sinkhorn, SinkhornOptions};
use otgame::experiment::{parse_config, ConfigFile, ScenarioSpec};
use otgame::solver::{adversary_densities, gradient, minimize, objective, primal_dual_refine};
use otgame::space::{power_cost, CostMatrix};
use otgame::{Classifier, CostPair, DiscreteSpace, LossPair, Problem, SolveReport, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN4: f64 = 2.0 * std::f64::consts::LN_2;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(text: &str) -> ConfigFile {
    parse_config(text).expect("shipped config parses")
}

fn fig1() -> ScenarioSpec {
    config(include_str!("../../../configs/fig1_eps.toml"))
        .scenario
        .remove(0)
}

fn symmetric() -> ScenarioSpec {
    config(include_str!("../../../configs/symmetric_study.toml"))
        .scenario
        .remove(0)
}

fn solve(spec: &ScenarioSpec, eps: f64) -> (Problem, Classifier, SolveReport) {
    let problem = spec.problem(eps, 0).expect("scenario builds");
    let opts = spec.solver_options().expect("solver options");
    let (h, report) = minimize(&problem, &opts).expect("solver converges");
    (problem, h, report)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn symmetric_value() -> Outcome {
    let spec = symmetric();
    assert_eq!(spec.n, 100);
    let start = Instant::now();
    let (_, _, r) = solve(&spec, 1e-3);
    let secs = start.elapsed().as_secs_f64();
    let width = r.upper_t0 - r.lower_unreg;
    check(
        r.value_eps >= LN4 - 0.05 && r.value_eps <= LN4 + 1e-9 && width <= 0.05 && secs <= 10.0,
        format!(
            "value_eps {:.9} (2 log 2 = {LN4:.9}), bracket {width:.3e}, {secs:.2} s",
            r.value_eps
        ),
    )
}

fn gradient_vs_fd() -> Outcome {
    let n = 50;
    let space = DiscreteSpace::torus(n).unwrap();
    let costs = CostPair::symmetric(power_cost(&space, 1.0).unwrap());
    let half = n / 2;
    let mu1: Vec<f64> = (0..n)
        .map(|k| if k >= half { 1.0 / half as f64 } else { 0.0 })
        .collect();
    let mum1: Vec<f64> = (0..n).map(|k| if k < half { 1.0 / half as f64 } else { 0.0 }).collect();
    let p = Problem::new(space, costs, LossPair::Logistic, mu1, mum1, 1e-2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let step = 1e-6;
    let fd: Vec<f64> = (0..n)
        .map(|z| {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[z] += step;
            hm[z] -= step;
            (objective(&hp, &p).unwrap() - objective(&hm, &p).unwrap()) / (2.0 * step)
        })
        .collect();
    let g = gradient(&h, &p).unwrap();
    let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let err = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale;
    check(err <= 1e-5, format!("max |g - fd| / max |fd| = {err:.3e}"))
}

fn entropic_duality_gap() -> Outcome {
    let mut spec = fig1();
    spec.n = 100;
    let (p, h, r) = solve(&spec, 1e-2);
    let prof = adversary_densities(&h.h, &p).unwrap();
    let lower = regularized_lower_value(
        &prof,
        &p,
        SinkhornOptions {
            tol: 1e-10,
            max_iter: 100_000,
        },
    )
    .unwrap();
    let gap = (r.value_eps - lower).abs();
    check(
        gap <= 1e-5,
        format!("value_eps {:.12}, lower {lower:.12}, gap {gap:.3e}", r.value_eps),
    )
}

fn primal_dual_fixed_point() -> Outcome {
    let (p, h, _) = solve(&fig1(), 1e-2);
    let prof = adversary_densities(&h.h, &p).unwrap();
    let refined = primal_dual_refine(&prof, p.losses()).unwrap();
    let diff =
        h.h.iter()
            .zip(refined.iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    check(
        diff <= 1e-5,
        format!("N = {}, max |h - refine(h)| = {diff:.3e}", p.len()),
    )
}

fn rate() -> Outcome {
    let spec = symmetric();
    let mut ratios = Vec::new();
    for eps in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
        let (_, _, r) = solve(&spec, eps);
        ratios.push((LN4 - r.value_eps) / (eps * (1.0 / eps).ln()));
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    check(
        min > 0.0 && max / min <= 10.0,
        format!("ratios {ratios:.4?}, max/min {:.3}", max / min),
    )
}

fn eps_monotonicity() -> Outcome {
    let spec = fig1();
    let mut values = Vec::new();
    let mut ok = true;
    for eps in [1e-1, 1e-2, 1e-3] {
        let (_, _, r) = solve(&spec, eps);
        ok &= r.value_eps <= r.upper_t0;
        if let Some(&prev) = values.last() {
            ok &= r.value_eps > prev;
        }
        values.push(r.value_eps);
    }
    check(ok, format!("value_eps along eps = 1e-1, 1e-2, 1e-3: {values:.9?}"))
}

fn mixing() -> Outcome {
    let (p, h, _) = solve(&fig1(), 1e-2);
    let prof = adversary_densities(&h.h, &p).unwrap();
    let m = p.space().m();
    let nu1 = prof.masses(otgame::Class::Pos, m);
    let num1 = prof.masses(otgame::Class::Neg, m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in nu1.iter().zip(&num1) {
        if a + b > 1e-12 {
            let alpha = a / (a + b);
            lo = lo.min(alpha);
            hi = hi.max(alpha);
        }
    }
    check(lo > 1e-12 && hi < 1.0 - 1e-12, format!("alpha in [{lo:.6}, {hi:.6}]"))
}

fn fig2_monotone() -> Outcome {
    let cfg = config(include_str!("../../../configs/fig2_cost.toml"));
    let mut sups = Vec::new();
    for spec in &cfg.scenario {
        let (_, h, _) = solve(spec, 1e-2);
        sups.push(h.sup_norm());
    }
    assert_eq!(sups.len(), 5);
    check(
        sups.windows(2).all(|w| w[1] < w[0]),
        format!("max|h| over r = 0.5..2.5: {sups:.5?}"),
    )
}

fn fig3_indistinguishable() -> Outcome {
    let cfg = config(include_str!("../../../configs/fig3_measures.toml"));
    let spec = cfg
        .scenario
        .iter()
        .find(|s| s.id == "fig3_p10")
        .expect("p = 10 scenario");
    let (_, h, _) = solve(spec, 1e-2);
    let sup = h.sup_norm();
    check(sup <= 0.05, format!("max|h| = {sup:.3e}"))
}

fn uniform_lipschitz() -> Outcome {
    let spec = fig1();
    let lips: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&e| solve(&spec, e).1.discrete_lipschitz())
        .collect();
    let max = lips.iter().cloned().fold(f64::MIN, f64::max);
    let min = lips.iter().cloned().fold(f64::MAX, f64::min);
    check(max <= 2.0 * min, format!("Lipschitz constants {lips:.4?}"))
}

fn sinkhorn_kl_oracle() -> Outcome {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let simplex = |rng: &mut ChaCha8Rng| {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let mut worst = 0.0f64;
    let zero = CostMatrix::zero(n);
    for k in 0..5 {
        let mu = simplex(&mut rng);
        let nu = simplex(&mut rng);
        let m = simplex(&mut rng);
        let eps = [0.5, 0.1, 0.05, 0.01, 1.0][k];
        let kl: f64 = nu.iter().zip(&m).map(|(a, b)| a * (a / b).ln()).sum();
        let oracle = eps * kl;
        let r = sinkhorn(&mu, &nu, &zero, eps, &m, 1e-12, 100_000).unwrap();
        worst = worst.max((r.value - oracle).abs() / oracle);
    }
    check(worst <= 1e-8, format!("worst relative error {worst:.3e}"))
}

fn logistic(i: usize, t: f64) -> f64 {
    let u = if i == 0 { -t } else { t };
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Independent evaluation of the regularized objective on a two point space
/// with uniform reference weights and logistic losses, from the tabulated
/// `exp(l_i(t) / eps)` at both coordinates.
fn two_point_objective(e0: [f64; 2], e1: [f64; 2], mu: [[f64; 2]; 2], w: f64, eps: f64) -> f64 {
    let mut total = 0.0;
    for (i, mu_i) in mu.iter().enumerate() {
        for (x, &mass) in mu_i.iter().enumerate() {
            let (k0, k1) = if x == 0 { (1.0, w) } else { (w, 1.0) };
            total += mass * eps * (0.5 * e0[i] * k0 + 0.5 * e1[i] * k1).ln();
        }
    }
    total
}

fn brute_force_two_points() -> Outcome {
    let eps = 0.1;
    let mu = [[0.3, 0.7], [0.6, 0.4]];
    let space = DiscreteSpace::torus(2).unwrap();
    let d = space.distance(0, 1);
    let costs = CostPair::symmetric(power_cost(&space, 1.0).unwrap());
    let p = Problem::new(space, costs, LossPair::Logistic, mu[0].to_vec(), mu[1].to_vec(), eps).unwrap();
    let (h, r) = minimize(&p, &SolverOptions::default()).unwrap();

    // exp(-d / eps) and exp(l_i / eps) stay far from overflow on [-5, 5]
    let w = (-d / eps).exp();
    let grid = |lo: [f64; 2], step: f64, count: usize| -> ([f64; 2], f64) {
        let table = |start: f64| -> Vec<[f64; 2]> {
            (0..=count)
                .map(|k| {
                    let t = start + k as f64 * step;
                    [(logistic(0, t) / eps).exp(), (logistic(1, t) / eps).exp()]
                })
                .collect()
        };
        let (ta, tb) = (table(lo[0]), table(lo[1]));
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for (i, ea) in ta.iter().enumerate() {
            for (j, eb) in tb.iter().enumerate() {
                let v = two_point_objective(*ea, *eb, mu, w, eps);
                if v < best.1 {
                    best = ([lo[0] + i as f64 * step, lo[1] + j as f64 * step], v);
                }
            }
        }
        best
    };
    let (coarse, _) = grid([-5.0, -5.0], 1e-3, 10_000);
    if coarse.iter().any(|c| c.abs() > 5.0 - 1e-2) {
        return Err(format!("grid optimum {coarse:?} sits on the search boundary"));
    }
    let (fine, best) = grid([coarse[0] - 2e-3, coarse[1] - 2e-3], 2e-6, 2_000);
    let dh = (h.h[0] - fine[0]).abs().max((h.h[1] - fine[1]).abs());
    let dv = (r.value_eps - best).abs();
    check(
        dh <= 1e-3 && dv <= 1e-6,
        format!(
            "minimize h = [{:.6}, {:.6}], grid h = [{:.6}, {:.6}], |dh| {dh:.2e}, |dv| {dv:.2e}",
            h.h[0], h.h[1], fine[0], fine[1]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("symmetric game value", symmetric_value),
        ("gradient vs finite differences", gradient_vs_fd),
        ("entropic duality gap", entropic_duality_gap),
        ("primal-dual fixed point", primal_dual_fixed_point),
        ("regularization rate", rate),
        ("eps monotonicity", eps_monotonicity),
        ("mixing invariant", mixing),
        ("cost exponent monotonicity", fig2_monotone),
        ("interleaved indistinguishability", fig3_indistinguishable),
        ("uniform Lipschitz bound", uniform_lipschitz),
        ("Sinkhorn zero-cost oracle", sinkhorn_kl_oracle),
        ("two-point brute force", brute_force_two_points),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
