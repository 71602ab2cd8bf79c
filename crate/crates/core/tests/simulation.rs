//! Monte Carlo behaviour: agreement with asymptotics, null calibration,
//! interval coverage and independence from the worker count.

use onomastat_core::intervals::{binomial_mass, empirical_coverage};
use onomastat_core::power::{generate, rejection_rate, Evaluator, MethodSettings};
use onomastat_core::*;

fn five_bin_reference() -> ReferenceDistribution {
    ReferenceDistribution::from_counts("five", [("A", 300), ("B", 250), ("C", 200), ("D", 150), ("E", 100)]).unwrap()
}

fn skewed_reference() -> ReferenceDistribution {
    let mut counts: Vec<(String, u64)> = (0..12).map(|i| (format!("n{i:02}"), 200 - 15 * i as u64)).collect();
    counts.extend((0..120).map(|i| (format!("rare{i:03}"), 1 + i as u64 % 3)));
    ReferenceDistribution::from_counts("skewed", counts).unwrap()
}

fn spec5() -> BinningSpec {
    BinningSpec {
        top_k: 5,
        ..Default::default()
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn monte_carlo_tracks_asymptotic_p() {
    let r = five_bin_reference();
    let corpus = TestCorpus::from_names(
        "c",
        &[["A"; 24].as_slice(), &["B"; 28], &["C"; 17], &["D"; 18], &["E"; 13]].concat(),
    );
    let res = gof_test(&corpus, &r, &spec5(), MonteCarlo::new(40_000, 11)).unwrap();
    assert!(res.bins.iter().all(|b| b.expected >= 5.0));
    let mc = res.p_monte_carlo.unwrap();
    assert!((mc - res.p_asymptotic).abs() <= 0.02, "{mc} vs {}", res.p_asymptotic);
}

#[test]
fn null_p_values_are_roughly_uniform() {
    let r = five_bin_reference();
    let g = Generator::historical(r.clone());
    let eval = Evaluator::new(Method::GofChi2, &r, 150, &MethodSettings { binning: spec5(), ..Default::default() }).unwrap();
    let reps = 2000;
    let ps: Vec<f64> = (0..reps)
        .map(|i| eval.p_value(&generate(&g, 150, 1000 + i).unwrap()).unwrap())
        .collect();
    let se = |q: f64| (q * (1.0 - q) / reps as f64).sqrt();
    for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let frac = ps.iter().filter(|&&p| p <= q).count() as f64 / reps as f64;
        assert!((frac - q).abs() <= 4.0 * se(q) + 0.01, "P(p <= {q}) = {frac}");
    }
}

#[test]
fn historical_intervals_cover_at_their_exact_mass() {
    let r = skewed_reference();
    let names: Vec<&str> = ["n00", "n03", "n07", "n11", "rare000", "rare005"].to_vec();
    let n = 120;
    let ivs = historical_intervals(&r, &names, n, 0.95, MonteCarlo::new(20_000, 3)).unwrap();
    let reps = 20_000u64;
    let cov = empirical_coverage(&r, &ivs, n, MonteCarlo::new(reps, 4)).unwrap();
    for (iv, c) in ivs.iter().zip(cov) {
        let p = r.proportion(&iv.name_key).unwrap();
        let mass = binomial_mass(n, p, iv.interval);
        let se = (mass * (1.0 - mass) / reps as f64).sqrt().max(1e-4);
        // discrete intervals can only over-cover
        assert!(c >= 0.95 - 2.0 * (0.95 * 0.05 / reps as f64).sqrt(), "{}: coverage {c}", iv.name_key);
        assert!((c - mass).abs() <= 3.0 * se, "{}: coverage {c}, exact mass {mass}", iv.name_key);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let r = skewed_reference();
    let corpus = generate(&Generator::uniform_over(&r).unwrap(), 80, 9).unwrap();
    let run = || {
        let gof = gof_test(&corpus, &r, &BinningSpec::default(), MonteCarlo::new(3000, 5)).unwrap();
        let ivs = historical_intervals(&r, &["n00", "n05", "rare001"], 80, 0.95, MonteCarlo::new(3000, 6)).unwrap();
        let power = rejection_rate(
            Method::GofChi2,
            &Generator::historical(r.clone()),
            &r,
            80,
            0.05,
            300,
            7,
            &MethodSettings::default(),
        )
        .unwrap();
        (
            serde_json::to_string(&gof).unwrap(),
            serde_json::to_string(&ivs).unwrap(),
            serde_json::to_string(&power).unwrap(),
        )
    };
    let one = pool(1).install(run);
    let four = pool(4).install(run);
    let seven = pool(7).install(run);
    assert_eq!(one, four);
    assert_eq!(one, seven);
}

#[test]
fn uniform_corpora_are_rejected_more_than_historical() {
    let r = skewed_reference();
    let settings = MethodSettings::default();
    let h = rejection_rate(Method::GofChi2, &Generator::historical(r.clone()), &r, 100, 0.05, 400, 1, &settings).unwrap();
    let u = rejection_rate(Method::GofChi2, &Generator::uniform_over(&r).unwrap(), &r, 100, 0.05, 400, 1, &settings).unwrap();
    assert!(u.rejection_rate > h.rejection_rate + 3.0 * (h.mc_se.powi(2) + u.mc_se.powi(2)).sqrt());
}
