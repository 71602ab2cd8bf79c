//! Acceptance criteria. Each test prints one `PASS`, `FAIL` or `SKIP` line
//! straight to stdout so the verdicts show up even when output is captured.

use std::io::Write;
use std::path::{Path, PathBuf};

use onomastat_core::binomial::{calibrate_rare_pool, TABLE4, TABLE4_POOL_TOTAL, TABLE4_SAMPLE};
use onomastat_core::intervals::{binomial_mass, empirical_coverage};
use onomastat_core::power::{ci_width_scaling, MethodSettings};
use onomastat_core::qualifiers::QualifierOptions;
use onomastat_core::*;

fn verdict(id: u32, ok: bool, detail: &str) {
    let line = format!("acceptance {id}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stdout().write_all(line.as_bytes()).unwrap();
}

fn skip(id: u32, detail: &str) {
    let line = format!("acceptance {id}: SKIP {detail}\n");
    std::io::stdout().write_all(line.as_bytes()).unwrap();
}

/// 30 named counts, a bulk name and 60 singletons; Simon 184 of 2185.
fn synthetic_reference() -> ReferenceDistribution {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.csv");
    ReferenceDistribution::read_csv(path, "synthetic").unwrap()
}

#[test]
fn c1_binomial_anchors() {
    let a = binomial_tail(53, 0.084, 8).unwrap();
    let b = binomial_tail(82, 184.0 / 2185.0, 8).unwrap();
    let ok = (a - 0.074).abs() <= 0.0005 && (b - 0.386).abs() <= 0.005;
    verdict(1, ok, &format!("tail(53, .084, 8) = {a:.5} [0.074 ± 0.0005]; tail(82, 184/2185, 8) = {b:.4} [0.386 ± 0.005]"));
    assert!(ok);
}

#[test]
fn c2_chi_squared_machinery() {
    let sf = chi2_sf(2.0, 2);
    let analytic = (sf - (-1.0f64).exp()).abs() <= 1e-10;

    let r = ReferenceDistribution::from_counts("five", [("A", 300), ("B", 250), ("C", 200), ("D", 150), ("E", 100)]).unwrap();
    let corpus = TestCorpus::from_names(
        "five-bin",
        &[["A"; 24].as_slice(), &["B"; 28], &["C"; 17], &["D"; 18], &["E"; 13]].concat(),
    );
    let spec = BinningSpec {
        top_k: 5,
        ..Default::default()
    };
    let res = gof_test(&corpus, &r, &spec, MonteCarlo::new(100_000, 20_240_601)).unwrap();
    let min_e = res.bins.iter().map(|b| b.expected).fold(f64::INFINITY, f64::min);
    let mc = res.p_monte_carlo.unwrap();
    let agree = res.bins.len() == 5 && min_e >= 5.0 && (mc - res.p_asymptotic).abs() <= 0.02;
    let ok = analytic && agree;
    verdict(
        2,
        ok,
        &format!(
            "chi2_sf(2, 2) - 1/e = {:.1e} [≤ 1e-10]; 5 bins, min expected {min_e:.1}, p_asym {:.4} vs p_mc {mc:.4} at B = 100000 [≤ 0.02]",
            sf - (-1.0f64).exp(),
            res.p_asymptotic
        ),
    );
    assert!(ok);
}

#[test]
fn c3_null_calibration() {
    let r = synthetic_reference();
    let res = rejection_rate(
        Method::GofChi2,
        &Generator::historical(r.clone()),
        &r,
        100,
        0.05,
        5000,
        31,
        &MethodSettings::default(),
    )
    .unwrap();
    let ok = (0.03..=0.07).contains(&res.rejection_rate);
    verdict(3, ok, &format!("gof_chi2 null rejection rate {:.4} over 5000 corpora of n = 100 [0.03, 0.07]", res.rejection_rate));
    assert!(ok);
}

#[test]
fn c4_discrimination_at_53() {
    let r = synthetic_reference();
    let settings = MethodSettings::default();
    let reps = 2000;
    let h = rejection_rate(Method::GofChi2, &Generator::historical(r.clone()), &r, 53, 0.05, reps, 41, &settings).unwrap();
    let u = rejection_rate(Method::GofChi2, &Generator::uniform_over(&r).unwrap(), &r, 53, 0.05, reps, 42, &settings).unwrap();
    let se = (h.mc_se.powi(2) + u.mc_se.powi(2)).sqrt();
    let z = (u.rejection_rate - h.rejection_rate) / se;
    let ok = z >= 3.0;
    verdict(
        4,
        ok,
        &format!(
            "n = 53: uniform rate {:.4} vs historical {:.4}, difference {z:.1} SE [≥ 3]",
            u.rejection_rate, h.rejection_rate
        ),
    );
    assert!(ok);
}

#[test]
fn c5_width_scaling() {
    let r = synthetic_reference();
    let rows = ci_width_scaling(&r, "Simon", &[53, 212, 848], 0.95, MonteCarlo::new(20_000, 51)).unwrap();
    let targets = [1.0, 0.5, 0.25];
    let ok = rows
        .iter()
        .zip(targets)
        .all(|(row, t)| (row.relative / t - 1.0).abs() <= 0.15);
    let detail = rows
        .iter()
        .map(|w| format!("n = {} width {} ({:.3})", w.n, w.count_width, w.relative))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(5, ok, &format!("Simon-share proportion widths {detail} [1 : 0.5 : 0.25 ± 15%]"));
    assert!(ok);
}

#[test]
fn c6_table4() {
    // The composition of the published pool (which names are rare) is not
    // available, so the full comparison is attempted by calibration and the
    // criterion is judged in its degraded form.
    let hyper = calibrate_rare_pool(TABLE4_POOL_TOTAL, TABLE4_SAMPLE, &TABLE4, Sampling::WithoutReplacement).unwrap();
    let binom = calibrate_rare_pool(TABLE4_POOL_TOTAL, TABLE4_SAMPLE, &TABLE4, Sampling::WithReplacement).unwrap();
    let report = |c: &onomastat_core::binomial::Calibration| {
        format!(
            "{:?} R = {} max deviation {:.3} pp {}",
            c.sampling,
            c.pool.rare,
            100.0 * c.max_abs_deviation,
            if c.max_abs_deviation <= 0.003 { "(within ±0.3 pp)" } else { "(exceeds ±0.3 pp)" }
        )
    };
    let dist = rare_count_distribution(hyper.pool, TABLE4_SAMPLE, Sampling::WithoutReplacement, MonteCarlo::new(500_000, 61)).unwrap();
    let tv = dist.monte_carlo.as_ref().unwrap().tv_distance;
    let monotone = dist.cdf.windows(2).all(|w| w[0] <= w[1]) && (dist.cdf.last().unwrap() - 1.0).abs() < 1e-9;
    let ok = tv <= 0.005 && monotone;
    verdict(
        6,
        ok,
        &format!(
            "DEGRADED FORM (pool composition unavailable): exact-vs-MC TV {tv:.5} [≤ 0.005], cdf monotone {monotone}; \
             calibration attempts: {}; {}",
            report(&hyper),
            report(&binom)
        ),
    );
    assert!(ok);
}

/// Dataset-dependent golden numbers. Needs the supplementary fixtures under
/// `$ONOMASTAT_DATA_DIR/supplementary/`: `reference.csv`, `corpora.csv` and
/// the three iteration references `reference_{ossuary,inscription_papyri,literary}.csv`.
#[test]
fn c7_dataset_golden_numbers() {
    let Some(root) = std::env::var_os("ONOMASTAT_DATA_DIR").map(|d| PathBuf::from(d).join("supplementary")) else {
        skip(7, "supplementary fixtures not bundled (set ONOMASTAT_DATA_DIR); dataset golden numbers not checked");
        return;
    };
    let (ref_path, corpora_path) = (root.join("reference.csv"), root.join("corpora.csv"));
    if !ref_path.exists() || !corpora_path.exists() {
        skip(7, &format!("{} lacks reference.csv / corpora.csv; dataset golden numbers not checked", root.display()));
        return;
    }
    let reference = ReferenceDistribution::read_csv(&ref_path, "reference").unwrap();
    let corpora = onomastat_core::corpus::parse_corpora(&corpora_path).unwrap();
    let find = |label: &str| corpora.iter().find(|c| c.label == label);
    let spec = BinningSpec::default();
    let within = |p: f64, want: f64| {
        let (a, b) = (-p.log10(), -want.log10());
        (a - b).abs() <= 0.2 * b
    };
    let mut checks: Vec<(String, bool)> = Vec::new();
    let golden = [
        ("gospels_acts_contested", 0.2749),
        ("gospels_acts_list_a", 0.6106),
        ("gospels_acts_list_b", 0.7939),
        ("ben_hur", 0.1113),
        ("talmud", 0.00263),
        ("apocrypha", 0.00004),
        ("uniform_sample", 1.69e-15),
    ];
    for (label, want) in golden {
        if let Some(c) = find(label) {
            let res = gof_test(c, &reference, &spec, MonteCarlo::new(0, 0)).unwrap();
            checks.push((format!("{label} p {:.3e} vs {want}", res.p_asymptotic), within(res.p_asymptotic, want)));
        }
    }
    if let Some(c) = find("gospels_acts_contested") {
        for (file, want) in [
            ("reference_ossuary.csv", 0.3093),
            ("reference_inscription_papyri.csv", 0.5753),
            ("reference_literary.csv", 0.2701),
        ] {
            if let Ok(r) = ReferenceDistribution::read_csv(root.join(file), file) {
                let res = gof_test(c, &r, &spec, MonteCarlo::new(0, 0)).unwrap();
                checks.push((format!("{file} p {:.4} vs {want}", res.p_asymptotic), within(res.p_asymptotic, want)));
            }
        }
        let adjusted = adjusted_reference(&reference, c).unwrap();
        let audit = onomastat_core::intervals::interval_audit(c, &adjusted, reference.len() as u64, 0.95, MonteCarlo::new(10_000, 71)).unwrap();
        checks.push((
            format!("intervals {} / {} outside vs 1 / 7", audit.summary.n_outside_hist, audit.summary.n_outside_unif),
            audit.summary.n_outside_hist == 1 && audit.summary.n_outside_unif == 7,
        ));
        let t = name_tail_test("Simon", c, &reference, TailMode::Contested).unwrap();
        checks.push((format!("Simon contested tail {:.4} vs 0.029", t.tail), (t.tail - 0.029).abs() <= 0.005));
    }
    let table = qualifier_table(&corpora, &reference, QualifierOptions::default());
    for (label, want) in [("matthew", (15, 9, 5, 1)), ("book_of_bee", (28, 10, 8, 10))] {
        if let Some(row) = table.row(label) {
            let got = (row.total, row.tier_top, row.tier_mid, row.tier_low);
            checks.push((format!("qualifiers {label} {got:?} vs {want:?}"), got == want));
        }
    }
    if checks.is_empty() {
        skip(7, "no recognised corpus labels in the supplementary fixtures");
        return;
    }
    let ok = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(d, ok)| format!("{d} {}", if *ok { "ok" } else { "MISS" }))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(7, ok, &detail);
    assert!(ok);
}

#[test]
fn c8_fixture_free_properties_and_replay() {
    let mut failures = Vec::new();

    // binomial tail monotone in k
    for &(n, p) in &[(53u64, 0.084), (200, 0.3), (1000, 0.01)] {
        let tails: Vec<f64> = (0..=n).map(|k| binomial_tail(n, p, k).unwrap()).collect();
        if !tails.windows(2).all(|w| w[1] <= w[0]) {
            failures.push(format!("tail not monotone for n = {n}, p = {p}"));
        }
    }

    // Holm never above Bonferroni
    let ps = [0.001, 0.04, 0.03, 0.2, 0.0005, 0.9, 0.011];
    let b = adjust(&ps, Adjustment::Bonferroni).unwrap();
    let h = adjust(&ps, Adjustment::Holm).unwrap();
    if !h.iter().zip(&b).all(|(h, b)| h <= b) {
        failures.push("Holm exceeds Bonferroni".into());
    }

    // binning preserves totals
    let r = synthetic_reference();
    let corpus = onomastat_core::power::generate(&Generator::uniform_over(&r).unwrap(), 90, 81).unwrap();
    let layout = make_bins(&r, 90, &BinningSpec::default()).unwrap();
    let observed: u64 = layout.observe(&corpus).unwrap().iter().sum();
    let expected: f64 = layout.expected().iter().sum();
    if observed != 90 || (expected - 90.0).abs() > 1e-9 {
        failures.push(format!("binning totals {observed} / {expected}"));
    }

    // coverage at the exact interval mass
    let names = ["Simon", "Hananiah", "Nathan"];
    let n = 100;
    let ivs = historical_intervals(&r, &names, n, 0.95, MonteCarlo::new(20_000, 82)).unwrap();
    let reps = 20_000;
    let cov = empirical_coverage(&r, &ivs, n, MonteCarlo::new(reps, 83)).unwrap();
    for (iv, c) in ivs.iter().zip(&cov) {
        let mass = binomial_mass(n, r.proportion(&iv.name_key).unwrap(), iv.interval);
        let se = (mass * (1.0 - mass) / reps as f64).sqrt();
        if *c < 0.95 - 2.0 * (0.95f64 * 0.05 / reps as f64).sqrt() || (c - mass).abs() > 3.0 * se.max(1e-4) {
            failures.push(format!("coverage of {} is {c}, exact mass {mass}", iv.name_key));
        }
    }

    // manifest replay byte-identity
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = tmp.path().join("gof").display().to_string();
    let argv = |args: &[&str]| -> Vec<String> { std::iter::once("onomastat").chain(args.iter().copied()).map(String::from).collect() };
    onomastat_cli::run(argv(&[
        "test",
        "--corpus",
        &fixtures.join("corpora.csv").display().to_string(),
        "--reference",
        &fixtures.join("reference.csv").display().to_string(),
        "--label",
        "gospels",
        "--B",
        "5000",
        "--seed",
        "84",
        "--out",
        &out,
    ]))
    .unwrap();
    let replay = onomastat_cli::run(argv(&["--workers", "3", "report", &format!("{out}/gof.json"), "--check"]));
    if let Err(e) = replay {
        failures.push(format!("replay: {e}"));
    }

    let ok = failures.is_empty();
    verdict(
        8,
        ok,
        &if ok {
            "binomial monotonicity, Holm ≤ Bonferroni, binning totals, coverage at exact mass, manifest replay byte-identical".to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(ok);
}
