mod common;

use common::{check_qrse_laws, random_program, rng};
use num_rational::BigRational;
use num_traits::{One, Zero};
use qrobust::qrse::{brute_force_qr, parse_program, run_qrse, run_qrse_plus, Program, QrseConfig, Verdict};

const EXHAUSTIVE: usize = 64;

fn programs(count: usize, seed: u64) -> Vec<(String, Program)> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let text = random_program(&mut rng, 12, 3);
            let p = parse_program(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            (text, p)
        })
        .collect()
}

#[test]
fn qrse_properties_on_random_programs() {
    qrobust::with_large_stack(|| {
        let mut rng = rng(31);
        let mut fractional = 0;
        for _ in 0..50 {
            let text = random_program(&mut rng, 12, 3);
            let truth = check_qrse_laws(&text).unwrap_or_else(|e| panic!("{e}"));
            if !truth.is_zero() && truth != BigRational::one() {
                fractional += 1;
            }
        }
        assert!(fractional >= 10, "only {fractional} programs have a fractional robustness");
    });
}

#[test]
fn early_stop_reports_the_first_qualifying_path() {
    qrobust::with_large_stack(|| {
        for (text, p) in programs(30, 32) {
            let threshold = BigRational::new(1.into(), 4.into());
            let cfg = QrseConfig {
                bound: EXHAUSTIVE,
                threshold: threshold.clone(),
                ..QrseConfig::default()
            };
            let lazy = run_qrse(&p, &cfg).unwrap();
            let eager = run_qrse(&p, &QrseConfig { all: true, ..cfg.clone() }).unwrap();
            assert_eq!(lazy.verdict, eager.verdict, "{text}");
            assert_eq!(
                lazy.first.as_ref().map(|s| (&s.id, &s.lower)),
                eager.first.as_ref().map(|s| (&s.id, &s.lower)),
                "{text}"
            );
            if let Some(first) = &lazy.first {
                assert!(first.lower >= threshold);
            }
        }
    });
}

#[test]
fn merge_example() {
    let text = std::fs::read_to_string(common::data_path("merge.qimp")).unwrap();
    let p = parse_program(&text).unwrap();
    let half = BigRational::new(1.into(), 2.into());
    let at = |threshold: BigRational, merge: bool| {
        run_qrse(
            &p,
            &QrseConfig {
                bound: 2,
                threshold,
                merge,
                ..QrseConfig::default()
            },
        )
        .unwrap()
    };
    let r = at(half.clone(), false);
    assert_eq!(r.verdict, Verdict::Found);
    assert_eq!(r.first.unwrap().lower, half);
    assert_eq!(at(BigRational::new(3.into(), 5.into()), false).verdict, Verdict::NotFound);
    assert_eq!(at(BigRational::one(), false).verdict, Verdict::NotFound);
    let r = at(BigRational::one(), true);
    assert_eq!(r.verdict, Verdict::Found);
    assert_eq!(r.first.unwrap().lower, BigRational::one());
}

#[test]
fn single_path_program_merges_to_itself() {
    let p = parse_program("input a 3 controlled;\ninput x 3 uncontrolled;\nif (a <u x) target;\n").unwrap();
    let cfg = QrseConfig {
        threshold: BigRational::new(1.into(), 2.into()),
        ..QrseConfig::default()
    };
    let plain = run_qrse(&p, &cfg).unwrap();
    let merged = run_qrse_plus(&p, &QrseConfig { merge: true, ..cfg }).unwrap();
    assert_eq!(plain.verdict, merged.verdict);
    assert_eq!(plain.chi().unwrap().lower, merged.chi().unwrap().lower);
    assert_eq!(plain.chi().unwrap().lower, BigRational::new(7.into(), 8.into()));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

    #[test]
    fn merged_exhaustive_score_is_the_truth(seed in proptest::prelude::any::<u64>()) {
        let mut rng = rng(seed);
        let text = random_program(&mut rng, 10, 3);
        let p = parse_program(&text).unwrap();
        let truth = brute_force_qr(&p).unwrap();
        let cfg = QrseConfig {
            bound: EXHAUSTIVE,
            threshold: BigRational::one(),
            merge: true,
            all: true,
            ..QrseConfig::default()
        };
        let report = qrobust::with_large_stack(move || run_qrse_plus(&p, &cfg).unwrap());
        let last = report.entries.iter().max_by_key(|e| e.id.len()).unwrap();
        proptest::prop_assert_eq!(&last.lower, &truth, "{}", text);
    }
}
