mod common;

use std::collections::HashMap;

use common::{random_bool, random_inputs, rng, Slot};
use proptest::prelude::*;
use qrobust::bitvector::{bitblast, eval_concrete, mask, BlastResult};
use qrobust::counting::{model_count, solve_with_chance_bits, SolveConfig};
use qrobust::compiler::{compile, CompileOptions};
use qrobust::formula::{brute_force_model_count, BRUTE_FORCE_LIMIT};
use num_bigint::BigUint;

fn assignments(slots: &[Slot]) -> Vec<HashMap<String, u64>> {
    let mut out = vec![HashMap::new()];
    for s in slots {
        out = out
            .into_iter()
            .flat_map(|env| {
                (0..=mask(s.width)).map(move |v| {
                    let mut env = env.clone();
                    env.insert(s.name.clone(), v);
                    env
                })
            })
            .collect();
    }
    out
}

fn count_all(b: &BlastResult) -> BigUint {
    let all = b.partition.universe();
    let (g, _) = compile(&b.cnf, &Default::default(), &CompileOptions::default()).unwrap();
    model_count(&g.smooth(&all), &all).unwrap()
}

#[test]
fn bitblasting_preserves_model_counts() {
    let mut rng = rng(21);
    let mut checked_by_brute_force = 0;
    for _ in 0..100 {
        let slots = random_inputs(&mut rng, 12);
        let e = random_bool(&mut rng, &slots, 3);
        let b = bitblast(&e).unwrap();
        // inputs the simplified expression dropped are free in the truth table
        let used: Vec<Slot> = slots.iter().filter(|s| b.inputs.iter().any(|i| i.name == s.name)).cloned().collect();
        let expected = assignments(&used).iter().filter(|env| eval_concrete(&e, env).unwrap() == 1).count();
        let counted = count_all(&b);
        assert_eq!(counted, BigUint::from(expected), "{e}");
        if b.partition.universe().len() <= BRUTE_FORCE_LIMIT {
            checked_by_brute_force += 1;
            assert_eq!(brute_force_model_count(&b.cnf, &b.partition.universe()).unwrap(), counted);
        }
    }
    assert!(checked_by_brute_force > 0);
}

#[test]
fn bitblasted_emajsat_is_the_best_controlled_choice() {
    let mut rng = rng(22);
    for _ in 0..60 {
        let slots = random_inputs(&mut rng, 10);
        let e = random_bool(&mut rng, &slots, 3);
        let b = bitblast(&e).unwrap();
        let used: Vec<Slot> = slots.iter().filter(|s| b.inputs.iter().any(|i| i.name == s.name)).cloned().collect();
        let (ctl, unc): (Vec<Slot>, Vec<Slot>) = used.into_iter().partition(|s| s.controlled);
        let best = assignments(&ctl)
            .iter()
            .map(|a| {
                assignments(&unc)
                    .iter()
                    .filter(|x| {
                        let mut env = a.clone();
                        env.extend(x.iter().map(|(k, v)| (k.clone(), *v)));
                        eval_concrete(&e, &env).unwrap() == 1
                    })
                    .count()
            })
            .max()
            .unwrap();
        let r = solve_with_chance_bits(&b.cnf, &b.partition, b.uncontrolled_bits(), &SolveConfig::exact()).unwrap();
        assert_eq!(r.lower, BigUint::from(best), "{e}");
        assert_eq!(r.upper, r.lower);
        // the decoded witness achieves the value
        let a = b.decode_controlled(&r.witness);
        let hits = assignments(&unc)
            .iter()
            .filter(|x| {
                let mut env: HashMap<String, u64> = a.iter().map(|(k, v)| (k.clone(), *v)).collect();
                env.extend(x.iter().map(|(k, v)| (k.clone(), *v)));
                eval_concrete(&e, &env).unwrap() == 1
            })
            .count();
        assert_eq!(hits, best, "{e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_parse_back(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let slots = random_inputs(&mut rng, 12);
        let e = random_bool(&mut rng, &slots, 3);
        let scope = slots
            .iter()
            .map(|s| (s.name.clone(), qrobust::bitvector::BvExpr::input(&s.name, s.width, s.controlled).unwrap()))
            .collect();
        let back = qrobust::bitvector::parse_expr(&e.to_string(), &scope).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn count_matches_truth_table(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let slots = random_inputs(&mut rng, 8);
        let e = random_bool(&mut rng, &slots, 2);
        let b = bitblast(&e).unwrap();
        let used: Vec<Slot> = slots.iter().filter(|s| b.inputs.iter().any(|i| i.name == s.name)).cloned().collect();
        let expected = assignments(&used).iter().filter(|env| eval_concrete(&e, env).unwrap() == 1).count();
        prop_assert_eq!(count_all(&b), BigUint::from(expected));
    }
}
