use num_bigint::BigUint;
use rand::Rng;
use shuffle_rl::env::{
    compute_reward, eval_pool, observe, oracle_answer, sample_query, score_accuracy, score_format,
    think_token, EVAL_ID_BASE,
};
use shuffle_rl::{Error, Purpose, Query, RngStream, RunConfig};

fn big_sum_mod(start: u32, steps: &[u32], v: u32) -> u32 {
    let total = steps
        .iter()
        .fold(BigUint::from(start), |acc, &s| acc + BigUint::from(s));
    let r = total % BigUint::from(v);
    r.to_u32_digits().first().copied().unwrap_or(0)
}

fn random_query(rng: &mut impl Rng, id: u64, max_v: u32, max_d: usize) -> Query {
    let v = rng.random_range(2..=max_v);
    let d = rng.random_range(1..=max_d);
    Query {
        id,
        difficulty: d,
        seed: rng.random(),
        vocab_size: v,
        start_value: rng.random_range(0..v),
        step_values: (0..d).map(|_| rng.random_range(0..v)).collect(),
    }
}

#[test]
fn answers_match_arbitrary_precision_sums() {
    let mut rng = RngStream::new(11, Purpose::Test, 0, 0).rng();
    for id in 0..10_000 {
        let q = random_query(&mut rng, id, u32::MAX, 12);
        q.validate().unwrap();
        assert_eq!(
            oracle_answer(&q),
            big_sum_mod(q.start_value, &q.step_values, q.vocab_size)
        );
        for t in 0..=q.difficulty {
            let obs = observe(&q, t).unwrap();
            assert_eq!(obs.step_index, t);
            assert_eq!(
                obs.running_value,
                big_sum_mod(q.start_value, &q.step_values[..t], q.vocab_size)
            );
        }
        assert_eq!(
            observe(&q, q.difficulty).unwrap().running_value,
            oracle_answer(&q)
        );
        assert!(matches!(
            observe(&q, q.difficulty + 1),
            Err(Error::OutOfBounds(_))
        ));
    }
}

#[test]
fn difficulty_frequencies_follow_the_mix() {
    let config = RunConfig {
        difficulty_mix: vec![(1, 0.5), (2, 0.3), (4, 0.2)],
        ..RunConfig::default()
    };
    let mut counts = [0usize; 5];
    let n = 20_000u64;
    for i in 0..n {
        let q = sample_query(&config, i / 32, i % 32);
        q.validate().unwrap();
        counts[q.difficulty] += 1;
    }
    for (d, p) in [(1usize, 0.5), (2, 0.3), (4, 0.2)] {
        let freq = counts[d] as f64 / n as f64;
        assert!((freq - p).abs() <= 0.02, "d={d}: {freq} vs {p}");
    }
    assert_eq!(counts[3], 0);
}

#[test]
fn query_streams_are_reproducible_and_ids_are_disjoint() {
    let config = RunConfig::default();
    assert_eq!(sample_query(&config, 3, 5), sample_query(&config, 3, 5));
    assert_ne!(sample_query(&config, 3, 5), sample_query(&config, 3, 6));
    assert_eq!(sample_query(&config, 3, 5).id, 3 * 32 + 5);
    let pool = eval_pool(&config);
    assert_eq!(pool.len(), config.eval_queries);
    assert_eq!(pool, eval_pool(&config));
    assert!(pool.iter().all(|q| q.id >= EVAL_ID_BASE));
    let other = eval_pool(&RunConfig { seed: 1, ..config });
    assert_ne!(pool, other);
}

#[test]
fn reward_is_the_weighted_sum_of_both_scores() {
    // exhaustive over every response to every query with V = 3, d <= 2
    for d in 1..=2usize {
        let v = 3u32;
        let mut values = vec![0u32; d + 1];
        loop {
            let q = Query {
                id: 0,
                difficulty: d,
                seed: 0,
                vocab_size: v,
                start_value: values[0],
                step_values: values[1..].to_vec(),
            };
            let answer = oracle_answer(&q);
            let think = think_token(v);
            let mut tokens = vec![0u32; d + 1];
            loop {
                let f = tokens[..d].iter().all(|&t| t == think) && tokens[d] < v;
                let a = tokens[d] == answer;
                assert_eq!(score_format(&tokens, &q).unwrap(), u8::from(f));
                assert_eq!(score_accuracy(&tokens, &q).unwrap(), u8::from(a));
                let r: f64 = compute_reward(&tokens, &q).unwrap();
                let expected = [[0.0, 0.9], [0.1, 1.0]][usize::from(f)][usize::from(a)];
                assert_eq!(r, expected);
                let r32: f32 = compute_reward(&tokens, &q).unwrap();
                assert_eq!(r32, expected as f32);
                if !advance(&mut tokens, v + 1) {
                    break;
                }
            }
            if !advance(&mut values, v) {
                break;
            }
        }
    }
}

fn advance(digits: &mut [u32], base: u32) -> bool {
    for x in digits.iter_mut() {
        *x += 1;
        if *x < base {
            return true;
        }
        *x = 0;
    }
    false
}

#[test]
fn wrong_length_is_rejected() {
    let q = Query {
        id: 0,
        difficulty: 2,
        seed: 0,
        vocab_size: 4,
        start_value: 1,
        step_values: vec![2, 3],
    };
    let err = score_format(&[4, 4], &q).unwrap_err();
    assert!(matches!(
        err,
        Error::LengthMismatch {
            expected: 3,
            actual: 2
        }
    ));
    assert!(compute_reward::<f64>(&[4, 4, 2, 0], &q).is_err());
}
