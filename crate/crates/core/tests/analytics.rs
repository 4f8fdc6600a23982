use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emograph::analytics::{
    concept_table, concept_table_csv, mean_attention, object_frequency, tfidf_rank,
    weighted_frequency, ConceptObservation,
};

const WORDS: [&str; 7] = ["dog", "cake", "grave", "flower", "knife", "sea", "smile"];

/// Attentions on a 1/64 grid so every input is an exact binary fraction.
fn corpus(seed: u64) -> Vec<ConceptObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rng.random_range(30..90))
        .map(|_| ConceptObservation {
            category: rng.random_range(0..3),
            concept: WORDS[rng.random_range(0..WORDS.len())].to_string(),
            attention: rng.random_range(0..=64) as f64 / 64.0,
        })
        .collect()
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[test]
fn frequencies_match_exact_counting() {
    for seed in 0..25 {
        let obs = corpus(seed);
        let mut counts: BTreeMap<(usize, &str), (i64, i64)> = BTreeMap::new();
        let mut totals = [0i64; 3];
        for o in &obs {
            let e = counts
                .entry((o.category, o.concept.as_str()))
                .or_insert((0, 0));
            e.0 += 1;
            e.1 += (o.attention * 64.0) as i64;
            totals[o.category] += 1;
        }
        let cats: Vec<usize> = (0..3).filter(|&c| totals[c] > 0).collect();
        let f = object_frequency(&obs, &cats).unwrap();
        let a = mean_attention(&obs);
        let w = weighted_frequency(&f, &a).unwrap();
        assert_eq!(f.len(), counts.len());
        for (&(c, word), &(n, att)) in &counts {
            let key = (c, word.to_string());
            let exact_f = Ratio::new(n, totals[c]);
            let exact_a = Ratio::new(att, 64 * n);
            assert!((f[&key] - to_f64(exact_f)).abs() <= 1e-15);
            assert!((a[&key] - to_f64(exact_a)).abs() <= 1e-15);
            assert!((w[&key] - to_f64(exact_f * exact_a)).abs() <= 1e-15);
        }
        for c in &cats {
            let sum: f64 = f.iter().filter(|((k, _), _)| k == c).map(|(_, v)| v).sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn ranking_matches_direct_scoring() {
    for seed in 0..25 {
        let obs = corpus(seed);
        let cats: Vec<usize> = {
            let mut c: Vec<usize> = obs.iter().map(|o| o.category).collect();
            c.sort();
            c.dedup();
            c
        };
        let w = weighted_frequency(
            &object_frequency(&obs, &cats).unwrap(),
            &mean_attention(&obs),
        )
        .unwrap();
        let ranked = tfidf_rank(&w, 100).unwrap();
        for &c in &cats {
            let total: f64 = w.iter().filter(|((k, _), _)| *k == c).map(|(_, v)| v).sum();
            let mut want: Vec<(f64, &str)> = WORDS
                .iter()
                .filter_map(|word| {
                    let v = *w.get(&(c, word.to_string()))?;
                    let df = cats
                        .iter()
                        .filter(|&&k| w.contains_key(&(k, word.to_string())))
                        .count();
                    let idf = ((1.0 + cats.len() as f64) / (1.0 + df as f64)).ln() + 1.0;
                    let tf = if total > 0.0 { v / total } else { 0.0 };
                    Some((tf * idf, *word))
                })
                .collect();
            want.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(y.1)));
            let got: Vec<&str> = ranked[&c].iter().map(|r| r.concept.as_str()).collect();
            let want_names: Vec<&str> = want.iter().map(|x| x.1).collect();
            assert_eq!(got, want_names, "seed {seed} category {c}");
            for (r, (score, _)) in ranked[&c].iter().zip(&want) {
                assert!((r.score - score).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn table_respects_top_k_and_vocabulary() {
    let obs = corpus(3);
    let cats = [0, 1, 2];
    let rows = concept_table(&obs, &cats, 2).unwrap();
    for c in cats {
        let ranks: Vec<usize> = rows
            .iter()
            .filter(|r| r.category == c)
            .map(|r| r.rank)
            .collect();
        assert_eq!(ranks, vec![1, 2]);
    }
    let all = concept_table(&obs, &cats, 1000).unwrap();
    let distinct: usize = cats
        .iter()
        .map(|c| {
            let mut v: Vec<&str> = obs
                .iter()
                .filter(|o| o.category == *c)
                .map(|o| o.concept.as_str())
                .collect();
            v.sort();
            v.dedup();
            v.len()
        })
        .sum();
    assert_eq!(all.len(), distinct);
    let csv = concept_table_csv(&all).unwrap();
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        distinct + 1
    );
}

#[test]
fn empty_category_is_reported() {
    let obs = corpus(4);
    let err = object_frequency(&obs, &[0, 1, 2, 7]).unwrap_err();
    assert!(err.to_string().contains('7'));
}
