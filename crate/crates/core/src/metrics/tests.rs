use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn bleu_perfect_and_disjoint() {
    let h = vec![t("the cat sat on the mat"), t("a b c d")];
    assert!(close(bleu_corpus(&h, &h, false).unwrap(), 100.0, 1e-9));
    assert_eq!(
        bleu_corpus(&[t("a b c d e")], &[t("f g h i j")], false).unwrap(),
        0.0
    );
}

#[test]
fn bleu_hand_counted_example() {
    let s = bleu_stats(&t("a b c d e f"), &t("a b c d x f"));
    assert_eq!(s.matches, [5, 3, 2, 1]);
    assert_eq!(s.totals, [6, 5, 4, 3]);
    let score = s.score(false);
    assert!(close(score, 100.0 * (1.0f64 / 12.0).powf(0.25), 1e-9));
    assert!(close(score, 53.73, 0.005));
}

#[test]
fn bleu_brevity_penalty_and_smoothing() {
    let s = bleu_stats(&t("a b c d"), &t("a b c d e f g h"));
    assert!(close(s.score(false), 100.0 * (-1.0f64).exp(), 1e-9));
    let z = bleu_stats(&t("a b x c"), &t("a b y c"));
    assert_eq!(z.score(false), 0.0);
    // p = (3/4, 1/3, (0+1)/(2+1), (0+1)/(1+1))
    let expected = 100.0 * (0.75f64 * (1.0 / 3.0) * (1.0 / 3.0) * 0.5).powf(0.25);
    assert!(close(z.score(true), expected, 1e-9));
}

#[test]
fn bleu_length_mismatch_is_an_error() {
    let err = bleu_corpus(&[t("a")], &[t("a"), t("b")], false).unwrap_err();
    assert_eq!(
        err.to_string(),
        "hypothesis and reference counts differ: 1 hypotheses vs 2 references"
    );
}

#[test]
fn rouge_examples() {
    assert_eq!(rouge_l(&t("a b c"), &t("a b c")).unwrap(), 1.0);
    assert_eq!(lcs_len(&t("a b c d"), &t("a c b d")), 3);
    assert!(close(
        rouge_l(&t("a b c d"), &t("a c b d")).unwrap(),
        0.75,
        1e-12
    ));
    assert_eq!(rouge_l(&t("x y"), &t("a b")).unwrap(), 0.0);
    assert_eq!(rouge_l(&t(""), &t("a b")).unwrap(), 0.0);
    assert!(matches!(
        rouge_l(&t("a"), &t("")),
        Err(MetricsError::EmptyReference)
    ));
}

#[test]
fn ter_examples() {
    assert_eq!(ter(&t("a b c d"), &t("a b c d")).unwrap(), 0.0);
    assert_eq!(ter(&t("a b c"), &t("a b c d")).unwrap(), 25.0);
    let s = ter_stats(&t("d a b c"), &t("a b c d")).unwrap();
    assert_eq!((s.edits, s.shifts), (0, 1));
    assert_eq!(s.rate(), 25.0);
    assert_eq!(levenshtein(&t("d a b c"), &t("a b c d")), 2);
    assert!(matches!(
        ter(&t("a"), &t("")),
        Err(MetricsError::EmptyReference)
    ));
}

#[test]
fn ter_moves_blocks_absent_from_the_reference() {
    // Shifting "y w" to the end turns 2 deletions + 2 insertions into 2 substitutions.
    let s = ter_stats(&t("y w a b c d"), &t("a b c d z q")).unwrap();
    assert_eq!((s.edits, s.shifts), (2, 1));
}

#[test]
fn ter_long_sentence_finds_reference_block_shift() {
    let r: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let mut h = r.clone();
    let block: Vec<String> = h.drain(20..24).collect();
    h.splice(3..3, block);
    let s = ter_stats(&h, &r).unwrap();
    assert_eq!((s.edits, s.shifts), (0, 1));
}

fn oracle_lev(a: &[u8], b: &[u8]) -> usize {
    // Full-table DP written independently of the library's rolling version.
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j - 1] + c)
                .min(d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn oracle_single_shift(h: &[u8], r: &[u8]) -> usize {
    let mut best = oracle_lev(h, r);
    for i in 0..h.len() {
        for j in i + 1..=h.len() {
            let block = &h[i..j];
            let rest: Vec<u8> = h[..i].iter().chain(&h[j..]).copied().collect();
            for k in 0..=rest.len() {
                let mut s = rest[..k].to_vec();
                s.extend_from_slice(block);
                s.extend_from_slice(&rest[k..]);
                best = best.min(1 + oracle_lev(&s, r));
            }
        }
    }
    best
}

#[test]
fn ter_matches_single_shift_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..1000 {
        let seq = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let n = rng.gen_range(1..=12);
            (0..n).map(|_| rng.gen_range(0..10)).collect()
        };
        let h = seq(&mut rng);
        let r = seq(&mut rng);
        let s = ter_stats(&h, &r).unwrap();
        if s.shifts <= 1 {
            checked += 1;
            assert_eq!(
                (s.edits + s.shifts) as usize,
                oracle_single_shift(&h, &r),
                "{h:?} / {r:?}"
            );
        }
        assert!(s.edits + s.shifts <= oracle_lev(&h, &r) as u64);
    }
    assert!(checked > 900);
}

#[test]
fn meteor_examples() {
    assert_eq!(meteor(&t("x y"), &t("a b")).unwrap(), 0.0);
    assert!(close(
        meteor(&t("a b c"), &t("a b c")).unwrap(),
        1.0 - 0.5 / 27.0,
        1e-12
    ));
    let s = meteor_stats(&t("a b"), &t("b a")).unwrap();
    assert_eq!((s.matches, s.chunks), (2, 2));
    assert!(close(s.score(), 0.5, 1e-12));
}

#[test]
fn meteor_prefers_fewest_chunks() {
    // Leftmost matching of "the" would split "the cat" into two chunks.
    let s = meteor_stats(&t("the cat the"), &t("a the x the cat")).unwrap();
    assert_eq!((s.matches, s.chunks), (3, 2));
}

fn oracle_min_chunks(
    h: &[u8],
    r: &[u8],
    i: usize,
    used: &mut Vec<bool>,
    pairs: &mut Vec<(usize, usize)>,
    m: usize,
) -> Option<usize> {
    if i == h.len() {
        if pairs.len() != m {
            return None;
        }
        let mut chunks = 0;
        for k in 0..pairs.len() {
            if k == 0 || pairs[k].0 != pairs[k - 1].0 + 1 || pairs[k].1 != pairs[k - 1].1 + 1 {
                chunks += 1;
            }
        }
        return Some(chunks);
    }
    let mut best = oracle_min_chunks(h, r, i + 1, used, pairs, m);
    for j in 0..r.len() {
        if !used[j] && r[j] == h[i] {
            used[j] = true;
            pairs.push((i, j));
            if let Some(c) = oracle_min_chunks(h, r, i + 1, used, pairs, m) {
                best = Some(best.map_or(c, |b| b.min(c)));
            }
            pairs.pop();
            used[j] = false;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn meteor_chunks_match_brute_force(
        h in prop::collection::vec(0u8..4, 1..7),
        r in prop::collection::vec(0u8..4, 1..7),
    ) {
        let s = meteor_stats(&h, &r).unwrap();
        let m = (0u8..4).map(|w| h.iter().filter(|&&x| x == w).count().min(r.iter().filter(|&&x| x == w).count())).sum::<usize>();
        prop_assert_eq!(s.matches as usize, m);
        if m > 0 {
            let c = oracle_min_chunks(&h, &r, 0, &mut vec![false; r.len()], &mut Vec::new(), m).unwrap();
            prop_assert_eq!(s.chunks as usize, c);
        }
        let score = s.score();
        prop_assert!((0.0..=1.0).contains(&score));
    }

    #[test]
    fn lcs_grows_by_one_on_common_suffix(
        h in prop::collection::vec(0u8..5, 0..10),
        r in prop::collection::vec(0u8..5, 0..10),
        w in 0u8..5,
    ) {
        let mut h2 = h.clone(); h2.push(w);
        let mut r2 = r.clone(); r2.push(w);
        prop_assert_eq!(lcs_len(&h2, &r2), lcs_len(&h, &r) + 1);
    }

    #[test]
    fn ter_bounds(
        h in prop::collection::vec(0u8..6, 0..20),
        r in prop::collection::vec(0u8..6, 1..20),
    ) {
        let rate = ter(&h, &r).unwrap();
        let plain = 100.0 * levenshtein(&h, &r) as f64 / r.len() as f64;
        prop_assert!(rate <= plain + 1e-9);
        prop_assert!(rate <= 100.0 * h.len().max(r.len()) as f64 / r.len() as f64 + 1e-9);
        prop_assert!(rate >= 0.0);
    }

    #[test]
    fn bleu_is_order_independent(
        pairs in prop::collection::vec((prop::collection::vec(0u8..5, 1..10), prop::collection::vec(0u8..5, 1..10)), 1..8),
        seed in any::<u64>(),
    ) {
        let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let order = crate::corpus::shuffle_order(pairs.len(), seed);
        let hp: Vec<_> = order.iter().map(|&i| h[i].clone()).collect();
        let rp: Vec<_> = order.iter().map(|&i| r[i].clone()).collect();
        for smooth in [false, true] {
            let a = bleu_corpus(&h, &r, smooth).unwrap();
            prop_assert_eq!(a, bleu_corpus(&hp, &rp, smooth).unwrap());
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }
}

#[test]
fn identical_files_score_perfectly() {
    let lines = [
        "the dog ran to the park .",
        "we had a great time at the beach today .",
    ];
    let rep = evaluate_lines(&lines, &lines, false).unwrap();
    assert!(close(rep.bleu4, 100.0, 1e-9));
    assert_eq!(rep.ter, 0.0);
    assert_eq!(rep.rouge_l, 1.0);
    let table = rep.render_table();
    assert!(table.contains("100.00") && table.contains("0.00") && table.contains("1.000"));
}

#[test]
fn report_column_order() {
    let rep = evaluate_lines(&["a b c d"], &["a b c d"], false).unwrap();
    let header = rep.render_table().lines().next().unwrap().to_string();
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(cols, REPORT_COLUMNS);
    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 4);
}

#[test]
fn two_line_report_composes_per_metric_values() {
    let hyps = ["a b c d e f", "d a b c"];
    let refs = ["a b c d x f", "a b c d"];
    let rep = evaluate_lines(&hyps, &refs, false).unwrap();
    let tok = |s: &str| tokenize(s);
    let bleu = bleu_stats(&tok(hyps[0]), &tok(refs[0])) + bleu_stats(&tok(hyps[1]), &tok(refs[1]));
    assert!(close(rep.bleu4, bleu.score(false), 1e-12));
    // TER: one substitution over 6, one shift over 4.
    assert!(close(rep.ter, 100.0 * 2.0 / 10.0, 1e-12));
    let r0 = rouge_l(&tok(hyps[0]), &tok(refs[0])).unwrap();
    let r1 = rouge_l(&tok(hyps[1]), &tok(refs[1])).unwrap();
    assert!(close(rep.rouge_l, (r0 + r1) / 2.0, 1e-12));
    // METEOR on summed statistics: m = 5 + 4, chunks = 2 + 2.
    let (m, p, r) = (9.0, 9.0 / 10.0, 9.0 / 10.0);
    let expected = 100.0 * (10.0 * p * r / (r + 9.0 * p)) * (1.0 - 0.5 * (4.0f64 / m).powi(3));
    assert!(close(rep.meteor, expected, 1e-9));
}

#[test]
fn file_line_mismatch_names_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (h, r) = (dir.path().join("h.txt"), dir.path().join("r.txt"));
    std::fs::write(&h, "a b\nc d\n").unwrap();
    std::fs::write(&r, "a b\n").unwrap();
    let msg = evaluate_files(&h, &r, false).unwrap_err().to_string();
    assert!(msg.contains('2') && msg.contains('1'), "{msg}");
}
