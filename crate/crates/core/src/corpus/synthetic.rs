use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Example;

const NOUNS: [&str; 10] = [
    "dog", "cat", "boat", "tree", "cake", "bird", "car", "house", "kite", "horse",
];
const ADJS: [&str; 8] = [
    "red", "big", "small", "happy", "old", "blue", "quiet", "bright",
];
const PLACES: [&str; 6] = ["park", "beach", "lake", "garden", "street", "farm"];

/// Small templated corpus whose stories paraphrase their descriptions.
/// Deterministic in `seed`; ids are `syn-0`, `syn-1`, …
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let scenes: Vec<(&str, &str, &str)> = (0..3)
                .map(|_| {
                    (
                        *NOUNS.choose(&mut rng).unwrap(),
                        *ADJS.choose(&mut rng).unwrap(),
                        *PLACES.choose(&mut rng).unwrap(),
                    )
                })
                .collect();
            let descriptions = scenes
                .iter()
                .map(|(n, a, p)| format!("a {a} {n} in the {p}"))
                .collect();
            let story = scenes
                .iter()
                .enumerate()
                .map(|(k, (n, a, p))| match k {
                    0 => format!("we went to the {p} and saw a {a} {n} ."),
                    1 => format!("then the {n} was {a} ."),
                    _ => format!("at the {p} the {n} looked {a} !"),
                })
                .collect::<Vec<_>>()
                .join(" ");
            Example {
                id: format!("syn-{i}"),
                descriptions,
                story,
            }
        })
        .collect()
}
