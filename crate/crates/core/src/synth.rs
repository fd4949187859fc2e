//! Small synthetic corpora for smoke tests and controlled experiments.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorpusRecord;

const COMMON: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "on", "with", "was", "is", "for", "by", "at", "from",
    "that", "it", "as", "were", "has", "had",
];

const RARE_TOKENS: usize = 3;

fn rare_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let w: String = std::iter::once('q')
            .chain((0..6).map(|_| rng.gen_range(b'a'..=b'z') as char))
            .collect();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// Copy task: each document mixes common words with three one-off tokens and
/// the summary is those tokens in source order. With rare tokens kept out of
/// the vocabularies, only the pointer can produce the summary.
pub fn gen_copy(n: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    (0..n)
        .map(|i| {
            let len = rng.gen_range(8..=12) + RARE_TOKENS;
            let mut slots: Vec<usize> = (0..len).collect();
            slots.shuffle(&mut rng);
            let rare_at: HashSet<usize> = slots[..RARE_TOKENS].iter().copied().collect();
            let words: Vec<String> = (0..len)
                .map(|k| {
                    if rare_at.contains(&k) {
                        rare_word(&mut rng, &mut used)
                    } else {
                        COMMON.choose(&mut rng).unwrap().to_string()
                    }
                })
                .collect();
            let summary: Vec<&str> = (0..len)
                .filter(|k| rare_at.contains(k))
                .map(|k| words[k].as_str())
                .collect();
            CorpusRecord {
                id: Some(format!("copy-{i}")),
                document: format!("{} .", words.join(" ")),
                summary: summary.join(" "),
            }
        })
        .collect()
}

const CITIES: &[&str] = &[
    "paris", "london", "berlin", "madrid", "rome", "vienna", "oslo", "lisbon", "dublin", "prague",
];
const DAYS: &[&str] = &[
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];
const TOPICS: &[&str] = &[
    "budget",
    "trade",
    "energy",
    "housing",
    "transport",
    "health",
    "water",
    "tax",
];
const FACILITIES: &[&str] = &[
    "factory", "hospital", "school", "stadium", "library", "museum",
];
const EVENTS: &[&str] = &["cup", "marathon", "open", "derby", "trophy", "league"];
const ROLES: &[&str] = &[
    "chairman", "director", "coach", "mayor", "minister", "editor",
];
const ORGS: &[&str] = &["council", "club", "company", "union", "board", "agency"];
const MONTHS: &[&str] = &["january", "march", "may", "july", "september", "november"];
const FILLER: &[&str] = &[
    "the weather was mild and the markets were calm .",
    "no further details were given at the time .",
    "local media covered the story throughout the day .",
    "a spokesman declined to comment on the matter .",
];
const SYLLABLES: &[&str] = &[
    "ka", "ro", "vin", "mel", "da", "tor", "sa", "li", "bek", "nu", "zar", "po", "ten", "ri", "gul",
];

const NAME_POOL: usize = 60;

fn name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    s[..1].make_ascii_uppercase();
    s
}

/// Distinct invented names; each recurs across a corpus but stays infrequent.
fn name_pool(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(NAME_POOL);
    while out.len() < NAME_POOL {
        let s = name(rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn pick(rng: &mut ChaCha8Rng, xs: &[&'static str]) -> &'static str {
    xs.choose(rng).unwrap()
}

/// One source sentence and its compressed highlight.
fn templated(rng: &mut ChaCha8Rng, names: &[String]) -> (String, String) {
    let a = names.choose(rng).unwrap();
    let mut b = names.choose(rng).unwrap();
    while b == a {
        b = names.choose(rng).unwrap();
    }
    match rng.gen_range(0..5) {
        0 => {
            let city = pick(rng, CITIES);
            (
                format!(
                    "{a} met {b} in {city} on {} to discuss the {} .",
                    pick(rng, DAYS),
                    pick(rng, TOPICS)
                ),
                format!("{a} met {b} in {city} ."),
            )
        }
        1 => {
            let (fac, city) = (pick(rng, FACILITIES), pick(rng, CITIES));
            (
                format!(
                    "officials said {a} will open a new {fac} in {city} next {} .",
                    pick(rng, MONTHS)
                ),
                format!("{a} to open {fac} in {city} ."),
            )
        }
        2 => {
            let ev = pick(rng, EVENTS);
            (
                format!("{a} won the {ev} after beating {b} in the final round ."),
                format!("{a} won the {ev} ."),
            )
        }
        3 => {
            let role = pick(rng, ROLES);
            (
                format!(
                    "the {} announced that {a} resigned as {role} on {} .",
                    pick(rng, ORGS),
                    pick(rng, DAYS)
                ),
                format!("{a} resigned as {role} ."),
            )
        }
        _ => {
            let (topic, num) = (pick(rng, TOPICS), rng.gen_range(10..100));
            (
                format!("{a} said the {topic} plan would cost {num} million dollars ."),
                format!("{topic} plan to cost {num} million ."),
            )
        }
    }
}

/// Templated news-like documents with invented names. The summary holds the
/// highlights of the first `highlights` templated sentences.
pub fn gen_template(n: usize, seed: u64, highlights: usize) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let highlights = highlights.max(1);
    let names = name_pool(&mut rng);
    (0..n)
        .map(|i| {
            let extra = rng.gen_range(0..=1);
            let pairs: Vec<(String, String)> = (0..highlights + extra)
                .map(|_| templated(&mut rng, &names))
                .collect();
            let mut doc: Vec<String> = pairs.iter().map(|(s, _)| s.clone()).collect();
            let filler = pick(&mut rng, FILLER).to_string();
            let at = rng.gen_range(1..=doc.len());
            doc.insert(at, filler);
            let summary: Vec<&str> = pairs[..highlights]
                .iter()
                .map(|(_, h)| h.as_str())
                .collect();
            CorpusRecord {
                id: Some(format!("tmpl-{i}")),
                document: doc.join(" "),
                summary: summary.join(" "),
            }
        })
        .collect()
}
