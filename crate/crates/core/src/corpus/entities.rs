use std::collections::HashMap;

const ENTITY_PREFIX: &str = "@entity";

/// Replaces lexicon matches with document-specific `@entityK` placeholders.
///
/// Keys of `lexicon` are surface forms (possibly several whitespace-separated
/// tokens) and values their canonical entity. Matching is greedy longest-first.
/// Canonical entities are numbered from 0 in order of first occurrence in the
/// document; entities that only appear in the summary get the next free ids.
/// Existing placeholders are never rewritten, so the operation is idempotent.
pub fn anonymize_entities(
    doc: &[Vec<String>],
    summary: &[String],
    lexicon: &HashMap<String, String>,
) -> (Vec<Vec<String>>, Vec<String>) {
    let patterns: Vec<(Vec<&str>, &str)> = {
        let mut p: Vec<(Vec<&str>, &str)> = lexicon
            .iter()
            .map(|(k, v)| (k.split_whitespace().collect::<Vec<_>>(), v.as_str()))
            .filter(|(k, _)| !k.is_empty() && !k.iter().any(|t| t.starts_with(ENTITY_PREFIX)))
            .collect();
        // longest first, then lexicographic for determinism
        p.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        p
    };
    let mut ids: HashMap<String, usize> = HashMap::new();
    let doc_out = doc
        .iter()
        .map(|s| rewrite(s, &patterns, &mut ids))
        .collect();
    let summary_out = rewrite(summary, &patterns, &mut ids);
    (doc_out, summary_out)
}

fn rewrite(
    tokens: &[String],
    patterns: &[(Vec<&str>, &str)],
    ids: &mut HashMap<String, usize>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let hit = patterns.iter().find(|(pat, _)| {
            i + pat.len() <= tokens.len() && pat.iter().zip(&tokens[i..]).all(|(p, t)| *p == t)
        });
        match hit {
            Some((pat, canonical)) => {
                let next = ids.len();
                let k = *ids.entry(canonical.to_string()).or_insert(next);
                out.push(format!("{ENTITY_PREFIX}{k}"));
                i += pat.len();
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out
}

pub fn is_entity_placeholder(token: &str) -> bool {
    token
        .strip_prefix(ENTITY_PREFIX)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}
