use std::collections::HashSet;

use serde::Serialize;

use super::Domain;

pub const DOMAIN_STATS_CSV_HEADER: &str =
    "domain,examples,canonicals,vocab,pct_other_domains,pct_embedding,pct_either";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainStats {
    pub domain: String,
    pub examples: usize,
    pub canonicals: usize,
    pub vocab: usize,
    /// Share of the vocabulary found in any other listed domain; `None` with
    /// a single domain.
    pub pct_other_domains: Option<f64>,
    /// Share found in the embedding vocabulary; `None` without one.
    pub pct_embedding: Option<f64>,
    pub pct_either: Option<f64>,
}

impl DomainStats {
    pub fn csv_row(&self) -> String {
        let pct = |p: Option<f64>| p.map(|x| format!("{x:.2}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.domain,
            self.examples,
            self.canonicals,
            self.vocab,
            pct(self.pct_other_domains),
            pct(self.pct_embedding),
            pct(self.pct_either)
        )
    }
}

fn content_vocab(d: &Domain) -> HashSet<&str> {
    let mut words = HashSet::new();
    for e in d.examples() {
        words.extend(e.utterance.iter().chain(&e.canonical).map(String::as_str));
    }
    for c in d.inventory() {
        words.extend(c.tokens.iter().map(String::as_str));
    }
    words
}

/// Size and vocabulary-overlap figures for each domain.
pub fn domain_statistics(domains: &[Domain], embedding_vocab: Option<&HashSet<String>>) -> Vec<DomainStats> {
    let vocabs: Vec<HashSet<&str>> = domains.iter().map(content_vocab).collect();
    domains
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let own = &vocabs[i];
            let in_other = |w: &str| vocabs.iter().enumerate().any(|(j, v)| j != i && v.contains(w));
            let in_embed = |w: &str| embedding_vocab.is_some_and(|e| e.contains(w));
            let share = |f: &dyn Fn(&str) -> bool| {
                if own.is_empty() {
                    return 0.0;
                }
                100.0 * own.iter().filter(|w| f(w)).count() as f64 / own.len() as f64
            };
            let has_others = domains.len() >= 2;
            let has_embed = embedding_vocab.is_some();
            DomainStats {
                domain: d.name().to_string(),
                examples: d.examples().len(),
                canonicals: d.inventory().len(),
                vocab: own.len(),
                pct_other_domains: has_others.then(|| share(&in_other)),
                pct_embedding: has_embed.then(|| share(&in_embed)),
                pct_either: (has_others || has_embed).then(|| share(&|w| in_other(w) || in_embed(w))),
            }
        })
        .collect()
}
