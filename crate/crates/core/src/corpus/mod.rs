//! Domain datasets: parsing, canonical inventories, vocabularies, splits.

mod split;
mod stats;
mod vocab;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{downsample, split_domain, Splits};
pub use stats::{domain_statistics, DomainStats, DOMAIN_STATS_CSV_HEADER};
pub use vocab::{build_vocabulary, Vocabulary, BOS, EOS, PAD, UNK};

/// Lowercases and splits on spaces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub utterance: Vec<String>,
    pub canonical: Vec<String>,
    pub logical_form: String,
    pub domain: String,
}

impl Example {
    pub fn new(domain: &str, utterance: &str, canonical: &str, logical_form: &str) -> Self {
        Example {
            utterance: tokenize(utterance),
            canonical: tokenize(canonical),
            logical_form: logical_form.trim().to_string(),
            domain: domain.to_string(),
        }
    }
}

/// A canonical utterance together with its logical form. The owning domain
/// is part of its identity, so equal strings from different domains differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canonical {
    pub tokens: Vec<String>,
    pub logical_form: String,
    pub domain: String,
}

impl Canonical {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn key(domain: &str, tokens: &[String]) -> String {
    let mut k = String::with_capacity(domain.len() + 1 + tokens.len() * 8);
    k.push_str(domain);
    k.push('\u{1f}');
    k.push_str(&tokens.join(" "));
    k
}

fn lf_key(domain: &str, lf: &str) -> String {
    format!("{domain}\u{1f}{lf}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    name: String,
    examples: Vec<Example>,
    inventory: Vec<Canonical>,
    by_canonical: HashMap<String, usize>,
}

impl Domain {
    /// Builds a domain whose inventory is the distinct canonicals of
    /// `examples` (first occurrence order) followed by `extra`.
    pub fn new(name: &str, examples: Vec<Example>, extra: Vec<Canonical>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDomain(name.to_string()));
        }
        let mut d = Domain {
            name: name.to_string(),
            examples: Vec::new(),
            inventory: Vec::new(),
            by_canonical: HashMap::new(),
        };
        let mut by_lf: HashMap<String, usize> = HashMap::new();
        let observed = examples.iter().map(|e| Canonical {
            tokens: e.canonical.clone(),
            logical_form: e.logical_form.clone(),
            domain: e.domain.clone(),
        });
        for c in observed.chain(extra) {
            if c.tokens.is_empty() || c.logical_form.is_empty() {
                return Err(Error::Consistency(format!(
                    "empty canonical or logical form in domain {:?}",
                    c.domain
                )));
            }
            let ck = key(&c.domain, &c.tokens);
            let lk = lf_key(&c.domain, &c.logical_form);
            match (d.by_canonical.get(&ck), by_lf.get(&lk)) {
                (Some(&i), _) if d.inventory[i].logical_form != c.logical_form => {
                    return Err(Error::Consistency(format!(
                        "canonical {:?} maps to both {:?} and {:?}",
                        c.text(),
                        d.inventory[i].logical_form,
                        c.logical_form
                    )));
                }
                (Some(_), _) => {}
                (None, Some(&i)) => {
                    return Err(Error::Consistency(format!(
                        "canonicals {:?} and {:?} share logical form {:?}",
                        d.inventory[i].text(),
                        c.text(),
                        c.logical_form
                    )));
                }
                (None, None) => {
                    by_lf.insert(lk, d.inventory.len());
                    d.by_canonical.insert(ck, d.inventory.len());
                    d.inventory.push(c);
                }
            }
        }
        for e in &examples {
            if e.utterance.is_empty() {
                return Err(Error::Consistency(format!(
                    "empty utterance for canonical {:?}",
                    e.canonical.join(" ")
                )));
            }
        }
        d.examples = examples;
        Ok(d)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn inventory(&self) -> &[Canonical] {
        &self.inventory
    }

    /// Inventory index of `canonical` within `domain`.
    pub fn canonical_index(&self, domain: &str, canonical: &[String]) -> Option<usize> {
        self.by_canonical.get(&key(domain, canonical)).copied()
    }

    /// Logical form of a canonical utterance (the map g).
    pub fn logical_form(&self, domain: &str, canonical: &[String]) -> Option<&str> {
        self.canonical_index(domain, canonical)
            .map(|i| self.inventory[i].logical_form.as_str())
    }

    /// Inventory indices belonging to `domain`, in inventory order.
    pub fn candidates(&self, domain: &str) -> Vec<usize> {
        (0..self.inventory.len())
            .filter(|&i| self.inventory[i].domain == domain)
            .collect()
    }

    /// Distinct domain ids among the examples, in first-occurrence order.
    pub fn domain_ids(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for e in &self.examples {
            if !seen.contains(&e.domain.as_str()) {
                seen.push(&e.domain);
            }
        }
        seen
    }

    /// The domain file contents: one example per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                e.utterance.join(" "),
                e.canonical.join(" "),
                e.logical_form
            );
        }
        out
    }

    /// Inventory entries not observed in any example, in companion-file format.
    pub fn extra_canonicals_tsv(&self) -> String {
        let mut observed = vec![false; self.inventory.len()];
        for e in &self.examples {
            if let Some(i) = self.canonical_index(&e.domain, &e.canonical) {
                observed[i] = true;
            }
        }
        let mut out = String::new();
        for (c, _) in self.inventory.iter().zip(observed).filter(|(_, o)| !o) {
            let _ = writeln!(out, "{}\t{}", c.text(), c.logical_form);
        }
        out
    }
}

/// Path of the optional canonical inventory next to a domain file.
pub fn companion_path(path: &Path) -> PathBuf {
    path.with_extension("canonicals")
}

fn domain_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn fields<'a>(path: &Path, lineno: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("expected {n} tab-separated fields, found {}", parts.len()),
        });
    }
    if let Some(i) = parts.iter().position(|p| p.trim().is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("field {} is empty", i + 1),
        });
    }
    Ok(parts)
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads `utterance<TAB>canonical<TAB>logical_form` lines. The domain is
/// named after the file stem; a sibling `<stem>.canonicals` file, if present,
/// extends the canonical inventory.
pub fn parse_domain_file(path: &Path) -> Result<Domain> {
    let name = domain_name(path);
    let text = read(path)?;
    let mut examples = Vec::new();
    for (lineno, line) in lines(&text) {
        let f = fields(path, lineno, line, 3)?;
        examples.push(Example::new(&name, f[0], f[1], f[2]));
    }
    let mut extra = Vec::new();
    let companion = companion_path(path);
    if companion.is_file() {
        let text = read(&companion)?;
        for (lineno, line) in lines(&text) {
            let f = fields(&companion, lineno, line, 2)?;
            extra.push(Canonical {
                tokens: tokenize(f[0]),
                logical_form: f[1].trim().to_string(),
                domain: name.clone(),
            });
        }
    }
    Domain::new(&name, examples, extra)
}

/// Concatenates domains into one pool. Canonicals keep their domain ids, so
/// identical strings from different domains stay distinct.
pub fn merge_source_domains(domains: &[Domain]) -> Result<Domain> {
    if domains.is_empty() {
        return Err(Error::InsufficientData("no domains to merge".into()));
    }
    for (i, d) in domains.iter().enumerate() {
        if domains[..i].iter().any(|o| o.name == d.name) {
            return Err(Error::Naming(format!("domain {:?} appears more than once", d.name)));
        }
    }
    let name = domains.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join("+");
    let examples = domains.iter().flat_map(|d| d.examples.iter().cloned()).collect();
    let extra = domains.iter().flat_map(|d| d.inventory.iter().cloned()).collect();
    Domain::new(&name, examples, extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "blocks.tsv",
            "Which Block is tall\tblock that is tall\t(tall block)\nshow wide blocks\tblock that is wide\t(wide block)\n",
        );
        let d = parse_domain_file(&p).unwrap();
        assert_eq!(d.name(), "blocks");
        assert_eq!(d.examples().len(), 2);
        assert_eq!(d.inventory().len(), 2);
        assert_eq!(d.examples()[0].utterance, ["which", "block", "is", "tall"]);
        assert_eq!(
            d.logical_form("blocks", &tokenize("block that is wide")),
            Some("(wide block)")
        );
    }

    #[test]
    fn shared_canonical_counts_once() {
        let d = Domain::new(
            "x",
            vec![Example::new("x", "a", "c one", "z1"), Example::new("x", "b", "c one", "z1")],
            vec![],
        )
        .unwrap();
        assert_eq!(d.inventory().len(), 1);
    }

    #[test]
    fn one_to_one_violations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.tsv", "u1\tsame c\tz1\nu2\tsame c\tz2\n");
        match parse_domain_file(&p).unwrap_err() {
            Error::Consistency(msg) => assert!(msg.contains("same c"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let p = write(dir.path(), "e.tsv", "u1\tc one\tz\nu2\tc two\tz\n");
        assert!(matches!(parse_domain_file(&p), Err(Error::Consistency(_))));
    }

    #[test]
    fn empty_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "empty.tsv", "");
        assert!(matches!(parse_domain_file(&p), Err(Error::EmptyDomain(_))));
        let p = write(dir.path(), "bad.tsv", "u\tc\tz\nonly two\tfields\n");
        match parse_domain_file(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn companion_extends_inventory() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.tsv", "u1\tc one\tz1\n");
        write(dir.path(), "d.canonicals", "c two\tz2\nc one\tz1\n");
        let d = parse_domain_file(&p).unwrap();
        assert_eq!(d.inventory().len(), 2);
        assert_eq!(d.extra_canonicals_tsv(), "c two\tz2\n");
    }

    #[test]
    fn serialization_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let text = "what  is a\tc a\t(lf a)\nb\tc b\t(lf b)\n";
        let p = write(dir.path(), "d.tsv", text);
        let d = parse_domain_file(&p).unwrap();
        assert_eq!(d.to_tsv(), "what is a\tc a\t(lf a)\nb\tc b\t(lf b)\n");
        let other = tempfile::tempdir().unwrap();
        let q = write(other.path(), "d.tsv", &d.to_tsv());
        assert_eq!(parse_domain_file(&q).unwrap().examples(), d.examples());
    }

    fn small(name: &str, n: usize) -> Domain {
        let ex = (0..n)
            .map(|i| Example::new(name, &format!("u {i}"), &format!("c {i}"), &format!("z{i}")))
            .collect();
        Domain::new(name, ex, vec![]).unwrap()
    }

    #[test]
    fn merging() {
        let m = merge_source_domains(&[small("a", 3), small("b", 2)]).unwrap();
        assert_eq!(m.examples().len(), 5);
        assert_eq!(m.inventory().len(), 5);
        assert!(m.canonical_index("a", &tokenize("c 0")).is_some());
        assert_ne!(
            m.canonical_index("a", &tokenize("c 0")),
            m.canonical_index("b", &tokenize("c 0"))
        );
        assert_eq!(m.candidates("b").len(), 2);
        assert_eq!(m.domain_ids(), ["a", "b"]);

        let single = merge_source_domains(&[small("a", 3)]).unwrap();
        assert_eq!(single.examples(), small("a", 3).examples());

        assert!(matches!(
            merge_source_domains(&[small("a", 1), small("a", 1)]),
            Err(Error::Naming(_))
        ));
    }
}
