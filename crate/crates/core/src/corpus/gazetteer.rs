use std::collections::HashSet;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use crate::error::{Error, Result};

/// Surface-to-ICD dictionary with a leftmost-longest matcher.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<(String, String)>,
    matcher: Option<AhoCorasick>,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer {
            entries: Vec::new(),
            matcher: None,
        }
    }
}

impl Gazetteer {
    /// Builds from `(surface, code)` pairs. A surface listed twice keeps the
    /// code it was first loaded with.
    pub fn new<I, S, C>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, C)>,
        S: Into<String>,
        C: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (i, (surface, code)) in entries.into_iter().enumerate() {
            let (surface, code) = (surface.into(), code.into());
            if surface.is_empty() || code.is_empty() {
                return Err(Error::invalid(format!(
                    "gazetteer entry {} has an empty surface or code",
                    i + 1
                )));
            }
            if seen.insert(surface.clone()) {
                kept.push((surface, code));
            }
        }
        let matcher = if kept.is_empty() {
            None
        } else {
            let m = AhoCorasickBuilder::new()
                .match_kind(MatchKind::LeftmostLongest)
                .build(kept.iter().map(|(s, _)| s.as_str()))
                .map_err(|e| Error::invalid(format!("gazetteer automaton: {e}")))?;
            Some(m)
        };
        Ok(Gazetteer {
            entries: kept,
            matcher,
        })
    }

    /// Parses `SURFACE<TAB>CODE` lines. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(s), Some(c), None) if !s.is_empty() && !c.is_empty() => {
                    entries.push((s.to_string(), c.to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        i + 1,
                        "expected SURFACE<TAB>CODE with both fields non-empty",
                    ))
                }
            }
        }
        Gazetteer::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, c) in &self.entries {
            out.push_str(s);
            out.push('\t');
            out.push_str(c);
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-character code for `text`. Matches are non-overlapping, scanning
    /// left to right and preferring the longest surface at each start.
    pub fn annotate(&self, text: &str) -> Vec<Option<String>> {
        let n_chars = text.chars().count();
        let mut out = vec![None; n_chars];
        let Some(matcher) = &self.matcher else {
            return out;
        };
        // byte offset -> char index
        let mut char_at = vec![0usize; text.len() + 1];
        for (ci, (bi, _)) in text.char_indices().enumerate() {
            char_at[bi] = ci;
        }
        char_at[text.len()] = n_chars;
        for m in matcher.find_iter(text) {
            let code = &self.entries[m.pattern().as_usize()].1;
            for slot in &mut out[char_at[m.start()]..char_at[m.end()]] {
                *slot = Some(code.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive scan used as an oracle for the automaton.
    fn brute_force(entries: &[(String, String)], text: &str) -> Vec<Option<String>> {
        let chars: Vec<char> = text.chars().collect();
        let pats: Vec<(Vec<char>, &String)> = entries
            .iter()
            .map(|(s, c)| (s.chars().collect(), c))
            .collect();
        let mut out = vec![None; chars.len()];
        let mut i = 0;
        while i < chars.len() {
            let mut best: Option<(usize, &String)> = None;
            for (p, c) in &pats {
                if chars[i..].starts_with(p) && best.map_or(true, |(l, _)| p.len() > l) {
                    best = Some((p.len(), c));
                }
            }
            match best {
                Some((len, code)) => {
                    for slot in &mut out[i..i + len] {
                        *slot = Some(code.clone());
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    #[test]
    fn atrial_fibrillation() {
        let g = Gazetteer::new([("心房細動", "I48")]).unwrap();
        let codes = g.annotate("既往に心房細動あり");
        let expect: Vec<Option<String>> = "既往に心房細動あり"
            .chars()
            .enumerate()
            .map(|(i, _)| (3..7).contains(&i).then(|| "I48".to_string()))
            .collect();
        assert_eq!(codes, expect);
    }

    #[test]
    fn longest_wins() {
        let g = Gazetteer::new([("癌", "C80"), ("胃癌", "C16")]).unwrap();
        assert_eq!(
            g.annotate("胃癌"),
            vec![Some("C16".to_string()), Some("C16".to_string())]
        );
    }

    #[test]
    fn duplicate_surface_keeps_first_code() {
        let g = Gazetteer::new([("胃癌", "C16"), ("胃癌", "C99")]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.annotate("胃癌")[0].as_deref(), Some("C16"));
    }

    #[test]
    fn empty_gazetteer() {
        let g = Gazetteer::default();
        assert_eq!(g.annotate("胃癌なし"), vec![None; 4]);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Gazetteer::parse("胃癌\tC16\n\n肺炎\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(Gazetteer::parse("胃癌\t\n").is_err());
        let g = Gazetteer::parse("胃癌\tC16\n肺炎\tJ18\n").unwrap();
        assert_eq!(Gazetteer::parse(&g.to_text()).unwrap().entries(), g.entries());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pats in proptest::collection::vec("[あいう胃癌]{1,3}", 0..6),
            text in "[あいう胃癌x]{0,20}",
        ) {
            let entries: Vec<(String, String)> = pats
                .iter()
                .enumerate()
                .map(|(i, p)| (p.clone(), format!("X{i}")))
                .collect();
            let g = Gazetteer::new(entries).unwrap();
            prop_assert_eq!(g.annotate(&text), brute_force(g.entries(), &text));
        }
    }
}
