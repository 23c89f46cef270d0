use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary edit tree mapping a form to its lemma.
///
/// A `Match` node keeps the middle of the form (the longest common
/// substring at induction time) and delegates the `prefix_len` characters
/// before it and the `suffix_len` characters after it to its children. The
/// middle has no fixed length, so a tree induced from `living → live`
/// also maps `walking → walk`. A `Replace` leaf rewrites a segment that
/// must equal `from` exactly.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EditTree {
    Replace {
        from: String,
        to: String,
    },
    Match {
        prefix_len: usize,
        suffix_len: usize,
        left: Box<EditTree>,
        right: Box<EditTree>,
    },
}

/// Longest common substring of `a` and `b` as `(start_a, start_b, len)`.
/// Ties go to the smallest start in `a`, then the smallest start in `b`.
pub fn longest_common_substring(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            let len = cur[j];
            if len > 0 {
                let (sa, sb) = (i - len, j - len);
                let better = len > best.2
                    || (len == best.2 && (sa < best.0 || (sa == best.0 && sb < best.1)));
                if better {
                    best = (sa, sb, len);
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Induce the edit tree for `form → lemma`.
pub fn induce(form: &str, lemma: &str) -> Result<EditTree> {
    if form.is_empty() {
        return Err(Error::InvalidInput("cannot induce an edit tree from an empty form".into()));
    }
    let f: Vec<char> = form.chars().collect();
    let l: Vec<char> = lemma.chars().collect();
    Ok(induce_chars(&f, &l))
}

fn induce_chars(form: &[char], lemma: &[char]) -> EditTree {
    let (sf, sl, len) = longest_common_substring(form, lemma);
    if len == 0 {
        return EditTree::Replace {
            from: form.iter().collect(),
            to: lemma.iter().collect(),
        };
    }
    EditTree::Match {
        prefix_len: sf,
        suffix_len: form.len() - sf - len,
        left: Box::new(induce_chars(&form[..sf], &lemma[..sl])),
        right: Box::new(induce_chars(&form[sf + len..], &lemma[sl + len..])),
    }
}

impl EditTree {
    pub fn identity() -> Self {
        EditTree::Match {
            prefix_len: 0,
            suffix_len: 0,
            left: Box::new(EditTree::empty_leaf()),
            right: Box::new(EditTree::empty_leaf()),
        }
    }

    fn empty_leaf() -> Self {
        EditTree::Replace {
            from: String::new(),
            to: String::new(),
        }
    }

    /// Transform `form`, or `None` when the tree does not fit it.
    pub fn apply(&self, form: &str) -> Option<String> {
        let chars: Vec<char> = form.chars().collect();
        let mut out = String::with_capacity(form.len() + 4);
        if self.apply_into(&chars, &mut out) {
            Some(out)
        } else {
            None
        }
    }

    fn apply_into(&self, segment: &[char], out: &mut String) -> bool {
        match self {
            EditTree::Replace { from, to } => {
                if from.chars().eq(segment.iter().copied()) {
                    out.push_str(to);
                    true
                } else {
                    false
                }
            }
            EditTree::Match {
                prefix_len,
                suffix_len,
                left,
                right,
            } => {
                let n = segment.len();
                if n < prefix_len + suffix_len + 1 {
                    return false;
                }
                let mid_end = n - suffix_len;
                left.apply_into(&segment[..*prefix_len], out)
                    && {
                        out.extend(&segment[*prefix_len..mid_end]);
                        true
                    }
                    && right.apply_into(&segment[mid_end..], out)
            }
        }
    }

    /// Parse the canonical form produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = TreeParser {
            chars: text.chars().collect(),
            pos: 0,
        };
        let tree = p.tree()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(Error::InvalidInput(format!("trailing input in tree {text:?}")));
        }
        Ok(tree)
    }
}

/// Canonical one-line form: `(R "from" "to")` for leaves and
/// `(M prefix suffix LEFT RIGHT)` for match nodes, strings JSON-escaped.
impl fmt::Display for EditTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditTree::Replace { from, to } => {
                let from = serde_json::to_string(from).map_err(|_| fmt::Error)?;
                let to = serde_json::to_string(to).map_err(|_| fmt::Error)?;
                write!(f, "(R {from} {to})")
            }
            EditTree::Match {
                prefix_len,
                suffix_len,
                left,
                right,
            } => write!(f, "(M {prefix_len} {suffix_len} {left} {right})"),
        }
    }
}

impl From<EditTree> for String {
    fn from(tree: EditTree) -> Self {
        tree.to_string()
    }
}

impl TryFrom<String> for EditTree {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        EditTree::parse(&text)
    }
}

struct TreeParser {
    chars: Vec<char>,
    pos: usize,
}

impl TreeParser {
    fn err(&self, what: &str) -> Error {
        Error::InvalidInput(format!("malformed edit tree at offset {}: {what}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.chars.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {c:?}")))
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(char::is_ascii_digit) {
            self.pos += 1;
        }
        self.chars[start..self.pos]
            .iter()
            .collect::<String>()
            .parse()
            .map_err(|_| self.err("expected a number"))
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        if self.chars.get(self.pos) != Some(&'"') {
            return Err(self.err("expected a string"));
        }
        let start = self.pos;
        self.pos += 1;
        let mut escaped = false;
        loop {
            let c = *self.chars.get(self.pos).ok_or_else(|| self.err("unterminated string"))?;
            self.pos += 1;
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => break,
                _ => {}
            }
        }
        let literal: String = self.chars[start..self.pos].iter().collect();
        serde_json::from_str(&literal).map_err(|_| self.err("bad string literal"))
    }

    fn tree(&mut self) -> Result<EditTree> {
        self.expect('(')?;
        self.skip_ws();
        let tag = self.chars.get(self.pos).copied();
        self.pos += 1;
        let tree = match tag {
            Some('R') => EditTree::Replace {
                from: self.string()?,
                to: self.string()?,
            },
            Some('M') => EditTree::Match {
                prefix_len: self.number()?,
                suffix_len: self.number()?,
                left: Box::new(self.tree()?),
                right: Box::new(self.tree()?),
            },
            _ => return Err(self.err("expected R or M")),
        };
        self.expect(')')?;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn leaf(from: &str, to: &str) -> Box<EditTree> {
        Box::new(EditTree::Replace {
            from: from.into(),
            to: to.into(),
        })
    }

    #[test]
    fn identity_pair() {
        assert_eq!(induce("jaar", "jaar").unwrap(), EditTree::identity());
        assert_eq!(EditTree::identity().apply("anything").as_deref(), Some("anything"));
    }

    #[test]
    fn living_live() {
        let tree = induce("living", "live").unwrap();
        assert_eq!(
            tree,
            EditTree::Match {
                prefix_len: 0,
                suffix_len: 3,
                left: leaf("", ""),
                right: leaf("ing", "e"),
            }
        );
        assert_eq!(tree.apply("giving").as_deref(), Some("give"));
        assert_eq!(tree.apply("dog"), None);
    }

    #[test]
    fn empty_form_rejected() {
        assert!(induce("", "x").is_err());
    }

    #[test]
    fn no_common_character() {
        assert_eq!(*induce("xy", "ab").unwrap().to_string(), *"(R \"xy\" \"ab\")");
    }

    #[test]
    fn canonical_text_roundtrip() {
        for (f, l) in [("iare", "jaar"), ("Jaren", "jaar"), ("a\"b\tc", "ab"), ("ŋåç", "åç")] {
            let tree = induce(f, l).unwrap();
            let text = tree.to_string();
            assert!(!text.contains('\n') && !text.contains('\t'));
            assert_eq!(EditTree::parse(&text).unwrap(), tree);
        }
        assert!(EditTree::parse("(M 1 2 (R \"\" \"\"))").is_err());
    }

    proptest! {
        #[test]
        fn lcs_prefers_leftmost(a in "[ab]{0,8}", b in "[ab]{0,8}") {
            let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            let (sa, sb, len) = longest_common_substring(&a, &b);
            prop_assert_eq!(&a[sa..sa + len], &b[sb..sb + len]);
            // no common substring that is longer, or equally long but further left
            for i in 0..=a.len() {
                for j in 0..=b.len() {
                    let mut k = 0;
                    while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                        k += 1;
                    }
                    prop_assert!(k <= len);
                    if k == len && len > 0 {
                        prop_assert!((sa, sb) <= (i, j));
                    }
                }
            }
        }
    }
}
