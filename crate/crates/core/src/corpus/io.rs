use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{split_at_boundary_tag, Sentence, Token};
use crate::error::{Error, Result};

/// Read the token-per-line format: `form<TAB>lemma[<TAB>task=label...]`,
/// sentences separated by blank lines.
pub fn parse_tsv<R: BufRead>(reader: R, source: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut tokens), source));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(Error::parse(lineno, "expected at least form and lemma columns"));
        }
        let mut token =
            Token::new(cols[0], cols[1]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        for col in &cols[2..] {
            let (task, label) = col
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, format!("tag column {col:?} is not task=label")))?;
            token = token.with_tag(task, label);
        }
        tokens.push(token);
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(tokens, source));
    }
    Ok(sentences)
}

/// Inverse of [`parse_tsv`].
pub fn write_tsv<W: Write>(mut out: W, sentences: &[Sentence]) -> Result<()> {
    for sentence in sentences {
        for token in &sentence.tokens {
            write!(out, "{}\t{}", token.form(), token.lemma())?;
            for (task, label) in token.tags() {
                write!(out, "\t{task}={label}")?;
            }
            writeln!(out)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

const CONLLU_FEATURES: [&str; 3] = ["Gender", "Case", "Number"];

/// Read the subset of CoNLL-U used here: FORM, LEMMA, UPOS (as `Pos`),
/// DEPREL (as `Dep`) and the Gender/Case/Number features. Multiword ranges,
/// empty nodes and comments are skipped.
pub fn parse_conllu<R: BufRead>(reader: R, source: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence::new(std::mem::take(&mut tokens), source));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 8 {
            return Err(Error::parse(
                lineno,
                format!("expected at least 8 columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            let valid = id
                .split(['-', '.'])
                .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
            if !valid {
                return Err(Error::parse(lineno, format!("malformed token id {id:?}")));
            }
            continue;
        }
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(lineno, format!("malformed token id {id:?}")));
        }

        let mut token =
            Token::new(cols[1], cols[2]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if cols[3] != "_" {
            token = token.with_tag("Pos", cols[3]);
        }
        if cols[5] != "_" {
            for pair in cols[5].split('|') {
                if let Some((k, v)) = pair.split_once('=') {
                    if CONLLU_FEATURES.contains(&k) {
                        token = token.with_tag(k, v);
                    }
                }
            }
        }
        if cols[7] != "_" {
            token = token.with_tag("Dep", cols[7]);
        }
        tokens.push(token);
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(tokens, source));
    }
    Ok(sentences)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub lowercase_forms: bool,
    /// POS label marking sentence ends when the file has no blank-line
    /// boundaries.
    pub fullstop_tag: Option<String>,
}

/// Load a corpus file, choosing the reader by extension (`.conllu` or
/// anything else as TSV).
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<Vec<Sentence>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let source = path.display().to_string();
    let reader = BufReader::new(file);
    let mut sentences = if path.extension().is_some_and(|e| e == "conllu") {
        parse_conllu(reader, &source)?
    } else {
        parse_tsv(reader, &source)?
    };
    if sentences.len() == 1 {
        if let Some(tag) = &options.fullstop_tag {
            sentences = split_at_boundary_tag(sentences, "Pos", tag);
        }
    }
    if options.lowercase_forms {
        for t in sentences.iter_mut().flat_map(|s| s.tokens.iter_mut()) {
            t.lowercase_form();
        }
    }
    Ok(sentences)
}

/// File paths per split, as listed in a manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub train: Vec<PathBuf>,
    pub dev: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Parse a manifest: `[train]`, `[dev]` and `[test]` sections, one path per
/// line, relative paths resolved against `base`. `#` starts a comment.
pub fn read_manifest<R: BufRead>(reader: R, base: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::default();
    let mut section: Option<&str> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match name.trim() {
                "train" => "train",
                "dev" => "dev",
                "test" => "test",
                other => return Err(Error::parse(i + 1, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let path = base.join(line);
        match section {
            Some("train") => manifest.train.push(path),
            Some("dev") => manifest.dev.push(path),
            Some("test") => manifest.test.push(path),
            _ => return Err(Error::parse(i + 1, "path outside of a section")),
        }
    }
    Ok(manifest)
}

impl DatasetManifest {
    pub fn load(&self, options: &LoadOptions) -> Result<Splits> {
        let load_all = |paths: &[PathBuf]| -> Result<Vec<Sentence>> {
            let mut out = Vec::new();
            for p in paths {
                out.extend(load_corpus(p, options)?);
            }
            Ok(out)
        };
        Ok(Splits {
            train: load_all(&self.train)?,
            dev: load_all(&self.dev)?,
            test: load_all(&self.test)?,
        })
    }
}
