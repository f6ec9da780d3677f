//! Loading the essays CSV and the precomputed psycholinguistic feature table.
//!
//! Essays use the public dataset layout: `#AUTHID, TEXT, cEXT, cNEU, cAGR,
//! cCON, cOPN` with `y`/`n` labels (case-insensitive). The feature table has
//! the author id in its first column followed by exactly 84 numeric columns.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use persona_core::features::PSYCHO_FEATURES;
use persona_core::{Essay, PersonalityTrait, TraitLabels};

use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "#AUTHID";
pub const TEXT_COLUMN: &str = "TEXT";

pub fn label_column(t: PersonalityTrait) -> String {
    format!("c{}", t.code())
}

/// Essay-level psycholinguistic features.
#[derive(Debug, Clone, PartialEq)]
pub struct PsychoFeatures {
    pub author_id: String,
    pub values: Vec<f64>,
}

/// Loaded essays plus, once attached, one feature row per essay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub essays: Vec<Essay>,
    pub features: BTreeMap<String, PsychoFeatures>,
}

impl Corpus {
    pub fn essays_only(essays: Vec<Essay>) -> Self {
        Corpus { essays, features: BTreeMap::new() }
    }

    pub fn psycho(&self, author_id: &str) -> Option<&[f64]> {
        self.features.get(author_id).map(|f| f.values.as_slice())
    }
}

/// Whether the essays file must carry the five label columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    Required,
    /// Label columns may be absent (prediction input); absent labels read as `n`.
    Optional,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn load_essays(path: &Path) -> Result<Corpus> {
    read_essays(open(path)?, path, LabelPolicy::Required).map(Corpus::essays_only)
}

pub fn load_unlabeled_essays(path: &Path) -> Result<Vec<Essay>> {
    read_essays(open(path)?, path, LabelPolicy::Optional)
}

fn parse_label(cell: &str) -> Option<bool> {
    match cell.trim() {
        c if c.eq_ignore_ascii_case("y") => Some(true),
        c if c.eq_ignore_ascii_case("n") => Some(false),
        _ => None,
    }
}

/// Parses an essays CSV. `source` names the input in error messages.
pub fn read_essays<R: Read>(reader: R, source: &Path, labels: LabelPolicy) -> Result<Vec<Essay>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let ingest = |message: String| Error::Ingest { path: source.to_path_buf(), message };
    let headers: Vec<String> = rdr
        .byte_headers()
        .map_err(|e| ingest(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_string())
        .collect();
    if labels == LabelPolicy::Optional && headers.iter().all(String::is_empty) {
        // An empty prediction input has no rows to read.
        return Ok(Vec::new());
    }
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column(ID_COLUMN).ok_or_else(|| ingest(format!("missing column {ID_COLUMN}")))?;
    let text_col = column(TEXT_COLUMN).ok_or_else(|| ingest(format!("missing column {TEXT_COLUMN}")))?;
    let mut label_cols = [None; 5];
    for t in PersonalityTrait::ALL {
        let name = label_column(t);
        label_cols[t.index()] = column(&name);
        if label_cols[t.index()].is_none() && labels == LabelPolicy::Required {
            return Err(ingest(format!("missing column {name}")));
        }
    }

    let mut seen = HashSet::new();
    let mut essays = Vec::new();
    for record in rdr.byte_records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Row { path: source.to_path_buf(), line, message: format!("malformed row: {e}") }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { path: source.to_path_buf(), line, message };
        if record.len() != headers.len() {
            return Err(row_err(format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        let field = |i: usize| String::from_utf8_lossy(&record[i]).into_owned();
        let author_id = field(id_col).trim().to_string();
        if author_id.is_empty() {
            return Err(row_err("empty author id".into()));
        }
        if !seen.insert(author_id.clone()) {
            return Err(row_err(format!("duplicate author id {author_id}")));
        }
        let text = field(text_col);
        if text.trim().is_empty() {
            return Err(row_err(format!("essay {author_id} has empty text")));
        }
        let mut parsed = TraitLabels::default();
        for t in PersonalityTrait::ALL {
            if let Some(col) = label_cols[t.index()] {
                let cell = field(col);
                let value = parse_label(&cell).ok_or_else(|| {
                    row_err(format!("{} label {cell:?} for {author_id} is not y or n", label_column(t)))
                })?;
                parsed.set(t, value);
            }
        }
        essays.push(Essay { author_id, text, labels: parsed });
    }
    Ok(essays)
}

/// Writes essays in the layout [`read_essays`] expects.
pub fn write_essays<W: Write>(writer: W, essays: &[Essay]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string(), TEXT_COLUMN.to_string()];
    header.extend(PersonalityTrait::ALL.iter().map(|t| label_column(*t)));
    w.write_record(&header)?;
    for e in essays {
        let mut row = vec![e.author_id.clone(), e.text.clone()];
        row.extend(PersonalityTrait::ALL.iter().map(|t| if e.labels.get(*t) { "y" } else { "n" }.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Attaches the feature table; every essay needs a row. Rows for unknown
/// authors are an error unless `lenient`.
pub fn load_psycho_features(path: &Path, corpus: Corpus, lenient: bool) -> Result<Corpus> {
    read_psycho_features(open(path)?, path, corpus, lenient)
}

pub fn read_psycho_features<R: Read>(reader: R, source: &Path, mut corpus: Corpus, lenient: bool) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let ingest = |message: String| Error::Ingest { path: source.to_path_buf(), message };
    rdr.byte_headers().map_err(|e| ingest(format!("unreadable header: {e}")))?;
    let mut features = BTreeMap::new();
    for record in rdr.byte_records() {
        let record = record.map_err(|e| Error::Row {
            path: source.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: format!("malformed row: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { path: source.to_path_buf(), line, message };
        let author_id = String::from_utf8_lossy(&record[0]).trim().to_string();
        if record.len() != PSYCHO_FEATURES + 1 {
            return Err(row_err(format!(
                "row for {author_id:?} has {} feature values, expected {PSYCHO_FEATURES}",
                record.len().saturating_sub(1)
            )));
        }
        let mut values = Vec::with_capacity(PSYCHO_FEATURES);
        for (i, cell) in record.iter().skip(1).enumerate() {
            let cell = String::from_utf8_lossy(cell);
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| row_err(format!("feature {i} of {author_id:?} is not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(row_err(format!("feature {i} of {author_id:?} is not finite")));
            }
            values.push(v);
        }
        if features.insert(author_id.clone(), PsychoFeatures { author_id: author_id.clone(), values }).is_some() {
            return Err(row_err(format!("duplicate feature row for {author_id:?}")));
        }
    }

    let missing: Vec<&str> =
        corpus.essays.iter().filter(|e| !features.contains_key(&e.author_id)).map(|e| e.author_id.as_str()).collect();
    if !missing.is_empty() {
        return Err(ingest(format!("no feature row for essay(s): {}", missing.join(", "))));
    }
    let known: HashSet<&str> = corpus.essays.iter().map(|e| e.author_id.as_str()).collect();
    let orphans: Vec<String> = features.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    if !orphans.is_empty() {
        if !lenient {
            return Err(ingest(format!("feature rows without an essay: {}", orphans.join(", "))));
        }
        for o in &orphans {
            features.remove(o);
        }
    }
    corpus.features = features;
    Ok(corpus)
}

/// `(positives, negatives)` for one trait.
pub fn label_distribution(corpus: &Corpus, t: PersonalityTrait) -> (usize, usize) {
    let pos = corpus.essays.iter().filter(|e| e.labels.get(t)).count();
    (pos, corpus.essays.len() - pos)
}

/// Frequency of the more common class, in `[0.5, 1]` (0 for an empty corpus).
pub fn majority_rate(corpus: &Corpus, t: PersonalityTrait) -> f64 {
    let (pos, neg) = label_distribution(corpus, t);
    if pos + neg == 0 {
        return 0.0;
    }
    pos.max(neg) as f64 / (pos + neg) as f64
}
