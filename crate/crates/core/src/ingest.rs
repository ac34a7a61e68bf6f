//! Corpus loading and page-text normalization.
//!
//! Pages arrive as pre-extracted text (one JSONL object per page); this
//! module applies NFKC normalization, whitespace collapse, and header/footer
//! stripping, and emits immutable [`PageRecord`]s in `(doc_id, page_no)`
//! order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// One normalized document page: text blocks in reading order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub doc_id: String,
    /// 1-based page number.
    pub page_no: u32,
    pub blocks: Vec<String>,
    /// Blocks joined with newline separators.
    pub raw_text: String,
}

/// Ground-truth label for one fund: where its holdings table lives and the
/// recorded net asset value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLabel {
    pub doc_id: String,
    pub fund_name: String,
    pub holdings_pages: Vec<u32>,
    pub net_asset_value: f64,
    pub value_in_thousands: bool,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate page ({doc_id}, {page_no})")]
    DuplicatePage { doc_id: String, page_no: u32 },
    #[error("invalid labels: {0}")]
    InvalidLabel(String),
}

/// Header/footer stripping configuration. The defaults remove `Page N` /
/// `Page N of M` lines, bare page-number lines that equal the page's own
/// number, and lines repeated verbatim on at least `repeated_line_fraction`
/// of a document's pages (corpus-level rule, needs at least two pages).
#[derive(Debug, Clone)]
pub struct NormalizeOptions {
    pub header_footer_patterns: Vec<Regex>,
    pub repeated_line_fraction: f64,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            header_footer_patterns: vec![Regex::new(r"^Page \d+( of \d+)?$").expect("valid regex")],
            repeated_line_fraction: 0.8,
        }
    }
}

fn normalize_line(line: &str) -> String {
    let normalized: String = line.nfkc().collect();
    let mut out = String::with_capacity(normalized.len());
    let mut in_space = false;
    for ch in normalized.chars() {
        if ch == ' ' || ch == '\t' {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(ch);
            in_space = false;
        }
    }
    out.trim().to_string()
}

/// Normalizes one page of raw text into blocks with the default options.
pub fn normalize_page(doc_id: &str, page_no: u32, raw: &str) -> PageRecord {
    normalize_page_with(doc_id, page_no, raw, &NormalizeOptions::default())
}

pub fn normalize_page_with(
    doc_id: &str,
    page_no: u32,
    raw: &str,
    options: &NormalizeOptions,
) -> PageRecord {
    let mut blocks = Vec::new();
    for line in raw.lines() {
        let block = normalize_line(line);
        if block.is_empty() {
            continue;
        }
        if options.header_footer_patterns.iter().any(|p| p.is_match(&block)) {
            continue;
        }
        // A bare page-number line is a footer only when it names this page.
        if block.chars().all(|c| c.is_ascii_digit()) && block == page_no.to_string() {
            continue;
        }
        blocks.push(block);
    }
    let raw_text = blocks.join("\n");
    PageRecord {
        doc_id: doc_id.to_string(),
        page_no,
        blocks,
        raw_text,
    }
}

#[derive(Deserialize)]
struct RawPage {
    doc_id: String,
    page_no: i64,
    text: String,
}

/// Loads a JSONL corpus (`{"doc_id", "page_no", "text"}` per line), applies
/// [`normalize_page`] plus the per-document repeated header/footer rule, and
/// returns records sorted by `(doc_id, page_no)`.
pub fn load_corpus(path: &Path) -> Result<Vec<PageRecord>, IngestError> {
    load_corpus_with(path, &NormalizeOptions::default())
}

pub fn load_corpus_with(
    path: &Path,
    options: &NormalizeOptions,
) -> Result<Vec<PageRecord>, IngestError> {
    let content = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pages = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| IngestError::MalformedLine {
                line: line_no,
                reason: format!("invalid JSON: {e}"),
            })?;
        for field in ["doc_id", "page_no", "text"] {
            if value.get(field).is_none() {
                return Err(IngestError::MalformedLine {
                    line: line_no,
                    reason: format!("missing field {field}"),
                });
            }
        }
        let raw: RawPage =
            serde_json::from_value(value).map_err(|e| IngestError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        if raw.page_no < 1 {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: format!("page_no must be >= 1, got {}", raw.page_no),
            });
        }
        let page_no = raw.page_no as u32;
        if !seen.insert((raw.doc_id.clone(), page_no)) {
            return Err(IngestError::DuplicatePage {
                doc_id: raw.doc_id,
                page_no,
            });
        }
        pages.push(normalize_page_with(&raw.doc_id, page_no, &raw.text, options));
    }
    pages.sort_by(|a, b| (&a.doc_id, a.page_no).cmp(&(&b.doc_id, b.page_no)));
    strip_repeated_lines(&mut pages, options.repeated_line_fraction);
    Ok(pages)
}

/// Removes blocks repeated verbatim on at least `fraction` of a document's
/// pages. Applies only to documents with two or more pages, so single-page
/// documents are never emptied.
fn strip_repeated_lines(pages: &mut [PageRecord], fraction: f64) {
    let mut by_doc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, page) in pages.iter().enumerate() {
        by_doc.entry(page.doc_id.clone()).or_default().push(idx);
    }
    for indices in by_doc.values() {
        let page_count = indices.len();
        if page_count < 2 {
            continue;
        }
        let mut line_pages: BTreeMap<&str, usize> = BTreeMap::new();
        for &idx in indices {
            let unique: BTreeSet<&str> = pages[idx].blocks.iter().map(String::as_str).collect();
            for line in unique {
                *line_pages.entry(line).or_default() += 1;
            }
        }
        let min_pages = ((page_count as f64) * fraction).ceil() as usize;
        let repeated: BTreeSet<String> = line_pages
            .iter()
            .filter(|(_, &count)| count >= min_pages.max(2))
            .map(|(line, _)| line.to_string())
            .collect();
        if repeated.is_empty() {
            continue;
        }
        for &idx in indices {
            pages[idx].blocks.retain(|b| !repeated.contains(b));
            pages[idx].raw_text = pages[idx].blocks.join("\n");
        }
    }
}

#[derive(Deserialize)]
struct RawLabel {
    doc_id: String,
    fund_name: String,
    holdings_pages: Vec<i64>,
    net_asset_value: f64,
    value_in_thousands: bool,
}

/// Loads the labels JSON array and validates page numbers and NAVs.
pub fn load_labels(path: &Path) -> Result<Vec<CorpusLabel>, IngestError> {
    let content = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw: Vec<RawLabel> = serde_json::from_str(&content)
        .map_err(|e| IngestError::InvalidLabel(e.to_string()))?;
    let mut labels = Vec::with_capacity(raw.len());
    for entry in raw {
        if !entry.net_asset_value.is_finite() {
            return Err(IngestError::InvalidLabel(format!(
                "fund {}: net_asset_value is not finite",
                entry.fund_name
            )));
        }
        let mut pages = Vec::with_capacity(entry.holdings_pages.len());
        for page in entry.holdings_pages {
            if page < 1 {
                return Err(IngestError::InvalidLabel(format!(
                    "fund {}: page number {page} must be >= 1",
                    entry.fund_name
                )));
            }
            pages.push(page as u32);
        }
        pages.sort_unstable();
        labels.push(CorpusLabel {
            doc_id: entry.doc_id,
            fund_name: entry.fund_name,
            holdings_pages: pages,
            net_asset_value: entry.net_asset_value,
            value_in_thousands: entry.value_in_thousands,
        });
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn nfkc_fullwidth_letters() {
        let page = normalize_page("d1", 1, "ＡＢＣ");
        assert_eq!(page.blocks, vec!["ABC"]);
    }

    #[test]
    fn whitespace_collapse_including_nbsp() {
        let page = normalize_page("d1", 2, "a   b\u{00A0}c");
        assert_eq!(page.blocks, vec!["a b c"]);
    }

    #[test]
    fn header_footer_lines_removed() {
        let page = normalize_page("d1", 3, "Page 4 of 12\nUK Treasury 0% 19/02/2024");
        assert_eq!(page.blocks, vec!["UK Treasury 0% 19/02/2024"]);
    }

    #[test]
    fn bare_page_number_removed_only_when_matching() {
        let page = normalize_page("d1", 3, "3\n42\nholdings");
        assert_eq!(page.blocks, vec!["42", "holdings"]);
    }

    #[test]
    fn blank_page_yields_empty_blocks() {
        let page = normalize_page("d1", 1, "   \n\n");
        assert!(page.blocks.is_empty());
        assert_eq!(page.raw_text, "");
    }

    #[test]
    fn normalize_is_idempotent() {
        let first = normalize_page("d", 1, "Ｘ  y\u{00A0}z\nPage 2 of 9\n1\nrow 99");
        let second = normalize_page("d", 1, &first.raw_text);
        assert_eq!(first.blocks, second.blocks);
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn load_corpus_empty_file() {
        let file = write_temp("");
        assert!(load_corpus(file.path()).unwrap().is_empty());
    }

    #[test]
    fn load_corpus_sorts_records() {
        let file = write_temp(concat!(
            "{\"doc_id\":\"b\",\"page_no\":1,\"text\":\"x\"}\n",
            "{\"doc_id\":\"a\",\"page_no\":2,\"text\":\"y\"}\n",
        ));
        let pages = load_corpus(file.path()).unwrap();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[0].doc_id, "a");
        assert_eq!(pages[1].doc_id, "b");
    }

    #[test]
    fn load_corpus_missing_field() {
        let file = write_temp("{\"doc_id\":\"a\",\"text\":\"y\"}\n");
        let err = load_corpus(file.path()).unwrap_err();
        assert_eq!(err.to_string(), "line 1: missing field page_no");
    }

    #[test]
    fn load_corpus_duplicate_page() {
        let file = write_temp(concat!(
            "{\"doc_id\":\"a\",\"page_no\":1,\"text\":\"x\"}\n",
            "{\"doc_id\":\"a\",\"page_no\":1,\"text\":\"y\"}\n",
        ));
        assert!(matches!(
            load_corpus(file.path()).unwrap_err(),
            IngestError::DuplicatePage { .. }
        ));
    }

    #[test]
    fn repeated_lines_stripped_across_doc() {
        let file = write_temp(concat!(
            "{\"doc_id\":\"a\",\"page_no\":1,\"text\":\"Annual Report 2024\\nrow one 100\"}\n",
            "{\"doc_id\":\"a\",\"page_no\":2,\"text\":\"Annual Report 2024\\nrow two 200\"}\n",
            "{\"doc_id\":\"a\",\"page_no\":3,\"text\":\"Annual Report 2024\\nrow three 300\"}\n",
        ));
        let pages = load_corpus(file.path()).unwrap();
        for page in &pages {
            assert!(!page.blocks.iter().any(|b| b == "Annual Report 2024"));
            assert_eq!(page.blocks.len(), 1);
        }
    }

    #[test]
    fn single_page_doc_keeps_all_lines() {
        let file = write_temp("{\"doc_id\":\"a\",\"page_no\":1,\"text\":\"only line\"}\n");
        let pages = load_corpus(file.path()).unwrap();
        assert_eq!(pages[0].blocks, vec!["only line"]);
    }

    #[test]
    fn load_labels_round_trip() {
        let file = write_temp(
            "[{\"doc_id\":\"d\",\"fund_name\":\"F\",\"holdings_pages\":[5,3,4],\
             \"net_asset_value\":1000000,\"value_in_thousands\":false}]",
        );
        let labels = load_labels(file.path()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].holdings_pages, vec![3, 4, 5]);
        assert_eq!(labels[0].net_asset_value, 1_000_000.0);
    }

    #[test]
    fn load_labels_empty_array() {
        let file = write_temp("[]");
        assert!(load_labels(file.path()).unwrap().is_empty());
    }

    #[test]
    fn load_labels_rejects_bad_pages() {
        let file = write_temp(
            "[{\"doc_id\":\"d\",\"fund_name\":\"F\",\"holdings_pages\":[0],\
             \"net_asset_value\":1,\"value_in_thousands\":false}]",
        );
        assert!(load_labels(file.path()).is_err());
    }

    #[test]
    fn load_labels_rejects_non_numeric_nav() {
        let file = write_temp(
            "[{\"doc_id\":\"d\",\"fund_name\":\"F\",\"holdings_pages\":[1],\
             \"net_asset_value\":\"lots\",\"value_in_thousands\":false}]",
        );
        assert!(load_labels(file.path()).is_err());
    }
}
