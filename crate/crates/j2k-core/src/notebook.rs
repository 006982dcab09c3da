//! Notebook ingestion: parse an `.ipynb` document into an ordered list of
//! code cells and extract explicit step markers.
//!
//! Only format major version 4 is accepted. Markdown and raw cells are
//! dropped (but counted), cell outputs and execution counts are discarded,
//! and `source` given either as a single string or a list of strings is
//! normalized to one string.

use serde_json::Value;
use thiserror::Error;

/// Comment prefix that opens a named step when it is the first non-blank
/// line of a code cell: `# j2k: step <name>`.
const MARKER_PREFIX: &str = "# j2k: step";

#[derive(Debug, Error)]
pub enum NotebookError {
    #[error("malformed notebook: {0}")]
    MalformedDocument(String),
    #[error("unsupported notebook format version {major} (only 4.x is supported)")]
    UnsupportedFormat { major: i64 },
    #[error("invalid step marker in cell {cell}: {reason}")]
    InvalidMarker { cell: usize, reason: String },
}

/// One code cell, re-indexed over the kept (code) cells only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub index: usize,
    pub source: String,
    pub marker: Option<String>,
}

/// A parsed notebook: ordered code cells plus format metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notebook {
    pub format_version: String,
    pub kernel_language: String,
    pub cells: Vec<Cell>,
    /// Number of non-code cells dropped during parsing.
    pub skipped_count: usize,
}

/// Parses raw notebook bytes into a [`Notebook`].
///
/// Cell order is preserved, non-code cells are dropped and counted, and each
/// cell's source lines are joined with no added separators (the format
/// stores per-line strings that already end in newlines). A single trailing
/// newline is stripped from each cell's source.
pub fn parse_notebook(raw_bytes: &[u8]) -> Result<Notebook, NotebookError> {
    let malformed = NotebookError::MalformedDocument;
    let value: Value =
        serde_json::from_slice(raw_bytes).map_err(|e| malformed(format!("not valid JSON: {e}")))?;
    let doc = value
        .as_object()
        .ok_or_else(|| malformed("top-level value is not an object".into()))?;

    let major = doc
        .get("nbformat")
        .and_then(Value::as_i64)
        .ok_or_else(|| malformed("missing or non-integer `nbformat`".into()))?;
    if major != 4 {
        return Err(NotebookError::UnsupportedFormat { major });
    }
    let minor = doc
        .get("nbformat_minor")
        .and_then(Value::as_i64)
        .unwrap_or(0);

    let raw_cells = doc
        .get("cells")
        .ok_or_else(|| malformed("missing `cells` key".into()))?
        .as_array()
        .ok_or_else(|| malformed("`cells` is not an array".into()))?;

    let mut cells = Vec::new();
    let mut skipped = 0usize;
    for (pos, raw) in raw_cells.iter().enumerate() {
        let cell = raw
            .as_object()
            .ok_or_else(|| malformed(format!("cell {pos} is not an object")))?;
        let kind = cell
            .get("cell_type")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(format!("cell {pos} has no `cell_type`")))?;
        if kind != "code" {
            skipped += 1;
            continue;
        }
        let source = join_source(cell.get("source"), pos)?;
        cells.push(Cell {
            index: cells.len(),
            source: normalize_trailing_newline(source),
            marker: None,
        });
    }

    Ok(Notebook {
        format_version: format!("{major}.{minor}"),
        kernel_language: kernel_language(doc),
        cells,
        skipped_count: skipped,
    })
}

fn join_source(source: Option<&Value>, pos: usize) -> Result<String, NotebookError> {
    let malformed = NotebookError::MalformedDocument;
    match source {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(lines)) => {
            let mut joined = String::new();
            for line in lines {
                let s = line
                    .as_str()
                    .ok_or_else(|| malformed(format!("cell {pos} has a non-string source line")))?;
                joined.push_str(s);
            }
            Ok(joined)
        }
        _ => Err(malformed(format!("cell {pos} has no usable `source`"))),
    }
}

fn normalize_trailing_newline(mut s: String) -> String {
    if s.ends_with('\n') {
        s.pop();
        if s.ends_with('\r') {
            s.pop();
        }
    }
    s
}

fn kernel_language(doc: &serde_json::Map<String, Value>) -> String {
    let meta = doc.get("metadata");
    let from = |path: &[&str]| -> Option<String> {
        let mut v = meta?;
        for key in path {
            v = v.get(key)?;
        }
        v.as_str().map(str::to_owned)
    };
    from(&["language_info", "name"])
        .or_else(|| from(&["kernelspec", "language"]))
        .unwrap_or_else(|| "python".to_owned())
}

/// Scans each cell for a step-marker line and moves it into `Cell::marker`.
///
/// A marker is the comment `# j2k: step <name>` as the first non-blank line
/// of a code cell. The line is removed from the source and `<name>` is
/// slugified; duplicate names get `-2`, `-3`, ... suffixes. Cells that
/// already carry a marker are left untouched, which makes the operation
/// idempotent.
pub fn extract_markers(mut notebook: Notebook) -> Result<Notebook, NotebookError> {
    let mut used: std::collections::BTreeSet<String> = notebook
        .cells
        .iter()
        .filter_map(|c| c.marker.clone())
        .collect();

    for cell in &mut notebook.cells {
        if cell.marker.is_some() {
            continue;
        }
        let Some((line_start, line_end)) = first_non_blank_line(&cell.source) else {
            continue;
        };
        let line = cell.source[line_start..line_end].trim_end_matches(['\r', '\n']);
        let Some(raw_name) = marker_name(line) else {
            continue;
        };
        let name = raw_name.trim();
        if name.is_empty() {
            return Err(NotebookError::InvalidMarker {
                cell: cell.index,
                reason: "marker has no step name".into(),
            });
        }
        let slug = slugify(name);
        if slug.is_empty() {
            return Err(NotebookError::InvalidMarker {
                cell: cell.index,
                reason: format!("step name {name:?} has no slugifiable characters"),
            });
        }
        cell.marker = Some(allocate_slug(&mut used, slug));
        cell.source.replace_range(line_start..line_end, "");
    }
    Ok(notebook)
}

/// Returns the byte range of the first non-blank line, including its
/// terminating newline when present.
fn first_non_blank_line(source: &str) -> Option<(usize, usize)> {
    let mut start = 0usize;
    for line in source.split_inclusive('\n') {
        let end = start + line.len();
        if !line.trim().is_empty() {
            return Some((start, end));
        }
        start = end;
    }
    None
}

/// Matches the exact marker syntax and returns the raw name remainder.
fn marker_name(line: &str) -> Option<&str> {
    let rest = line.trim_start().strip_prefix(MARKER_PREFIX)?;
    // Reject things like `# j2k: stepfoo`: the name must be separated.
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

/// Lowercases and maps every run of characters outside `[a-z0-9]` to a
/// single `-`, trimming dashes at both ends.
pub(crate) fn slugify(name: &str) -> String {
    let mut slug = String::with_capacity(name.len());
    let mut pending_dash = false;
    for c in name.to_lowercase().chars() {
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            if pending_dash && !slug.is_empty() {
                slug.push('-');
            }
            pending_dash = false;
            slug.push(c);
        } else {
            pending_dash = true;
        }
    }
    slug
}

/// Reserves `slug` in `used`, appending `-2`, `-3`, ... on collision.
pub(crate) fn allocate_slug(used: &mut std::collections::BTreeSet<String>, slug: String) -> String {
    if used.insert(slug.clone()) {
        return slug;
    }
    let mut n = 2usize;
    loop {
        let candidate = format!("{slug}-{n}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn notebook_json(cells: &[(&str, &str)]) -> Vec<u8> {
        let cells: Vec<Value> = cells
            .iter()
            .map(
                |(kind, src)| serde_json::json!({"cell_type": kind, "source": src, "metadata": {}}),
            )
            .collect();
        serde_json::to_vec(&serde_json::json!({
            "cells": cells,
            "metadata": {},
            "nbformat": 4,
            "nbformat_minor": 5,
        }))
        .unwrap()
    }

    #[test]
    fn filters_non_code_cells_and_counts_them() {
        let raw = notebook_json(&[
            ("code", "a = 1"),
            ("markdown", "# heading"),
            ("code", "b = 2"),
        ]);
        let nb = parse_notebook(&raw).unwrap();
        assert_eq!(nb.cells.len(), 2);
        assert_eq!(nb.skipped_count, 1);
        assert_eq!(nb.cells[0].index, 0);
        assert_eq!(nb.cells[1].index, 1);
        assert_eq!(nb.cells[1].source, "b = 2");
        assert_eq!(nb.format_version, "4.5");
    }

    #[test]
    fn empty_object_is_malformed() {
        let err = parse_notebook(b"{}").unwrap_err();
        assert!(matches!(err, NotebookError::MalformedDocument(_)), "{err}");
    }

    #[test]
    fn invalid_json_is_malformed() {
        assert!(matches!(
            parse_notebook(b"not json"),
            Err(NotebookError::MalformedDocument(_))
        ));
    }

    #[test]
    fn format_major_other_than_4_is_unsupported() {
        let raw = br#"{"cells": [], "nbformat": 3, "nbformat_minor": 0}"#;
        assert!(matches!(
            parse_notebook(raw),
            Err(NotebookError::UnsupportedFormat { major: 3 })
        ));
    }

    #[test]
    fn empty_notebook_is_not_an_error() {
        let raw = br#"{"cells": [], "nbformat": 4, "nbformat_minor": 2}"#;
        let nb = parse_notebook(raw).unwrap();
        assert!(nb.cells.is_empty());
        assert_eq!(nb.format_version, "4.2");
    }

    #[test]
    fn source_as_line_array_is_joined_without_separators() {
        let raw = serde_json::to_vec(&serde_json::json!({
            "cells": [{"cell_type": "code", "source": ["a = 1\n", "b = 2"]}],
            "nbformat": 4,
            "nbformat_minor": 5,
        }))
        .unwrap();
        let nb = parse_notebook(&raw).unwrap();
        assert_eq!(nb.cells[0].source, "a = 1\nb = 2");
    }

    #[test]
    fn trailing_newline_is_normalized_away() {
        let raw = notebook_json(&[("code", "a = 1\n")]);
        let nb = parse_notebook(&raw).unwrap();
        assert_eq!(nb.cells[0].source, "a = 1");
    }

    #[test]
    fn linear3_fixture_parses_to_expected_cells() {
        // Expected values confirmed against an independent JSON dump of the
        // fixture (python3 -m json.tool).
        let raw = std::fs::read(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/linear3.ipynb"
        ))
        .unwrap();
        let nb = parse_notebook(&raw).unwrap();
        assert_eq!(nb.cells.len(), 3);
        assert_eq!(nb.cells[1].source, "b = a + 1");
        assert_eq!(nb.kernel_language, "python");
    }

    #[test]
    fn marker_is_extracted_and_line_removed() {
        let raw = notebook_json(&[("code", "# j2k: step Load Data\nx = 1")]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        assert_eq!(nb.cells[0].marker.as_deref(), Some("load-data"));
        assert_eq!(nb.cells[0].source, "x = 1");
    }

    #[test]
    fn cell_without_marker_is_unchanged() {
        let raw = notebook_json(&[("code", "x = 1\ny = 2")]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        assert_eq!(nb.cells[0].marker, None);
        assert_eq!(nb.cells[0].source, "x = 1\ny = 2");
    }

    #[test]
    fn marker_must_be_first_non_blank_line() {
        let raw = notebook_json(&[("code", "x = 1\n# j2k: step late")]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        assert_eq!(nb.cells[0].marker, None);
    }

    #[test]
    fn blank_lines_before_marker_are_allowed() {
        let raw = notebook_json(&[("code", "\n# j2k: step train\nfit()")]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        assert_eq!(nb.cells[0].marker.as_deref(), Some("train"));
        assert_eq!(nb.cells[0].source, "\nfit()");
    }

    #[test]
    fn duplicate_marker_names_get_numeric_suffixes() {
        let raw = notebook_json(&[
            ("code", "# j2k: step train\na = 1"),
            ("code", "# j2k: step train\nb = 2"),
            ("code", "# j2k: step train\nc = 3"),
        ]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        let markers: Vec<_> = nb.cells.iter().map(|c| c.marker.clone().unwrap()).collect();
        assert_eq!(markers, ["train", "train-2", "train-3"]);
    }

    #[test]
    fn empty_marker_name_is_invalid() {
        let raw = notebook_json(&[("code", "# j2k: step   \nx = 1")]);
        assert!(matches!(
            extract_markers(parse_notebook(&raw).unwrap()),
            Err(NotebookError::InvalidMarker { cell: 0, .. })
        ));
    }

    #[test]
    fn non_slugifiable_marker_name_is_invalid() {
        let raw = notebook_json(&[("code", "# j2k: step !!!\nx = 1")]);
        assert!(matches!(
            extract_markers(parse_notebook(&raw).unwrap()),
            Err(NotebookError::InvalidMarker { .. })
        ));
    }

    #[test]
    fn marker_prefix_requires_separation_from_name() {
        // `# j2k: stepfoo` is an ordinary comment, not a marker.
        let raw = notebook_json(&[("code", "# j2k: stepfoo\nx = 1")]);
        let nb = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        assert_eq!(nb.cells[0].marker, None);
        assert_eq!(nb.cells[0].source, "# j2k: stepfoo\nx = 1");
    }

    #[test]
    fn extract_markers_is_idempotent() {
        let raw = notebook_json(&[
            ("code", "# j2k: step a\n# j2k: step b\nx = 1"),
            ("code", "y = 2"),
        ]);
        let once = extract_markers(parse_notebook(&raw).unwrap()).unwrap();
        let twice = extract_markers(once.clone()).unwrap();
        assert_eq!(once, twice);
        // The second marker-looking line stays in the source.
        assert_eq!(once.cells[0].source, "# j2k: step b\nx = 1");
    }

    #[test]
    fn slugify_examples() {
        assert_eq!(slugify("Load Data"), "load-data");
        assert_eq!(slugify("  Fit / Predict  "), "fit-predict");
        assert_eq!(slugify("Train_2"), "train-2");
        assert_eq!(slugify("!!!"), "");
    }

    #[test]
    fn roundtrip_preserves_code_cell_order_and_content() {
        let sources = ["a = 1", "b = a + 1", "print(b)"];
        let raw = notebook_json(&[
            ("code", sources[0]),
            ("code", sources[1]),
            ("code", sources[2]),
        ]);
        let nb = parse_notebook(&raw).unwrap();
        let parsed: String = nb.cells.iter().map(|c| c.source.as_str()).collect();
        let original: String = sources.concat();
        assert_eq!(parsed, original);
    }
}
