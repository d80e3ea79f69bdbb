//! Reader and writer for the P1 subset of CIF used as the structure container.
//!
//! One data block per document. The six `_cell_*` tags and an `_atom_site_*`
//! loop with `type_symbol` and `fract_{x,y,z}` columns are required; every
//! listed site is taken literally. Symmetry tags are ignored (with a warning),
//! as are occupancy and disorder columns.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;

use crate::element::Element;
use crate::structure::{wrap_fraction, AtomSite, Cell, CrystalStructure};

const LENGTH_TAGS: [&str; 3] = ["_cell_length_a", "_cell_length_b", "_cell_length_c"];
const ANGLE_TAGS: [&str; 3] = ["_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma"];
const SYMBOL_TAG: &str = "_atom_site_type_symbol";
const FRACT_TAGS: [&str; 3] = ["_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CifError {
    #[error("no `data_` block found")]
    MissingDataBlock,
    #[error("line {line}: second data block; only one block per document is supported")]
    MultipleDataBlocks { line: usize },
    #[error("line {line}: required tag `{tag}` is missing from this block")]
    MissingTag { tag: String, line: usize },
    #[error("line {line}: atom site loop has no rows")]
    EmptyAtomLoop { line: usize },
    #[error("line {line}: unknown element symbol `{symbol}`")]
    UnknownElement { symbol: String, line: usize },
    #[error("line {line}: malformed number `{text}`")]
    MalformedNumber { text: String, line: usize },
    #[error("line {line}: malformed loop: {reason}")]
    MalformedLoop { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: invalid cell: {reason}")]
    InvalidCell { line: usize, reason: String },
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    quoted: bool,
}

impl Token {
    fn is_keyword(&self, keyword: &str) -> bool {
        !self.quoted && self.text.len() >= keyword.len() && self.text[..keyword.len()].eq_ignore_ascii_case(keyword)
    }

    fn is_tag(&self) -> bool {
        !self.quoted && self.text.starts_with('_')
    }

    fn ends_loop_values(&self) -> bool {
        self.is_tag()
            || self.is_keyword("loop_")
            || self.is_keyword("data_")
            || self.is_keyword("save_")
            || self.is_keyword("global_")
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, CifError> {
    let mut tokens = Vec::new();
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    while let Some((line_no, line)) = lines.next() {
        // semicolon-delimited text field
        if let Some(rest) = line.strip_prefix(';') {
            let mut body = rest.to_string();
            let mut closed = false;
            for (_, next) in lines.by_ref() {
                if next.starts_with(';') {
                    closed = true;
                    break;
                }
                body.push('\n');
                body.push_str(next);
            }
            if !closed {
                return Err(CifError::Syntax { line: line_no, reason: "unterminated text field".into() });
            }
            tokens.push(Token { text: body, line: line_no, quoted: true });
            continue;
        }

        let chars: Vec<char> = line.chars().collect();
        let mut k = 0;
        while k < chars.len() {
            let ch = chars[k];
            if ch.is_whitespace() {
                k += 1;
                continue;
            }
            if ch == '#' {
                break;
            }
            if ch == '\'' || ch == '"' {
                // a quote only closes when followed by whitespace or end of line
                let mut end = k + 1;
                loop {
                    if end >= chars.len() {
                        return Err(CifError::Syntax {
                            line: line_no,
                            reason: "unterminated quoted string".into(),
                        });
                    }
                    if chars[end] == ch && chars.get(end + 1).is_none_or(|c| c.is_whitespace()) {
                        break;
                    }
                    end += 1;
                }
                tokens.push(Token {
                    text: chars[k + 1..end].iter().collect(),
                    line: line_no,
                    quoted: true,
                });
                k = end + 1;
                continue;
            }
            let start = k;
            while k < chars.len() && !chars[k].is_whitespace() {
                k += 1;
            }
            tokens.push(Token { text: chars[start..k].iter().collect(), line: line_no, quoted: false });
        }
    }
    Ok(tokens)
}

struct Loop {
    line: usize,
    tags: Vec<String>,
    values: Vec<Token>,
}

impl Loop {
    fn column(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    fn rows(&self) -> impl Iterator<Item = &[Token]> {
        self.values.chunks(self.tags.len())
    }
}

struct Block {
    name: String,
    line: usize,
    items: HashMap<String, Token>,
    loops: Vec<Loop>,
}

fn parse_block(tokens: Vec<Token>) -> Result<Block, CifError> {
    let mut iter = tokens.into_iter().peekable();
    let mut block: Option<Block> = None;

    while let Some(tok) = iter.next() {
        if tok.is_keyword("data_") {
            if block.is_some() {
                return Err(CifError::MultipleDataBlocks { line: tok.line });
            }
            block = Some(Block {
                name: tok.text[5..].to_string(),
                line: tok.line,
                items: HashMap::new(),
                loops: Vec::new(),
            });
            continue;
        }
        let Some(current) = block.as_mut() else {
            return Err(CifError::Syntax {
                line: tok.line,
                reason: format!("`{}` appears before the data block", tok.text),
            });
        };

        if tok.is_keyword("loop_") {
            let mut tags = Vec::new();
            while let Some(next) = iter.next_if(|t| t.is_tag()) {
                tags.push(next.text.to_ascii_lowercase());
            }
            if tags.is_empty() {
                return Err(CifError::MalformedLoop { line: tok.line, reason: "loop_ without tags".into() });
            }
            let mut values = Vec::new();
            while let Some(next) = iter.next_if(|t| !t.ends_loop_values()) {
                values.push(next);
            }
            if values.len() % tags.len() != 0 {
                return Err(CifError::MalformedLoop {
                    line: tok.line,
                    reason: format!("{} values do not fill rows of {} columns", values.len(), tags.len()),
                });
            }
            current.loops.push(Loop { line: tok.line, tags, values });
        } else if tok.is_tag() {
            let tag = tok.text.to_ascii_lowercase();
            let value = iter.next_if(|t| !t.ends_loop_values()).ok_or_else(|| CifError::Syntax {
                line: tok.line,
                reason: format!("tag `{tag}` has no value"),
            })?;
            current.items.insert(tag, value);
        } else if tok.is_keyword("save_") || tok.is_keyword("global_") {
            return Err(CifError::Syntax {
                line: tok.line,
                reason: format!("`{}` frames are not supported", tok.text),
            });
        } else {
            return Err(CifError::Syntax {
                line: tok.line,
                reason: format!("unexpected value `{}` without a tag", tok.text),
            });
        }
    }
    block.ok_or(CifError::MissingDataBlock)
}

/// Parses a CIF number, dropping a trailing standard uncertainty such as `(3)`.
fn parse_number(tok: &Token) -> Result<f64, CifError> {
    let malformed = || CifError::MalformedNumber { text: tok.text.clone(), line: tok.line };
    let mut text = tok.text.as_str();
    if let Some(open) = text.find('(') {
        let su = &text[open..];
        if !(su.ends_with(')') && su[1..su.len() - 1].chars().all(|c| c.is_ascii_digit())) {
            return Err(malformed());
        }
        text = &text[..open];
    }
    let looks_numeric = !text.is_empty()
        && text.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_numeric {
        return Err(malformed());
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(malformed()),
    }
}

/// Parses a single-block CIF document into a structure.
pub fn parse_cif(text: &str) -> Result<CrystalStructure, CifError> {
    let block = parse_block(tokenize(text)?)?;

    if block.items.keys().any(|k| k.starts_with("_symmetry_") || k.starts_with("_space_group_"))
        || block.loops.iter().any(|l| l.tags.iter().any(|t| t.starts_with("_symmetry_") || t.starts_with("_space_group_")))
    {
        warn!("data_{}: symmetry tags ignored; sites are taken as listed (P1)", block.name);
    }

    let read_tag = |tag: &str| -> Result<f64, CifError> {
        let tok = block
            .items
            .get(tag)
            .ok_or_else(|| CifError::MissingTag { tag: tag.to_string(), line: block.line })?;
        parse_number(tok)
    };
    let [a, b, c] = [read_tag(LENGTH_TAGS[0])?, read_tag(LENGTH_TAGS[1])?, read_tag(LENGTH_TAGS[2])?];
    let [alpha, beta, gamma] =
        [read_tag(ANGLE_TAGS[0])?, read_tag(ANGLE_TAGS[1])?, read_tag(ANGLE_TAGS[2])?];
    let cell = Cell { a, b, c, alpha, beta, gamma };
    cell.validate().map_err(|reason| CifError::InvalidCell {
        line: block.items[LENGTH_TAGS[0]].line,
        reason,
    })?;

    let atom_loop = block
        .loops
        .iter()
        .find(|l| l.tags.iter().any(|t| t.starts_with("_atom_site_fract_") || t == SYMBOL_TAG))
        .ok_or(CifError::EmptyAtomLoop { line: block.line })?;
    let symbol_col = atom_loop
        .column(SYMBOL_TAG)
        .ok_or_else(|| CifError::MissingTag { tag: SYMBOL_TAG.to_string(), line: atom_loop.line })?;
    let mut fract_cols = [0usize; 3];
    for (slot, tag) in fract_cols.iter_mut().zip(FRACT_TAGS) {
        *slot = atom_loop
            .column(tag)
            .ok_or_else(|| CifError::MissingTag { tag: tag.to_string(), line: atom_loop.line })?;
    }

    let mut sites = Vec::new();
    for row in atom_loop.rows() {
        let sym = &row[symbol_col];
        let element = Element::from_symbol(&sym.text)
            .map_err(|_| CifError::UnknownElement { symbol: sym.text.clone(), line: sym.line })?;
        let mut frac = [0.0; 3];
        for (x, col) in frac.iter_mut().zip(fract_cols) {
            *x = wrap_fraction(parse_number(&row[col])?);
        }
        sites.push(AtomSite { element, frac });
    }
    if sites.is_empty() {
        return Err(CifError::EmptyAtomLoop { line: atom_loop.line });
    }

    let id = if block.name.is_empty() { "structure".to_string() } else { block.name };
    Ok(CrystalStructure { id, cell, sites })
}

fn fmt_fraction(x: f64) -> String {
    let s = format!("{x:.6}");
    // values within 5e-7 of 1 would otherwise round to the next image
    if s == "1.000000" || s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Emits a structure as a P1 CIF document with six-decimal numbers.
pub fn write_cif(structure: &CrystalStructure) -> String {
    let id: String = structure
        .id
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    let cell = &structure.cell;
    let mut out = String::new();
    let _ = writeln!(out, "data_{id}");
    for (tag, value) in LENGTH_TAGS.iter().zip(cell.lengths()).chain(ANGLE_TAGS.iter().zip(cell.angles())) {
        let _ = writeln!(out, "{tag}    {value:.6}");
    }
    out.push_str("loop_\n_atom_site_label\n_atom_site_type_symbol\n");
    for tag in FRACT_TAGS {
        out.push_str(tag);
        out.push('\n');
    }
    for (k, site) in structure.sites.iter().enumerate() {
        let sym = site.element.symbol();
        let _ = writeln!(
            out,
            "{sym}{} {sym} {} {} {}",
            k + 1,
            fmt_fraction(site.frac[0]),
            fmt_fraction(site.frac[1]),
            fmt_fraction(site.frac[2]),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "data_min
_cell_length_a 5
_cell_length_b 5
_cell_length_c 5
_cell_angle_alpha 90
_cell_angle_beta 90
_cell_angle_gamma 90
loop_
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
C 0 0 0
";

    #[test]
    fn minimal_document() {
        let s = parse_cif(MINIMAL).unwrap();
        assert_eq!(s.id, "min");
        assert_eq!(s.cell, Cell::cubic(5.0));
        assert_eq!(s.sites.len(), 1);
        assert_eq!(s.sites[0].element.symbol(), "C");
        assert_eq!(s.sites[0].frac, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn coordinates_wrap() {
        let text = MINIMAL.replace("C 0 0 0", "C 1.25 -0.25 0.5");
        let s = parse_cif(&text).unwrap();
        assert_eq!(s.sites[0].frac, [0.25, 0.75, 0.5]);
    }

    #[test]
    fn missing_length_tag() {
        let text = MINIMAL.replace("_cell_length_a 5\n", "");
        match parse_cif(&text) {
            Err(CifError::MissingTag { tag, line }) => {
                assert_eq!(tag, "_cell_length_a");
                assert_eq!(line, 1);
            }
            other => panic!("expected MissingTag, got {other:?}"),
        }
    }

    #[test]
    fn error_cases_name_lines() {
        let unknown = MINIMAL.replace("C 0 0 0", "Xq 0 0 0");
        assert_eq!(
            parse_cif(&unknown),
            Err(CifError::UnknownElement { symbol: "Xq".into(), line: 13 })
        );
        let bad = MINIMAL.replace("_cell_length_b 5", "_cell_length_b 5.x");
        assert_eq!(parse_cif(&bad), Err(CifError::MalformedNumber { text: "5.x".into(), line: 3 }));
        let empty = MINIMAL.replace("C 0 0 0\n", "");
        assert_eq!(parse_cif(&empty), Err(CifError::EmptyAtomLoop { line: 8 }));
        let nan = MINIMAL.replace("C 0 0 0", "C nan 0 0");
        assert!(matches!(parse_cif(&nan), Err(CifError::MalformedNumber { .. })));
        assert_eq!(parse_cif(""), Err(CifError::MissingDataBlock));
        let two = format!("{MINIMAL}data_other\n");
        assert_eq!(parse_cif(&two), Err(CifError::MultipleDataBlocks { line: 14 }));
    }

    #[test]
    fn degenerate_cell_is_error() {
        let text = MINIMAL
            .replace("_cell_angle_alpha 90", "_cell_angle_alpha 10")
            .replace("_cell_angle_beta 90", "_cell_angle_beta 170");
        assert!(matches!(parse_cif(&text), Err(CifError::InvalidCell { .. })));
    }

    #[test]
    fn tolerates_common_decorations() {
        let text = "# comment\ndata_zif
_symmetry_space_group_name_H-M 'P 1'
_cell_length_a 10.123(4)
_cell_length_b 11.0
_cell_length_c 12.0 # trailing comment
_cell_angle_alpha 90.00
_cell_angle_beta 101.5(2)
_cell_angle_gamma 90
_publ_section_title
;
A multi-line
title
;
loop_
_atom_site_label
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
_atom_site_occupancy
Zn1 Zn2+ 0.1 0.2 0.3 1.0
O1 O 0.4 0.5
0.6 0.5
";
        let s = parse_cif(text).unwrap();
        assert_eq!(s.cell.a, 10.123);
        assert_eq!(s.cell.beta, 101.5);
        assert_eq!(s.sites.len(), 2);
        assert_eq!(s.sites[0].element.symbol(), "Zn");
        assert_eq!(s.sites[1].frac, [0.4, 0.5, 0.6]);
    }

    #[test]
    fn write_format() {
        let s = parse_cif(MINIMAL).unwrap();
        let text = write_cif(&s);
        assert!(text.contains("_cell_length_a    5.000000\n"));
        assert!(text.contains("_cell_angle_gamma    90.000000\n"));
        assert!(text.ends_with("C1 C 0.000000 0.000000 0.000000\n"));
    }

    #[test]
    fn write_preserves_order() {
        let el = |s| Element::from_symbol(s).unwrap();
        let s = CrystalStructure::new(
            "three",
            Cell::cubic(7.0),
            vec![
                AtomSite::new(el("Zn"), [0.1, 0.2, 0.3]),
                AtomSite::new(el("O"), [0.4, 0.5, 0.6]),
                AtomSite::new(el("C"), [0.7, 0.8, 0.9]),
            ],
        );
        let text = write_cif(&s);
        let rows: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("_atom_site_fract_z")).skip(1).collect();
        assert_eq!(rows, ["Zn1 Zn 0.100000 0.200000 0.300000", "O2 O 0.400000 0.500000 0.600000", "C3 C 0.700000 0.800000 0.900000"]);
        assert_eq!(parse_cif(&text).unwrap(), s);
    }

    #[test]
    fn near_one_coordinates_fold_to_zero() {
        let el = Element::from_symbol("C").unwrap();
        let s = CrystalStructure::new("edge", Cell::cubic(5.0), vec![AtomSite::new(el, [0.9999997, 0.5, 0.0])]);
        let back = parse_cif(&write_cif(&s)).unwrap();
        assert_eq!(back.sites[0].frac, [0.0, 0.5, 0.0]);
    }
}
