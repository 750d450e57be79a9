use std::collections::BTreeMap;

use super::{FigletError, FigletFont, Glyph, REQUIRED_FIRST, REQUIRED_LAST};

/// Codepoints of the optional German block that follows the ASCII glyphs.
const GERMAN: [char; 7] = ['Ä', 'Ö', 'Ü', 'ä', 'ö', 'ü', 'ß'];

/// Whitespace as understood by the reference font loader (Unicode whitespace
/// plus the ASCII information separators).
fn is_space(c: char) -> bool {
    c.is_whitespace() || ('\x1c'..='\x1f').contains(&c)
}

/// Splits on every line boundary the reference loader recognises:
/// `\n`, `\r\n`, `\r`, vertical tab, form feed and the information separators.
fn split_lines(text: &str) -> Vec<&str> {
    let mut lines = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\n' | b'\x0b' | b'\x0c' | b'\x1c' | b'\x1d' | b'\x1e' => {
                lines.push(&text[start..i]);
                start = i + 1;
            }
            b'\r' => {
                lines.push(&text[start..i]);
                if bytes.get(i + 1) == Some(&b'\n') {
                    i += 1;
                }
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    if start < bytes.len() {
        lines.push(&text[start..]);
    }
    lines
}

/// Parses FLF 2.0 font data.
///
/// The returned font has an empty name; use [`FigletFont::with_name`].
pub fn parse_font(raw: &[u8]) -> Result<FigletFont, FigletError> {
    let text: String = String::from_utf8_lossy(raw)
        .chars()
        .map(|c| match c {
            '\u{85}' | '\u{2028}' | '\u{2029}' => ' ',
            c => c,
        })
        .collect();
    let mut lines = split_lines(&text).into_iter();

    let header = lines.next().ok_or(FigletError::BadMagic)?;
    let header = Header::parse(header)?;

    let mut comment = String::new();
    for i in 0..header.comment_lines {
        let line = lines.next().ok_or_else(|| {
            FigletError::TruncatedFont(format!("header promises {} comment lines, found {i}", header.comment_lines))
        })?;
        comment.push_str(line);
        comment.push('\n');
    }

    let mut glyphs = BTreeMap::new();
    for cp in REQUIRED_FIRST..=REQUIRED_LAST {
        match read_glyph(&mut lines, header.height, cp)? {
            Some(glyph) => {
                glyphs.insert(cp, glyph);
            }
            None => return Err(FigletError::MissingRequiredGlyph(cp)),
        }
    }

    // The German block is optional; a short or malformed tail is ignored.
    for ch in GERMAN {
        match read_glyph(&mut lines, header.height, u32::from(ch)) {
            Ok(Some(glyph)) if !glyph.is_blank() => {
                glyphs.insert(u32::from(ch), glyph);
            }
            Ok(Some(_)) => {}
            Ok(None) | Err(_) => break,
        }
    }

    Ok(FigletFont {
        name: String::new(),
        hardblank: header.hardblank,
        height: header.height,
        baseline: header.baseline,
        max_length: header.max_length,
        old_layout: header.old_layout,
        full_layout: header.full_layout,
        print_direction: header.print_direction,
        comment_lines: header.comment_lines,
        comment,
        glyphs,
    })
}

struct Header {
    hardblank: char,
    height: usize,
    baseline: usize,
    max_length: usize,
    old_layout: i32,
    comment_lines: usize,
    print_direction: Option<i32>,
    full_layout: Option<u32>,
}

impl Header {
    fn parse(line: &str) -> Result<Self, FigletError> {
        let mut chars = line.chars();
        let magic: String = chars.by_ref().take(5).collect();
        if magic.chars().count() < 5 || !magic.starts_with("flf2") {
            return Err(FigletError::BadMagic);
        }
        let rest = chars.as_str();
        let fields: Vec<&str> = rest.split(is_space).filter(|f| !f.is_empty()).collect();
        if fields.len() < 6 {
            return Err(FigletError::BadHeader(format!(
                "expected at least 6 fields after the signature, found {}",
                fields.len()
            )));
        }
        let int = |idx: usize, what: &str| -> Result<i64, FigletError> {
            fields[idx]
                .parse::<i64>()
                .map_err(|_| FigletError::BadHeader(format!("{what} is not an integer: {:?}", fields[idx])))
        };

        let hardblank = fields[0].chars().next().expect("non-empty field");
        let height = int(1, "height")?;
        let baseline = int(2, "baseline")?;
        let max_length = int(3, "max length")?;
        let old_layout = int(4, "old layout")?;
        let comment_lines = int(5, "comment lines")?;
        let print_direction = if fields.len() > 6 { Some(int(6, "print direction")?) } else { None };
        let full_layout = if fields.len() > 7 { Some(int(7, "full layout")?) } else { None };

        if height < 1 {
            return Err(FigletError::BadHeader(format!("height must be positive, got {height}")));
        }
        if !(1..=height).contains(&baseline) {
            return Err(FigletError::BadHeader(format!("baseline {baseline} outside 1..={height}")));
        }
        if !(-1..=63).contains(&old_layout) {
            return Err(FigletError::BadHeader(format!("old layout {old_layout} outside -1..=63")));
        }
        if comment_lines < 0 || max_length < 0 {
            return Err(FigletError::BadHeader("negative count in header".into()));
        }
        if let Some(word) = full_layout {
            if !(0..=32767).contains(&word) {
                return Err(FigletError::BadHeader(format!("full layout {word} outside 0..=32767")));
            }
        }

        Ok(Self {
            hardblank,
            height: height as usize,
            baseline: baseline as usize,
            max_length: max_length as usize,
            old_layout: old_layout as i32,
            comment_lines: comment_lines as usize,
            print_direction: print_direction.map(|d| d as i32),
            full_layout: full_layout.map(|w| w as u32),
        })
    }
}

/// Reads one glyph block. `Ok(None)` means the input ended cleanly before the
/// block started.
fn read_glyph<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    height: usize,
    codepoint: u32,
) -> Result<Option<Glyph>, FigletError> {
    let mut rows = Vec::with_capacity(height);
    let mut endmark = None;
    for row in 0..height {
        let Some(line) = lines.next() else {
            if row == 0 {
                return Ok(None);
            }
            return Err(FigletError::TruncatedFont(format!(
                "glyph U+{codepoint:04X} ends after {row} of {height} rows"
            )));
        };
        let chars: Vec<char> = line.chars().collect();
        let mark = match endmark {
            Some(mark) => mark,
            None => {
                let mark = find_endmark(&chars).ok_or(FigletError::InconsistentGlyphHeight { codepoint, row })?;
                endmark = Some(mark);
                mark
            }
        };
        rows.push(strip_endmark(chars, mark));
    }
    Ok(Some(Glyph::new(rows)))
}

/// The endmark is the last character that is followed only by whitespace.
fn find_endmark(row: &[char]) -> Option<char> {
    if row.is_empty() {
        return None;
    }
    match row.iter().rposition(|c| !is_space(*c)) {
        Some(pos) => Some(row[pos]),
        None => Some(row[0]),
    }
}

/// Removes the leftmost suffix made of one or two endmarks followed by
/// whitespace. Rows without such a suffix are returned unchanged.
fn strip_endmark(mut row: Vec<char>, mark: char) -> Vec<char> {
    let n = row.len();
    // tail_ws[p] is true when row[p..] is entirely whitespace.
    let mut tail_ws = vec![true; n + 1];
    for p in (0..n).rev() {
        tail_ws[p] = tail_ws[p + 1] && is_space(row[p]);
    }
    let cut =
        (0..n).find(|&p| row[p] == mark && (tail_ws[p + 1] || (p + 1 < n && row[p + 1] == mark && tail_ws[p + 2])));
    if let Some(p) = cut {
        row.truncate(p);
    }
    row
}
