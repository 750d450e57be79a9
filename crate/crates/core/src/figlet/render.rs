use super::{AsciiArt, FigletError, FigletFont, Glyph, LayoutMode, SmushRules};

const KERN: u32 = 64;
const SMUSH: u32 = 128;

/// Renders `text` left to right as a single line of FIGlet art.
///
/// Every character must be drawable by `font` (see
/// [`FigletFont::can_render`]). The output keeps the reference renderer's
/// fitting behaviour, including overlap of leading blank columns of the first
/// glyph; hardblanks become spaces and lines are right-padded to one width.
pub fn render(font: &FigletFont, text: &str, mode: LayoutMode) -> Result<AsciiArt, FigletError> {
    if text.is_empty() {
        return Err(FigletError::EmptyText);
    }
    let glyphs = text
        .chars()
        .map(|ch| {
            if font.can_render(ch) {
                Ok(font.glyph(ch).expect("checked by can_render"))
            } else {
                Err(FigletError::UnsupportedChar { ch, font: font.name().to_owned() })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut fitter = Fitter { hardblank: font.hardblank(), layout: mode.layout_word(), prev_width: 0, cur_width: 0 };
    let mut buffer: Vec<Vec<char>> = vec![Vec::new(); font.height()];
    for glyph in glyphs {
        fitter.cur_width = glyph.width();
        let overlap = fitter.overlap(&buffer, glyph);
        for (row, line) in buffer.iter_mut().enumerate() {
            fitter.append_row(line, glyph.row(row), overlap);
        }
        fitter.prev_width = fitter.cur_width;
    }

    let hardblank = font.hardblank();
    let width = buffer.iter().map(Vec::len).max().unwrap_or(0);
    let lines = buffer
        .into_iter()
        .map(|row| {
            let mut line: String = row.into_iter().map(|c| if c == hardblank { ' ' } else { c }).collect();
            let len = line.chars().count();
            line.extend(std::iter::repeat_n(' ', width - len));
            line
        })
        .collect();

    Ok(AsciiArt { lines, answer_len: text.chars().count(), font_name: font.name().to_owned() })
}

struct Fitter {
    hardblank: char,
    layout: u32,
    prev_width: usize,
    cur_width: usize,
}

impl Fitter {
    /// Number of columns the incoming glyph may overlap the current output.
    fn overlap(&self, buffer: &[Vec<char>], glyph: &Glyph) -> usize {
        if self.layout & (SMUSH | KERN) == 0 {
            return 0;
        }
        let mut best = self.cur_width;
        for (row, left) in buffer.iter().enumerate() {
            let right = glyph.row(row);

            let trimmed = left.len() - left.iter().rev().take_while(|c| **c == ' ').count();
            let boundary = trimmed.saturating_sub(1);
            let left_edge = left.get(boundary).copied();

            let lead = right.iter().take_while(|c| **c == ' ').count();
            let right_edge = right.get(lead).copied();

            let mut amount = (lead + left.len()) as isize - 1 - boundary as isize;
            match left_edge {
                None | Some(' ') => amount += 1,
                Some(l) => {
                    if let Some(r) = right_edge {
                        if self.smush(l, r).is_some() {
                            amount += 1;
                        }
                    }
                }
            }
            let amount = amount.max(0) as usize;
            best = best.min(amount);
        }
        best
    }

    fn append_row(&self, left: &mut Vec<char>, right: &[char], overlap: usize) {
        for i in 0..overlap {
            let idx = left.len() as isize - overlap as isize + i as isize;
            if idx < 0 {
                continue;
            }
            let idx = idx as usize;
            let r = right.get(i).copied().unwrap_or(' ');
            if let Some(merged) = self.smush(left[idx], r) {
                left[idx] = merged;
            }
        }
        if overlap < right.len() {
            left.extend_from_slice(&right[overlap..]);
        }
    }

    /// Merges two boundary characters, or `None` when they cannot overlap.
    fn smush(&self, l: char, r: char) -> Option<char> {
        if l == ' ' {
            return Some(r);
        }
        if r == ' ' {
            return Some(l);
        }
        if self.prev_width < 2 || self.cur_width < 2 {
            return None;
        }
        if self.layout & SMUSH == 0 {
            return None;
        }

        let rules = SmushRules::from_bits_truncate((self.layout & 63) as u8);
        let hb = self.hardblank;
        if rules.is_empty() {
            // Universal smushing: later glyph wins, visible characters beat hardblanks.
            if l == hb {
                return Some(r);
            }
            return Some(if r == hb { l } else { r });
        }

        if rules.contains(SmushRules::HARDBLANK) && l == hb && r == hb {
            return Some(l);
        }
        if l == hb || r == hb {
            return None;
        }
        if rules.contains(SmushRules::EQUAL) && l == r {
            return Some(l);
        }

        let mut classes: Vec<(&str, &str)> = Vec::with_capacity(6);
        if rules.contains(SmushRules::LOWLINE) {
            classes.push(("_", "|/\\[]{}()<>"));
        }
        if rules.contains(SmushRules::HIERARCHY) {
            classes.extend([("|", "/\\[]{}()<>"), ("\\/", "[]{}()<>"), ("[]", "{}()<>"), ("{}", "()<>"), ("()", "<>")]);
        }
        for (low, high) in classes {
            if low.contains(l) && high.contains(r) {
                return Some(r);
            }
            if low.contains(r) && high.contains(l) {
                return Some(l);
            }
        }

        if rules.contains(SmushRules::OPPOSITE_PAIR)
            && matches!((l, r), ('[', ']') | (']', '[') | ('{', '}') | ('}', '{') | ('(', ')') | (')', '('))
        {
            return Some('|');
        }

        if rules.contains(SmushRules::BIG_X) {
            match (l, r) {
                ('/', '\\') => return Some('|'),
                ('\\', '/') => return Some('Y'),
                ('>', '<') => return Some('X'),
                _ => {}
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::figlet::parse_font;

    /// Two-row font where every glyph is `<ch><ch>` over `__`, except a few
    /// hand-made shapes used by the rule tests.
    fn tiny_font(layout: i32) -> FigletFont {
        let mut src = format!("flf2a$ 2 1 4 {layout} 0\n");
        for cp in 32u8..=126 {
            let c = cp as char;
            let (top, bottom) = match c {
                ' ' => ("$$".to_string(), "$$".to_string()),
                '@' => ("ab".to_string(), "cd".to_string()),
                _ => (format!("{c}{c}"), "__".to_string()),
            };
            // '#' as endmark so '@' may appear in glyph content.
            src.push_str(&format!("{top}#\n{bottom}##\n"));
        }
        parse_font(src.as_bytes()).unwrap().with_name("tiny")
    }

    fn smusher(rules: SmushRules) -> Fitter {
        Fitter { hardblank: '$', layout: SMUSH | u32::from(rules.bits()), prev_width: 3, cur_width: 3 }
    }

    #[test]
    fn single_glyph_full_width_is_identity() {
        let font = tiny_font(-1);
        let art = render(&font, "A", LayoutMode::FullWidth).unwrap();
        assert_eq!(art.lines, vec!["AA", "__"]);
        assert_eq!(art.answer_len, 1);
    }

    #[test]
    fn hardblanks_become_spaces() {
        let font = tiny_font(-1);
        let art = render(&font, "A A", LayoutMode::FullWidth).unwrap();
        assert_eq!(art.lines, vec!["AA  AA", "__  __"]);
    }

    #[test]
    fn equal_character_rule() {
        let f = smusher(SmushRules::EQUAL);
        assert_eq!(f.smush('|', '|'), Some('|'));
        assert_eq!(f.smush('|', '/'), None);
        assert_eq!(f.smush('$', '$'), None);
    }

    #[test]
    fn underscore_and_hierarchy_rules() {
        let f = smusher(SmushRules::LOWLINE);
        assert_eq!(f.smush('_', '|'), Some('|'));
        assert_eq!(f.smush('/', '_'), Some('/'));
        let f = smusher(SmushRules::HIERARCHY);
        assert_eq!(f.smush('|', '/'), Some('/'));
        assert_eq!(f.smush('{', '('), Some('('));
        assert_eq!(f.smush('<', '['), Some('<'));
        assert_eq!(f.smush('|', '|'), None);
    }

    #[test]
    fn pair_big_x_and_hardblank_rules() {
        let f = smusher(SmushRules::OPPOSITE_PAIR);
        assert_eq!(f.smush('[', ']'), Some('|'));
        assert_eq!(f.smush(')', '('), Some('|'));
        let f = smusher(SmushRules::BIG_X);
        assert_eq!(f.smush('/', '\\'), Some('|'));
        assert_eq!(f.smush('\\', '/'), Some('Y'));
        assert_eq!(f.smush('>', '<'), Some('X'));
        assert_eq!(f.smush('<', '>'), None);
        let f = smusher(SmushRules::HARDBLANK);
        assert_eq!(f.smush('$', '$'), Some('$'));
        assert_eq!(f.smush('$', 'x'), None);
    }

    #[test]
    fn universal_smushing_prefers_visible_and_later() {
        let f = smusher(SmushRules::empty());
        assert_eq!(f.smush('a', 'b'), Some('b'));
        assert_eq!(f.smush('$', 'b'), Some('b'));
        assert_eq!(f.smush('a', '$'), Some('a'));
    }

    #[test]
    fn narrow_glyphs_never_smush() {
        let mut f = smusher(SmushRules::empty());
        f.prev_width = 1;
        assert_eq!(f.smush('a', 'b'), None);
        assert_eq!(f.smush(' ', 'b'), Some('b'));
    }

    #[test]
    fn kerning_and_smushing_tighten() {
        let font = tiny_font(-1);
        let full = render(&font, "AB", LayoutMode::FullWidth).unwrap();
        let kern = render(&font, "AB", LayoutMode::Kerning).unwrap();
        let smush = render(&font, "AB", LayoutMode::UNIVERSAL_SMUSHING).unwrap();
        assert_eq!(full.lines, vec!["AABB", "____"]);
        assert_eq!(kern.lines, vec!["AABB", "____"]);
        assert_eq!(smush.lines, vec!["ABB", "___"]);
    }

    #[test]
    fn rejects_missing_and_empty() {
        let font = tiny_font(0);
        assert!(matches!(render(&font, "", LayoutMode::Kerning), Err(FigletError::EmptyText)));
        assert!(matches!(render(&font, "é", LayoutMode::Kerning), Err(FigletError::UnsupportedChar { ch: 'é', .. })));
        assert!(matches!(render(&font, "\n", LayoutMode::Kerning), Err(FigletError::UnsupportedChar { .. })));
    }
}
