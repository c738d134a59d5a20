//! 5x7 bitmap glyphs for the beat symbols, used only by the debug overlay.

const UNKNOWN: [u8; 7] = [0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111];

fn glyph(symbol: char) -> [u8; 7] {
    match symbol {
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'e' => [0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110],
        'j' => [0b00010, 0b00000, 0b00110, 0b00010, 0b00010, 0b10010, 0b01100],
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'a' => [0b00000, 0b00000, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        '/' => [0b00001, 0b00010, 0b00010, 0b00100, 0b01000, 0b01000, 0b10000],
        'f' => [0b00110, 0b01001, 0b01000, 0b11100, 0b01000, 0b01000, 0b01000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        _ => UNKNOWN,
    }
}

/// Lit pixel offsets `(dx, dy)` of a glyph scaled by `scale`, origin top-left.
pub(crate) fn glyph_pixels(symbol: char, scale: u32) -> impl Iterator<Item = (u32, u32)> {
    let rows = glyph(symbol);
    (0..7u32).flat_map(move |r| {
        (0..5u32).filter(move |c| rows[r as usize] & (0b10000 >> c) != 0).flat_map(move |c| {
            (0..scale).flat_map(move |sy| (0..scale).map(move |sx| (c * scale + sx, r * scale + sy)))
        })
    })
}

pub(crate) const GLYPH_WIDTH: u32 = 5;
pub(crate) const GLYPH_HEIGHT: u32 = 7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct() {
        let symbols = ['N', 'L', 'R', 'e', 'j', 'A', 'a', 'J', 'S', 'V', 'E', 'F', '/', 'f', 'Q'];
        for (i, a) in symbols.iter().enumerate() {
            assert_ne!(glyph(*a), UNKNOWN);
            for b in &symbols[i + 1..] {
                assert_ne!(glyph(*a), glyph(*b), "{a} vs {b}");
            }
        }
        assert_eq!(glyph_pixels('L', 2).count(), 11 * 4);
    }
}
