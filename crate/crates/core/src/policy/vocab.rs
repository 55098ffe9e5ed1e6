use crate::env::GridSpec;

/// Decoded token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Think,
    Tool,
    Coord(u8),
    Fine(u8),
    Coarse(u8),
    End,
}

/// Token id layout: `THINK, TOOL, COORD_0..=COORD_K, FINE_*, COARSE_*, END`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    coords: usize,
    fine: usize,
    coarse: usize,
}

impl Vocabulary {
    pub fn new(spec: &GridSpec) -> Self {
        Self {
            coords: spec.low_height().max(spec.low_width()) + 1,
            fine: spec.fine,
            coarse: spec.coarse,
        }
    }

    pub fn len(&self) -> usize {
        3 + self.coords + self.fine + self.coarse
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn think(&self) -> usize {
        0
    }

    pub fn tool(&self) -> usize {
        1
    }

    pub fn coord(&self, value: usize) -> usize {
        debug_assert!(value < self.coords);
        2 + value
    }

    pub fn fine_answer(&self, glyph: u8) -> usize {
        2 + self.coords + glyph as usize
    }

    pub fn coarse_answer(&self, class: u8) -> usize {
        2 + self.coords + self.fine + class as usize
    }

    pub fn end(&self) -> usize {
        self.len() - 1
    }

    pub fn coord_count(&self) -> usize {
        self.coords
    }

    /// Ids of every answer token, fine glyphs first.
    pub fn answers(&self) -> std::ops::Range<usize> {
        let start = 2 + self.coords;
        start..start + self.fine + self.coarse
    }

    pub fn is_answer(&self, id: usize) -> bool {
        self.answers().contains(&id)
    }

    pub fn decode(&self, id: usize) -> Option<Token> {
        let coord0 = 2;
        let fine0 = coord0 + self.coords;
        let coarse0 = fine0 + self.fine;
        Some(match id {
            0 => Token::Think,
            1 => Token::Tool,
            i if i < fine0 => Token::Coord((i - coord0) as u8),
            i if i < coarse0 => Token::Fine((i - fine0) as u8),
            i if i < coarse0 + self.coarse => Token::Coarse((i - coarse0) as u8),
            i if i == self.end() => Token::End,
            _ => return None,
        })
    }

    pub fn label(&self, id: usize) -> String {
        match self.decode(id) {
            Some(Token::Think) => "THINK".into(),
            Some(Token::Tool) => "TOOL".into(),
            Some(Token::Coord(v)) => format!("C{v}"),
            Some(Token::Fine(g)) => format!("ANSWER_F{g}"),
            Some(Token::Coarse(c)) => format!("ANSWER_C{c}"),
            Some(Token::End) => "END".into(),
            None => format!("<{id}?>"),
        }
    }
}
