//! 128x64 monochrome OLED rendering.
//!
//! Views are laid out on a 16x4 grid of 8x16 glyph cells, rasterized with a
//! fixed bitmap font, and projected back to ASCII for golden comparisons.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use font8x8::legacy::BASIC_LEGACY;

pub const WIDTH: usize = 128;
pub const HEIGHT: usize = 64;
pub const COLS: usize = 16;
pub const ROWS: usize = 4;
pub const CELL_W: usize = 8;
pub const CELL_H: usize = 16;

// Raster code writes whole bytes per glyph row.
const _: () = assert!(CELL_W == 8 && WIDTH % 8 == 0);

/// Items visible at once in the item list.
pub const WINDOW: usize = 2;
pub const NAME_WIDTH: usize = 10;
pub const COST_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Char(u8),
    ArrowUp,
    ArrowDown,
    /// Replacement for anything the font cannot draw.
    Block,
}

impl Cell {
    pub const BLANK: Cell = Cell::Char(b' ');

    pub fn from_char(c: char) -> Cell {
        if c.is_ascii_graphic() || c == ' ' {
            Cell::Char(c as u8)
        } else {
            Cell::Block
        }
    }

    pub fn to_ascii(self) -> char {
        match self {
            Cell::Char(b) => b as char,
            Cell::ArrowUp => '^',
            Cell::ArrowDown => 'v',
            Cell::Block => '#',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextGrid {
    pub cells: [[Cell; COLS]; ROWS],
}

impl Default for TextGrid {
    fn default() -> Self {
        Self {
            cells: [[Cell::BLANK; COLS]; ROWS],
        }
    }
}

impl TextGrid {
    /// Writes `text` starting at `col`, clipping at the right edge.
    pub fn put(&mut self, row: usize, col: usize, text: &str) {
        for (i, c) in text.chars().enumerate() {
            if col + i >= COLS {
                break;
            }
            self.cells[row][col + i] = Cell::from_char(c);
        }
    }

    pub fn put_centered(&mut self, row: usize, text: &str) {
        let len = text.chars().count().min(COLS);
        self.put(row, (COLS - len) / 2, text);
    }

    pub fn put_right(&mut self, row: usize, text: &str) {
        let len = text.chars().count().min(COLS);
        self.put(row, COLS - len, text);
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(ROWS * (COLS + 1));
        for row in &self.cells {
            out.extend(row.iter().map(|c| c.to_ascii()));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListRow {
    pub name: String,
    pub cost: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisplayView {
    Splash,
    WifiStatus {
        ssid: String,
        joined: bool,
    },
    ServerStatus {
        host: String,
        port: u16,
        connected: bool,
    },
    SwipeCardPrompt,
    UserCard {
        name: String,
        cash: i64,
    },
    SwipeTagPrompt,
    ItemList {
        window: Vec<ListRow>,
        /// Index of the first visible item in the full list.
        first: usize,
        selected: Option<usize>,
        has_above: bool,
        has_below: bool,
        total: i64,
        count: usize,
    },
    Notice(String),
    Paying,
    Done,
}

impl DisplayView {
    /// Builds the item-list view for `items` (name, cost) with the window
    /// starting at `scroll`. An empty list shows the tag prompt.
    pub fn item_list(items: &[(&str, i64)], selected: Option<usize>, scroll: usize) -> Self {
        if items.is_empty() {
            return DisplayView::SwipeTagPrompt;
        }
        let scroll = scroll.min(items.len().saturating_sub(1));
        let end = (scroll + WINDOW).min(items.len());
        let window = (scroll..end)
            .map(|i| ListRow {
                name: items[i].0.to_string(),
                cost: items[i].1,
            })
            .collect();
        DisplayView::ItemList {
            window,
            first: scroll,
            selected,
            has_above: scroll > 0,
            has_below: end < items.len(),
            total: items.iter().map(|(_, c)| c).sum(),
            count: items.len(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DisplayView::Splash => "splash",
            DisplayView::WifiStatus { .. } => "wifi",
            DisplayView::ServerStatus { .. } => "server",
            DisplayView::SwipeCardPrompt => "swipe_card",
            DisplayView::UserCard { .. } => "user",
            DisplayView::SwipeTagPrompt => "swipe_tag",
            DisplayView::ItemList { .. } => "items",
            DisplayView::Notice(_) => "notice",
            DisplayView::Paying => "paying",
            DisplayView::Done => "done",
        }
    }
}

fn fit(text: &str, width: usize) -> String {
    let mut s: String = text.chars().take(width).collect();
    while s.chars().count() < width {
        s.push(' ');
    }
    s
}

fn cost_field(cost: i64) -> String {
    let digits = cost.to_string();
    if cost < 0 || digits.len() > COST_WIDTH {
        "#".repeat(COST_WIDTH)
    } else {
        format!("{digits:>COST_WIDTH$}")
    }
}

/// Splits `text` on spaces into at most `rows` lines of `COLS` glyphs.
fn wrap(text: &str, rows: usize) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        match lines.last_mut() {
            Some(line) if line.chars().count() + 1 + word.chars().count() <= COLS => {
                line.push(' ');
                line.push_str(word);
            }
            _ => lines.push(word.chars().take(COLS).collect()),
        }
    }
    lines.truncate(rows);
    lines
}

pub fn layout(view: &DisplayView) -> TextGrid {
    let mut g = TextGrid::default();
    match view {
        DisplayView::Splash => {
            g.put_centered(1, "SMART CART");
            g.put_centered(2, "STARTING");
        }
        DisplayView::WifiStatus { ssid, joined } => {
            g.put_centered(0, "WIFI");
            g.put_centered(1, ssid);
            g.put_centered(2, if *joined { "CONNECTED" } else { "JOINING..." });
        }
        DisplayView::ServerStatus {
            host,
            port,
            connected,
        } => {
            g.put_centered(0, "SERVER");
            g.put_centered(1, host);
            g.put_centered(2, &format!("PORT {port}"));
            g.put_centered(
                3,
                if *connected {
                    "CONNECTED"
                } else {
                    "CONNECTING..."
                },
            );
        }
        DisplayView::SwipeCardPrompt => {
            g.put_centered(1, "SWIPE");
            g.put_centered(2, "ID CARD");
        }
        DisplayView::UserCard { name, cash } => {
            g.put_centered(0, "WELCOME");
            for (i, line) in wrap(name, 2).iter().enumerate() {
                g.put_centered(1 + i, line);
            }
            g.put_centered(3, &format!("CASH {cash}"));
        }
        DisplayView::SwipeTagPrompt => g.put_centered(1, "SWIPE TAG"),
        DisplayView::ItemList {
            window,
            first,
            selected,
            has_above,
            has_below,
            total,
            count,
        } => {
            g.put(0, 0, "ITEMS");
            for (i, row) in window.iter().take(WINDOW).enumerate() {
                let marker = if *selected == Some(first + i) {
                    ">"
                } else {
                    " "
                };
                let text = format!(
                    "{marker}{}{}",
                    fit(&row.name, NAME_WIDTH),
                    cost_field(row.cost)
                );
                g.put(1 + i, 0, &text);
            }
            if *has_above {
                g.cells[1][COLS - 1] = Cell::ArrowUp;
            }
            if *has_below {
                g.cells[2][COLS - 1] = Cell::ArrowDown;
            }
            g.put(3, 0, &total.to_string());
            g.put_right(3, &count.to_string());
        }
        DisplayView::Notice(text) => {
            for (i, line) in wrap(text, 2).iter().enumerate() {
                g.put_centered(1 + i, line);
            }
        }
        DisplayView::Paying => {
            g.put_centered(1, "PAYING...");
        }
        DisplayView::Done => {
            g.put_centered(1, "PAYMENT");
            g.put_centered(2, "COMPLETE");
        }
    }
    g
}

/// 1-bit frame, row-major, most significant bit leftmost in each byte.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    bytes: [u8; WIDTH * HEIGHT / 8],
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({} lit)", self.lit_pixels())
    }
}

impl Default for Frame {
    fn default() -> Self {
        Self {
            bytes: [0; WIDTH * HEIGHT / 8],
        }
    }
}

impl Frame {
    pub fn get(&self, x: usize, y: usize) -> bool {
        let idx = y * WIDTH + x;
        self.bytes[idx / 8] & (0x80 >> (idx % 8)) != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let idx = y * WIDTH + x;
        let mask = 0x80 >> (idx % 8);
        if on {
            self.bytes[idx / 8] |= mask;
        } else {
            self.bytes[idx / 8] &= !mask;
        }
    }

    pub fn lit_pixels(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Binary PBM (`P4`).
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{WIDTH} {HEIGHT}\n").into_bytes();
        out.extend_from_slice(&self.bytes);
        out
    }
}

/// Rows of one 8x16 glyph; bit 0 of each row is the leftmost pixel.
pub type Glyph = [u8; CELL_H];

const ARROW_UP: Glyph = [
    0x00, 0x00, 0x18, 0x18, 0x3c, 0x3c, 0x7e, 0x7e, 0xff, 0xff, 0x18, 0x18, 0x18, 0x18, 0x00, 0x00,
];
const ARROW_DOWN: Glyph = [
    0x00, 0x00, 0x18, 0x18, 0x18, 0x18, 0xff, 0xff, 0x7e, 0x7e, 0x3c, 0x3c, 0x18, 0x18, 0x00, 0x00,
];
const BLOCK: Glyph = [0xff; CELL_H];

pub fn glyph(cell: Cell) -> Glyph {
    match cell {
        Cell::Char(b) if (0x20..0x7f).contains(&b) => {
            let rows = BASIC_LEGACY[b as usize];
            let mut g = [0u8; CELL_H];
            for (i, row) in rows.iter().enumerate() {
                g[2 * i] = *row;
                g[2 * i + 1] = *row;
            }
            g
        }
        Cell::Char(_) | Cell::Block => BLOCK,
        Cell::ArrowUp => ARROW_UP,
        Cell::ArrowDown => ARROW_DOWN,
    }
}

pub fn rasterize(grid: &TextGrid) -> Frame {
    let mut frame = Frame::default();
    for (r, row) in grid.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            // Cells are byte-aligned; glyph rows are LSB-left, frame bytes MSB-left.
            for (dy, bits) in glyph(*cell).iter().enumerate() {
                frame.bytes[cell_byte(r, c, dy)] = bits.reverse_bits();
            }
        }
    }
    frame
}

fn cell_byte(row: usize, col: usize, dy: usize) -> usize {
    (row * CELL_H + dy) * (WIDTH / 8) + col
}

fn cell_bits(frame: &Frame, row: usize, col: usize) -> Glyph {
    let mut g = [0u8; CELL_H];
    for (dy, bits) in g.iter_mut().enumerate() {
        *bits = frame.bytes[cell_byte(row, col, dy)].reverse_bits();
    }
    g
}

fn all_cells() -> impl Iterator<Item = Cell> {
    (0x20u8..0x7f)
        .map(Cell::Char)
        .chain([Cell::ArrowUp, Cell::ArrowDown, Cell::Block])
}

/// Inverse of [`rasterize`] by exact glyph lookup. Cells that match no
/// glyph come back as [`Cell::Block`].
pub fn recognize(frame: &Frame) -> TextGrid {
    static TABLE: OnceLock<HashMap<Glyph, Cell>> = OnceLock::new();
    // On duplicate glyphs the earlier cell wins.
    let table = TABLE.get_or_init(|| {
        let mut t = HashMap::new();
        for c in all_cells() {
            t.entry(glyph(c)).or_insert(c);
        }
        t
    });
    let mut grid = TextGrid::default();
    for r in 0..ROWS {
        for c in 0..COLS {
            let bits = cell_bits(frame, r, c);
            grid.cells[r][c] = table.get(&bits).copied().unwrap_or(Cell::Block);
        }
    }
    grid
}

pub fn frame_to_ascii(frame: &Frame) -> String {
    recognize(frame).to_ascii()
}

pub fn render(view: &DisplayView) -> Frame {
    rasterize(&layout(view))
}

/// Checkout-walkthrough stage (1 to 10) a view corresponds to, where one applies.
pub fn checkout_stage(view: &DisplayView) -> Option<u8> {
    Some(match view {
        DisplayView::Splash => 1,
        DisplayView::WifiStatus { .. } => 2,
        DisplayView::ServerStatus { .. } => 3,
        DisplayView::SwipeCardPrompt => 4,
        DisplayView::UserCard { .. } => 5,
        DisplayView::SwipeTagPrompt => 6,
        DisplayView::ItemList { selected, .. } => 7 + selected.unwrap_or(0).min(2) as u8,
        DisplayView::Paying | DisplayView::Done => 10,
        DisplayView::Notice(_) => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Vec<(&'static str, i64)> {
        vec![("Milk", 350), ("Bread", 120), ("Apples", 480)]
    }

    #[test]
    fn blank_grid_is_dark() {
        let frame = rasterize(&TextGrid::default());
        assert_eq!(frame.lit_pixels(), 0);
        assert_eq!(
            frame_to_ascii(&frame),
            format!("{}\n", " ".repeat(16)).repeat(4)
        );
    }

    #[test]
    fn single_glyph_at_origin() {
        let mut grid = TextGrid::default();
        grid.put(0, 0, "A");
        let frame = rasterize(&grid);
        let expected = glyph(Cell::Char(b'A'));
        assert_eq!(cell_bits(&frame, 0, 0), expected);
        assert_eq!(
            frame.lit_pixels(),
            expected.iter().map(|b| b.count_ones()).sum::<u32>()
        );
    }

    #[test]
    fn glyphs_are_distinct() {
        let cells: Vec<Cell> = all_cells().collect();
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                assert_ne!(glyph(*a), glyph(*b), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn unsupported_glyph_is_block() {
        let mut grid = TextGrid::default();
        grid.put(0, 0, "é");
        assert_eq!(grid.cells[0][0], Cell::Block);
        assert_eq!(glyph(Cell::Char(0x07)), BLOCK);
    }

    #[test]
    fn first_item_selected_with_hidden_third() {
        let view = DisplayView::item_list(&three(), Some(0), 0);
        let ascii = layout(&view).to_ascii();
        assert_eq!(
            ascii,
            "ITEMS           \n\
             >Milk       350 \n \
             Bread      120v\n\
             950            3\n"
        );
        assert_eq!(checkout_stage(&view), Some(7));
    }

    #[test]
    fn third_item_scrolls_window() {
        let view = DisplayView::item_list(&three(), Some(2), 1);
        let DisplayView::ItemList {
            has_above,
            has_below,
            ref window,
            first,
            ..
        } = view
        else {
            panic!()
        };
        assert!(has_above && !has_below);
        assert_eq!(first, 1);
        assert_eq!(window[0].name, "Bread");
        assert_eq!(checkout_stage(&view), Some(9));
        assert_eq!(
            checkout_stage(&DisplayView::item_list(&three(), Some(1), 0)),
            Some(8)
        );
        assert_eq!(
            checkout_stage(&DisplayView::item_list(&three(), Some(1), 1)),
            Some(8)
        );
    }

    #[test]
    fn empty_list_prompts_for_tag() {
        let view = DisplayView::item_list(&[], None, 0);
        assert_eq!(view, DisplayView::SwipeTagPrompt);
        assert_eq!(
            layout(&view).to_ascii().lines().nth(1),
            Some("   SWIPE TAG    ")
        );
    }

    #[test]
    fn long_names_and_costs_clip() {
        let view = DisplayView::item_list(&[("Extra long product", 123_456)], Some(0), 0);
        assert_eq!(
            layout(&view).to_ascii().lines().nth(1),
            Some(">Extra long#### ")
        );
    }

    #[test]
    fn user_card_wraps_name() {
        let grid = layout(&DisplayView::UserCard {
            name: "Yerlan Berdaliyev".into(),
            cash: 5000,
        });
        let ascii = grid.to_ascii();
        let lines: Vec<&str> = ascii.lines().collect();
        assert_eq!(lines[1].trim(), "Yerlan");
        assert_eq!(lines[2].trim(), "Berdaliyev");
        assert_eq!(lines[3].trim(), "CASH 5000");
    }

    #[test]
    fn projection_is_consistent() {
        let views = [
            DisplayView::Splash,
            DisplayView::ServerStatus {
                host: "184.173.163.133".into(),
                port: 80,
                connected: false,
            },
            DisplayView::item_list(&three(), Some(1), 1),
            DisplayView::Notice("UNKNOWN TAG".into()),
        ];
        for view in views {
            let grid = layout(&view);
            let frame = rasterize(&grid);
            assert_eq!(frame_to_ascii(&frame), grid.to_ascii());
            assert_eq!(rasterize(&grid), frame);
        }
    }

    #[test]
    fn pbm_header() {
        let pbm = render(&DisplayView::Done).to_pbm();
        assert!(pbm.starts_with(b"P4\n128 64\n"));
        assert_eq!(pbm.len(), 10 + 1024);
    }
}
