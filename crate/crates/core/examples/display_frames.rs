//! Renders item lists to the 128x64 frame buffer, prints them as text and
//! writes one as a PBM image.

use smartcart::display::{frame_to_ascii, layout, recognize, render, DisplayView};

fn main() -> std::io::Result<()> {
    let items = [
        ("Milk", 350),
        ("Bread", 120),
        ("Apples", 480),
        ("Chocolate cake", 12_000),
    ];
    for (selected, scroll) in [(0, 0), (1, 0), (2, 1), (3, 2)] {
        let view = DisplayView::item_list(&items, Some(selected), scroll);
        let frame = render(&view);
        println!("selected {selected}, scroll {scroll}:");
        for line in frame_to_ascii(&frame).lines() {
            println!("  |{line}|");
        }
        // Reading the glyphs back recovers the text grid.
        assert_eq!(recognize(&frame), layout(&view));
    }

    let path = std::env::temp_dir().join("smartcart_items.pbm");
    std::fs::write(
        &path,
        render(&DisplayView::item_list(&items, Some(0), 0)).to_pbm(),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
