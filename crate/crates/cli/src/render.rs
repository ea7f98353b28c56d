//! Fixed-width text rendering of labeled classical rows.
//!
//! One column group `A1 E2 E3 B4 c/p E` per view, after a row-number
//! column. The label text stands in for background colours.

use std::fmt::Write;

use crate::io::ClassicalRecord;

const GROUP_HEADER: &str = "A1 E2 E3 B4 c/p E ";

/// Renders the selected views (0-based indices) of `records`.
pub fn render_table(records: &[ClassicalRecord], views: &[usize]) -> String {
    let mut out = String::new();
    let mut header = format!("{:>3}", "#");
    for _ in views {
        header.push_str(" | ");
        header.push_str(GROUP_HEADER);
    }
    out.push_str(header.trim_end());
    out.push('\n');
    for r in records {
        let mut line = format!("{:>3}", r.row.row_id());
        let [a1, e2, e3, b4] = r.row.bits();
        for &v in views {
            let (cp, label) = r.views[v];
            write!(line, " | {a1:>2} {e2:>2} {e3:>2} {b4:>2} {:>3} {:<2}", cp.symbol(), label.as_str())
                .expect("writing to a String");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
