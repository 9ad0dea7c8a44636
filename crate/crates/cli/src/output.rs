//! CSV writing: 12 significant digits, `\n` line endings, header always present.

use std::fmt::Write as _;

pub fn number(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    indexed_csv(header, rows.into_iter().map(|r| (None, r)))
}

/// Rows optionally led by an integer label column.
pub fn indexed_csv(
    header: &[&str],
    rows: impl IntoIterator<Item = (Option<usize>, Vec<f64>)>,
) -> String {
    let mut text = header.join(",");
    text.push('\n');
    for (label, row) in rows {
        let mut line: Vec<String> = label.map(|i| i.to_string()).into_iter().collect();
        line.extend(row.into_iter().map(number));
        let _ = writeln!(text, "{}", line.join(","));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(number(0.0), "0.00000000000e0");
        assert_eq!(number(-1234.5), "-1.23450000000e3");
        assert_eq!(number(1.0 / 3.0), "3.33333333333e-1");
        let text = csv(&["a", "b"], vec![vec![1.0, 2.0]]);
        assert_eq!(text, "a,b\n1.00000000000e0,2.00000000000e0\n");
        assert_eq!(csv(&["a"], Vec::<Vec<f64>>::new()), "a\n");
        let text = indexed_csv(&["j", "b"], vec![(Some(3), vec![0.5])]);
        assert_eq!(text, "j,b\n3,5.00000000000e-1\n");
    }
}
