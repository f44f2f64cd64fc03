use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use setbo::Layout;

/// Parses one `x y` pair (metres) per line; blank lines and `#` comments are ignored.
pub fn parse_layout(text: &str) -> anyhow::Result<Layout> {
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.len() != 2 {
            bail!("line {}: expected `x y`, found {:?}", n + 1, raw);
        }
        let parse = |s: &str| -> anyhow::Result<f64> {
            let v: f64 = s.parse().with_context(|| format!("line {}: `{s}` is not a number", n + 1))?;
            if !v.is_finite() {
                bail!("line {}: coordinate must be finite", n + 1);
            }
            Ok(v)
        };
        points.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(Layout::from_xy(&points))
}

pub fn read_layout(path: &Path) -> anyhow::Result<Layout> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read layout {}", path.display()))?;
    parse_layout(&text).with_context(|| format!("malformed layout file {}", path.display()))
}

pub fn format_layout(layout: &Layout, header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    for t in layout.turbines() {
        let _ = writeln!(s, "{} {}", t.x, t.y);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let l = parse_layout("# farm\n\n0 0\n246.5 10 # trailing\n 1e3\t2e3\n").unwrap();
        assert_eq!(l, Layout::from_xy(&[(0.0, 0.0), (246.5, 10.0), (1000.0, 2000.0)]));
        assert!(parse_layout("").unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_layout("1 2 3").is_err());
        assert!(parse_layout("1 x").is_err());
        assert!(parse_layout("nan 1").is_err());
    }

    #[test]
    fn format_round_trips() {
        let l = Layout::from_xy(&[(0.1, 0.2), (492.0, 246.0)]);
        let text = format_layout(&l, &["layout 3".to_string()]);
        assert!(text.starts_with("# layout 3\n"));
        assert_eq!(parse_layout(&text).unwrap(), l);
    }
}
