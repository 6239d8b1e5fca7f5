//! Subset index files: a `split=<train|test>` header line, then one integer
//! per line. Blank lines are ignored.

use std::io::Write;
use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::types::{Split, SubsetIndex};

pub fn parse_subset(text: &str, path: &Path) -> Result<SubsetIndex> {
    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing `split=` header".into()))?;
    let split: Split = header
        .trim()
        .strip_prefix("split=")
        .ok_or_else(|| parse_err(hline + 1, format!("expected `split=<train|test>`, got `{header}`")))?
        .parse()
        .map_err(|e: Error| parse_err(hline + 1, e.to_string()))?;
    let mut indices = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (i, line) in lines {
        let v: usize = line
            .trim()
            .parse()
            .map_err(|e| parse_err(i + 1, format!("`{}`: {e}", line.trim())))?;
        if let Some(first) = seen.insert(v, i + 1) {
            return Err(parse_err(i + 1, format!("duplicate index {v} (first on line {first})")));
        }
        indices.push(v);
    }
    SubsetIndex::new(split, indices)
}

pub fn read_subset(path: &Path) -> Result<SubsetIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_subset(&text, path)
}

pub fn write_subset(path: &Path, subset: &SubsetIndex) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "split={}", subset.split())?;
        for i in subset.indices() {
            writeln!(w, "{i}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_sorts() {
        let s = parse_subset("split=test\n5\n1\n\n3\n", Path::new("s")).unwrap();
        assert_eq!(s.split(), Split::Test);
        assert_eq!(s.indices(), &[1, 3, 5]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse_subset("1\n2\n", Path::new("s")), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_subset("split=val\n", Path::new("s")), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_subset("split=train\n1\nx\n", Path::new("s")), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_subset("split=train\n1\n1\n", Path::new("s")), Err(Error::Parse { line: 3, .. })));
        assert!(parse_subset("", Path::new("s")).is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tail.idx");
        let s = SubsetIndex::new(Split::Train, vec![9, 0, 4]).unwrap();
        write_subset(&p, &s).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "split=train\n0\n4\n9\n");
        assert_eq!(read_subset(&p).unwrap(), s);
    }
}
