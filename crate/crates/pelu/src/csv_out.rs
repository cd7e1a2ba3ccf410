use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::CliError;

/// Writes a header and rows of already formatted fields, one record per
/// line, comma separated.
pub(crate) fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            writeln!(out, "{}", row.as_ref().join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}
