//! Versioned CSV output.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// First line of every CSV this crate writes.
pub const CSV_VERSION_LINE: &str = "# kprio-csv v1";

/// Writes the version line, a header row and one row per record.
pub fn write_csv<W: Write, T: Serialize>(mut out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
