//! Raw-data conversion into the canonical long CSV.

use std::path::Path;

use epibench::data::ingest::{
    import_wide_cumulative, read_canonical_csv, write_canonical_csv, IngestStats,
};
use epibench::data::Country;
use epibench::error::Result;

/// Source layouts the converter understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    /// Wide cumulative counts, one region per row, one date per column.
    JhuWide,
    /// The canonical long format itself (re-validated and rewritten).
    CanonicalLong,
}

/// Converts `raw` into the canonical long CSV at `out` and reports what was
/// read. `default_country` fills in the country for wide files that lack a
/// country column (single-country exports).
pub fn ingest(
    raw: &Path,
    format: IngestFormat,
    default_country: Option<Country>,
    out: &Path,
) -> Result<IngestStats> {
    let (regions, stats) = match format {
        IngestFormat::JhuWide => import_wide_cumulative(raw, default_country)?,
        IngestFormat::CanonicalLong => read_canonical_csv(raw)?,
    };
    write_canonical_csv(&regions, out)?;
    Ok(stats)
}
