//! Output-file helpers: configuration echo headers and CSV assembly.
//!
//! Every emitted file starts with a `#` comment row carrying the tool
//! version and the full effective configuration, so results are
//! reproducible from the file alone. Floats are rendered with 17
//! significant digits; identical configurations produce byte-identical
//! files.

use std::path::Path;

use crate::CliError;

pub use tokvar_core::trace::fmt_f64;

/// `# tokvar <version> | <command> | <echo>`
pub fn header_line(command: &str, echo: &str) -> String {
    format!("# tokvar {} | {command} | {echo}\n", env!("CARGO_PKG_VERSION"))
}

/// A CSV table prefixed by the header comment row.
pub struct CsvTable {
    buf: Vec<u8>,
}

impl CsvTable {
    pub fn new(command: &str, echo: &str, columns: &[&str]) -> CsvTable {
        let mut buf = header_line(command, echo).into_bytes();
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns).expect("in-memory write");
        w.flush().expect("in-memory flush");
        drop(w);
        CsvTable { buf }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(&mut self.buf);
        w.write_record(fields).expect("in-memory write");
        w.flush().expect("in-memory flush");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Writes fully assembled bytes in one call, so failures never leave a
/// partial file behind.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Optional float: empty field when absent.
pub fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
