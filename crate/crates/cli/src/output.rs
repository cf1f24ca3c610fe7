use std::io::{self, BufWriter, Write};
use std::path::Path;

use ranked_coalescent::{Error, Result};
use tempfile::NamedTempFile;

/// Runs `f` against standard output, or against a temporary file next to
/// `path` that is renamed over it only once `f` has succeeded.
pub fn with_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = NamedTempFile::new_in(dir)?;
            {
                let mut w = BufWriter::new(tmp.as_file_mut());
                f(&mut w)?;
                w.flush()?;
            }
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
            Ok(())
        }
    }
}

pub fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new().from_writer(w)
}
