//! Sample files: a header `x1,...,xr,y1,...,yq`, then one sample per row.

use std::io::Write;
use std::path::Path;

use tdep::measures::JointDiscreteMeasure;

use crate::error::{Error, Result};

/// Dimensions implied by a header, when it follows the `x1..xr,y1..yq` naming.
fn header_dims(header: &csv::StringRecord) -> Option<(usize, usize)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let r = names.iter().take_while(|s| s.starts_with('x')).count();
    let expected = (1..=r).map(|i| format!("x{i}")).chain((1..=names.len() - r).map(|i| format!("y{i}")));
    expected.eq(names.iter().map(|s| s.to_string())).then_some((r, names.len() - r))
}

/// Reads an equally weighted empirical measure. Explicit dimensions override the header.
pub fn read_samples(path: &Path, x_dim: Option<usize>, y_dim: Option<usize>) -> Result<JointDiscreteMeasure> {
    let file = std::fs::File::open(path).map_err(|source| Error::Read { path: path.to_owned(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers()?.clone();
    let (r, q) = match (x_dim, y_dim, header_dims(&header)) {
        (Some(r), Some(q), _) => (r, q),
        (None, None, Some(dims)) => dims,
        (Some(r), None, _) => (r, header.len().saturating_sub(r)),
        (None, Some(q), _) => (header.len().saturating_sub(q), q),
        (None, None, None) => {
            return Err(Error::Format("header is not x1..xr,y1..yq; pass --x-dim and --y-dim".into()));
        }
    };
    if r == 0 || q == 0 || r + q != header.len() {
        return Err(Error::Format(format!("{} columns do not split into x-dim {r} and y-dim {q}", header.len())));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}, column {}: '{field}' is not a number", line + 1, c + 1)))?;
            if c < r { x.push(v) } else { y.push(v) }
        }
    }
    let n = x.len() / r;
    if n == 0 {
        return Err(Error::Format("no samples".into()));
    }
    Ok(JointDiscreteMeasure::from_flat(r, q, x, y, vec![1.0 / n as f64; n])?)
}

/// Writes the atoms of `gamma` in the sample format, ignoring weights.
pub fn write_samples(gamma: &JointDiscreteMeasure, out: impl Write) -> Result<()> {
    let (r, q) = (gamma.x_dim(), gamma.y_dim());
    let mut writer = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=r).map(|i| format!("x{i}")).chain((1..=q).map(|i| format!("y{i}"))).collect();
    writer.write_record(&header)?;
    for i in 0..gamma.len() {
        // Display prints the shortest representation that parses back to the same f64.
        writer.write_record(gamma.x(i).iter().chain(gamma.y(i)).map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_samples_read_back_bit_for_bit() {
        let pairs = [(0.1, 1.0 / 3.0), (-2.5e-17, 7.0), (1e300, f64::MIN_POSITIVE)];
        let gamma = JointDiscreteMeasure::from_pairs(&pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_samples(&gamma, std::fs::File::create(&path).unwrap()).unwrap();
        let back = read_samples(&path, None, None).unwrap();
        assert_eq!(back.x_coords(), gamma.x_coords());
        assert_eq!(back.y_coords(), gamma.y_coords());
        assert_eq!(back.weights(), gamma.weights());
    }

    #[test]
    fn header_names_give_the_dimensions() {
        let header = csv::StringRecord::from(vec!["x1", "x2", "y1"]);
        assert_eq!(header_dims(&header), Some((2, 1)));
        assert_eq!(header_dims(&csv::StringRecord::from(vec!["a", "b"])), None);
        assert_eq!(header_dims(&csv::StringRecord::from(vec!["x1", "y2"])), None);
    }

    #[test]
    fn ragged_or_non_numeric_rows_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,y1\n1,2\n3,oops\n").unwrap();
        assert_eq!(read_samples(&path, None, None).unwrap_err().exit_code(), 2);
        std::fs::write(&path, "x1,y1\n1,2\n3\n").unwrap();
        assert_eq!(read_samples(&path, None, None).unwrap_err().exit_code(), 2);
    }
}
