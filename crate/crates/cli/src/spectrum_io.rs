//! Two-column spectrum files: energy and count, whitespace or comma
//! delimited, '#' starts a comment. Counts must be integers because the
//! model is a Poisson counting model; pass raw detector counts, not rates.

use std::path::Path;

use specdeconv_core::{Grid, Spectrum};

use crate::error::{Classify, CliError, CliResult, Phase};

/// Parse one spectrum file; rows are sorted ascending in energy with
/// (energy, count) pairs kept intact.
pub fn load_spectrum(path: &Path) -> CliResult<Spectrum> {
    let text = std::fs::read_to_string(path)
        .phase_ctx(Phase::Data, &format!("cannot read spectrum file {}", path.display()))?;
    let mut rows: Vec<(f64, u64)> = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let fields: Vec<&str> = line.split(',').flat_map(str::split_whitespace).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(CliError::data(format!(
                "expected two columns (energy, count) at line {line_no}, got {}",
                fields.len()
            )));
        }
        let energy: f64 = fields[0]
            .parse()
            .map_err(|_| CliError::data(format!("invalid energy at line {line_no}")))?;
        if !energy.is_finite() {
            return Err(CliError::data(format!("non-finite energy at line {line_no}")));
        }
        let count: u64 = fields[1]
            .parse()
            .map_err(|_| CliError::data(format!("non-integer count at line {line_no}")))?;
        rows.push((energy, count));
    }
    if rows.len() < 2 {
        return Err(CliError::data(format!("spectrum needs at least 2 rows, got {}", rows.len())));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("energies are finite"));
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(CliError::data(format!("duplicate energy {}", pair[0].0)));
        }
    }
    let (energies, counts): (Vec<f64>, Vec<u64>) = rows.into_iter().unzip();
    let grid = Grid::new(energies).phase(Phase::Data)?;
    Spectrum::new(grid, counts).phase(Phase::Data)
}

/// Write a spectrum in the same format `load_spectrum` reads.
///
/// Energies print with shortest round-trip precision, so a write/load
/// cycle is lossless.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum, header: &str) -> CliResult<()> {
    let mut out = String::new();
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for (&x, &y) in spectrum.grid().energies().iter().zip(spectrum.counts()) {
        out.push_str(&format!("{x} {y}\n"));
    }
    std::fs::write(path, out)
        .phase_ctx(Phase::Data, &format!("cannot write spectrum file {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load_str(content: &str) -> CliResult<Spectrum> {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        load_spectrum(file.path())
    }

    #[test]
    fn parses_two_columns() {
        let s = load_str("161.0 5\n161.04 7\n").unwrap();
        assert_eq!(s.grid().energies(), &[161.0, 161.04]);
        assert_eq!(s.counts(), &[5, 7]);
    }

    #[test]
    fn accepts_commas_comments_and_blank_lines() {
        let s = load_str("# header\n161.0, 5\n\n  161.04,7  # trailing note\n").unwrap();
        assert_eq!(s.grid().energies(), &[161.0, 161.04]);
        assert_eq!(s.counts(), &[5, 7]);
    }

    #[test]
    fn non_integer_count_is_rejected_with_line_number() {
        let err = load_str("161.0 5.5").unwrap_err();
        assert_eq!(err.phase, Phase::Data);
        assert!(err.error.to_string().contains("non-integer count at line 1"));

        let err = load_str("161.0 5\n161.04 -3\n").unwrap_err();
        assert!(err.error.to_string().contains("non-integer count at line 2"));
    }

    #[test]
    fn descending_rows_load_ascending_with_pairs_intact() {
        let s = load_str("163.0 9\n161.0 5\n162.0 7\n").unwrap();
        assert_eq!(s.grid().energies(), &[161.0, 162.0, 163.0]);
        assert_eq!(s.counts(), &[5, 7, 9]);
    }

    #[test]
    fn duplicates_short_files_and_bad_shapes_are_rejected() {
        assert!(load_str("161.0 5\n161.0 6\n")
            .unwrap_err()
            .error
            .to_string()
            .contains("duplicate energy"));
        assert!(load_str("161.0 5\n").unwrap_err().error.to_string().contains("at least 2 rows"));
        assert!(load_str("161.0\n162.0 4\n").unwrap_err().error.to_string().contains("line 1"));
        assert!(load_str("161.0 4 9\n162.0 4\n").unwrap_err().error.to_string().contains("line 1"));
        assert!(load_str("abc 4\n162.0 4\n")
            .unwrap_err()
            .error
            .to_string()
            .contains("invalid energy"));
    }

    #[test]
    fn write_then_load_is_lossless() {
        let grid = Grid::new(vec![158.0, 158.04, 160.123_456_789_012_35, 166.0]).unwrap();
        let spectrum = Spectrum::new(grid, vec![0, 3, 12, 1_000_000_007]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.txt");
        write_spectrum(&path, &spectrum, "round trip\nsecond line").unwrap();
        let back = load_spectrum(&path).unwrap();
        assert_eq!(back, spectrum);
    }
}
