//! Signal and measurement-matrix file formats.
//!
//! Signals are CSV with `re,im` per row (an optional header row is skipped)
//! or little-endian binary: a `u64` sample count followed by interleaved
//! `f64` real and imaginary parts. Matrices use the binary layout with a
//! `u64` row count and `u64` column count, entries row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::compressive::MeasurementMatrix;
use crate::error::{NompError, Result};
use crate::signal::ComplexSignal;

/// Upper bound on the sample count accepted from a binary header.
const MAX_BINARY_LEN: u64 = 1 << 32;

fn parse_err(msg: impl Into<String>) -> NompError {
    NompError::Parse(msg.into())
}

pub fn read_signal_csv<R: Read>(reader: R) -> Result<ComplexSignal> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(parse_err(format!(
                "row {}: expected 2 columns (re, im), found {}",
                i + 1,
                rec.len()
            )));
        }
        let re = rec[0].parse::<f64>();
        let im = rec[1].parse::<f64>();
        match (re, im) {
            (Ok(re), Ok(im)) => samples.push(Complex64::new(re, im)),
            _ if i == 0 => continue,
            _ => {
                return Err(parse_err(format!(
                    "row {}: cannot parse {:?}, {:?} as numbers",
                    i + 1,
                    &rec[0],
                    &rec[1]
                )))
            }
        }
    }
    ComplexSignal::new(samples)
}

pub fn write_signal_csv<W: Write>(writer: W, signal: &[Complex64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["re", "im"])?;
    for z in signal {
        w.write_record([format!("{:.16e}", z.re), format!("{:.16e}", z.im)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| parse_err(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_complex<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut bytes = vec![0u8; count * 16];
    r.read_exact(&mut bytes)
        .map_err(|e| parse_err(format!("expected {count} complex samples: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(parse_err("trailing bytes after the declared samples"));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}

fn write_complex<W: Write>(w: &mut W, data: &[Complex64]) -> Result<()> {
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_signal_bin<R: Read>(mut reader: R) -> Result<ComplexSignal> {
    let len = read_u64(&mut reader)?;
    if len > MAX_BINARY_LEN {
        return Err(parse_err(format!("implausible sample count {len}")));
    }
    ComplexSignal::new(read_complex(&mut reader, len as usize)?)
}

pub fn write_signal_bin<W: Write>(mut writer: W, signal: &[Complex64]) -> Result<()> {
    writer.write_all(&(signal.len() as u64).to_le_bytes())?;
    write_complex(&mut writer, signal)?;
    writer.flush()?;
    Ok(())
}

pub fn read_matrix_bin<R: Read>(mut reader: R) -> Result<MeasurementMatrix> {
    let rows = read_u64(&mut reader)?;
    let cols = read_u64(&mut reader)?;
    let count = rows
        .checked_mul(cols)
        .filter(|&c| c <= MAX_BINARY_LEN)
        .ok_or_else(|| parse_err(format!("implausible matrix size {rows}×{cols}")))?;
    let entries = read_complex(&mut reader, count as usize)?;
    MeasurementMatrix::from_entries(rows as usize, cols as usize, entries)
}

pub fn write_matrix_bin<W: Write>(mut writer: W, matrix: &MeasurementMatrix) -> Result<()> {
    writer.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    writer.write_all(&(matrix.cols() as u64).to_le_bytes())?;
    write_complex(&mut writer, matrix.entries())?;
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalFormat {
    Csv,
    Bin,
}

pub fn load_signal(path: &Path, format: SignalFormat) -> Result<ComplexSignal> {
    let f = BufReader::new(File::open(path)?);
    match format {
        SignalFormat::Csv => read_signal_csv(f),
        SignalFormat::Bin => read_signal_bin(f),
    }
}

pub fn save_signal(path: &Path, format: SignalFormat, signal: &[Complex64]) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    match format {
        SignalFormat::Csv => write_signal_csv(f, signal),
        SignalFormat::Bin => write_signal_bin(f, signal),
    }
}

pub fn load_matrix(path: &Path) -> Result<MeasurementMatrix> {
    read_matrix_bin(BufReader::new(File::open(path)?))
}

pub fn save_matrix(path: &Path, matrix: &MeasurementMatrix) -> Result<()> {
    write_matrix_bin(BufWriter::new(File::create(path)?), matrix)
}
