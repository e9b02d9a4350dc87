//! File formats: embedding tables, encoder checkpoints, loss traces and
//! plot-ready CSV.

use crate::error::{HarnessError, Result};
use augbound_core::{Architecture, Encoder};
use log::warn;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const EMBEDDING_MAGIC: &[u8; 5] = b"AEMB1";
pub const CHECKPOINT_MAGIC: &[u8; 5] = b"AENC1";

/// Labeled embeddings exported from some model, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    num_classes: usize,
    labels: Vec<u32>,
    /// Row-major, `labels.len() × dim`.
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, num_classes: usize, labels: Vec<u32>, vectors: Vec<f32>) -> Result<Self, String> {
        if vectors.len() != labels.len() * dim {
            return Err(format!("{} values for {} rows of dimension {dim}", vectors.len(), labels.len()));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value in row {}", i / dim.max(1)));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(format!("label {l} outside 0..{num_classes}"));
        }
        Ok(EmbeddingTable { dim, num_classes, labels, vectors })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows widened to `f64`, paired with their labels.
    pub fn labeled(&self) -> Vec<(Vec<f64>, usize)> {
        (0..self.len())
            .map(|i| (self.row(i).iter().map(|&v| f64::from(v)).collect(), self.labels[i] as usize))
            .collect()
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads an embedding table: `.csv` files hold `label,v1,…,vd` rows (an
/// optional header is skipped), anything else is the binary format.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let table = if is_csv(path) {
        read_embeddings_csv(open(path)?).map_err(|m| HarnessError::format(path, m))?
    } else {
        read_embeddings_binary(open(path)?).map_err(|m| HarnessError::format(path, m))?
    };
    if table.is_empty() {
        warn!("{}: embedding table has no rows", path.display());
    }
    Ok(table)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut w = create(path)?;
    if is_csv(path) {
        write_embeddings_csv(&mut w, table)?;
    } else {
        write_embeddings_binary(&mut w, table).map_err(|e| HarnessError::io(path, e))?;
    }
    finish(path, w)
}

/// `AEMB1`, `u32 n`, `u32 d`, `u32 C`, `n × u32` labels, `n·d × f32`, all
/// little-endian.
pub fn write_embeddings_binary<W: Write>(w: &mut W, table: &EmbeddingTable) -> std::io::Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    for v in [table.len(), table.dim, table.num_classes] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for l in &table.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    for v in &table.vectors {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N], String> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| format!("truncated file while reading {what}"))?;
    Ok(buf)
}

pub fn read_embeddings_binary<R: Read>(mut r: R) -> Result<EmbeddingTable, String> {
    let magic: [u8; 5] = read_exact(&mut r, "magic")?;
    if &magic != EMBEDDING_MAGIC {
        return Err("not an embedding table (bad magic)".into());
    }
    let n = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let d = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let c = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let labels = (0..n).map(|_| read_exact(&mut r, "labels").map(u32::from_le_bytes)).collect::<Result<Vec<_>, _>>()?;
    let vectors =
        (0..n * d).map(|_| read_exact(&mut r, "vectors").map(f32::from_le_bytes)).collect::<Result<Vec<_>, _>>()?;
    if r.read(&mut [0u8; 1]).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after the last vector".into());
    }
    EmbeddingTable::new(d, c, labels, vectors)
}

pub fn write_embeddings_csv<W: Write>(w: W, table: &EmbeddingTable) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec!["label".to_string()];
    header.extend((1..=table.dim).map(|j| format!("v{j}")));
    out.write_record(&header)?;
    for i in 0..table.len() {
        let mut rec = vec![table.labels[i].to_string()];
        rec.extend(table.row(i).iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// The class count of a CSV table is one more than its largest label.
pub fn read_embeddings_csv<R: Read>(r: R) -> Result<EmbeddingTable, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let mut dim = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let Some(first) = rec.get(0) else { continue };
        let Ok(label) = first.parse::<u32>() else {
            if line == 0 {
                continue;
            }
            return Err(format!("row {}: bad label {first:?}", line + 1));
        };
        let d = rec.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(format!("row {}: expected {} values, found {d}", line + 1, dim.unwrap_or(0)));
        }
        labels.push(label);
        for field in rec.iter().skip(1) {
            vectors.push(field.parse::<f32>().map_err(|_| format!("row {}: bad value {field:?}", line + 1))?);
        }
    }
    let classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    EmbeddingTable::new(dim.unwrap_or(0), classes, labels, vectors)
}

/// `AENC1`, `u8` architecture tag, `u8` normalize flag, `u32` input, hidden
/// and output widths, `u64` parameter count, then `f64` parameters, all
/// little-endian.
pub fn write_checkpoint<W: Write>(w: &mut W, enc: &Encoder) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[enc.architecture().tag(), u8::from(enc.normalize())])?;
    for v in [enc.input_dim(), enc.hidden_dim(), augbound_core::Embedder::output_dim(enc)] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&(enc.params().len() as u64).to_le_bytes())?;
    for p in enc.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Encoder, String> {
    let magic: [u8; 5] = read_exact(&mut r, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err("not an encoder checkpoint (bad magic)".into());
    }
    let [tag, normalize]: [u8; 2] = read_exact(&mut r, "header")?;
    let arch = Architecture::from_tag(tag).ok_or_else(|| format!("unknown architecture tag {tag}"))?;
    let input = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let hidden = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let output = u32::from_le_bytes(read_exact(&mut r, "header")?) as usize;
    let count = u64::from_le_bytes(read_exact(&mut r, "header")?);
    let params =
        (0..count).map(|_| read_exact(&mut r, "parameters").map(f64::from_le_bytes)).collect::<Result<Vec<_>, _>>()?;
    Encoder::from_parts(arch, input, hidden, output, normalize != 0, params).map_err(|e| e.to_string())
}

pub fn save_checkpoint(path: &Path, enc: &Encoder) -> Result<()> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, enc).map_err(|e| HarnessError::io(path, e))?;
    finish(path, w)
}

pub fn load_checkpoint(path: &Path) -> Result<Encoder> {
    read_checkpoint(open(path)?).map_err(|m| HarnessError::format(path, m))
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    /// Written in shortest round-trip form.
    Float(f64),
    Text(String),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Header plus rows with standard CSV quoting. Every row must have one cell
/// per header column.
pub fn emit_plot_data<W: Write>(w: W, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(HarnessError::format(
                "<plot data>",
                format!("row {i} has {} cells for {} columns", row.len(), header.len()),
            ));
        }
        out.write_record(row.iter().map(|c| c.to_string()))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_plot_data(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = create(path)?;
    emit_plot_data(&mut w, header, rows)?;
    finish(path, w)
}

/// `epoch,risk` rows.
pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let rows: Vec<Vec<Cell>> = trace.iter().enumerate().map(|(e, &l)| vec![e.into(), l.into()]).collect();
    write_plot_data(path, &["epoch", "risk"], &rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use augbound_core::seed::rng_from;

    fn table() -> EmbeddingTable {
        EmbeddingTable::new(3, 2, vec![0, 1], vec![0.5, -1.25, 3.0e-7, 1.0, 2.0, f32::MIN_POSITIVE]).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &table()).unwrap();
        assert_eq!(&buf[..5], b"AEMB1");
        assert_eq!(read_embeddings_binary(&buf[..]).unwrap(), table());
    }

    #[test]
    fn binary_errors() {
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &table()).unwrap();
        assert!(read_embeddings_binary(&buf[..buf.len() - 1]).unwrap_err().contains("truncated"));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_embeddings_binary(&bad[..]).unwrap_err().contains("magic"));
        let mut nan = buf.clone();
        let at = buf.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_embeddings_binary(&nan[..]).unwrap_err().contains("non-finite"));
    }

    #[test]
    fn empty_table_round_trips() {
        let empty = EmbeddingTable::new(4, 3, vec![], vec![]).unwrap();
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &empty).unwrap();
        assert!(read_embeddings_binary(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn hand_written_csv() {
        let text = "label,v1,v2,v3\n0, 1.5, -2, 0.25\n1,0,0,1e-3\n";
        let t = read_embeddings_csv(text.as_bytes()).unwrap();
        assert_eq!((t.len(), t.dim(), t.num_classes()), (2, 3, 2));
        assert_eq!(t.row(0), &[1.5, -2.0, 0.25]);
        assert_eq!(t.row(1), &[0.0, 0.0, 1e-3]);
        let headerless = read_embeddings_csv("0,1.5,-2,0.25\n1,0,0,1e-3\n".as_bytes()).unwrap();
        assert_eq!(headerless, t);
        assert!(read_embeddings_csv("0,1,2\n1,3\n".as_bytes()).is_err());
        assert!(read_embeddings_csv("0,1,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_embeddings_csv(&mut buf, &table()).unwrap();
        assert_eq!(read_embeddings_csv(&buf[..]).unwrap(), table());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = rng_from(4);
        for enc in
            [Encoder::linear(6, 2, &mut rng), Encoder::mlp1(6, 4, 3, &mut rng), Encoder::flatten_identity(5, false)]
        {
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &enc).unwrap();
            assert_eq!(&buf[..5], b"AENC1");
            assert_eq!(read_checkpoint(&buf[..]).unwrap(), enc);
            assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        }
    }

    #[test]
    fn plot_data_quoting_and_round_trip() {
        let mut buf = Vec::new();
        emit_plot_data(&mut buf, &["a", "b"], &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n");

        let values = [0.1 + 0.2, 1e-300, -7.0 / 3.0, f64::MAX];
        let rows: Vec<Vec<Cell>> = values.iter().map(|&v| vec![Cell::from("x,y"), v.into()]).collect();
        let mut buf = Vec::new();
        emit_plot_data(&mut buf, &["name", "value"], &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("\"x,y\","));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let back: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        assert_eq!(back, values);

        assert!(emit_plot_data(Vec::new(), &["a"], &[vec![Cell::Empty, Cell::Empty]]).is_err());
    }
}
