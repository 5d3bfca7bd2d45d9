//! Binary cache and model files.
//!
//! Every file is `magic | version | header fields | row-major f64 payload |
//! config hash | checksum`, all little endian. The checksum is XxHash64 of
//! every byte before it.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use twox_hash::XxHash64;

use crate::filterbank::{FeatureMatrix, FilterKind};
use crate::readout::{ReadoutModel, SolverOptions};
use crate::reservoir::{NeuronStates, NodeKind};
use crate::{Error, Result};

pub const FORMAT_VERSION: u16 = 1;

const FEATURE_MAGIC: &[u8; 4] = b"RNBF";
const STATES_MAGIC: &[u8; 4] = b"RNBS";
const MODEL_MAGIC: &[u8; 4] = b"RNBM";

pub fn checksum(bytes: &[u8]) -> u64 {
    XxHash64::oneshot(0, bytes)
}

/// Hash of a canonical configuration text.
pub fn config_hash(canonical: &str) -> u64 {
    XxHash64::oneshot(0x5245_534f, canonical.as_bytes())
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u16(FORMAT_VERSION);
        w
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }
    fn finish(mut self, hash: u64) -> Vec<u8> {
        self.0.extend_from_slice(&hash.to_le_bytes());
        let sum = checksum(&self.0);
        self.0.extend_from_slice(&sum.to_le_bytes());
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    /// Verifies checksum, magic, version and config hash; returns a reader
    /// positioned after the version field.
    fn open(path: &'a Path, buf: &'a [u8], magic: &[u8; 4], expected_hash: Option<u64>) -> Result<Self> {
        if buf.len() < 22 {
            return Err(Error::Cache { path: path.into(), msg: "file truncated".into() });
        }
        let body = buf.len() - 8;
        let stored = u64::from_le_bytes(buf[body..].try_into().expect("8 bytes"));
        if stored != checksum(&buf[..body]) {
            return Err(Error::Checksum(path.into()));
        }
        if &buf[..4] != magic {
            return Err(Error::Cache { path: path.into(), msg: "wrong file type".into() });
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Cache {
                path: path.into(),
                msg: format!("format version {version}, expected {FORMAT_VERSION}; delete the cache to regenerate it"),
            });
        }
        let hash = u64::from_le_bytes(buf[body - 8..body].try_into().expect("8 bytes"));
        if let Some(want) = expected_hash {
            if hash != want {
                return Err(Error::Cache {
                    path: path.into(),
                    msg: format!("built with config hash {hash:016x}, current config is {want:016x}"),
                });
            }
        }
        Ok(Reader { buf: &buf[..body - 8], at: 6, path })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Cache { path: self.path.into(), msg: "header or payload truncated".into() });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }
    fn end(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(Error::Cache { path: self.path.into(), msg: "trailing bytes after payload".into() });
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_features(f: &FeatureMatrix, hash: u64) -> Vec<u8> {
    let mut w = Writer::new(FEATURE_MAGIC);
    w.u8(f.kind.code());
    w.f64(f.kind.alpha());
    w.u32(f.n_f());
    w.u32(f.n_tau());
    w.u8(u8::from(f.degenerate));
    w.matrix(&f.values);
    w.finish(hash)
}

pub fn write_features(path: &Path, f: &FeatureMatrix, hash: u64) -> Result<()> {
    write_atomic(path, &encode_features(f, hash))
}

pub fn read_features(path: &Path, clip_id: &str, expected_hash: Option<u64>) -> Result<FeatureMatrix> {
    let buf = fs::read(path)?;
    let mut r = Reader::open(path, &buf, FEATURE_MAGIC, expected_hash)?;
    let code = r.u8()?;
    let alpha = r.f64()?;
    let kind = FilterKind::from_code(code, alpha)?;
    let (n_f, n_tau) = (r.u32()?, r.u32()?);
    let degenerate = r.u8()? != 0;
    let values = r.matrix(n_f, n_tau)?;
    r.end()?;
    Ok(FeatureMatrix { values, kind, clip_id: clip_id.to_string(), degenerate })
}

/// Reads only the header, returning `(kind, n_f, n_tau)`.
pub fn peek_features(path: &Path, expected_hash: Option<u64>) -> Result<(FilterKind, usize, usize)> {
    let buf = fs::read(path)?;
    let mut r = Reader::open(path, &buf, FEATURE_MAGIC, expected_hash)?;
    let code = r.u8()?;
    let kind = FilterKind::from_code(code, r.f64()?)?;
    Ok((kind, r.u32()?, r.u32()?))
}

pub fn encode_states(node: &NodeKind, s: &NeuronStates, hash: u64) -> Vec<u8> {
    let mut w = Writer::new(STATES_MAGIC);
    w.u8(node.code());
    let params = node.params();
    w.u8(params.len() as u8);
    for p in params {
        w.f64(p);
    }
    w.u32(s.n_theta());
    w.u32(s.n_tau());
    w.matrix(&s.values);
    w.finish(hash)
}

pub fn write_states(path: &Path, node: &NodeKind, s: &NeuronStates, hash: u64) -> Result<()> {
    write_atomic(path, &encode_states(node, s, hash))
}

pub fn read_states(path: &Path, clip_id: &str, expected_hash: Option<u64>) -> Result<(NodeKind, NeuronStates)> {
    let buf = fs::read(path)?;
    let mut r = Reader::open(path, &buf, STATES_MAGIC, expected_hash)?;
    let code = r.u8()?;
    let n = r.u8()? as usize;
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let node = NodeKind::from_parts(code, &params)?;
    let (n_theta, n_tau) = (r.u32()?, r.u32()?);
    let values = r.matrix(n_theta, n_tau)?;
    r.end()?;
    Ok((node, NeuronStates { values, clip_id: clip_id.to_string() }))
}

pub fn encode_model(m: &ReadoutModel, hash: u64) -> Vec<u8> {
    let mut w = Writer::new(MODEL_MAGIC);
    w.u8(m.node_code);
    w.u8(m.filter.code());
    w.f64(m.filter.alpha());
    w.u16(m.train_mask);
    w.f64(m.options.rtol);
    w.f64(m.options.ridge);
    w.u8(u8::from(m.options.bias));
    w.u32(m.w.nrows());
    w.u32(m.w.ncols());
    w.matrix(&m.w);
    w.finish(hash)
}

pub fn write_model(path: &Path, m: &ReadoutModel, hash: u64) -> Result<()> {
    write_atomic(path, &encode_model(m, hash))
}

pub fn read_model(path: &Path, expected_hash: Option<u64>) -> Result<ReadoutModel> {
    let buf = fs::read(path)?;
    let mut r = Reader::open(path, &buf, MODEL_MAGIC, expected_hash)?;
    let node_code = r.u8()?;
    let fcode = r.u8()?;
    let filter = FilterKind::from_code(fcode, r.f64()?)?;
    let train_mask = r.u16()?;
    let rtol = r.f64()?;
    let ridge = r.f64()?;
    let bias = r.u8()? != 0;
    let (rows, cols) = (r.u32()?, r.u32()?);
    let w = r.matrix(rows, cols)?;
    r.end()?;
    Ok(ReadoutModel { w, options: SolverOptions { rtol, ridge, bias }, train_mask, node_code, filter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::StnoParams;

    fn features() -> FeatureMatrix {
        FeatureMatrix {
            values: DMatrix::from_fn(3, 4, |r, c| r as f64 - 0.25 * c as f64),
            kind: FilterKind::SpectroExp { alpha: 0.2 },
            clip_id: "x".into(),
            degenerate: false,
        }
    }

    #[test]
    fn feature_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.rnbf");
        let f = features();
        write_features(&path, &f, 42).unwrap();
        assert_eq!(read_features(&path, "x", Some(42)).unwrap(), f);
        assert_eq!(peek_features(&path, None).unwrap(), (f.kind, 3, 4));

        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"RNBF");
        assert_eq!(bytes[6], 1);
        // Row-major payload: second value is row 0, column 1.
        let payload = 6 + 1 + 8 + 4 + 4 + 1;
        let second = f64::from_le_bytes(bytes[payload + 8..payload + 16].try_into().unwrap());
        assert_eq!(second, -0.25);
        assert_eq!(bytes.len(), payload + 12 * 8 + 16);
    }

    #[test]
    fn corruption_and_hash_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.rnbf");
        write_features(&path, &features(), 7).unwrap();
        assert!(matches!(read_features(&path, "x", Some(8)), Err(Error::Cache { .. })));

        let mut bytes = fs::read(&path).unwrap();
        bytes[30] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        match read_features(&path, "x", Some(7)) {
            Err(Error::Checksum(p)) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch_asks_for_regeneration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.rnbf");
        let mut bytes = encode_features(&features(), 1);
        bytes[4] = 9;
        let body = bytes.len() - 8;
        let sum = checksum(&bytes[..body]);
        bytes[body..].copy_from_slice(&sum.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = read_features(&path, "x", None).unwrap_err().to_string();
        assert!(err.contains("regenerate"), "{err}");
    }

    #[test]
    fn states_and_model_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let node = NodeKind::Stno(StnoParams { input_gain: 0.37, ..Default::default() });
        let s = NeuronStates { values: DMatrix::from_fn(5, 2, |r, c| (r * c) as f64 + 0.5), clip_id: "s".into() };
        let sp = dir.path().join("s.rnbs");
        write_states(&sp, &node, &s, 3).unwrap();
        assert_eq!(read_states(&sp, "s", Some(3)).unwrap(), (node, s));
        assert!(read_features(&sp, "s", None).is_err());

        let m = ReadoutModel {
            w: DMatrix::from_fn(10, 6, |r, c| (r + 10 * c) as f64),
            options: SolverOptions { rtol: 1e-9, ridge: 0.5, bias: true },
            train_mask: 0b11_1111_1110,
            node_code: 1,
            filter: FilterKind::Cochlear,
        };
        let mp = dir.path().join("m.rnbm");
        write_model(&mp, &m, 11).unwrap();
        assert_eq!(read_model(&mp, Some(11)).unwrap(), m);
        assert_eq!(fs::read(&mp).unwrap(), encode_model(&m, 11));
    }
}
