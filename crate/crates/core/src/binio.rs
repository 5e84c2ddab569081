//! Little-endian helpers shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }

    pub fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn usize(&mut self, v: usize) -> std::io::Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub(crate) struct BinReader<R: Read> {
    inner: R,
    kind: &'static str,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R, kind: &'static str) -> Self {
        Self { inner, kind }
    }

    pub fn format_err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            kind: self.kind,
            message: message.into(),
        }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| self.format_err(format!("truncated: {e}")))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4], version: u8) -> Result<()> {
        let mut m = [0u8; 4];
        self.fill(&mut m)?;
        if &m != magic {
            return Err(self.format_err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u8()?;
        if v != version {
            return Err(self.format_err(format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    /// Reads a length field, refusing values that cannot be a real size.
    pub fn len(&mut self, limit: usize) -> Result<usize> {
        let v = self.u64()?;
        if v > limit as u64 {
            return Err(self.format_err(format!("length {v} exceeds limit {limit}")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.fill(&mut b)?;
        Ok(b)
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.format_err("trailing bytes")),
            Err(e) => Err(self.format_err(e.to_string())),
        }
    }
}

pub(crate) const MAX_LEN: usize = 1 << 40;
