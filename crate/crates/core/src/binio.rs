//! Little-endian cursor shared by the binary container formats.

use crate::error::FormatError;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or_else(|| {
            FormatError::DimensionOverflow(format!("read of {n} bytes overflows"))
        })?;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated {
                expected: end as u64,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// A byte-reversed magic means the writer used the other byte order.
    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let b = self.take(4)?;
        let found = [b[0], b[1], b[2], b[3]];
        if found == expected {
            return Ok(());
        }
        let mut swapped = expected;
        swapped.reverse();
        if found == swapped {
            Err(FormatError::ForeignEndian { found })
        } else {
            Err(FormatError::BadMagic { expected, found })
        }
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.take(n)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{n} samples")))?;
        let b = self.take(len)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
}
