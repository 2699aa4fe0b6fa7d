//! Linear sketches: the AMS tug-of-war `F_2` sketch and CountSketch.

mod ams;
mod countsketch;

pub use ams::{AmsF2Sketch, AMS_MAGIC};
pub use countsketch::{default_depth, width_for, CountSketchTable, HeavyHitter, CS_MAGIC, REPORT_FRACTION};

use crate::error::{Error, Result};

pub(crate) struct BlobReader<'a> {
    buf: &'a [u8],
}

impl<'a> BlobReader<'a> {
    pub(crate) fn new(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if buf.len() < 4 || &buf[..4] != magic {
            return Err(Error::Format(format!(
                "expected blob magic {}",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { buf: &buf[4..] })
    }

    /// Continues reading after a nested blob.
    pub(crate) fn resume(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub(crate) fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Format("truncated blob".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().unwrap())
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take::<8>()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    pub(crate) fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take::<8>()?))
    }

    pub(crate) fn remaining(&self) -> &'a [u8] {
        self.buf
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Format("trailing bytes after blob".into()))
        }
    }
}
