//! Ideal byte-addressed memory behind the vector unit's wide port, plus a
//! flat binary image format for loading and saving it.

use std::collections::BTreeMap;

use thiserror::Error;

const PAGE_BITS: u32 = 12;
const PAGE: usize = 1 << PAGE_BITS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("bad magic")]
    Magic,
    #[error("unsupported image version {0}")]
    Version(u32),
    #[error("image truncated at byte {0}")]
    Truncated(usize),
    #[error("segment at {base:#x} with {len} bytes wraps the address space")]
    Wraps { base: u64, len: u64 },
}

/// Sparse paged memory. Unwritten bytes read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    pages: BTreeMap<u64, Box<[u8; PAGE]>>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read_bytes(&self, addr: u64, out: &mut [u8]) {
        let mut done = 0;
        while done < out.len() {
            let a = addr.wrapping_add(done as u64);
            let off = (a as usize) & (PAGE - 1);
            let n = (PAGE - off).min(out.len() - done);
            match self.pages.get(&(a >> PAGE_BITS)) {
                Some(p) => out[done..done + n].copy_from_slice(&p[off..off + n]),
                None => out[done..done + n].fill(0),
            }
            done += n;
        }
    }

    pub fn write_bytes(&mut self, addr: u64, data: &[u8]) {
        let mut done = 0;
        while done < data.len() {
            let a = addr.wrapping_add(done as u64);
            let off = (a as usize) & (PAGE - 1);
            let n = (PAGE - off).min(data.len() - done);
            let page = self
                .pages
                .entry(a >> PAGE_BITS)
                .or_insert_with(|| Box::new([0; PAGE]));
            page[off..off + n].copy_from_slice(&data[done..done + n]);
            done += n;
        }
    }

    /// Little-endian read of `bytes` (1..=8) bytes.
    pub fn read_uint(&self, addr: u64, bytes: usize) -> u64 {
        let mut b = [0u8; 8];
        self.read_bytes(addr, &mut b[..bytes]);
        u64::from_le_bytes(b)
    }

    pub fn write_uint(&mut self, addr: u64, bytes: usize, value: u64) {
        self.write_bytes(addr, &value.to_le_bytes()[..bytes]);
    }

    pub fn read_u64(&self, addr: u64) -> u64 {
        self.read_uint(addr, 8)
    }

    pub fn write_u64(&mut self, addr: u64, value: u64) {
        self.write_uint(addr, 8, value)
    }

    pub fn read_f64s(&self, addr: u64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| f64::from_bits(self.read_u64(addr + 8 * i as u64)))
            .collect()
    }

    pub fn write_f64s(&mut self, addr: u64, data: &[f64]) {
        for (i, v) in data.iter().enumerate() {
            self.write_u64(addr + 8 * i as u64, v.to_bits());
        }
    }

    /// Allocated pages as (base address, bytes), in address order.
    pub fn pages(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.pages.iter().map(|(k, p)| (k << PAGE_BITS, &p[..]))
    }
}

/// Flat memory image: `LSMI`, a little-endian u32 version, then segments of
/// (u64 base, u64 length, bytes) until the end of input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryImage {
    pub segments: Vec<(u64, Vec<u8>)>,
}

impl MemoryImage {
    pub const MAGIC: &'static [u8; 4] = b"LSMI";
    pub const VERSION: u32 = 1;

    pub fn parse(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < 8 {
            return Err(ImageError::Truncated(bytes.len()));
        }
        if &bytes[..4] != Self::MAGIC {
            return Err(ImageError::Magic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap_or_default());
        if version != Self::VERSION {
            return Err(ImageError::Version(version));
        }
        let mut pos = 8;
        let mut segments = Vec::new();
        let u64_at = |p: usize| -> Result<u64, ImageError> {
            bytes
                .get(p..p + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap_or_default()))
                .ok_or(ImageError::Truncated(bytes.len()))
        };
        while pos < bytes.len() {
            let base = u64_at(pos)?;
            let len = u64_at(pos + 8)?;
            pos += 16;
            if base.checked_add(len).is_none() {
                return Err(ImageError::Wraps { base, len });
            }
            let end = usize::try_from(len)
                .ok()
                .and_then(|l| pos.checked_add(l))
                .filter(|&e| e <= bytes.len())
                .ok_or(ImageError::Truncated(bytes.len()))?;
            segments.push((base, bytes[pos..end].to_vec()));
            pos = end;
        }
        Ok(MemoryImage { segments })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Self::MAGIC.to_vec();
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        for (base, data) in &self.segments {
            out.extend_from_slice(&base.to_le_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            out.extend_from_slice(data);
        }
        out
    }

    pub fn load_into(&self, mem: &mut Memory) {
        for (base, data) in &self.segments {
            mem.write_bytes(*base, data);
        }
    }

    /// Captures every allocated page of `mem`, merging adjacent pages.
    pub fn from_memory(mem: &Memory) -> Self {
        let mut segments: Vec<(u64, Vec<u8>)> = Vec::new();
        for (base, data) in mem.pages() {
            match segments.last_mut() {
                Some((b, d)) if *b + d.len() as u64 == base => d.extend_from_slice(data),
                _ => segments.push((base, data.to_vec())),
            }
        }
        MemoryImage { segments }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_page_round_trip() {
        let mut m = Memory::new();
        let data: Vec<u8> = (0..10_000u32).map(|i| i as u8).collect();
        m.write_bytes(4090, &data);
        let mut back = vec![0; data.len()];
        m.read_bytes(4090, &mut back);
        assert_eq!(back, data);
        assert_eq!(m.read_u64(1 << 40), 0);
        m.write_uint(3, 2, 0xbeef);
        assert_eq!(m.read_uint(3, 2), 0xbeef);
    }

    #[test]
    fn image_round_trip() {
        let mut m = Memory::new();
        m.write_f64s(0x1000, &[1.0, -2.5]);
        m.write_u64(0x9000, 7);
        let img = MemoryImage::from_memory(&m);
        let parsed = MemoryImage::parse(&img.to_bytes()).unwrap();
        let mut m2 = Memory::new();
        parsed.load_into(&mut m2);
        assert_eq!(m2, m);
    }

    #[test]
    fn image_errors() {
        assert_eq!(MemoryImage::parse(b"LSM"), Err(ImageError::Truncated(3)));
        assert_eq!(
            MemoryImage::parse(b"XXXX\x01\0\0\0"),
            Err(ImageError::Magic)
        );
        assert_eq!(
            MemoryImage::parse(b"LSMI\x02\0\0\0"),
            Err(ImageError::Version(2))
        );
        let mut b = MemoryImage::default().to_bytes();
        b.extend_from_slice(&0u64.to_le_bytes());
        b.extend_from_slice(&100u64.to_le_bytes());
        assert!(matches!(
            MemoryImage::parse(&b),
            Err(ImageError::Truncated(_))
        ));
    }
}
