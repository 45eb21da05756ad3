//! Raw float grids with a 16-byte header: the magic `MVBG`, then rows,
//! columns and channels as little-endian `u32`, then the values as
//! little-endian `f32` in row, column, channel order.

use std::io::{Read, Write};

pub const MAGIC: [u8; 4] = *b"MVBG";

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("expected {expected} bytes of values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Grid {
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        for d in [self.rows, self.cols, self.channels] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        self.data.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
        w.write_all(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, GridError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(GridError::BadMagic(magic));
        }
        let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (rows, cols, channels) = (dim(0), dim(1), dim(2));
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let expected = rows * cols * channels * 4;
        if body.len() != expected {
            return Err(GridError::Truncated { expected, found: body.len() });
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { rows, cols, channels, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let g = Grid { rows: 2, cols: 3, channels: 2, data: (0..12).map(|i| i as f32 * 0.1 - 0.3).collect() };
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), 16 + 48);
        assert_eq!(&bytes[..4], b"MVBG");
        let back = Grid::read_from(&bytes[..]).unwrap();
        assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), g.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!((back.rows, back.cols, back.channels), (2, 3, 2));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(Grid::read_from(&b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0"[..]), Err(GridError::BadMagic(_))));
        let mut bytes = Grid { rows: 1, cols: 1, channels: 2, data: vec![1.0, 2.0] }.to_bytes();
        bytes.pop();
        assert!(matches!(Grid::read_from(&bytes[..]), Err(GridError::Truncated { .. })));
    }
}
