//! Binary checkpoint format for network parameters.
//!
//! Layout (all integers little-endian):
//! - magic `SSLM`, format version u32
//! - dims: D, H, C, layer count as u32
//! - per layer: `w_x`, `w_h`, `bias`; then `w_hc`, `bias_c`; each as
//!   rows u32, cols u32, row-major f64 payload
//! - trailing CRC-32 (IEEE) of all preceding bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Dims, LstmLayerParams, NetworkParams, OutputParams};

pub const MAGIC: &[u8; 4] = b"SSLM";
pub const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE 802.3, reflected, as used by zlib/PNG).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *entry = c;
    }
    let mut crc = 0xffff_ffffu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xff) as usize] ^ (crc >> 8);
    }
    crc ^ 0xffff_ffff
}

fn push_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [
        params.dims.input,
        params.dims.hidden,
        params.dims.classes,
        params.dims.layers,
    ] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for m in params.mats() {
        push_matrix(&mut buf, m);
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let bytes = self.take(rows * cols * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetworkParams> {
    if bytes.len() < 4 + 4 + 16 + 4 {
        return Err(Error::Data("checkpoint too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual = crc32(body);
    if stored != actual {
        return Err(Error::Data(format!(
            "checkpoint CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Data("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let input = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let dims = Dims::new(input, hidden, classes, layers);

    let expect = |m: &Matrix, rows: usize, cols: usize, name: &str| -> Result<()> {
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::Data(format!(
                "checkpoint {name}: {}x{}, expected {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    };

    let mut layer_params = Vec::with_capacity(layers);
    for l in 0..layers {
        let d_in = dims.layer_input(l);
        let w_x = r.matrix()?;
        expect(&w_x, 4 * hidden, d_in, "w_x")?;
        let w_h = r.matrix()?;
        expect(&w_h, 4 * hidden, hidden, "w_h")?;
        let bias = r.matrix()?;
        expect(&bias, 4 * hidden, 1, "bias")?;
        layer_params.push(LstmLayerParams { w_x, w_h, bias });
    }
    let w_hc = r.matrix()?;
    expect(&w_hc, classes, hidden, "w_hc")?;
    let bias_c = r.matrix()?;
    expect(&bias_c, classes, 1, "bias_c")?;
    if r.pos != body.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} trailing bytes",
            body.len() - r.pos
        )));
    }
    Ok(NetworkParams { layers: layer_params, output: OutputParams { w_hc, bias_c }, dims })
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&bytes)
}
