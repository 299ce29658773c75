//! File formats: the `.nwt` raw tensor container, the Middlebury `.flo`
//! optical-flow container, and binary PGM export for visual inspection.
//!
//! Readers parse a fully buffered file and report failures as format errors
//! carrying the byte offset of the offending field; they never return a
//! partially populated value. Writers emit exactly the bytes the readers
//! accept, so write-then-read round-trips are bit-exact (payloads are 32-bit
//! floats; tensor values survive a round-trip exactly once they are f32
//! values).

use crate::error::{Error, Result};
use crate::tensor::{validate_shape, FlowField, NoiseTensor};
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Magic bytes of the tensor container.
const TENSOR_MAGIC: [u8; 4] = *b"NWT1";
/// Magic float of the `.flo` optical-flow container.
const FLO_MAGIC: f32 = 202021.25;

/// Byte cursor with format-aware error reporting.
struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    format: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Cursor {
            bytes,
            offset: 0,
            format,
        }
    }

    fn fail<T>(&self, at: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            format: self.format,
            offset: at as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < len {
            return self.fail(
                self.bytes.len(),
                format!(
                    "truncated while reading {what}: need {len} bytes at offset {}",
                    self.offset
                ),
            );
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return self.fail(
                self.offset,
                format!(
                    "{} trailing bytes after payload",
                    self.bytes.len() - self.offset
                ),
            );
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

/// Writes a tensor: magic `NWT1`, dimension count (u8), extents (u32 LE
/// each), channel count (u32 LE), then the values as f32 LE in row-major
/// order with channels innermost.
pub fn write_tensor(tensor: &NoiseTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + tensor.data().len() * 4);
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(tensor.dims() as u8);
    for &e in tensor.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.extend_from_slice(&(tensor.channels() as u32).to_le_bytes());
    for &x in tensor.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a tensor written by [`write_tensor`].
pub fn read_tensor(path: impl AsRef<Path>) -> Result<NoiseTensor> {
    let bytes = read_file(path.as_ref())?;
    let mut cur = Cursor::new(&bytes, "nwt-tensor");
    let magic = cur.take(4, "magic")?;
    if magic != TENSOR_MAGIC {
        return cur.fail(0, format!("bad magic {magic:02x?}"));
    }
    let rank = cur.u8("dimension count")? as usize;
    let rank_at = cur.offset - 1;
    if !(crate::tensor::MIN_DIMS..=crate::tensor::MAX_DIMS).contains(&rank) {
        return cur.fail(rank_at, format!("unsupported dimension count {rank}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for d in 0..rank {
        let at = cur.offset;
        let e = cur.u32(&format!("extent {d}"))? as usize;
        if e == 0 {
            return cur.fail(at, format!("extent {d} is zero"));
        }
        shape.push(e);
    }
    let ch_at = cur.offset;
    let channels = cur.u32("channel count")? as usize;
    if channels == 0 {
        return cur.fail(ch_at, "channel count is zero");
    }
    if validate_shape(&shape).is_err() {
        return cur.fail(5, format!("extents {shape:?} overflow the pixel budget"));
    }
    let n_px: usize = shape.iter().product();
    let n_vals = match n_px.checked_mul(channels) {
        Some(n) if n.checked_mul(4).is_some() => n,
        _ => return cur.fail(ch_at, "payload size overflows"),
    };
    let payload_at = cur.offset;
    let payload = cur.take(n_vals * 4, "payload")?;
    cur.done()?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    NoiseTensor::from_vec(&shape, channels, data).map_err(|e| Error::Format {
        format: "nwt-tensor",
        offset: payload_at as u64,
        message: e.to_string(),
    })
}

/// Writes a 2-D flow as a `.flo` file: float magic, width, height, then
/// interleaved (u, v) f32 pairs per pixel, where u displaces along axis 1
/// (width) and v along axis 0 (height).
pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    if flow.dims() != 2 {
        return Err(Error::invalid("only 2-D flows can be written as .flo"));
    }
    let (h, w) = (flow.shape()[0], flow.shape()[1]);
    if h > i32::MAX as usize || w > i32::MAX as usize {
        return Err(Error::invalid("flow too large for .flo dimensions"));
    }
    let mut out = Vec::with_capacity(12 + flow.data().len() * 4);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for px in 0..h * w {
        let v = flow.vector(px);
        out.extend_from_slice(&(v[1] as f32).to_le_bytes());
        out.extend_from_slice(&(v[0] as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a `.flo` flow file written by [`write_flo`] (or any Middlebury
/// flow tool).
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let bytes = read_file(path.as_ref())?;
    let mut cur = Cursor::new(&bytes, "flo-flow");
    let magic = cur.f32("magic")?;
    if magic != FLO_MAGIC {
        return cur.fail(0, format!("bad magic {magic}"));
    }
    let w_at = cur.offset;
    let w = cur.u32("width")?;
    let h_at = cur.offset;
    let h = cur.u32("height")?;
    if w == 0 || w > i32::MAX as u32 {
        return cur.fail(w_at, format!("width {w} out of range"));
    }
    if h == 0 || h > i32::MAX as u32 {
        return cur.fail(h_at, format!("height {h} out of range"));
    }
    let shape = [h as usize, w as usize];
    if validate_shape(&shape).is_err() {
        return cur.fail(w_at, format!("dimensions {h}x{w} overflow the pixel budget"));
    }
    let n_px = shape[0] * shape[1];
    if n_px.checked_mul(8).is_none() {
        return cur.fail(w_at, "payload size overflows");
    }
    let payload = cur.take(n_px * 8, "flow vectors")?;
    cur.done()?;
    let mut data = vec![0.0f64; n_px * 2];
    for (px, pair) in payload.chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64;
        let v = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64;
        data[px * 2] = v;
        data[px * 2 + 1] = u;
    }
    FlowField::from_vec(&shape, data).map_err(|e| Error::Format {
        format: "flo-flow",
        offset: 12,
        message: e.to_string(),
    })
}

/// Exports a 2-D single-channel tensor as a binary PGM (P5), mapping
/// `[-clip_sigma, +clip_sigma]` linearly to `[0, 255]` with values rounded
/// half away from zero and clamped.
pub fn export_pgm(tensor: &NoiseTensor, path: impl AsRef<Path>, clip_sigma: f64) -> Result<()> {
    if tensor.dims() != 2 {
        return Err(Error::invalid("PGM export expects a 2-D tensor"));
    }
    let values = tensor.single_channel()?;
    if !(clip_sigma.is_finite() && clip_sigma > 0.0) {
        return Err(Error::invalid(format!("clip range {clip_sigma} must be positive")));
    }
    let (h, w) = (tensor.shape()[0], tensor.shape()[1]);
    let mut out = Vec::with_capacity(32 + h * w);
    out.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    let scale = 255.0 / (2.0 * clip_sigma);
    for &x in values {
        let level = ((x + clip_sigma) * scale).clamp(0.0, 255.0).round();
        out.push(level as u8);
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::make_prior_noise;
    use std::path::PathBuf;

    /// Fresh path in a per-test scratch directory.
    struct Scratch(PathBuf);

    impl Scratch {
        fn new(tag: &str) -> Self {
            let dir = std::env::temp_dir().join(format!(
                "noisewarp-io-{tag}-{}",
                std::process::id()
            ));
            std::fs::create_dir_all(&dir).unwrap();
            Scratch(dir)
        }

        fn path(&self, name: &str) -> PathBuf {
            self.0.join(name)
        }
    }

    impl Drop for Scratch {
        fn drop(&mut self) {
            let _ = std::fs::remove_dir_all(&self.0);
        }
    }

    #[test]
    fn tensor_round_trip_is_file_exact() {
        let scratch = Scratch::new("tensor");
        let t = make_prior_noise(&[3, 4, 2], 2, 5).unwrap();
        let a = scratch.path("a.nwt");
        let b = scratch.path("b.nwt");
        write_tensor(&t, &a).unwrap();
        let back = read_tensor(&a).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.channels(), t.channels());
        for (x, y) in t.data().iter().zip(back.data()) {
            assert_eq!(*x as f32, *y as f32);
            // Values come back as exact f32 promotions.
            assert_eq!(*y, *y as f32 as f64);
        }
        write_tensor(&back, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn tensor_reader_rejects_malformed_files() {
        let scratch = Scratch::new("tensor-bad");
        let t = make_prior_noise(&[2, 2], 1, 1).unwrap();
        let good_path = scratch.path("good.nwt");
        write_tensor(&t, &good_path).unwrap();
        let good = std::fs::read(&good_path).unwrap();

        let cases: Vec<(Vec<u8>, &str)> = vec![
            (b"XWT1".iter().chain(&good[4..]).copied().collect(), "magic"),
            (good[..good.len() - 1].to_vec(), "truncated payload"),
            (good[..7].to_vec(), "truncated header"),
            (
                good.iter().chain(b"z").copied().collect(),
                "trailing bytes",
            ),
        ];
        for (bytes, what) in cases {
            let p = scratch.path("bad.nwt");
            std::fs::write(&p, &bytes).unwrap();
            let err = read_tensor(&p).unwrap_err();
            assert!(
                matches!(err, Error::Format { .. }),
                "{what}: got {err:?}"
            );
        }

        // Zero extent at a known offset.
        let mut zero_extent = good.clone();
        zero_extent[5..9].copy_from_slice(&0u32.to_le_bytes());
        let p = scratch.path("zero.nwt");
        std::fs::write(&p, &zero_extent).unwrap();
        match read_tensor(&p).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 5),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn flo_round_trip_and_layout() {
        let scratch = Scratch::new("flo");
        // Displacement +1 along axis 1 (file-speak: u = 1, v = 0).
        let flow = FlowField::from_fn(&[2, 2], |_| vec![0.0, 1.0]).unwrap();
        let p = scratch.path("unit.flo");
        write_flo(&flow, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 12 + 4 * 8);
        for px in 0..4 {
            let at = 12 + px * 8;
            let u = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            let v = f32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap());
            assert_eq!((u, v), (1.0, 0.0));
        }
        let back = read_flo(&p).unwrap();
        assert_eq!(back.data(), flow.data());
    }

    #[test]
    fn flo_reader_rejects_malformed_files() {
        let scratch = Scratch::new("flo-bad");
        let flow = FlowField::from_fn(&[2, 3], |c| vec![c[0], -c[1]]).unwrap();
        let p = scratch.path("good.flo");
        write_flo(&flow, &p).unwrap();
        let good = std::fs::read(&p).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0..4].copy_from_slice(&0.0f32.to_le_bytes());
        let p2 = scratch.path("bad.flo");
        std::fs::write(&p2, &bad_magic).unwrap();
        match read_flo(&p2).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }

        std::fs::write(&p2, &good[..good.len() - 3]).unwrap();
        assert!(matches!(read_flo(&p2).unwrap_err(), Error::Format { .. }));

        let mut zero_w = good.clone();
        zero_w[4..8].copy_from_slice(&0u32.to_le_bytes());
        std::fs::write(&p2, &zero_w).unwrap();
        match read_flo(&p2).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_levels_follow_the_linear_map() {
        let scratch = Scratch::new("pgm");
        let t = NoiseTensor::from_vec(&[1, 5], 1, vec![0.0, 3.0, -3.0, 10.0, -10.0]).unwrap();
        let p = scratch.path("img.pgm");
        export_pgm(&t, &p, 3.0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n5 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[128u8, 255, 0, 255, 0]);
        assert!(export_pgm(&t, scratch.path("x.pgm"), 0.0).is_err());
        let three_d = NoiseTensor::zeros(&[2, 2, 2], 1).unwrap();
        assert!(export_pgm(&three_d, scratch.path("y.pgm"), 3.0).is_err());
    }
}
