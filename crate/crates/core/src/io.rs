//! Depth, mask and sample file formats.
//!
//! Depth grids load from three formats, detected by magic bytes:
//!
//! * PFM (`Pf`): single-channel 32-bit float, rows stored bottom-up, byte order
//!   given by the sign of the scale field (negative = little-endian).
//! * 16-bit binary PGM (`P5`): integer depth divided by a scale factor
//!   (default 1000, i.e. millimeters), taken from a flag or a `<file>.scale`
//!   sidecar.
//! * DPG1: `b"DPG1"`, `u32` height, `u32` width (little-endian), then
//!   `height * width` little-endian `f64` values, row-major.
//!
//! In every format zeros (and non-finite values) load as invalid pixels, and
//! invalid pixels are written as zero.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grids::{DepthGrid, LabelGrid, Sample, SparseSamples};

pub const DPG_MAGIC: &[u8; 4] = b"DPG1";
pub const DEFAULT_PGM_SCALE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthFormat {
    Pfm,
    Pgm,
    Dpg,
}

impl DepthFormat {
    pub fn detect(bytes: &[u8]) -> Result<Self> {
        match bytes {
            [b'P', b'f', ..] | [b'P', b'F', ..] => Ok(DepthFormat::Pfm),
            [b'P', b'5', ..] => Ok(DepthFormat::Pgm),
            [b'D', b'P', b'G', b'1', ..] => Ok(DepthFormat::Dpg),
            _ => Err(Error::UnknownFormat),
        }
    }

    pub fn from_extension(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pfm") => Ok(DepthFormat::Pfm),
            Some("pgm") => Ok(DepthFormat::Pgm),
            Some("dpg") => Ok(DepthFormat::Dpg),
            _ => Err(Error::UnknownFormat),
        }
    }
}

fn grid_len(height: u64, width: u64, elem: u64) -> Result<(usize, usize, usize)> {
    let overflow = || Error::DimensionOverflow { height, width };
    let bytes = height.checked_mul(width).and_then(|n| n.checked_mul(elem)).ok_or_else(overflow)?;
    let h = usize::try_from(height).map_err(|_| overflow())?;
    let w = usize::try_from(width).map_err(|_| overflow())?;
    let bytes = usize::try_from(bytes).map_err(|_| overflow())?;
    if h == 0 || w == 0 {
        return Err(Error::CorruptHeader(format!("empty grid {height}x{width}")));
    }
    Ok((h, w, bytes))
}

/// Splits `count` whitespace-separated header tokens after a 2-byte magic,
/// skipping `#` comments. Returns the tokens and the offset of the payload
/// (one whitespace byte after the last token).
fn pnm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 2;
    while tokens.len() < count {
        match bytes.get(i) {
            None => return Err(Error::CorruptHeader("truncated header".into())),
            Some(b'#') => {
                while bytes.get(i).is_some_and(|&b| b != b'\n') {
                    i += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => i += 1,
            Some(_) => {
                let start = i;
                while bytes.get(i).is_some_and(|b| !b.is_ascii_whitespace()) {
                    i += 1;
                }
                tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
            }
        }
    }
    if !bytes.get(i).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::CorruptHeader("missing separator after header".into()));
    }
    Ok((tokens, i + 1))
}

fn parse_num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::CorruptHeader(format!("bad {what} {tok:?}")))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthGrid> {
    if bytes.starts_with(b"PF") {
        return Err(Error::CorruptHeader("three-channel PFM is not a depth map".into()));
    }
    if !bytes.starts_with(b"Pf") {
        return Err(Error::UnknownFormat);
    }
    let (tok, off) = pnm_header(bytes, 3)?;
    let width: u64 = parse_num(&tok[0], "width")?;
    let height: u64 = parse_num(&tok[1], "height")?;
    let scale: f64 = parse_num(&tok[2], "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::CorruptHeader("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let (h, w, len) = grid_len(height, width, 4)?;
    let data = bytes.get(off..off + len).ok_or_else(|| Error::CorruptHeader("truncated PFM payload".into()))?;
    let mut values = vec![0.0; h * w];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("chunk of 4");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / w, i % w);
        values[(h - 1 - file_row) * w + col] = f64::from(v);
    }
    DepthGrid::from_measured(h, w, values)
}

/// Little-endian PFM; values are narrowed to `f32`.
pub fn encode_pfm(grid: &DepthGrid) -> Vec<u8> {
    let (h, w) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            out.extend_from_slice(&(grid.get(row, col).unwrap_or(0.0) as f32).to_le_bytes());
        }
    }
    out
}

/// Raw PGM samples (8- or 16-bit, big-endian for 16-bit) with dimensions.
fn decode_pgm_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::UnknownFormat);
    }
    let (tok, off) = pnm_header(bytes, 3)?;
    let width: u64 = parse_num(&tok[0], "width")?;
    let height: u64 = parse_num(&tok[1], "height")?;
    let maxval: u32 = parse_num(&tok[2], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("bad maxval {maxval}")));
    }
    let elem = if maxval > 255 { 2 } else { 1 };
    let (h, w, len) = grid_len(height, width, elem)?;
    let data = bytes.get(off..off + len).ok_or_else(|| Error::CorruptHeader("truncated PGM payload".into()))?;
    let values = if elem == 2 {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data.iter().map(|&b| u16::from(b)).collect()
    };
    Ok((h, w, values))
}

fn encode_pgm_raw(h: usize, w: usize, values: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(h * w * 2);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_pgm_depth(bytes: &[u8], scale: f64) -> Result<DepthGrid> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad PGM scale {scale}")));
    }
    let (h, w, raw) = decode_pgm_raw(bytes)?;
    DepthGrid::from_measured(h, w, raw.into_iter().map(|v| f64::from(v) / scale).collect())
}

/// 16-bit PGM; values are rounded to the nearest `1/scale` and saturate at 65535.
pub fn encode_pgm_depth(grid: &DepthGrid, scale: f64) -> Vec<u8> {
    let (h, w) = grid.dims();
    let vals = (0..h * w).map(|p| {
        grid.get(p / w, p % w).map_or(0, |v| (v * scale).round().clamp(0.0, 65535.0) as u16)
    });
    encode_pgm_raw(h, w, vals)
}

pub fn decode_dpg(bytes: &[u8]) -> Result<DepthGrid> {
    if !bytes.starts_with(DPG_MAGIC) {
        return Err(Error::UnknownFormat);
    }
    let header = bytes.get(4..12).ok_or_else(|| Error::CorruptHeader("truncated DPG1 header".into()))?;
    let height = u32::from_le_bytes(header[0..4].try_into().expect("4 bytes"));
    let width = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    let (h, w, len) = grid_len(u64::from(height), u64::from(width), 8)?;
    let data = bytes.get(12..12 + len).ok_or_else(|| Error::CorruptHeader("truncated DPG1 payload".into()))?;
    if bytes.len() != 12 + len {
        return Err(Error::CorruptHeader("trailing bytes after DPG1 payload".into()));
    }
    let mut values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let valid: Vec<bool> = values.iter().map(|x| x.is_finite() && *x != 0.0).collect();
    for (v, ok) in values.iter_mut().zip(&valid) {
        if !ok {
            *v = 0.0;
        }
    }
    DepthGrid::new(h, w, values, valid)
}

/// Lossless `f64` encoding. Relative grids may hold negative values, so only
/// zero and non-finite values mark invalid pixels.
pub fn encode_dpg(grid: &DepthGrid) -> Vec<u8> {
    let (h, w) = grid.dims();
    let mut out = Vec::with_capacity(12 + h * w * 8);
    out.extend_from_slice(DPG_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for p in 0..h * w {
        out.extend_from_slice(&grid.get(p / w, p % w).unwrap_or(0.0).to_le_bytes());
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthLoadOptions {
    /// PGM units per meter; overrides any sidecar.
    pub pgm_scale: Option<f64>,
}

pub fn decode_depth(bytes: &[u8], pgm_scale: f64) -> Result<DepthGrid> {
    match DepthFormat::detect(bytes)? {
        DepthFormat::Pfm => decode_pfm(bytes),
        DepthFormat::Pgm => decode_pgm_depth(bytes, pgm_scale),
        DepthFormat::Dpg => decode_dpg(bytes),
    }
}

fn sidecar_scale(path: &Path) -> Result<Option<f64>> {
    let mut side = path.as_os_str().to_owned();
    side.push(".scale");
    match fs::read_to_string(&side) {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::CorruptHeader(format!("bad scale sidecar {:?}", side))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn load_depth(path: &Path, opts: DepthLoadOptions) -> Result<DepthGrid> {
    let bytes = fs::read(path)?;
    let scale = match opts.pgm_scale {
        Some(s) => s,
        None => sidecar_scale(path)?.unwrap_or(DEFAULT_PGM_SCALE),
    };
    decode_depth(&bytes, scale)
}

pub fn encode_depth(grid: &DepthGrid, format: DepthFormat, pgm_scale: f64) -> Vec<u8> {
    match format {
        DepthFormat::Pfm => encode_pfm(grid),
        DepthFormat::Pgm => encode_pgm_depth(grid, pgm_scale),
        DepthFormat::Dpg => encode_dpg(grid),
    }
}

/// Writes `grid` in the format implied by the file extension.
pub fn save_depth(path: &Path, grid: &DepthGrid) -> Result<()> {
    let format = DepthFormat::from_extension(path)?;
    fs::write(path, encode_depth(grid, format, DEFAULT_PGM_SCALE))?;
    Ok(())
}

pub fn decode_mask(bytes: &[u8]) -> Result<LabelGrid> {
    let (h, w, raw) = decode_pgm_raw(bytes)?;
    LabelGrid::new(h, w, raw.into_iter().map(u32::from).collect())
}

pub fn encode_mask(mask: &LabelGrid) -> Result<Vec<u8>> {
    let labels = mask.labels();
    if let Some(&l) = labels.iter().find(|&&l| l > u32::from(u16::MAX)) {
        return Err(Error::InvalidConfig(format!("label {l} does not fit a 16-bit PGM")));
    }
    Ok(encode_pgm_raw(mask.height(), mask.width(), labels.iter().map(|&l| l as u16)))
}

pub fn load_mask(path: &Path) -> Result<LabelGrid> {
    decode_mask(&fs::read(path)?)
}

pub fn save_mask(path: &Path, mask: &LabelGrid) -> Result<()> {
    fs::write(path, encode_mask(mask)?)?;
    Ok(())
}

/// Parses `row,col,depth_m` records; the header line is optional. Rows with
/// non-positive or non-finite depth are skipped with a warning.
pub fn decode_samples(text: &[u8]) -> Result<SparseSamples> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.get(0) == Some("row") {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::BadRecord { line, reason: format!("expected 3 fields, got {}", record.len()) });
        }
        let bad = |what: &str| Error::BadRecord { line, reason: format!("bad {what}") };
        let row: usize = record[0].parse().map_err(|_| bad("row"))?;
        let col: usize = record[1].parse().map_err(|_| bad("col"))?;
        let depth: f64 = record[2].parse().map_err(|_| bad("depth"))?;
        if !(depth.is_finite() && depth > 0.0) {
            log::warn!("line {line}: skipping sample ({row}, {col}) with depth {depth}");
            continue;
        }
        points.push(Sample { row, col, depth });
    }
    SparseSamples::new(points)
}

pub fn encode_samples(samples: &SparseSamples) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "depth_m"])?;
    for s in samples.points() {
        // `{:?}` prints the shortest string that parses back to the same f64
        w.write_record([s.row.to_string(), s.col.to_string(), format!("{:?}", s.depth)])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn load_samples(path: &Path) -> Result<SparseSamples> {
    decode_samples(&fs::read(path)?)
}

pub fn save_samples(path: &Path, samples: &SparseSamples) -> Result<()> {
    fs::write(path, encode_samples(samples)?)?;
    Ok(())
}

pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_1234() -> DepthGrid {
        DepthGrid::from_measured(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn pfm_round_trip() {
        let g = grid_1234();
        let bytes = encode_pfm(&g);
        assert_eq!(decode_depth(&bytes, 1.0).unwrap(), g);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let bytes = encode_pfm(&grid_1234());
        let off = bytes.len() - 16;
        let first = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
    }

    #[test]
    fn pfm_big_endian() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&0.0f32.to_be_bytes());
        let g = decode_pfm(&bytes).unwrap();
        assert_eq!(g.get(0, 0), Some(1.5));
        assert_eq!(g.get(0, 1), None);
    }

    #[test]
    fn pgm_scale_conversion() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&5000u16.to_be_bytes());
        assert_eq!(decode_pgm_depth(&bytes, 1000.0).unwrap().get(0, 0), Some(5.0));
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# exported\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&250u16.to_be_bytes());
        assert_eq!(decode_pgm_depth(&bytes, 1000.0).unwrap().get(0, 0), Some(0.25));
    }

    #[test]
    fn truncated_dpg_is_corrupt() {
        let bytes = encode_dpg(&grid_1234());
        assert!(matches!(decode_dpg(&bytes[..bytes.len() - 3]), Err(Error::CorruptHeader(_))));
        assert!(matches!(decode_dpg(&bytes[..7]), Err(Error::CorruptHeader(_))));
    }

    #[test]
    fn dpg_overflow_detected() {
        let mut bytes = DPG_MAGIC.to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        let err = decode_dpg(&bytes).unwrap_err();
        assert!(matches!(err, Error::DimensionOverflow { .. } | Error::CorruptHeader(_)), "{err}");
    }

    #[test]
    fn dpg_keeps_negative_values() {
        let g = DepthGrid::new(1, 3, vec![-2.5, 0.0, 1.0], vec![true, false, true]).unwrap();
        assert_eq!(decode_dpg(&encode_dpg(&g)).unwrap(), g);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(decode_depth(b"GIF89a", 1.0), Err(Error::UnknownFormat)));
        assert!(matches!(DepthFormat::from_extension(Path::new("x.png")), Err(Error::UnknownFormat)));
    }

    #[test]
    fn mask_labels_from_pgm() {
        let m = LabelGrid::new(2, 2, vec![0, 3, 1, 2]).unwrap();
        let back = decode_mask(&encode_mask(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.label_count(), 4);
        let mut eight = b"P5\n2 1\n255\n".to_vec();
        eight.extend_from_slice(&[7, 9]);
        assert_eq!(decode_mask(&eight).unwrap().labels(), &[7, 9]);
    }

    #[test]
    fn samples_csv_basic() {
        let s = decode_samples(b"0,0,2.5").unwrap();
        assert_eq!(s.points(), &[Sample { row: 0, col: 0, depth: 2.5 }]);
        let s = decode_samples(b"row,col,depth_m\n1,2,3.0\n").unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn samples_csv_skips_non_positive() {
        let s = decode_samples(b"row,col,depth_m\n0,0,-1\n0,1,0\n0,2,1.5\n").unwrap();
        assert_eq!(s.points(), &[Sample { row: 0, col: 2, depth: 1.5 }]);
    }

    #[test]
    fn samples_csv_duplicates_rejected() {
        assert!(matches!(decode_samples(b"0,0,1\n0,0,2\n"), Err(Error::DuplicateSample { .. })));
        assert!(matches!(decode_samples(b"0,x,1\n"), Err(Error::BadRecord { .. })));
    }

    #[test]
    fn sidecar_scale_used() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&5000u16.to_be_bytes());
        fs::write(&path, &bytes).unwrap();
        assert_eq!(load_depth(&path, DepthLoadOptions::default()).unwrap().get(0, 0), Some(5.0));
        fs::write(dir.path().join("d.pgm.scale"), "5000\n").unwrap();
        assert_eq!(load_depth(&path, DepthLoadOptions::default()).unwrap().get(0, 0), Some(1.0));
        assert_eq!(load_depth(&path, DepthLoadOptions { pgm_scale: Some(100.0) }).unwrap().get(0, 0), Some(50.0));
    }

    proptest! {
        #[test]
        fn dpg_bit_exact(vals in prop::collection::vec(prop_oneof![Just(0.0), -1e6f64..1e6], 1..40), w in 1usize..5) {
            let h = vals.len() / w;
            prop_assume!(h > 0);
            let vals = vals[..h * w].to_vec();
            let valid = vals.iter().map(|v| *v != 0.0).collect();
            let g = DepthGrid::new(h, w, vals, valid).unwrap();
            let bytes = encode_dpg(&g);
            let back = decode_dpg(&bytes).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(encode_dpg(&back), bytes);
        }

        #[test]
        fn samples_csv_bit_exact(cells in prop::collection::btree_map((0usize..50, 0usize..50), 1e-6f64..1e3, 0..30)) {
            let s = SparseSamples::new(cells.into_iter().map(|((row, col), depth)| Sample { row, col, depth }).collect()).unwrap();
            prop_assert_eq!(decode_samples(&encode_samples(&s).unwrap()).unwrap(), s);
        }
    }
}
