//! File formats: PGM frames, raw frame stacks, CSV exports and run
//! manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::device::SweepSample;
use crate::eval::LabelMask;
use crate::vision::{Frame, SaliencyMap};
use crate::{Error, Result};

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.into(),
    }
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// Parse a binary (P5) PGM with maxval ≤ 255.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(parse_err(path, format!("expected P5 magic, found `{}`", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, format!("bad PGM header field `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(path, format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1;
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| parse_err(path, "PGM pixel data is truncated"))?;
    Frame::new(w, h, data.to_vec())
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    write_file(path, encode_pgm(frame.width, frame.height, &frame.data))
}

/// Sorted `.pgm` files in `dir`.
pub fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Frames from a directory of PGMs or a raw file with a sidecar header
/// (`<file>.hdr` or `<stem>.hdr`).
pub fn load_frames(path: &Path) -> Result<Vec<Frame>> {
    if path.is_dir() {
        return pgm_files(path)?.iter().map(|p| read_pgm(p)).collect();
    }
    let header = sidecar_path(path)
        .ok_or_else(|| parse_err(path, "raw frame file needs a `.hdr` sidecar"))?;
    read_raw(path, &header)
}

fn sidecar_path(raw: &Path) -> Option<PathBuf> {
    let mut appended = raw.as_os_str().to_owned();
    appended.push(".hdr");
    [PathBuf::from(appended), raw.with_extension("hdr")]
        .into_iter()
        .find(|p| p.is_file())
}

pub fn read_raw(raw: &Path, header: &Path) -> Result<Vec<Frame>> {
    let text = fs::read_to_string(header).map_err(|e| Error::io(header, e))?;
    let (mut w, mut h, mut n) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: header.to_path_buf(),
            line: i + 1,
            msg: "expected `key=value`".into(),
        })?;
        let v: usize = v.trim().parse().map_err(|_| Error::Parse {
            path: header.to_path_buf(),
            line: i + 1,
            msg: format!("bad value `{}`", v.trim()),
        })?;
        match k.trim() {
            "width" => w = Some(v),
            "height" => h = Some(v),
            "frames" => n = Some(v),
            other => {
                return Err(Error::Parse {
                    path: header.to_path_buf(),
                    line: i + 1,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }
    let (Some(w), Some(h), Some(n)) = (w, h, n) else {
        return Err(parse_err(header, "sidecar needs width=, height= and frames="));
    };
    let bytes = fs::read(raw).map_err(|e| Error::io(raw, e))?;
    if bytes.len() != w * h * n {
        return Err(parse_err(
            raw,
            format!("{} bytes, expected {w}·{h}·{n} = {}", bytes.len(), w * h * n),
        ));
    }
    bytes
        .chunks_exact(w * h)
        .map(|c| Frame::new(w, h, c.to_vec()))
        .collect()
}

pub fn write_raw(raw: &Path, frames: &[Frame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to write"))?;
    let mut bytes = Vec::with_capacity(frames.len() * first.data.len());
    for f in frames {
        if (f.width, f.height) != (first.width, first.height) {
            return Err(Error::invalid("frames differ in size"));
        }
        bytes.extend_from_slice(&f.data);
    }
    write_file(raw, bytes)?;
    let mut hdr = raw.as_os_str().to_owned();
    hdr.push(".hdr");
    write_file(
        Path::new(&hdr),
        format!("width={}\nheight={}\nframes={}\n", first.width, first.height, frames.len()),
    )
}

/// Label masks as 0/255 PGMs.
pub fn mask_to_pgm(mask: &LabelMask) -> Vec<u8> {
    let data: Vec<u8> = mask.cells.iter().map(|&c| if c { 255 } else { 0 }).collect();
    encode_pgm(mask.cols, mask.rows, &data)
}

pub fn read_mask(path: &Path) -> Result<LabelMask> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Vec<bool> = line
                .split(',')
                .map(|v| match v.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    o => Err(parse_err(path, format!("mask value `{o}` is not 0 or 1"))),
                })
                .collect::<Result<_>>()?;
            if *cols.get_or_insert(row.len()) != row.len() {
                return Err(parse_err(path, "ragged mask rows"));
            }
            cells.extend(row);
            rows += 1;
        }
        return LabelMask::new(cols.unwrap_or(0), rows, cells);
    }
    let f = read_pgm(path)?;
    LabelMask::new(f.width, f.height, f.data.iter().map(|&b| b >= 128).collect())
}

/// Masks from a directory of PGM/CSV files in lexicographic order.
pub fn load_masks(dir: &Path) -> Result<Vec<LabelMask>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("pgm") || x.eq_ignore_ascii_case("csv"))
        })
        .collect();
    files.sort();
    files.iter().map(|p| read_mask(p)).collect()
}

/// Binary map scaled to 0/255.
pub fn saliency_pgm(map: &SaliencyMap) -> Vec<u8> {
    let data: Vec<u8> = map.binary.iter().map(|&b| b * 255).collect();
    encode_pgm(map.cols, map.rows, &data)
}

/// One grid row per line.
pub fn grid_csv(cols: usize, values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 16);
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn sweep_csv(trace: &[SweepSample]) -> String {
    let mut s = String::from("t_s,applied_v,device_v,current_a,x\n");
    for p in trace {
        let _ = writeln!(
            s,
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            p.t, p.applied_v, p.device_v, p.current_a, p.x
        );
    }
    s
}

/// Key-value run manifest.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, fingerprint: &str) -> Self {
        let mut m = Manifest::default();
        m.push("command", command);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("config_fingerprint", fingerprint);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip() {
        let f = Frame::new(3, 2, vec![0, 10, 20, 30, 40, 255]).unwrap();
        let bytes = encode_pgm(3, 2, &f.data);
        assert_eq!(decode_pgm(&bytes, Path::new("x")).unwrap(), f);
        let with_comment = b"P5\n# hi\n3 2\n255\n\x00\x0a\x14\x1e\x28\xff";
        assert_eq!(decode_pgm(with_comment, Path::new("x")).unwrap(), f);
        assert!(decode_pgm(b"P2\n3 2\n255\n", Path::new("x")).is_err());
        assert!(decode_pgm(b"P5\n3 2\n255\n\x00", Path::new("x")).is_err());
    }

    #[test]
    fn raw_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("clip.raw");
        let frames = vec![Frame::filled(4, 2, 1), Frame::filled(4, 2, 9)];
        write_raw(&raw, &frames).unwrap();
        assert_eq!(load_frames(&raw).unwrap(), frames);
    }

    #[test]
    fn csv_masks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "0,1,0\n1,1,0\n").unwrap();
        let m = read_mask(&p).unwrap();
        assert_eq!((m.cols, m.rows, m.count()), (3, 2, 3));
    }
}
