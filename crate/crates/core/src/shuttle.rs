//! The Statlog shuttle data: download, decompress, merge, filter and cache.
//!
//! The training and test files are merged and class 1 (about 80% of the
//! rows) is dropped, leaving 12414 rows of 9 numeric attributes and a class
//! column. The cached CSV carries a SHA-256 sidecar that is checked on every
//! load.

use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{self, RawDataset};

pub const TRAIN_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/shuttle/shuttle.trn.Z";
pub const TEST_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/shuttle/shuttle.tst";

/// Rows left after dropping class 1.
pub const FILTERED_ROWS: usize = 12414;
pub const N_ATTRIBUTES: usize = 9;
pub const CSV_NAME: &str = "shuttle.csv";

#[derive(Debug, Error)]
pub enum ShuttleError {
    #[error("download of {url} failed: {message}")]
    Network { url: String, message: String },
    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("corrupt compressed stream: {0}")]
    Decompress(String),
    #[error("malformed record on line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("expected {expected} rows after filtering, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
}

/// Decodes a Unix `compress` (`.Z`) stream.
pub fn decompress_z(data: &[u8]) -> Result<Vec<u8>, ShuttleError> {
    let err = |m: &str| ShuttleError::Decompress(m.to_string());
    if data.len() < 3 || data[0] != 0x1f || data[1] != 0x9d {
        return Err(err("missing magic header"));
    }
    let max_bits = (data[2] & 0x1f) as u32;
    let block_mode = data[2] & 0x80 != 0;
    if !(9..=16).contains(&max_bits) {
        return Err(err("unsupported code width"));
    }
    let max_max_code: usize = 1 << max_bits;
    let mut prefix = vec![0u16; max_max_code];
    let mut suffix = vec![0u8; max_max_code];
    for (c, s) in suffix.iter_mut().enumerate().take(256) {
        *s = c as u8;
    }
    let total_bits = data.len() * 8;
    let mut pos = 24usize;
    let mut n_bits = 9u32;
    let mut max_code: usize = (1 << n_bits) - 1;
    let mut free_ent: usize = if block_mode { 257 } else { 256 };
    let mut old_code: Option<usize> = None;
    let mut fin_char = 0u8;
    let mut out = Vec::with_capacity(data.len() * 3);
    let mut stack = Vec::new();
    // Codes come in groups of `n_bits` bytes counted from `base`; a width
    // change or a table reset skips to the end of the current group and
    // starts a new base there.
    let mut base = 24usize;
    let align = |pos: usize, base: usize, n_bits: u32| {
        let group = (n_bits as usize) << 3;
        let rel = pos - base;
        let aligned = base + (rel - 1) + (group - (rel - 1 + group) % group);
        aligned & !7
    };
    loop {
        if free_ent > max_code && n_bits < max_bits {
            pos = align(pos, base, n_bits);
            base = pos;
            n_bits += 1;
            max_code = if n_bits == max_bits {
                max_max_code
            } else {
                (1 << n_bits) - 1
            };
            continue;
        }
        if pos + n_bits as usize > total_bits {
            break;
        }
        let byte = pos >> 3;
        let mut window = 0u32;
        for (i, b) in data[byte..(byte + 4).min(data.len())].iter().enumerate() {
            window |= u32::from(*b) << (8 * i);
        }
        let code = ((window >> (pos & 7)) & ((1 << n_bits) - 1)) as usize;
        pos += n_bits as usize;

        let Some(prev) = old_code else {
            if code > 255 {
                return Err(err("first code is not a literal"));
            }
            fin_char = code as u8;
            out.push(fin_char);
            old_code = Some(code);
            continue;
        };
        if code == 256 && block_mode {
            pos = align(pos, base, n_bits);
            base = pos;
            n_bits = 9;
            max_code = (1 << n_bits) - 1;
            free_ent = 256;
            continue;
        }
        let in_code = code;
        let mut c = code;
        if c >= free_ent {
            if c > free_ent {
                return Err(err("code beyond table"));
            }
            stack.push(fin_char);
            c = prev;
        }
        while c >= 256 {
            stack.push(suffix[c]);
            c = prefix[c] as usize;
        }
        fin_char = suffix[c];
        stack.push(fin_char);
        out.extend(stack.drain(..).rev());
        if free_ent < max_max_code {
            prefix[free_ent] = prev as u16;
            suffix[free_ent] = fin_char;
            free_ent += 1;
        }
        old_code = Some(in_code);
    }
    Ok(out)
}

/// Parses whitespace-separated records of 9 attributes and a class.
pub fn parse_records(text: &str) -> Result<Vec<([f64; N_ATTRIBUTES], u8)>, ShuttleError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != N_ATTRIBUTES + 1 {
            return Err(ShuttleError::Format {
                line: i + 1,
                message: format!("{} fields", fields.len()),
            });
        }
        let mut x = [0.0; N_ATTRIBUTES];
        for (slot, f) in x.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| ShuttleError::Format {
                line: i + 1,
                message: format!("{f:?} is not a number"),
            })?;
        }
        let class = fields[N_ATTRIBUTES].parse().map_err(|_| ShuttleError::Format {
            line: i + 1,
            message: "bad class".into(),
        })?;
        out.push((x, class));
    }
    Ok(out)
}

/// CSV text with header `x1..x9,class`, rows of class 1 removed.
pub fn filtered_csv(records: &[([f64; N_ATTRIBUTES], u8)]) -> String {
    let mut s = (1..=N_ATTRIBUTES).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    s.push_str(",class\n");
    for (x, c) in records.iter().filter(|(_, c)| *c != 1) {
        for v in x {
            s.push_str(&v.to_string());
            s.push(',');
        }
        s.push_str(&c.to_string());
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

/// Checks a cached file against its sidecar checksum.
pub fn verify_cached(path: &Path) -> Result<(), ShuttleError> {
    let bytes = std::fs::read(path)?;
    let expected = std::fs::read_to_string(sidecar(path))?.trim().to_string();
    let found = sha256_hex(&bytes);
    if found != expected {
        return Err(ShuttleError::ChecksumMismatch {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Writes `contents` to `path` with its checksum sidecar.
pub fn write_cached(path: &Path, contents: &[u8]) -> Result<(), ShuttleError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    std::fs::write(sidecar(path), sha256_hex(contents) + "\n")?;
    Ok(())
}

/// Default cache directory: `$EXTREMIX_CACHE`, else `$XDG_CACHE_HOME/extremix`,
/// else `~/.cache/extremix`.
pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("EXTREMIX_CACHE") {
        return PathBuf::from(dir);
    }
    let base = std::env::var_os("XDG_CACHE_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache")))
        .unwrap_or_else(|| PathBuf::from(".cache"));
    base.join("extremix")
}

/// The cached CSV in `cache_dir` if present and intact.
pub fn cached(cache_dir: &Path) -> Option<PathBuf> {
    let path = cache_dir.join(CSV_NAME);
    (path.exists() && verify_cached(&path).is_ok()).then_some(path)
}

fn download(url: &str) -> Result<Vec<u8>, ShuttleError> {
    let net = |e: ureq::Error| ShuttleError::Network {
        url: url.to_string(),
        message: e.to_string(),
    };
    log::info!("downloading {url}");
    let mut resp = ureq::get(url).call().map_err(net)?;
    resp.body_mut()
        .with_config()
        .limit(64 << 20)
        .read_to_vec()
        .map_err(net)
}

/// Returns the cached filtered CSV, downloading and building it on a miss.
/// A cached file whose checksum does not match is an error, not a refetch.
pub fn fetch(cache_dir: &Path) -> Result<PathBuf, ShuttleError> {
    let path = cache_dir.join(CSV_NAME);
    if path.exists() {
        verify_cached(&path)?;
        log::info!("using cached {}", path.display());
        return Ok(path);
    }
    let train = decompress_z(&download(TRAIN_URL)?)?;
    let test = download(TEST_URL)?;
    let mut records = parse_records(&String::from_utf8_lossy(&train))?;
    records.extend(parse_records(&String::from_utf8_lossy(&test))?);
    let csv = filtered_csv(&records);
    let rows = csv.lines().count() - 1;
    if rows != FILTERED_ROWS {
        return Err(ShuttleError::RowCount {
            expected: FILTERED_ROWS,
            found: rows,
        });
    }
    write_cached(&path, csv.as_bytes())?;
    Ok(path)
}

/// Attributes and class labels of the filtered data.
#[derive(Debug, Clone)]
pub struct ShuttleData {
    pub raw: RawDataset,
    pub classes: Vec<String>,
}

pub fn load(path: &Path) -> Result<ShuttleData, ShuttleError> {
    verify_cached(path)?;
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let (raw, classes) = ingest::read_csv_with_labels(text.as_bytes(), "class")?;
    Ok(ShuttleData { raw, classes })
}
