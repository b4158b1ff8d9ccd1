//! Dictionary file layout.
//!
//! ```text
//! format_version 1
//! kind confounder_dictionary
//! k <K> latent_dim <L>
//! <c_00> … <c_0(L-1)>        one line per centroid, 17 significant digits
//! ```

use crate::{AteError, ConfounderDictionary, Result};
use netcore::{fmt_f64, Mat};
use std::fmt::Write as _;
use std::path::Path;

pub const DICTIONARY_FORMAT_VERSION: u32 = 1;

pub fn write_dictionary(path: &Path, dict: &ConfounderDictionary) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "format_version {DICTIONARY_FORMAT_VERSION}");
    let _ = writeln!(s, "kind confounder_dictionary");
    let _ = writeln!(s, "k {} latent_dim {}", dict.k(), dict.latent_dim());
    for row in dict.centroids().rows() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    std::fs::write(path, s).map_err(|source| AteError::Io { path: path.display().to_string(), source })
}

pub fn read_dictionary(path: &Path) -> Result<ConfounderDictionary> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| AteError::Io { path: p.clone(), source })?;
    let corrupt = |reason: String| AteError::Corrupt { path: p.clone(), reason };
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("missing {what}")));

    let version = next("format_version line")?;
    let found: u32 = version
        .strip_prefix("format_version ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(format!("malformed version line '{version}'")))?;
    if found != DICTIONARY_FORMAT_VERSION {
        return Err(AteError::UnsupportedVersion { found, expected: DICTIONARY_FORMAT_VERSION });
    }
    if next("kind line")? != "kind confounder_dictionary" {
        return Err(corrupt("not a confounder dictionary".into()));
    }
    let shape = next("shape line")?;
    let parts: Vec<&str> = shape.split(' ').collect();
    let (k, l) = match parts.as_slice() {
        ["k", k, "latent_dim", l] => (
            k.parse::<usize>().map_err(|_| corrupt(format!("bad k '{k}'")))?,
            l.parse::<usize>().map_err(|_| corrupt(format!("bad latent_dim '{l}'")))?,
        ),
        _ => return Err(corrupt(format!("malformed shape line '{shape}'"))),
    };
    let mut m = Mat::zeros((k, l));
    for i in 0..k {
        let line = next(&format!("centroid {i} of {k}"))?;
        let vals: Vec<f64> = line
            .split(' ')
            .map(|t| t.parse::<f64>().map_err(|_| corrupt(format!("centroid {i}: bad float '{t}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != l {
            return Err(corrupt(format!("centroid {i}: {} values, expected {l}", vals.len())));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    if lines.any(|x| !x.is_empty()) {
        return Err(corrupt("trailing data after last centroid".into()));
    }
    ConfounderDictionary::new(m)
}
