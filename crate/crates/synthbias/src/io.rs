//! Text file layout for one split.
//!
//! ```text
//! format_version 1
//! split <train|id_test|ood_test|cf_test>
//! spec.<field> <value>          one line per BiasSpec field
//! rows <n> q_dim <dq> v_dim <dv>
//! <group> <label> <core_q> <core_v> <spur_q> <spur_v> <spur_x> <q_0> … <q_dq-1> <v_0> … <v_dv-1>
//! ```
//!
//! Floats are written with 17 significant digits, so a read returns the
//! written values bit for bit.

use crate::{BiasSpec, OodMode, Result, Sample, SplitName, SynthError};
use netcore::fmt_f64;
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

fn spec_lines(spec: &BiasSpec) -> Vec<(&'static str, String)> {
    vec![
        ("num_classes", spec.num_classes.to_string()),
        ("block_dim", spec.block_dim.to_string()),
        ("rho_q", fmt_f64(spec.rho_q)),
        ("rho_v", fmt_f64(spec.rho_v)),
        ("rho_cross", fmt_f64(spec.rho_cross)),
        ("noise_sigma", fmt_f64(spec.noise_sigma)),
        ("n_train", spec.n_train.to_string()),
        ("n_test", spec.n_test.to_string()),
        ("seed", spec.seed.to_string()),
        ("num_bias_classes", spec.num_bias_classes.to_string()),
        ("core_amp", fmt_f64(spec.core_amp)),
        ("prefix_amp", fmt_f64(spec.prefix_amp)),
        ("spur_amp", fmt_f64(spec.spur_amp)),
        ("pad_sigma", fmt_f64(spec.pad_sigma)),
        ("mu_shift", fmt_f64(spec.mu_shift)),
        (
            "ood_mode",
            match spec.ood_mode {
                OodMode::Agnostic => "agnostic".into(),
                OodMode::Anti => "anti".into(),
            },
        ),
    ]
}

pub fn write_split(path: &Path, name: SplitName, spec: &BiasSpec, samples: &[Sample]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "format_version {FORMAT_VERSION}");
    let _ = writeln!(s, "split {}", name.as_str());
    for (k, v) in spec_lines(spec) {
        let _ = writeln!(s, "spec.{k} {v}");
    }
    let _ = writeln!(s, "rows {} q_dim {} v_dim {}", samples.len(), spec.q_dim(), spec.v_dim());
    for smp in samples {
        let _ = write!(
            s,
            "{} {} {} {} {} {} {}",
            smp.group_id, smp.label, smp.core_q, smp.core_v, smp.spur[0], smp.spur[1], smp.spur[2]
        );
        for x in smp.q.iter().chain(&smp.v) {
            s.push(' ');
            s.push_str(&fmt_f64(*x));
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|source| SynthError::Io { path: path.display().to_string(), source })
}

pub fn read_split(path: &Path) -> Result<(SplitName, BiasSpec, Vec<Sample>)> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io { path: p.clone(), source })?;
    let corrupt = |reason: String| SynthError::Corrupt { path: p.clone(), reason };
    let mut lines = text.lines();

    let mut header = |want: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| corrupt(format!("missing '{want}' line")))?;
        let (k, v) = line.split_once(' ').ok_or_else(|| corrupt(format!("malformed line '{line}'")))?;
        if k != want {
            return Err(corrupt(format!("expected '{want}', found '{k}'")));
        }
        Ok(v.to_string())
    };

    let version: u32 = header("format_version")?.parse().map_err(|_| corrupt("bad format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(SynthError::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    let split_name = header("split")?;
    let name = SplitName::parse(&split_name).ok_or_else(|| corrupt(format!("unknown split '{split_name}'")))?;

    let mut spec = BiasSpec::default();
    for (key, _) in spec_lines(&BiasSpec::default()) {
        let v = header(&format!("spec.{key}"))?;
        let bad = |_| corrupt(format!("bad value for spec.{key}: '{v}'"));
        match key {
            "num_classes" => spec.num_classes = v.parse().map_err(bad)?,
            "block_dim" => spec.block_dim = v.parse().map_err(bad)?,
            "rho_q" => spec.rho_q = v.parse().map_err(|_| corrupt(format!("bad rho_q '{v}'")))?,
            "rho_v" => spec.rho_v = v.parse().map_err(|_| corrupt(format!("bad rho_v '{v}'")))?,
            "rho_cross" => spec.rho_cross = v.parse().map_err(|_| corrupt(format!("bad rho_cross '{v}'")))?,
            "noise_sigma" => spec.noise_sigma = v.parse().map_err(|_| corrupt(format!("bad noise_sigma '{v}'")))?,
            "n_train" => spec.n_train = v.parse().map_err(bad)?,
            "n_test" => spec.n_test = v.parse().map_err(bad)?,
            "seed" => spec.seed = v.parse().map_err(|_| corrupt(format!("bad seed '{v}'")))?,
            "num_bias_classes" => spec.num_bias_classes = v.parse().map_err(bad)?,
            "core_amp" => spec.core_amp = v.parse().map_err(|_| corrupt(format!("bad core_amp '{v}'")))?,
            "prefix_amp" => spec.prefix_amp = v.parse().map_err(|_| corrupt(format!("bad prefix_amp '{v}'")))?,
            "spur_amp" => spec.spur_amp = v.parse().map_err(|_| corrupt(format!("bad spur_amp '{v}'")))?,
            "pad_sigma" => spec.pad_sigma = v.parse().map_err(|_| corrupt(format!("bad pad_sigma '{v}'")))?,
            "mu_shift" => spec.mu_shift = v.parse().map_err(|_| corrupt(format!("bad mu_shift '{v}'")))?,
            "ood_mode" => {
                spec.ood_mode = match v.as_str() {
                    "agnostic" => OodMode::Agnostic,
                    "anti" => OodMode::Anti,
                    _ => return Err(corrupt(format!("bad ood_mode '{v}'"))),
                }
            }
            _ => unreachable!("every spec key is handled"),
        }
    }
    spec.validate()?;

    let rows_line = header("rows")?;
    let parts: Vec<&str> = rows_line.split(' ').collect();
    if parts.len() != 5 || parts[1] != "q_dim" || parts[3] != "v_dim" {
        return Err(corrupt(format!("malformed rows line '{rows_line}'")));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| corrupt(format!("bad integer '{s}'")));
    let n = parse_usize(parts[0])?;
    let (qd, vd) = (parse_usize(parts[2])?, parse_usize(parts[4])?);
    if qd != spec.q_dim() || vd != spec.v_dim() {
        return Err(corrupt("row dimensions disagree with spec".into()));
    }

    let mut samples = Vec::with_capacity(n);
    for r in 0..n {
        let line = lines.next().ok_or_else(|| corrupt(format!("truncated: {r} of {n} rows")))?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 7 + qd + vd {
            return Err(corrupt(format!("row {r}: {} fields, expected {}", fields.len(), 7 + qd + vd)));
        }
        let ints: Vec<usize> = fields[..7].iter().map(|s| parse_usize(s)).collect::<Result<_>>()?;
        let floats: Vec<f64> = fields[7..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| corrupt(format!("row {r}: bad float '{s}'"))))
            .collect::<Result<_>>()?;
        if ints[..7].iter().any(|&c| c >= spec.num_classes) {
            return Err(corrupt(format!("row {r}: class index out of range")));
        }
        samples.push(Sample {
            group_id: ints[0],
            label: ints[1],
            core_q: ints[2],
            core_v: ints[3],
            spur: [ints[4], ints[5], ints[6]],
            q: floats[..qd].to_vec(),
            v: floats[qd..].to_vec(),
        });
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(corrupt("trailing data after last row".into()));
    }
    Ok((name, spec, samples))
}
