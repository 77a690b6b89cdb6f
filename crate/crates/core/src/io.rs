//! Configuration files, snapshots and CSV output.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bloch::{BlochPoint, Variant};
use crate::clifford::CliffordState;
use crate::coarse::{figure_rows, SpinResolvedTriple};
use crate::ensemble::{Peak, WeightedEnsemble};
use crate::error::{QdError, QdResult};
use crate::run::StepRecord;
use crate::VERSION;

/// Flat `key = value` configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> QdResult<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| QdError::Parse(format!("line {}: expected key = value", no + 1)))?;
            entries.insert(normalize_key(k), v.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> QdResult<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(normalize_key(key), value.to_string());
    }

    /// Entries of `other` take precedence.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> QdResult<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| QdError::Parse(format!("bad value '{v}' for {key}"))),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> QdResult<T> {
        self.parsed(key)?
            .ok_or_else(|| QdError::InvalidParam(format!("missing required key '{key}'")))
    }

    pub fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> QdResult<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma list or `start:stop:step` range, inclusive of `stop` up to rounding.
    pub fn list_f64(&self, key: &str) -> QdResult<Option<Vec<f64>>> {
        self.get(key).map(parse_list).transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.entries.iter()
    }

    /// First 16 hex digits of the SHA-256 of the sorted entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

pub fn parse_list(s: &str) -> QdResult<Vec<f64>> {
    let bad = || QdError::Parse(format!("bad list '{s}'"));
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as i64;
        return Ok((0..=n.max(-1)).map(|i| start + i as f64 * step).collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
}

/// Provenance line written at the top of CSV outputs.
pub fn provenance(config_hash: &str, seed: u64) -> String {
    format!("# qdtree {VERSION} config={config_hash} seed={seed}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub t: usize,
    pub variant: Variant,
    pub j: f64,
    pub k: usize,
}

pub fn write_snapshot<W: Write>(
    out: &mut W,
    header: &SnapshotHeader,
    ens: &WeightedEnsemble,
    config_hash: &str,
    seed: u64,
) -> QdResult<()> {
    writeln!(
        out,
        "t={} variant={} J={:?} k={} version={VERSION} config={config_hash} seed={seed}",
        header.t, header.variant, header.j, header.k
    )?;
    for p in &ens.peaks {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p.w, p.point.u, p.point.v)?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> QdResult<(SnapshotHeader, WeightedEnsemble)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| QdError::Parse("empty snapshot".into()))??;
    let fields: BTreeMap<&str, &str> = first.split_whitespace().filter_map(|f| f.split_once('=')).collect();
    let field = |k: &str| fields.get(k).copied().ok_or_else(|| QdError::Parse(format!("snapshot header lacks {k}")));
    let num = |k: &str| -> QdResult<f64> { field(k)?.parse().map_err(|_| QdError::Parse(format!("bad {k}"))) };
    let header = SnapshotHeader {
        t: num("t")? as usize,
        variant: field("variant")?.parse()?,
        j: num("J")?,
        k: num("k")? as usize,
    };
    let mut peaks = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| QdError::Parse(format!("bad peak line '{line}'")))?;
        if v.len() != 3 {
            return Err(QdError::Parse(format!("bad peak line '{line}'")));
        }
        peaks.push(Peak::new(v[0], BlochPoint::new(v[1], v[2])?));
    }
    Ok((header.clone(), WeightedEnsemble::new(header.t, peaks)))
}

pub const OBSERVABLE_COLUMNS: &str = "variant,J,k,t,M_or_N,seed,purity,chi,lambda_c,lambda_d";

/// One observable row; `lambda_d` is left empty off the unit circle.
#[allow(clippy::too_many_arguments)]
pub fn observable_row(variant: Variant, j: f64, k: usize, size: usize, seed: u64, rec: &StepRecord, lambda_c: f64) -> String {
    let ld = rec.lambda_d.map(|x| format!("{x:.12e}")).unwrap_or_default();
    format!(
        "{variant},{j},{k},{},{size},{seed},{:.15e},{:.15e},{lambda_c:.15e},{ld}",
        rec.t, rec.purity, rec.chi
    )
}

pub fn write_triple<W: Write>(out: &mut W, tr: &SpinResolvedTriple, prov: &str) -> QdResult<()> {
    writeln!(out, "{prov}")?;
    writeln!(out, "M,p,a,b")?;
    for i in 0..tr.len() {
        writeln!(out, "{},{:.16e},{:.16e},{:.16e}", tr.spin(i), tr.p[i], tr.a[i], tr.b[i])?;
    }
    Ok(())
}

pub fn write_figure<W: Write>(out: &mut W, tr: &SpinResolvedTriple, prov: &str) -> QdResult<()> {
    writeln!(out, "{prov}")?;
    writeln!(out, "M,m,density,r2,angle")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for r in figure_rows(tr) {
        writeln!(out, "{},{:.12e},{:.12e},{},{}", r.spin, r.m, r.density, opt(r.r2), opt(r.angle))?;
    }
    Ok(())
}

pub fn write_clifford<W: Write>(out: &mut W, traj: &[CliffordState], prov: &str) -> QdResult<()> {
    writeln!(out, "{prov}")?;
    writeln!(out, "t,pi_z,pi_x")?;
    for (t, s) in traj.iter().enumerate() {
        writeln!(out, "{t},{:.16e},{:.16e}", s.pi_z, s.pi_x)?;
    }
    Ok(())
}

pub const HIST_BINS: usize = 200;

/// Weights accumulated on a 200x200 grid over [−1, 1]², row-major in u.
pub fn histogram(ens: &WeightedEnsemble) -> Vec<f64> {
    let mut h = vec![0.0; HIST_BINS * HIST_BINS];
    let bin = |x: f64| (((x + 1.0) * 0.5 * HIST_BINS as f64).floor() as isize).clamp(0, HIST_BINS as isize - 1) as usize;
    for p in &ens.peaks {
        h[bin(p.point.u) * HIST_BINS + bin(p.point.v)] += p.w;
    }
    h
}

pub fn write_histogram<W: Write>(out: &mut W, ens: &WeightedEnsemble, prov: &str) -> QdResult<()> {
    writeln!(out, "{prov}")?;
    writeln!(out, "iu,iv,u,v,weight")?;
    let h = histogram(ens);
    let width = 2.0 / HIST_BINS as f64;
    for iu in 0..HIST_BINS {
        for iv in 0..HIST_BINS {
            let (u, v) = (-1.0 + (iu as f64 + 0.5) * width, -1.0 + (iv as f64 + 0.5) * width);
            writeln!(out, "{iu},{iv},{u:.6},{v:.6},{:.12e}", h[iu * HIST_BINS + iv])?;
        }
    }
    Ok(())
}

/// JSON sidecar describing one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub variant: Variant,
    pub j: f64,
    pub k: usize,
    pub engine: String,
    pub size: usize,
    pub t_max: usize,
    pub dropped_mass: f64,
    pub wall_time_s: f64,
}

impl RunMetadata {
    pub fn to_json_line(&self) -> QdResult<String> {
        Ok(serde_json::to_string(self)?)
    }
}
