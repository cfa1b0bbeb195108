//! Builtin curve specs (`circle:r=1,n=256`) and small value parsers.

use std::collections::BTreeMap;
use std::path::Path;

use curveflow_core::su2::C;
use curveflow_core::{make_circle, make_helix, make_line, make_perturbed_circle, Curve, Vec3};

/// Parsed `name:key=value,...` with the keys each builtin accepts.
struct Builtin<'a> {
    name: &'a str,
    params: BTreeMap<&'a str, &'a str>,
}

impl<'a> Builtin<'a> {
    fn parse(s: &'a str) -> Result<Self, String> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = BTreeMap::new();
        for item in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| format!("expected key=value in curve spec, got {item:?}"))?;
            if params.insert(k, v).is_some() {
                return Err(format!("duplicate key {k:?} in curve spec"));
            }
        }
        Ok(Self { name, params })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), String> {
        match self.params.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(format!("unknown key {k:?} for {} (allowed: {})", self.name, allowed.join(", "))),
            None => Ok(()),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, String> {
        self.params.get(key).map_or(Ok(default), |v| parse_f64(v).map_err(|e| format!("{key}: {e}")))
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, String> {
        self.params.get(key).map_or(Ok(default), |v| v.parse().map_err(|_| format!("{key}: expected an integer, got {v:?}")))
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64, String> {
        self.params.get(key).map_or(Ok(default), |v| v.parse().map_err(|_| format!("{key}: expected an integer, got {v:?}")))
    }
}

pub const BUILTINS: &str = "circle:r,n | helix:a,b,turns,n | line:length,n | perturbed:r,amp,seed,n";

/// Builtin spec, or a path to a curve JSON file.
pub fn load_curve(spec: &str, seed: u64) -> Result<Curve, String> {
    let b = Builtin::parse(spec)?;
    let curve = match b.name {
        "circle" => {
            b.check_keys(&["r", "n"])?;
            make_circle(b.f64("r", 1.0)?, b.usize("n", 256)?)
        }
        "helix" => {
            b.check_keys(&["a", "b", "turns", "n"])?;
            make_helix(b.f64("a", 1.0)?, b.f64("b", 1.0)?, b.f64("turns", 1.0)?, b.usize("n", 256)?)
        }
        "line" => {
            b.check_keys(&["length", "n"])?;
            make_line(b.f64("length", 1.0)?, b.usize("n", 64)?)
        }
        "perturbed" => {
            b.check_keys(&["r", "amp", "seed", "n"])?;
            make_perturbed_circle(b.f64("r", 1.0)?, b.f64("amp", 0.05)?, b.u64("seed", seed)?, b.usize("n", 256)?)
        }
        _ if Path::new(spec).is_file() => Curve::load(Path::new(spec)),
        _ => return Err(format!("{spec:?} is neither a builtin ({BUILTINS}) nor a curve file")),
    };
    curve.map_err(|e| e.to_string())
}

/// Finite `f64`.
pub fn parse_f64(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got {s:?}")),
    }
}

fn parse_list(s: &str, len: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_, _>>()?;
    if v.len() != len {
        return Err(format!("expected {len} comma-separated numbers, got {s:?}"));
    }
    Ok(v)
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v = parse_list(s, 3)?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

/// `re,im`.
pub fn parse_complex(s: &str) -> Result<C, String> {
    let v = parse_list(s, 2)?;
    Ok(C::new(v[0], v[1]))
}

/// `lo,hi,count` as an evenly spaced grid.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let v = parse_list(s, 3)?;
    let count = v[2];
    if count < 1.0 || count.fract() != 0.0 {
        return Err(format!("grid count must be a positive integer, got {count}"));
    }
    let m = count as usize;
    if m == 1 {
        return Ok(vec![v[0]]);
    }
    Ok((0..m).map(|i| v[0] + (v[1] - v[0]) * i as f64 / (m - 1) as f64).collect())
}

/// `i,j`.
pub fn parse_pair(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected i,j, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<i32>().map_err(|_| format!("expected an integer, got {x:?}"));
    Ok((p(a)?, p(b)?))
}

/// Flow weights: `k` or `k:w,k:w,...`.
pub fn parse_weights(s: &str) -> Result<BTreeMap<i32, f64>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',') {
        let (k, w) = match item.split_once(':') {
            Some((k, w)) => (k, parse_f64(w)?),
            None => (item, 1.0),
        };
        let k: i32 = k.trim().parse().map_err(|_| format!("expected a flow index, got {k:?}"))?;
        if out.insert(k, w).is_some() {
            return Err(format!("flow index {k} given twice"));
        }
    }
    Ok(out)
}
