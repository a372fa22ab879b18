//! Problem instances: data model, validation, the text file format and generators.
//!
//! Sites are numbered facilities first (`0..nf`), then clients (`nf..nf+nc`).

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ParseError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Facility {
    pub id: String,
    pub capacity: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    facilities: Vec<Facility>,
    clients: Vec<String>,
    k: usize,
    coords: Option<Vec<[f64; 2]>>,
    metric: Vec<f64>,
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Instance {
    /// Builds an instance from an explicit dense metric over all sites.
    pub fn with_metric(facilities: Vec<Facility>, clients: Vec<String>, k: usize, metric: Vec<f64>) -> Result<Self> {
        let n = facilities.len() + clients.len();
        if metric.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "metric has {} entries, expected {}",
                metric.len(),
                n * n
            )));
        }
        if metric.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput("metric entries must be finite and nonnegative".into()));
        }
        let inst = Instance {
            facilities,
            clients,
            k,
            coords: None,
            metric,
        };
        inst.check_records()?;
        Ok(inst)
    }

    /// Builds an instance from planar coordinates; the metric is Euclidean.
    pub fn with_coords(facilities: Vec<Facility>, clients: Vec<String>, k: usize, coords: Vec<[f64; 2]>) -> Result<Self> {
        let n = facilities.len() + clients.len();
        if coords.len() != n {
            return Err(Error::InvalidInput(format!("{} coordinates for {} sites", coords.len(), n)));
        }
        if coords.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidInput("coordinates must be finite".into()));
        }
        let mut metric = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                metric[a * n + b] = euclid(coords[a], coords[b]);
            }
        }
        let inst = Instance {
            facilities,
            clients,
            k,
            coords: Some(coords),
            metric,
        };
        inst.check_records()?;
        Ok(inst)
    }

    fn check_records(&self) -> Result<()> {
        if self.facilities.is_empty() {
            return Err(Error::InvalidInput("no facilities".into()));
        }
        if self.k == 0 || self.k > self.facilities.len() {
            return Err(Error::InvalidInput(format!(
                "k out of range (1 <= k <= {}), got {}",
                self.facilities.len(),
                self.k
            )));
        }
        if let Some(f) = self.facilities.iter().find(|f| f.capacity == 0) {
            return Err(Error::InvalidInput(format!("facility {} has capacity 0", f.id)));
        }
        let mut seen = HashSet::new();
        for id in self.facilities.iter().map(|f| &f.id).chain(&self.clients) {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("duplicate id `{id}`")));
            }
        }
        Ok(())
    }

    /// Same instance with a different budget `k`.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut inst = self.clone();
        inst.k = k;
        inst.check_records()?;
        Ok(inst)
    }

    pub fn nf(&self) -> usize {
        self.facilities.len()
    }

    pub fn nc(&self) -> usize {
        self.clients.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn clients(&self) -> &[String] {
        &self.clients
    }

    pub fn capacity(&self, i: usize) -> u32 {
        self.facilities[i].capacity
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn sites(&self) -> usize {
        self.nf() + self.nc()
    }

    /// Distance between two sites.
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.metric[a * self.sites() + b]
    }

    /// Distance between facility `i` and client `j`.
    pub fn fc(&self, i: usize, j: usize) -> f64 {
        self.d(i, self.nf() + j)
    }

    /// Distance between clients `a` and `b`.
    pub fn cc(&self, a: usize, b: usize) -> f64 {
        self.d(self.nf() + a, self.nf() + b)
    }

    pub fn facility_index(&self, id: &str) -> Option<usize> {
        self.facilities.iter().position(|f| f.id == id)
    }

    pub fn client_index(&self, id: &str) -> Option<usize> {
        self.clients.iter().position(|c| c == id)
    }

    /// Sum of the `k` largest values of `cap(i)` over facilities.
    pub fn top_k_capacity(&self, cap: impl Fn(u32) -> u64) -> u64 {
        let mut caps: Vec<u64> = self.facilities.iter().map(|f| cap(f.capacity)).collect();
        caps.sort_unstable_by(|a, b| b.cmp(a));
        caps.iter().take(self.k).sum()
    }

    /// Serializes to the instance file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "CKM {} {} {}", self.nf(), self.nc(), self.k);
        for (i, f) in self.facilities.iter().enumerate() {
            match &self.coords {
                Some(c) => {
                    let _ = writeln!(out, "F {} {} {} {}", f.id, f.capacity, c[i][0], c[i][1]);
                }
                None => {
                    let _ = writeln!(out, "F {} {}", f.id, f.capacity);
                }
            }
        }
        for (j, id) in self.clients.iter().enumerate() {
            match &self.coords {
                Some(c) => {
                    let p = c[self.nf() + j];
                    let _ = writeln!(out, "C {} {} {}", id, p[0], p[1]);
                }
                None => {
                    let _ = writeln!(out, "C {id}");
                }
            }
        }
        if self.coords.is_none() {
            out.push_str("D\n");
            let n = self.sites();
            for a in 0..n {
                let row: Vec<String> = (0..n).map(|b| self.d(a, b).to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, field: &'static str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| ParseError::Field {
        line,
        field,
        token: tok.to_string(),
    })
}

/// Parses the instance file format:
///
/// ```text
/// CKM nf nc k
/// F <id> <capacity> [x y]     (nf lines)
/// C <id> [x y]                (nc lines)
/// D                           (optional, then (nf+nc)^2 distances)
/// ```
///
/// `#` starts a comment.
pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(ParseError::Header { line: 1 })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "CKM" {
        return Err(ParseError::Header { line: hline });
    }
    let nf: usize = parse_num(toks[1], hline, "nf")?;
    let nc: usize = parse_num(toks[2], hline, "nc")?;
    let k: usize = parse_num(toks[3], hline, "k")?;
    if k == 0 || k > nf {
        return Err(ParseError::KOutOfRange { line: hline, k, nf });
    }

    let mut facilities = Vec::with_capacity(nf);
    let mut clients = Vec::with_capacity(nc);
    let mut coords: Vec<Option<[f64; 2]>> = Vec::new();
    let mut seen = HashSet::new();
    let mut metric: Option<Vec<f64>> = None;
    let mut metric_line = 0;

    for (ln, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if let Some(m) = metric.as_mut() {
            for t in toks {
                m.push(parse_num(t, ln, "distance")?);
            }
            continue;
        }
        match toks[0] {
            "F" => {
                if !clients.is_empty() || facilities.len() == nf {
                    return Err(ParseError::Record {
                        line: ln,
                        token: line.to_string(),
                    });
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(ParseError::Field {
                        line: ln,
                        field: "facility record",
                        token: line.to_string(),
                    });
                }
                let cap: i64 = toks[2].parse().map_err(|_| ParseError::Capacity {
                    line: ln,
                    token: toks[2].to_string(),
                })?;
                if cap <= 0 || cap > u32::MAX as i64 {
                    return Err(ParseError::Capacity {
                        line: ln,
                        token: toks[2].to_string(),
                    });
                }
                if !seen.insert(toks[1].to_string()) {
                    return Err(ParseError::DuplicateId {
                        line: ln,
                        id: toks[1].to_string(),
                    });
                }
                facilities.push(Facility {
                    id: toks[1].to_string(),
                    capacity: cap as u32,
                });
                coords.push(parse_point(&toks[3..], ln)?);
            }
            "C" => {
                if facilities.len() != nf {
                    return Err(ParseError::Count {
                        what: "facility",
                        expected: nf,
                        found: facilities.len(),
                    });
                }
                if clients.len() == nc {
                    return Err(ParseError::Record {
                        line: ln,
                        token: line.to_string(),
                    });
                }
                if toks.len() != 2 && toks.len() != 4 {
                    return Err(ParseError::Field {
                        line: ln,
                        field: "client record",
                        token: line.to_string(),
                    });
                }
                if !seen.insert(toks[1].to_string()) {
                    return Err(ParseError::DuplicateId {
                        line: ln,
                        id: toks[1].to_string(),
                    });
                }
                clients.push(toks[1].to_string());
                coords.push(parse_point(&toks[2..], ln)?);
            }
            "D" => {
                metric_line = ln;
                let mut m = Vec::with_capacity((nf + nc) * (nf + nc));
                for t in &toks[1..] {
                    m.push(parse_num(t, ln, "distance")?);
                }
                metric = Some(m);
            }
            other => {
                return Err(ParseError::Record {
                    line: ln,
                    token: other.to_string(),
                })
            }
        }
    }
    if facilities.len() != nf {
        return Err(ParseError::Count {
            what: "facility",
            expected: nf,
            found: facilities.len(),
        });
    }
    if clients.len() != nc {
        return Err(ParseError::Count {
            what: "client",
            expected: nc,
            found: clients.len(),
        });
    }
    let with_coords = coords.iter().filter(|c| c.is_some()).count();
    let n = nf + nc;
    let inst = match metric {
        Some(m) => {
            if with_coords > 0 {
                return Err(ParseError::MixedMetric { line: metric_line });
            }
            if m.len() != n * n {
                return Err(ParseError::MetricSize {
                    expected: n * n,
                    found: m.len(),
                });
            }
            if let Some(bad) = m.iter().find(|d| !d.is_finite() || **d < 0.0) {
                return Err(ParseError::Field {
                    line: metric_line,
                    field: "distance",
                    token: bad.to_string(),
                });
            }
            Instance {
                facilities,
                clients,
                k,
                coords: None,
                metric: m,
            }
        }
        None => {
            if with_coords != n {
                return Err(ParseError::NoMetric);
            }
            let pts: Vec<[f64; 2]> = coords.into_iter().map(|c| c.unwrap()).collect();
            let mut metric = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    metric[a * n + b] = euclid(pts[a], pts[b]);
                }
            }
            Instance {
                facilities,
                clients,
                k,
                coords: Some(pts),
                metric,
            }
        }
    };
    Ok(inst)
}

fn parse_point(toks: &[&str], line: usize) -> Result<Option<[f64; 2]>, ParseError> {
    match toks {
        [] => Ok(None),
        [x, y] => {
            let x: f64 = parse_num(x, line, "x coordinate")?;
            let y: f64 = parse_num(y, line, "y coordinate")?;
            if !x.is_finite() || !y.is_finite() {
                return Err(ParseError::Field {
                    line,
                    field: "coordinate",
                    token: format!("{x} {y}"),
                });
            }
            Ok(Some([x, y]))
        }
        _ => Err(ParseError::Field {
            line,
            field: "coordinates",
            token: toks.join(" "),
        }),
    }
}

/// Uniform random points in the unit square with integer capacities in
/// `[cap_lo, cap_hi]`. Deterministic for a fixed seed.
pub fn gen_euclidean(nf: usize, nc: usize, k: usize, cap_lo: u32, cap_hi: u32, seed: u64) -> Result<Instance> {
    if nf == 0 || nc == 0 || k == 0 || k > nf || cap_lo == 0 || cap_lo > cap_hi {
        return Err(Error::InvalidInput(format!(
            "gen_euclidean({nf}, {nc}, {k}, {cap_lo}, {cap_hi}): invalid ranges"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(nf + nc);
    let mut facilities = Vec::with_capacity(nf);
    for i in 0..nf {
        coords.push([rng.gen::<f64>(), rng.gen::<f64>()]);
        facilities.push(Facility {
            id: format!("f{i}"),
            capacity: rng.gen_range(cap_lo..=cap_hi),
        });
    }
    let mut clients = Vec::with_capacity(nc);
    for j in 0..nc {
        coords.push([rng.gen::<f64>(), rng.gen::<f64>()]);
        clients.push(format!("c{j}"));
    }
    Instance::with_coords(facilities, clients, k, coords)
}

/// A random desk-scale instance (`|F| ≤ 10`, `|C| ≤ 20`) whose `k` largest
/// capacities hold every client. Deterministic for a fixed seed.
pub fn gen_suite_instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed5_u64);
    let nf: usize = rng.gen_range(3..=10);
    let nc = rng.gen_range(nf..=20);
    let k = rng.gen_range(1..=nf.min(6));
    let hi = (2 * nc).div_ceil(k).max(2) as u32;
    let lo = (hi / 2).max(1);
    for attempt in 0..64 {
        let inst = gen_euclidean(nf, nc, k, lo, hi, seed.wrapping_mul(64).wrapping_add(attempt))?;
        if inst.top_k_capacity(u64::from) >= nc as u64 {
            return Ok(inst);
        }
    }
    gen_euclidean(nf, nc, k, hi, hi, seed)
}

/// The integrality-gap family: `u` isolated groups, each with two facilities of
/// capacity `u` and `2u-1` collocated clients; groups are `dist` apart and
/// `k = 2u-1`.
pub fn gen_gap_instance(u: u32, dist: f64) -> Result<Instance> {
    if u < 2 || !(dist > 0.0) || !dist.is_finite() {
        return Err(Error::InvalidInput(format!("gen_gap_instance({u}, {dist}): need u >= 2 and dist > 0")));
    }
    let groups = u as usize;
    let per = 2 * groups - 1;
    let mut facilities = Vec::new();
    let mut group_of = Vec::new();
    for g in 0..groups {
        for a in 0..2 {
            facilities.push(Facility {
                id: format!("g{g}f{a}"),
                capacity: u,
            });
            group_of.push(g);
        }
    }
    let mut clients = Vec::new();
    for g in 0..groups {
        for b in 0..per {
            clients.push(format!("g{g}c{b}"));
            group_of.push(g);
        }
    }
    let n = group_of.len();
    let mut metric = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if group_of[a] != group_of[b] {
                metric[a * n + b] = dist;
            }
        }
    }
    Instance::with_metric(facilities, clients, per, metric)
}

/// A problem found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonZeroDiagonal { site: usize, value: f64 },
    Asymmetric { a: usize, b: usize },
    Triangle { a: usize, b: usize, c: usize, excess: f64 },
    /// Warning: even the `k` largest capacities cannot hold every client.
    CapacityShortfall { top_k: u64, clients: usize },
}

/// Checks the metric axioms (tolerance `1e-9`) and the capacity counting bound.
pub fn validate(inst: &Instance) -> Vec<Violation> {
    const TOL: f64 = 1e-9;
    let n = inst.sites();
    let mut out = Vec::new();
    for a in 0..n {
        if inst.d(a, a).abs() > TOL {
            out.push(Violation::NonZeroDiagonal {
                site: a,
                value: inst.d(a, a),
            });
        }
        for b in a + 1..n {
            if (inst.d(a, b) - inst.d(b, a)).abs() > TOL {
                out.push(Violation::Asymmetric { a, b });
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            let dab = inst.d(a, b);
            for c in 0..n {
                let excess = inst.d(a, c) - dab - inst.d(b, c);
                if excess > TOL && a < c {
                    out.push(Violation::Triangle { a, b, c, excess });
                }
            }
        }
    }
    let top = inst.top_k_capacity(|u| u as u64);
    if top < inst.nc() as u64 {
        out.push(Violation::CapacityShortfall {
            top_k: top,
            clients: inst.nc(),
        });
    }
    out
}
