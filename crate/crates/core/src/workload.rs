//! Write workloads: trace parsers, synthetic generators and hotness
//! pre-characterisation.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::PathBuf;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use thiserror::Error;

use crate::flash::Lpa;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid workload: {0}")]
    Spec(String),
    #[error("reading trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteRequest {
    pub seq: u64,
    pub byte_offset: u64,
    pub length: u64,
}

impl WriteRequest {
    /// Page range touched by the request: the offset is floor-aligned and the
    /// length rounded up to whole pages.
    pub fn pages(&self, page_size: u64) -> std::ops::Range<Lpa> {
        let first = self.byte_offset / page_size;
        first..first + self.length.div_ceil(page_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    /// `timestamp,op,offset,length`
    #[default]
    Canonical,
    /// `ASU,LBA,size,opcode,timestamp`
    Spc,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(TraceFormat::Canonical),
            "spc" => Ok(TraceFormat::Spc),
            _ => Err(format!("unknown trace format `{s}` (expected canonical|spc)")),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Canonical => "canonical",
            TraceFormat::Spc => "spc",
        })
    }
}

/// Number of requests a generator emits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WriteCount {
    Requests(u64),
    /// Enough requests to write the logical capacity this many times.
    CapacityMultiple(f64),
}

impl WriteCount {
    pub fn resolve(&self, logical_pages: u64, req_pages: u64) -> u64 {
        match *self {
            WriteCount::Requests(n) => n,
            WriteCount::CapacityMultiple(x) => {
                (x * logical_pages as f64 / req_pages.max(1) as f64).round() as u64
            }
        }
    }
}

impl FromStr for WriteCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(x) = s.strip_suffix('x') {
            let x: f64 = x.parse().map_err(|e| format!("bad multiple `{s}`: {e}"))?;
            if !(x > 0.0) {
                return Err(format!("capacity multiple must be positive, got {s}"));
            }
            Ok(WriteCount::CapacityMultiple(x))
        } else {
            s.parse()
                .map(WriteCount::Requests)
                .map_err(|e| format!("bad write count `{s}`: {e}"))
        }
    }
}

impl fmt::Display for WriteCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WriteCount::Requests(n) => write!(f, "{n}"),
            WriteCount::CapacityMultiple(x) => write!(f, "{x}x"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSpec {
    TraceFile {
        path: PathBuf,
        format: TraceFormat,
        lba_unit: u64,
    },
    Uniform {
        writes: WriteCount,
        req_pages: u64,
    },
    /// Regions laid out from address 0 upward, each `(address_fraction, access_fraction)`.
    Hotspot {
        writes: WriteCount,
        req_pages: u64,
        regions: Vec<(f64, f64)>,
    },
    Zipf {
        writes: WriteCount,
        req_pages: u64,
        exponent: f64,
    },
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let spec = |m: String| Err(WorkloadError::Spec(m));
        match self {
            WorkloadSpec::TraceFile { lba_unit, .. } => {
                if *lba_unit == 0 {
                    return spec("lba unit must be positive".into());
                }
            }
            WorkloadSpec::Uniform { req_pages, .. } => {
                if *req_pages == 0 {
                    return spec("request size must be at least one page".into());
                }
            }
            WorkloadSpec::Hotspot {
                req_pages, regions, ..
            } => {
                if *req_pages == 0 {
                    return spec("request size must be at least one page".into());
                }
                if regions.is_empty() {
                    return spec("hotspot needs at least one region".into());
                }
                for &(a, p) in regions {
                    if !(a > 0.0 && a <= 1.0) || !(p > 0.0 && p <= 1.0) {
                        return spec(format!("region fractions must lie in (0, 1], got ({a}, {p})"));
                    }
                }
                let addr: f64 = regions.iter().map(|r| r.0).sum();
                let acc: f64 = regions.iter().map(|r| r.1).sum();
                if addr > 1.0 + 1e-9 {
                    return spec(format!("address fractions sum to {addr} > 1"));
                }
                if (acc - 1.0).abs() > 1e-6 {
                    return spec(format!("access fractions sum to {acc}, expected 1"));
                }
            }
            WorkloadSpec::Zipf {
                req_pages,
                exponent,
                ..
            } => {
                if *req_pages == 0 {
                    return spec("request size must be at least one page".into());
                }
                if !(*exponent > 0.0) {
                    return spec(format!("zipf exponent must be positive, got {exponent}"));
                }
            }
        }
        Ok(())
    }

    /// Materialises the request stream. Generators are pure functions of
    /// `(spec, logical_pages, page_size, seed)`.
    pub fn load(&self, logical_pages: u64, page_size: u64, seed: u64) -> Result<Vec<WriteRequest>, WorkloadError> {
        self.validate()?;
        match self {
            WorkloadSpec::TraceFile {
                path,
                format,
                lba_unit,
            } => {
                let file = File::open(path).map_err(|source| WorkloadError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let reader = BufReader::new(file);
                match format {
                    TraceFormat::Canonical => parse_canonical(reader),
                    TraceFormat::Spc => import_spc(reader, *lba_unit),
                }
            }
            WorkloadSpec::Uniform { writes, req_pages } => Ok(gen_hotspot(
                writes.resolve(logical_pages, *req_pages),
                *req_pages,
                &[(1.0, 1.0)],
                logical_pages,
                page_size,
                seed,
            )?),
            WorkloadSpec::Hotspot {
                writes,
                req_pages,
                regions,
            } => gen_hotspot(
                writes.resolve(logical_pages, *req_pages),
                *req_pages,
                regions,
                logical_pages,
                page_size,
                seed,
            ),
            WorkloadSpec::Zipf {
                writes,
                req_pages,
                exponent,
            } => gen_zipf(
                writes.resolve(logical_pages, *req_pages),
                *req_pages,
                *exponent,
                logical_pages,
                page_size,
                seed,
            ),
        }
    }
}

fn kv_params(s: &str) -> Result<Vec<(&str, &str)>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| format!("expected key=value, got `{p}`"))
        })
        .collect()
}

/// `uniform:writes=N,req=P`, `hotspot:writes=N,req=P,regions=0.1/0.9+0.9/0.1`,
/// `zipf:writes=N,req=P,s=0.99`. `writes` accepts a capacity multiple like `10x`.
impl FromStr for WorkloadSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut writes = None;
        let mut req_pages = 1u64;
        let mut regions = None;
        let mut exponent = None;
        for (k, v) in kv_params(rest)? {
            match k {
                "writes" => writes = Some(v.parse::<WriteCount>()?),
                "req" => req_pages = v.parse().map_err(|e| format!("bad req `{v}`: {e}"))?,
                "regions" => {
                    let mut rs = Vec::new();
                    for r in v.split('+') {
                        let (a, p) = r
                            .split_once('/')
                            .ok_or_else(|| format!("region `{r}` must be addr/access"))?;
                        let a: f64 = a.parse().map_err(|e| format!("bad fraction `{a}`: {e}"))?;
                        let p: f64 = p.parse().map_err(|e| format!("bad fraction `{p}`: {e}"))?;
                        rs.push((a, p));
                    }
                    regions = Some(rs);
                }
                "s" => exponent = Some(v.parse::<f64>().map_err(|e| format!("bad exponent `{v}`: {e}"))?),
                _ => return Err(format!("unknown workload parameter `{k}`")),
            }
        }
        let writes = writes.unwrap_or(WriteCount::CapacityMultiple(1.0));
        let spec = match name {
            "uniform" => WorkloadSpec::Uniform { writes, req_pages },
            "hotspot" => WorkloadSpec::Hotspot {
                writes,
                req_pages,
                regions: regions.unwrap_or_else(|| vec![(0.1, 0.9), (0.9, 0.1)]),
            },
            "zipf" => WorkloadSpec::Zipf {
                writes,
                req_pages,
                exponent: exponent.unwrap_or(0.99),
            },
            other => return Err(format!("unknown workload `{other}` (expected uniform|hotspot|zipf)")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadSpec::TraceFile { path, format, .. } => write!(f, "trace:{}:{format}", path.display()),
            WorkloadSpec::Uniform { writes, req_pages } => write!(f, "uniform:writes={writes},req={req_pages}"),
            WorkloadSpec::Hotspot {
                writes,
                req_pages,
                regions,
            } => {
                let rs: Vec<String> = regions.iter().map(|(a, p)| format!("{a}/{p}")).collect();
                write!(f, "hotspot:writes={writes},req={req_pages},regions={}", rs.join("+"))
            }
            WorkloadSpec::Zipf {
                writes,
                req_pages,
                exponent,
            } => write!(f, "zipf:writes={writes},req={req_pages},s={exponent}"),
        }
    }
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), WorkloadError>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Some(Err(WorkloadError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                }))
            }
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some(Ok((i + 1, trimmed.to_string())))
        }
    })
}

fn parse_field<T: FromStr>(line: usize, name: &str, v: &str) -> Result<T, WorkloadError>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| WorkloadError::Parse {
        line,
        msg: format!("bad {name} `{}`: {e}", v.trim()),
    })
}

fn parse_canonical_line(line: usize, text: &str) -> Result<Option<(u64, u64)>, WorkloadError> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 4 {
        return Err(WorkloadError::Parse {
            line,
            msg: format!("expected 4 fields, got {}", fields.len()),
        });
    }
    let _ts: i64 = parse_field(line, "timestamp", fields[0])?;
    let offset: u64 = parse_field(line, "offset", fields[2])?;
    let length: u64 = parse_field(line, "length", fields[3])?;
    match fields[1].trim() {
        "r" | "R" => Ok(None),
        "w" | "W" => {
            if length == 0 {
                return Err(WorkloadError::Parse {
                    line,
                    msg: "zero-length write".into(),
                });
            }
            Ok(Some((offset, length)))
        }
        op => Err(WorkloadError::Parse {
            line,
            msg: format!("unknown op `{op}`"),
        }),
    }
}

/// Parses the canonical `timestamp,op,offset,length` format, keeping writes
/// only. Any malformed line is an error.
pub fn parse_canonical<R: BufRead>(reader: R) -> Result<Vec<WriteRequest>, WorkloadError> {
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        if let Some((offset, length)) = parse_canonical_line(line, &text)? {
            out.push(WriteRequest {
                seq: out.len() as u64,
                byte_offset: offset,
                length,
            });
        }
    }
    Ok(out)
}

/// Like [`parse_canonical`] but skips malformed lines, returning how many were dropped.
pub fn parse_canonical_permissive<R: BufRead>(reader: R) -> Result<(Vec<WriteRequest>, usize), WorkloadError> {
    let mut out = Vec::new();
    let mut malformed = 0;
    for item in data_lines(reader) {
        let (line, text) = item?;
        match parse_canonical_line(line, &text) {
            Ok(Some((offset, length))) => out.push(WriteRequest {
                seq: out.len() as u64,
                byte_offset: offset,
                length,
            }),
            Ok(None) => {}
            Err(_) => malformed += 1,
        }
    }
    Ok((out, malformed))
}

/// Imports an SPC-style OLTP trace (`ASU,LBA,size,opcode,timestamp[,...]`).
/// The byte offset is `LBA * lba_unit`; the ASU column is ignored.
pub fn import_spc<R: BufRead>(reader: R, lba_unit: u64) -> Result<Vec<WriteRequest>, WorkloadError> {
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() < 5 {
            return Err(WorkloadError::Parse {
                line,
                msg: format!("expected at least 5 fields, got {}", fields.len()),
            });
        }
        let _asu: u64 = parse_field(line, "ASU", fields[0])?;
        let lba: u64 = parse_field(line, "LBA", fields[1])?;
        let size: u64 = parse_field(line, "size", fields[2])?;
        let _ts: f64 = parse_field(line, "timestamp", fields[4])?;
        match fields[3].trim() {
            "W" | "w" => {
                if size == 0 {
                    return Err(WorkloadError::Parse {
                        line,
                        msg: "zero-length write".into(),
                    });
                }
                let byte_offset = lba.checked_mul(lba_unit).ok_or_else(|| WorkloadError::Parse {
                    line,
                    msg: "offset overflows".into(),
                })?;
                out.push(WriteRequest {
                    seq: out.len() as u64,
                    byte_offset,
                    length: size,
                });
            }
            "R" | "r" => {}
            op => {
                return Err(WorkloadError::Parse {
                    line,
                    msg: format!("unknown opcode `{op}`"),
                })
            }
        }
    }
    Ok(out)
}

fn request_at(seq: u64, start_page: u64, req_pages: u64, page_size: u64) -> WriteRequest {
    WriteRequest {
        seq,
        byte_offset: start_page * page_size,
        length: req_pages * page_size,
    }
}

/// Region-skewed generator: pick a region by its access fraction, then a
/// uniform start page inside it. A single `(1.0, 1.0)` region is uniform.
pub fn gen_hotspot(
    writes: u64,
    req_pages: u64,
    regions: &[(f64, f64)],
    logical_pages: u64,
    page_size: u64,
    seed: u64,
) -> Result<Vec<WriteRequest>, WorkloadError> {
    if logical_pages < req_pages {
        return Err(WorkloadError::Spec(format!(
            "request of {req_pages} pages exceeds the {logical_pages}-page logical space"
        )));
    }
    let weights: Vec<f64> = regions.iter().map(|r| r.1).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| WorkloadError::Spec(e.to_string()))?;
    let mut bounds = Vec::with_capacity(regions.len());
    let mut cum = 0.0;
    for &(a, _) in regions {
        let start = (cum * logical_pages as f64).floor() as u64;
        cum += a;
        let end = ((cum * logical_pages as f64).floor() as u64).clamp(start + 1, logical_pages);
        bounds.push((start, end));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..writes)
        .map(|seq| {
            let (start, end) = bounds[pick.sample(&mut rng)];
            let last_start = end.saturating_sub(req_pages).max(start).min(logical_pages - req_pages);
            let first = start.min(last_start);
            let page = rng.gen_range(first..=last_start);
            request_at(seq, page, req_pages, page_size)
        })
        .collect())
}

/// Zipf-distributed request slots; slot rank 1 (the hottest) sits at address 0.
pub fn gen_zipf(
    writes: u64,
    req_pages: u64,
    exponent: f64,
    logical_pages: u64,
    page_size: u64,
    seed: u64,
) -> Result<Vec<WriteRequest>, WorkloadError> {
    let slots = logical_pages / req_pages;
    if slots == 0 {
        return Err(WorkloadError::Spec("request larger than logical space".into()));
    }
    let zipf = Zipf::new(slots, exponent).map_err(|e| WorkloadError::Spec(format!("{e:?}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..writes)
        .map(|seq| {
            let rank = (zipf.sample(&mut rng) as u64).clamp(1, slots);
            request_at(seq, (rank - 1) * req_pages, req_pages, page_size)
        })
        .collect())
}

/// Static hotness level per logical page, 0 being the hottest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotnessMap {
    levels: Vec<u8>,
    n_levels: u8,
}

impl HotnessMap {
    /// Every page at the coldest level.
    pub fn uniform(logical_pages: u64, n_levels: u8) -> Self {
        HotnessMap {
            levels: vec![n_levels.saturating_sub(1); logical_pages as usize],
            n_levels,
        }
    }

    #[inline]
    pub fn level(&self, lpa: Lpa) -> u8 {
        self.levels[lpa as usize]
    }

    pub fn n_levels(&self) -> u8 {
        self.n_levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Pages per level.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.n_levels as usize];
        for &l in &self.levels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Fraction of the address space per hotness level, hottest first.
pub fn default_quantiles(levels: u8) -> Vec<f64> {
    match levels {
        0 | 1 => vec![1.0],
        3 => vec![0.10, 0.30, 0.60],
        n => vec![1.0 / n as f64; n as usize],
    }
}

/// Ranks pages by access count (descending, ties by address) and cuts the
/// ranking at the cumulative `quantiles`. Pages never accessed are coldest.
pub fn precharacterize<I>(accesses: I, logical_pages: u64, quantiles: &[f64]) -> HotnessMap
where
    I: IntoIterator<Item = Lpa>,
{
    let n_levels = quantiles.len().max(1) as u8;
    let coldest = n_levels - 1;
    let mut counts = vec![0u64; logical_pages as usize];
    for lpa in accesses {
        if let Some(c) = counts.get_mut(lpa as usize) {
            *c += 1;
        }
    }
    let mut ranked: Vec<Lpa> = (0..logical_pages).filter(|&p| counts[p as usize] > 0).collect();
    ranked.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));

    let mut levels = vec![coldest; logical_pages as usize];
    let mut cum = 0.0;
    let mut start = 0usize;
    for (level, q) in quantiles.iter().enumerate() {
        cum += q;
        let end = if level + 1 == quantiles.len() {
            ranked.len()
        } else {
            ((cum * logical_pages as f64).round() as usize).min(ranked.len())
        };
        for &lpa in &ranked[start.min(end)..end] {
            levels[lpa as usize] = level as u8;
        }
        start = start.max(end);
    }
    HotnessMap { levels, n_levels }
}
