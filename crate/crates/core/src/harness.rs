//! Overhead measurement: the same analysis job run directly ("plain") and
//! through the full attested protocol with encryption ("isolated").
//!
//! Peak memory comes from [`TrackingAllocator`], which a binary opts into
//! with `#[global_allocator]`. Without it every memory figure reads 0 and
//! memory overheads are reported as `n/a`.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crate::build_check::{build_executable, BuilderConfig};
use crate::crypto::{seeded_rng, SecureRng};
use crate::protocol::{consumer_verify, provider_run, LocalTransport, ProviderParams, Transcript};
use crate::symexec::{explore, init_analysis, AnalysisReport, AnalyzerConfig, Outcome, PropertySet};
use crate::tee::{platform_setup, Manufacturer};
use crate::wasm::{count_instructions, parse_module};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator plus live-byte and high-water counters.
pub struct TrackingAllocator;

fn grew(by: usize) {
    let now = CURRENT.fetch_add(by, Ordering::Relaxed) + by;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                grew(new_size - layout.size());
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

impl TrackingAllocator {
    /// Marks the probe as installed; call once from `main`.
    pub fn activate() {
        ACTIVE.store(true, Ordering::Relaxed);
    }
}

pub fn probe_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

/// Measures the allocation high-water mark above the live bytes at
/// `begin`. Scopes nest: dropping one restores any higher outer peak.
pub struct PeakScope {
    base: usize,
    outer_peak: usize,
}

impl PeakScope {
    pub fn begin() -> Self {
        let outer_peak = PEAK.load(Ordering::Relaxed);
        let base = CURRENT.load(Ordering::Relaxed);
        PEAK.store(base, Ordering::Relaxed);
        PeakScope { base, outer_peak }
    }

    pub fn peak_bytes(&self) -> u64 {
        if !probe_active() {
            return 0;
        }
        PEAK.load(Ordering::Relaxed).saturating_sub(self.base) as u64
    }
}

impl Drop for PeakScope {
    fn drop(&mut self) {
        PEAK.fetch_max(self.outer_peak, Ordering::Relaxed);
    }
}

/// `(isolated − plain) / plain × 100`; NaN when `plain` is zero.
pub fn overhead(isolated: f64, plain: f64) -> f64 {
    if plain == 0.0 {
        f64::NAN
    } else {
        (isolated - plain) / plain * 100.0
    }
}

#[derive(Debug, Clone)]
pub struct BenchJob {
    pub name: String,
    pub source: String,
    pub properties: PropertySet,
}

/// Loads every `<name>.wat` with a sibling `<name>.props`, sorted by name.
/// Unreadable or unparsable pairs are returned as errors, not dropped.
pub fn load_corpus(dir: &Path) -> std::io::Result<Vec<Result<BenchJob, (String, String)>>> {
    let mut wats: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wat"))
        .collect();
    wats.sort();
    Ok(wats
        .into_iter()
        .map(|wat| {
            let name = wat.file_name().unwrap().to_string_lossy().into_owned();
            let load = || -> Result<BenchJob, String> {
                let source = std::fs::read_to_string(&wat).map_err(|e| e.to_string())?;
                let props_text = std::fs::read_to_string(wat.with_extension("props")).map_err(|e| e.to_string())?;
                let properties = PropertySet::parse(&props_text).map_err(|e| e.to_string())?;
                Ok(BenchJob {
                    name: name.clone(),
                    source,
                    properties,
                })
            };
            load().map_err(|e| (name.clone(), e))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modes {
    Plain,
    Isolated,
    Both,
}

impl Modes {
    pub fn plain(self) -> bool {
        self != Modes::Isolated
    }

    pub fn isolated(self) -> bool {
        self != Modes::Plain
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub analyzer: AnalyzerConfig,
    pub builder: BuilderConfig,
    pub modes: Modes,
    /// Each mode runs this many times; the fastest run is reported.
    pub repetitions: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            analyzer: AnalyzerConfig::default(),
            builder: BuilderConfig::default(),
            modes: Modes::Both,
            repetitions: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Measured {
    pub seconds: f64,
    pub peak_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub file: String,
    pub instructions: usize,
    pub plain: Option<Measured>,
    pub isolated: Option<Measured>,
    pub verdicts_plain: Vec<Outcome>,
    pub verdicts_isolated: Vec<Outcome>,
    pub error: Option<String>,
}

impl BenchRecord {
    fn failed(file: String, error: String) -> Self {
        BenchRecord {
            file,
            instructions: 0,
            plain: None,
            isolated: None,
            verdicts_plain: Vec::new(),
            verdicts_isolated: Vec::new(),
            error: Some(error),
        }
    }

    pub fn overhead_time(&self) -> f64 {
        match (self.isolated, self.plain) {
            (Some(i), Some(p)) => overhead(i.seconds, p.seconds),
            _ => f64::NAN,
        }
    }

    pub fn overhead_mem(&self) -> f64 {
        match (self.isolated, self.plain) {
            (Some(i), Some(p)) => overhead(i.peak_bytes as f64, p.peak_bytes as f64),
            _ => f64::NAN,
        }
    }

    /// Both modes ran and agree on every property outcome.
    pub fn verdicts_match(&self) -> bool {
        self.plain.is_some() && self.isolated.is_some() && self.verdicts_plain == self.verdicts_isolated
    }
}

fn outcomes(r: &AnalysisReport) -> Vec<Outcome> {
    r.outcomes.iter().map(|o| o.outcome).collect()
}

fn fastest<T>(reps: u32, mut f: impl FnMut() -> Result<(Duration, u64, T), String>) -> Result<(Measured, T), String> {
    let mut best: Option<(Measured, T)> = None;
    for _ in 0..reps.max(1) {
        let (d, mem, v) = f()?;
        let m = Measured {
            seconds: d.as_secs_f64(),
            peak_bytes: mem,
        };
        if best.as_ref().is_none_or(|(b, _)| m.seconds < b.seconds) {
            let peak = best.as_ref().map_or(0, |(b, _)| b.peak_bytes).max(mem);
            best = Some((Measured { peak_bytes: peak, ..m }, v));
        }
    }
    Ok(best.unwrap())
}

/// Build, parse and analyse directly.
pub fn run_plain(job: &BenchJob, cfg: &BenchConfig) -> Result<(Duration, u64, AnalysisReport), String> {
    let scope = PeakScope::begin();
    let start = Instant::now();
    let (bytes, map) = build_executable(&cfg.builder, &job.source).map_err(|e| e.to_string())?;
    let module = parse_module(&bytes).map_err(|e| e.to_string())?;
    let analysis = init_analysis(module, map, job.properties.clone()).map_err(|e| e.to_string())?;
    let report = explore(&analysis, &cfg.analyzer.bounds);
    Ok((start.elapsed(), scope.peak_bytes(), report))
}

/// The same job as a full session: IC load, attestation, key exchange,
/// encrypted submission, in-IC build and analysis, certificate check.
pub fn run_isolated(
    job: &BenchJob,
    cfg: &BenchConfig,
    man: &Manufacturer,
    rng: &mut dyn SecureRng,
) -> Result<(Duration, u64, AnalysisReport), String> {
    let x = cfg.analyzer.to_bytes();
    let b = cfg.builder.to_bytes();
    let p = job.properties.to_bytes();
    let (executable, _) = build_executable(&cfg.builder, &job.source).map_err(|e| e.to_string())?;
    let scope = PeakScope::begin();
    let start = Instant::now();
    let platform = platform_setup(man, rng);
    let (id, _) = platform.load_ic(&x, &b, &p).map_err(|e| e.to_string())?;
    let mut t = LocalTransport::new(&platform, id, Transcript::new());
    let params = ProviderParams {
        session: rng.next_u64(),
        rot_pub: man.rot_public(),
        x_code: x.clone(),
        b_config: b.clone(),
        p_props: p.clone(),
        source: job.source.clone(),
        executable,
        origin_key: None,
    };
    let out = provider_run(&mut t, params, rng).map_err(|e| e.to_string())?;
    // Verdict is not required to be accept: unknown outcomes legitimately reject.
    let _ = consumer_verify(&out.chain(), &man.rot_public(), &x, &b, &p, None);
    Ok((start.elapsed(), scope.peak_bytes(), out.cc.report))
}

pub fn bench_job(job: &BenchJob, cfg: &BenchConfig, man: &Manufacturer, rng: &mut dyn SecureRng) -> BenchRecord {
    let instructions = match build_executable(&cfg.builder, &job.source)
        .map_err(|e| e.to_string())
        .and_then(|(bytes, _)| parse_module(&bytes).map_err(|e| e.to_string()))
    {
        Ok(m) => count_instructions(&m),
        Err(e) => return BenchRecord::failed(job.name.clone(), e),
    };
    let mut rec = BenchRecord {
        instructions,
        ..BenchRecord::failed(job.name.clone(), String::new())
    };
    rec.error = None;
    if cfg.modes.plain() {
        match fastest(cfg.repetitions, || run_plain(job, cfg)) {
            Ok((m, r)) => {
                rec.plain = Some(m);
                rec.verdicts_plain = outcomes(&r);
            }
            Err(e) => rec.error = Some(format!("plain: {e}")),
        }
    }
    if cfg.modes.isolated() {
        match fastest(cfg.repetitions, || run_isolated(job, cfg, man, rng)) {
            Ok((m, r)) => {
                rec.isolated = Some(m);
                rec.verdicts_isolated = outcomes(&r);
            }
            Err(e) => rec.error = Some(format!("isolated: {e}")),
        }
    }
    rec
}

/// Runs every job sequentially with one manufacturer derived from the seed.
pub fn run_bench(jobs: &[Result<BenchJob, (String, String)>], cfg: &BenchConfig) -> Vec<BenchRecord> {
    let mut rng = seeded_rng(cfg.seed);
    let man = Manufacturer::new(&mut rng);
    jobs.iter()
        .map(|j| match j {
            Ok(job) => bench_job(job, cfg, &man, &mut rng),
            Err((name, e)) => BenchRecord::failed(name.clone(), e.clone()),
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn verdict_code(v: &[Outcome]) -> String {
    v.iter()
        .map(|o| match o {
            Outcome::Valid => 'V',
            Outcome::Violated => 'X',
            Outcome::Unknown => '?',
        })
        .collect()
}

fn pct(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.1}")
    } else {
        "n/a".into()
    }
}

fn secs(m: Option<Measured>) -> String {
    m.map_or("-".into(), |m| format!("{:.6}", m.seconds))
}

fn bytes(m: Option<Measured>) -> String {
    m.map_or("-".into(), |m| m.peak_bytes.to_string())
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "file",
    "instr",
    "time_plain_s",
    "time_isolated_s",
    "overhead_time_%",
    "mem_plain_B",
    "mem_isolated_B",
    "overhead_mem_%",
    "verdicts",
    "match",
];

/// Column-aligned table with a trailing average row, followed by one
/// `record ...` line per file for machine consumption.
pub fn format_table(records: &[BenchRecord]) -> String {
    let mut rows: Vec<Vec<String>> = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for r in records {
        if let Some(e) = &r.error {
            if r.plain.is_none() && r.isolated.is_none() {
                rows.push(vec![r.file.clone(), format!("error: {e}")]);
                continue;
            }
        }
        let verdicts = if r.verdicts_plain.is_empty() { &r.verdicts_isolated } else { &r.verdicts_plain };
        rows.push(vec![
            r.file.clone(),
            r.instructions.to_string(),
            secs(r.plain),
            secs(r.isolated),
            pct(r.overhead_time()),
            bytes(r.plain),
            bytes(r.isolated),
            pct(r.overhead_mem()),
            verdict_code(verdicts),
            if r.verdicts_match() { "yes" } else { "no" }.into(),
        ]);
    }
    let ok: Vec<&BenchRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let avg = |f: &dyn Fn(&BenchRecord) -> Option<f64>| -> String {
        let m = mean(ok.iter().filter_map(|r| f(r)));
        if m.is_finite() {
            format!("{m:.6}")
        } else {
            "-".into()
        }
    };
    rows.push(vec![
        "average".into(),
        pct(mean(ok.iter().map(|r| r.instructions as f64))),
        avg(&|r| r.plain.map(|m| m.seconds)),
        avg(&|r| r.isolated.map(|m| m.seconds)),
        pct(mean(ok.iter().map(|r| r.overhead_time()))),
        pct(mean(ok.iter().filter_map(|r| r.plain.map(|m| m.peak_bytes as f64)))),
        pct(mean(ok.iter().filter_map(|r| r.isolated.map(|m| m.peak_bytes as f64)))),
        pct(mean(ok.iter().map(|r| r.overhead_mem()))),
        String::new(),
        String::new(),
    ]);

    let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| if row.len() == 2 && i == 1 { cell.clone() } else { format!("{cell:<w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    for r in records {
        let _ = writeln!(
            out,
            "record file={} instr={} t_plain={} t_isolated={} overhead_time={} m_plain={} m_isolated={} overhead_mem={} verdicts_plain={} verdicts_isolated={} error={}",
            r.file,
            r.instructions,
            secs(r.plain),
            secs(r.isolated),
            pct(r.overhead_time()),
            bytes(r.plain),
            bytes(r.isolated),
            pct(r.overhead_mem()),
            verdict_code(&r.verdicts_plain),
            verdict_code(&r.verdicts_isolated),
            r.error.as_deref().unwrap_or("-").replace(' ', "_"),
        );
    }
    out
}
