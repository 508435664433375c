//! Runs every stage over a `(case, p, r)` grid, keeps one terminal record per
//! processed item, checkpoints per cell and writes the tables and verdict.
//!
//! A cell is a sieve case at one exponent, a Lehmer case over the whole `r`
//! range, or an even case. Cells are processed in key order; inside a cell,
//! blocks of `r` run in parallel and are merged in order, so outputs do not
//! depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{decimal, primes_up_to};
use crate::bounds::{mignotte_bound, normalize, Radius};
use crate::cases::{
    eliminate_even_case, instantiate, reconstruct, satisfies_main_equation, template, Branch, CaseTemplate,
    EvenCaseCertificate, R_MAX,
};
use crate::error::{Error, Result};
use crate::germain::{GermainSieve, DEFAULT_K_MAX};
use crate::lehmer::{resolve_case_in, Intermediate};
use crate::localsolve::{local_test, LocalOutcome, LocalWitness, DEFAULT_LIFT_CAP};
use crate::selmer::{DescentEngine, DescentOutcome, DEFAULT_K_MAX_SELMER};
use crate::thue::{bounded_search, export_instances, ThueInstance, DEFAULT_H};

/// Width of an `r` block.
pub const CHUNK: u64 = 10_000;

/// Sieve cases whose `p = 5` row rests on a cited Chabauty computation.
pub const EXTERNAL_P5_CASES: [u8; 3] = [1, 3, 4];

const CITATION: &str = "p = 5: the descent equation defines a genus-2 curve whose rational points were \
                        determined by Chabauty's method; cited, not computed here";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RecordLevel {
    /// One record for every processed `(case, p, r)`.
    #[default]
    All,
    /// Coprime-filter and Germain eliminations are counted but not written.
    PostGermain,
}

impl FromStr for RecordLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RecordLevel::All),
            "post-germain" => Ok(RecordLevel::PostGermain),
            _ => Err(Error::InvalidInput(format!("unknown record level {s:?} (all | post-germain)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub cases: Vec<u8>,
    pub p_min: u64,
    /// `None` means the Mignotte bound at `r_max` for sieve cases.
    pub p_max: Option<u64>,
    pub r_min: u64,
    pub r_max: u64,
    pub k_max: u64,
    pub k_max_selmer: u64,
    pub lift_cap: u64,
    pub thue_h: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub resume: bool,
    pub thue_export: Option<PathBuf>,
    pub records: RecordLevel,
    /// Stop after this many newly computed blocks (for interruption tests).
    pub max_new_chunks: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cases: (1..=12).collect(),
            p_min: 5,
            p_max: None,
            r_min: 1,
            r_max: R_MAX,
            k_max: DEFAULT_K_MAX,
            k_max_selmer: DEFAULT_K_MAX_SELMER,
            lift_cap: DEFAULT_LIFT_CAP,
            thue_h: DEFAULT_H,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: PathBuf::from("out"),
            resume: false,
            thue_export: None,
            records: RecordLevel::All,
            max_new_chunks: None,
        }
    }
}

/// The fields that determine the output.
#[derive(Serialize)]
struct ResultKey<'a> {
    cases: &'a [u8],
    p_min: u64,
    p_max: Option<u64>,
    r_min: u64,
    r_max: u64,
    k_max: u64,
    k_max_selmer: u64,
    lift_cap: u64,
    thue_h: u64,
    records: RecordLevel,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.cases.is_empty() || self.cases.iter().any(|c| !(1..=12).contains(c)) {
            return bad(format!("cases {:?} must be a nonempty subset of 1..=12", self.cases));
        }
        if self.p_min < 5 {
            return bad(format!("p_min = {} must be ≥ 5", self.p_min));
        }
        if self.p_max.is_some_and(|m| m < self.p_min) {
            return bad("p range is empty".into());
        }
        if self.r_min < 1 || self.r_min > self.r_max || self.r_max > R_MAX {
            return bad(format!("r range {}..={} must lie in 1..=10^6 and be nonempty", self.r_min, self.r_max));
        }
        if self.workers == 0 || self.k_max == 0 || self.k_max_selmer == 0 || self.thue_h == 0 {
            return bad("workers, k_max, k_max_selmer and thue_h must be positive".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let mut cases = self.cases.clone();
        cases.sort_unstable();
        cases.dedup();
        let key = ResultKey {
            cases: &cases,
            p_min: self.p_min,
            p_max: self.p_max,
            r_min: self.r_min,
            r_max: self.r_max,
            k_max: self.k_max,
            k_max_selmer: self.k_max_selmer,
            lift_cap: self.lift_cap,
            thue_h: self.thue_h,
            records: self.records,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("plain struct")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    EvenCase,
    CoprimeFilter,
    Germain,
    Local,
    Selmer,
    Lehmer,
    ThueBounded,
    ExternalFact,
    Survivor,
    TrivialXy0,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    EvenCase { certificate: EvenCaseCertificate },
    CoprimeFilter { prime: u64 },
    Germain { q: u64 },
    Local { witness: LocalWitness },
    Selmer { m: u64, epsilons: usize, valuative: usize, cpq: usize },
    Lehmer { exponents: Vec<u64>, intermediate: Vec<Intermediate> },
    /// No solution with `|σ|, |τ| ≤ h`. `descent` says why the previous stage
    /// did not eliminate.
    ThueBounded { h: u64, descent: String },
    ExternalFact { citation: String },
    Solution {
        #[serde(with = "decimal")]
        x: BigInt,
        #[serde(with = "decimal")]
        y: BigInt,
        p: u64,
    },
    Trivial { note: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationRecord {
    pub case: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u64>,
    /// Last exponent covered by a block record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_last: Option<u64>,
    /// Last `r` covered by a block record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_last: Option<u64>,
    pub stage: Stage,
    pub witness: Witness,
}

impl EliminationRecord {
    fn point(case: u8, p: Option<u64>, r: u64, stage: Stage, witness: Witness) -> Self {
        EliminationRecord { case, p, r: Some(r), p_last: None, r_last: None, stage, witness }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    /// `p, germain, local, selmer, thue`
    Sieve,
    /// `p, equations, norm_solutions, solutions`
    Lehmer,
    /// one row covering the exponent and `r` ranges
    Even,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub p: u64,
    pub counts: Vec<u64>,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivorTable {
    pub case: u8,
    pub kind: TableKind,
    pub rows: Vec<TableRow>,
    /// `(p_min, p_last, r_min, r_max)` for even cases
    pub span: Option<(u64, u64, u64, u64)>,
}

impl SurvivorTable {
    pub fn row(&self, p: u64) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.p == p)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self.kind {
            TableKind::Sieve => {
                s.push_str("p,germain,local,selmer,thue\n");
                // trailing all-zero rows collapse into one range row
                let last_nonzero = self.rows.iter().rposition(|r| r.external || r.counts.iter().any(|&c| c > 0));
                let tail_start = last_nonzero.map_or(0, |i| i + 1);
                for r in &self.rows[..tail_start] {
                    if r.external {
                        writeln!(s, "{},external-fact,external-fact,external-fact,external-fact", r.p).unwrap();
                    } else {
                        writeln!(s, "{},{}", r.p, join(&r.counts)).unwrap();
                    }
                }
                match &self.rows[tail_start..] {
                    [] => {}
                    [one] => writeln!(s, "{},0,0,0,0", one.p).unwrap(),
                    [first, .., last] => writeln!(s, "{}-{},0,0,0,0", first.p, last.p).unwrap(),
                }
            }
            TableKind::Lehmer => {
                s.push_str("p,equations,norm_solutions,solutions\n");
                for r in &self.rows {
                    writeln!(s, "{},{}", r.p, join(&r.counts)).unwrap();
                }
            }
            TableKind::Even => {
                s.push_str("p_min,p_max,r_min,r_max,stage\n");
                if let Some((a, b, c, d)) = self.span {
                    writeln!(s, "{a},{b},{c},{d},even-case").unwrap();
                }
            }
        }
        s
    }
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub only_trivial: bool,
    pub survivors: Vec<EliminationRecord>,
    /// Equations closed only by the bounded Thue search.
    pub bounded_thue: u64,
    /// Descent skipped on size limits.
    pub descent_skipped: u64,
    pub cited: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tables: Vec<SurvivorTable>,
    pub verdict: Verdict,
    /// `false` when the run stopped early at `max_new_chunks`.
    pub complete: bool,
}

/// Result of one block of `r`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct ChunkResult {
    /// per exponent: the table counts
    counts: BTreeMap<u64, Vec<u64>>,
    records: Vec<EliminationRecord>,
    /// survivors handed to the Thue stage, kept for export
    thue: Vec<ThueInstance>,
    survivors: Vec<EliminationRecord>,
    bounded_thue: u64,
    descent_skipped: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CellState {
    chunks: BTreeMap<u64, ChunkResult>,
}

enum CellKind {
    Sieve { p: u64 },
    External { p: u64 },
    Lehmer,
    Even { p_last: u64 },
}

struct Cell {
    case: u8,
    kind: CellKind,
}

impl Cell {
    fn key(&self) -> String {
        match self.kind {
            CellKind::Sieve { p } => format!("case{:02}-p{p:06}", self.case),
            CellKind::External { p } => format!("case{:02}-p{p:06}-external", self.case),
            CellKind::Lehmer => format!("case{:02}-lehmer", self.case),
            CellKind::Even { .. } => format!("case{:02}-even", self.case),
        }
    }
}

/// Exponent bound used when `p_max` is automatic.
pub fn auto_p_max(t: &CaseTemplate, r_max: u64) -> Result<u64> {
    mignotte_bound(&normalize(t)?, Radius::from_int(r_max))
}

fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    if hi < lo {
        return Vec::new();
    }
    primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect()
}

fn plan(cfg: &RunConfig) -> Result<Vec<Cell>> {
    let mut cases = cfg.cases.clone();
    cases.sort_unstable();
    cases.dedup();
    let mut cells = Vec::new();
    for case in cases {
        let t = template(case)?;
        match t.branch {
            Branch::Sieve => {
                let hi = match cfg.p_max {
                    Some(m) => m,
                    None => auto_p_max(&t, cfg.r_max)?,
                };
                for p in primes_in(cfg.p_min, hi) {
                    let kind = if p == 5 && EXTERNAL_P5_CASES.contains(&case) {
                        CellKind::External { p }
                    } else {
                        CellKind::Sieve { p }
                    };
                    cells.push(Cell { case, kind });
                }
            }
            Branch::Lehmer => cells.push(Cell { case, kind: CellKind::Lehmer }),
            Branch::EvenContradiction => {
                let p_last = match cfg.p_max {
                    Some(m) => m,
                    None => {
                        let mut m = cfg.p_min;
                        for c in 1..=4 {
                            m = m.max(auto_p_max(&template(c)?, cfg.r_max)?);
                        }
                        m
                    }
                };
                cells.push(Cell { case, kind: CellKind::Even { p_last } });
            }
        }
    }
    Ok(cells)
}

fn chunk_starts(cfg: &RunConfig) -> Vec<u64> {
    let first = (cfg.r_min - 1) / CHUNK * CHUNK + 1;
    (0..).map(|i| first + i * CHUNK).take_while(|&s| s <= cfg.r_max).collect()
}

struct SieveCtx {
    t: CaseTemplate,
    p: u64,
    germain: GermainSieve,
    descent: DescentEngine,
}

fn sieve_chunk(ctx: &SieveCtx, cfg: &RunConfig, lo: u64, hi: u64) -> Result<ChunkResult> {
    let (case, p) = (ctx.t.id, ctx.p);
    let mut res = ChunkResult::default();
    let mut counts = vec![0u64; 4];
    let all = cfg.records == RecordLevel::All;
    let ctx_err = |e: Error, r: u64| Error::Precondition(format!("case {case} p {p} r {r}: {e}"));
    for r in lo..=hi {
        let rec = |stage, witness| EliminationRecord::point(case, Some(p), r, stage, witness);
        if let Some(prime) = ctx.t.r_obstruction(r) {
            if all {
                res.records.push(rec(Stage::CoprimeFilter, Witness::CoprimeFilter { prime }));
            }
            continue;
        }
        if let Some(q) = ctx.germain.witness(r) {
            if all {
                res.records.push(rec(Stage::Germain, Witness::Germain { q }));
            }
            continue;
        }
        counts[0] += 1;
        let inst = instantiate(&ctx.t, p, r).map_err(|e| ctx_err(e, r))?;
        let form = match local_test(&inst, cfg.lift_cap).map_err(|e| ctx_err(e, r))? {
            LocalOutcome::Eliminated(witness) => {
                res.records.push(rec(Stage::Local, Witness::Local { witness }));
                continue;
            }
            LocalOutcome::Survives(f) => f,
        };
        counts[1] += 1;
        let descent = match ctx.descent.test(&form) {
            Ok(DescentOutcome::Eliminated { m, epsilons, valuative, cpq }) => {
                res.records.push(rec(Stage::Selmer, Witness::Selmer { m, epsilons, valuative, cpq }));
                continue;
            }
            Ok(DescentOutcome::Survives { m, alive, epsilons, .. }) => {
                format!("{alive} of {epsilons} classes survive over Q(sqrt(-{m}))")
            }
            Err(e @ (Error::Limit(_) | Error::OutOfRange(_))) => {
                res.descent_skipped += 1;
                format!("skipped: {e}")
            }
            Err(e) => return Err(ctx_err(e, r)),
        };
        counts[2] += 1;
        counts[3] += 1;
        let thue = ThueInstance::from_ternary(&inst);
        let sols = bounded_search(&thue, cfg.thue_h);
        res.thue.push(thue);
        if sols.is_empty() {
            res.bounded_thue += 1;
            res.records.push(rec(Stage::ThueBounded, Witness::ThueBounded { h: cfg.thue_h, descent }));
            continue;
        }
        let mut terminal = None;
        for s in sols {
            let (x, y) = reconstruct(&ctx.t, p, &s.w1, &s.sigma);
            let br = BigInt::from(r);
            if x.is_zero() {
                terminal.get_or_insert(rec(
                    Stage::TrivialXy0,
                    Witness::Trivial { note: format!("w1 = 0, w2 = {} gives x = y = 0", s.sigma) },
                ));
            } else if satisfies_main_equation(&x, &y, &br, p as u32) {
                let survivor = rec(Stage::Survivor, Witness::Solution { x, y, p });
                res.survivors.push(survivor.clone());
                terminal = Some(survivor);
            }
        }
        res.records.push(terminal.unwrap_or_else(|| {
            rec(Stage::ThueBounded, Witness::ThueBounded { h: cfg.thue_h, descent })
        }));
    }
    res.counts.insert(p, counts);
    Ok(res)
}

fn lehmer_chunk(case: u8, cfg: &RunConfig, lo: u64, hi: u64) -> Result<ChunkResult> {
    let t = template(case)?;
    let mut res = ChunkResult::default();
    let p_hi = cfg.p_max.unwrap_or(u64::MAX);
    for r in lo..=hi {
        if let Some(prime) = t.r_obstruction(r) {
            if cfg.records == RecordLevel::All {
                res.records.push(EliminationRecord::point(
                    case,
                    None,
                    r,
                    Stage::CoprimeFilter,
                    Witness::CoprimeFilter { prime },
                ));
            }
            continue;
        }
        let rep = resolve_case_in(case, r, cfg.p_min..=p_hi)
            .map_err(|e| Error::Precondition(format!("case {case} r {r}: {e}")))?;
        for &p in &rep.exponents {
            let c = res.counts.entry(p).or_insert_with(|| vec![0; 3]);
            c[0] += 1;
            c[1] += rep.intermediate.iter().filter(|i| i.p == p).count() as u64;
            c[2] += rep.solutions.iter().filter(|s| s.p == p).count() as u64;
        }
        if rep.solutions.is_empty() {
            res.records.push(EliminationRecord::point(
                case,
                None,
                r,
                Stage::Lehmer,
                Witness::Lehmer { exponents: rep.exponents, intermediate: rep.intermediate },
            ));
        } else {
            for s in rep.solutions {
                let rec = EliminationRecord::point(
                    case,
                    Some(s.p),
                    r,
                    Stage::Survivor,
                    Witness::Solution { x: s.x, y: s.y, p: s.p },
                );
                res.survivors.push(rec.clone());
                res.records.push(rec);
            }
        }
    }
    Ok(res)
}

fn even_result(case: u8, cfg: &RunConfig, p_last: u64) -> Result<ChunkResult> {
    let certificate = eliminate_even_case(&template(case)?)?;
    if let Some(p) = primes_in(cfg.p_min, p_last).into_iter().find(|&p| !certificate.verify(p)) {
        return Err(Error::Precondition(format!("even-case certificate for case {case} fails at p = {p}")));
    }
    Ok(ChunkResult {
        records: vec![EliminationRecord {
            case,
            p: Some(cfg.p_min),
            r: Some(cfg.r_min),
            p_last: Some(p_last),
            r_last: Some(cfg.r_max),
            stage: Stage::EvenCase,
            witness: Witness::EvenCase { certificate },
        }],
        ..Default::default()
    })
}

fn external_result(case: u8, p: u64, cfg: &RunConfig) -> ChunkResult {
    ChunkResult {
        records: vec![EliminationRecord {
            case,
            p: Some(p),
            r: Some(cfg.r_min),
            p_last: None,
            r_last: Some(cfg.r_max),
            stage: Stage::ExternalFact,
            witness: Witness::ExternalFact { citation: CITATION.into() },
        }],
        ..Default::default()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Checkpoints {
    dir: PathBuf,
}

impl Checkpoints {
    fn open(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out.join("checkpoint");
        let manifest = dir.join("manifest.json");
        let hash = cfg.hash();
        if cfg.resume && manifest.exists() {
            let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let stored: serde_json::Value = serde_json::from_str(&text)?;
            if stored["config_hash"] != hash.as_str() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint at {} was written for a different configuration",
                    dir.display()
                )));
            }
        } else {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let body = serde_json::json!({ "config_hash": hash });
            write_atomic(&manifest, body.to_string().as_bytes())?;
        }
        Ok(Checkpoints { dir })
    }

    fn load(&self, key: &str) -> Result<CellState> {
        let path = self.dir.join(format!("{key}.json"));
        if !path.exists() {
            return Ok(CellState::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, key: &str, state: &CellState) -> Result<()> {
        write_atomic(&self.dir.join(format!("{key}.json")), &serde_json::to_vec(state)?)
    }
}

/// Runs (or resumes) the configured computation and writes `records.jsonl`,
/// `caseK_table.csv` and `verdict.txt` under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ckpt = Checkpoints::open(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let cells = plan(cfg)?;
    let starts = chunk_starts(cfg);
    let wave = (cfg.workers * 4).max(1);
    let mut budget = cfg.max_new_chunks;

    let mut finished: Vec<(Cell, CellState)> = Vec::new();
    let mut complete = true;
    for cell in cells {
        let key = cell.key();
        let mut state = ckpt.load(&key)?;
        let single = matches!(cell.kind, CellKind::Even { .. } | CellKind::External { .. });
        let todo: Vec<u64> = if single {
            vec![cfg.r_min].into_iter().filter(|s| !state.chunks.contains_key(s)).collect()
        } else {
            starts.iter().copied().filter(|s| !state.chunks.contains_key(s)).collect()
        };
        let sieve_ctx = match cell.kind {
            CellKind::Sieve { p } if !todo.is_empty() => Some(SieveCtx {
                t: template(cell.case)?,
                p,
                germain: GermainSieve::new(cell.case, p, cfg.k_max)?,
                descent: DescentEngine::new(p, cfg.k_max_selmer)?,
            }),
            _ => None,
        };
        for batch in todo.chunks(wave) {
            let take = match budget {
                Some(0) => 0,
                Some(b) => batch.len().min(b as usize),
                None => batch.len(),
            };
            if take == 0 {
                complete = false;
                break;
            }
            let batch = &batch[..take];
            let results: Vec<Result<(u64, ChunkResult)>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&lo| {
                        let hi = (lo + CHUNK - 1).min(cfg.r_max);
                        let lo_eff = lo.max(cfg.r_min);
                        let res = match cell.kind {
                            CellKind::Sieve { .. } => {
                                sieve_chunk(sieve_ctx.as_ref().expect("context"), cfg, lo_eff, hi)?
                            }
                            CellKind::Lehmer => lehmer_chunk(cell.case, cfg, lo_eff, hi)?,
                            CellKind::Even { p_last } => even_result(cell.case, cfg, p_last)?,
                            CellKind::External { p } => external_result(cell.case, p, cfg),
                        };
                        Ok((lo, res))
                    })
                    .collect()
            });
            for r in results {
                let (lo, res) = r?;
                state.chunks.insert(lo, res);
            }
            ckpt.save(&key, &state)?;
            if let Some(b) = budget.as_mut() {
                *b -= take as u64;
            }
            if take < batch.len() {
                complete = false;
                break;
            }
        }
        let expected = if single { 1 } else { starts.len() };
        if state.chunks.len() < expected {
            complete = false;
        }
        finished.push((cell, state));
        if !complete {
            break;
        }
    }
    if !complete {
        return Ok(RunSummary {
            tables: Vec::new(),
            verdict: Verdict {
                only_trivial: false,
                survivors: Vec::new(),
                bounded_thue: 0,
                descent_skipped: 0,
                cited: Vec::new(),
                text: "incomplete run; resume to finish\n".into(),
            },
            complete: false,
        });
    }
    emit(cfg, &finished)
}

fn emit(cfg: &RunConfig, finished: &[(Cell, CellState)]) -> Result<RunSummary> {
    let rec_path = cfg.out.join("records.jsonl");
    let tmp = rec_path.with_extension("jsonl.tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    let mut tables: BTreeMap<u8, SurvivorTable> = BTreeMap::new();
    let mut survivors = Vec::new();
    let mut thue = Vec::new();
    let (mut bounded_thue, mut descent_skipped) = (0u64, 0u64);
    let mut cited = Vec::new();
    for (cell, state) in finished {
        let kind = match cell.kind {
            CellKind::Sieve { .. } | CellKind::External { .. } => TableKind::Sieve,
            CellKind::Lehmer => TableKind::Lehmer,
            CellKind::Even { .. } => TableKind::Even,
        };
        let table =
            tables.entry(cell.case).or_insert_with(|| SurvivorTable { case: cell.case, kind, rows: Vec::new(), span: None });
        let mut merged: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for chunk in state.chunks.values() {
            for rec in &chunk.records {
                serde_json::to_writer(&mut w, rec)?;
                w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
            }
            for (&p, c) in &chunk.counts {
                let m = merged.entry(p).or_insert_with(|| vec![0; c.len()]);
                for (a, b) in m.iter_mut().zip(c) {
                    *a += b;
                }
            }
            survivors.extend(chunk.survivors.iter().cloned());
            thue.extend(chunk.thue.iter().cloned());
            bounded_thue += chunk.bounded_thue;
            descent_skipped += chunk.descent_skipped;
        }
        match cell.kind {
            CellKind::Sieve { p } => {
                let counts = merged.remove(&p).unwrap_or_else(|| vec![0; 4]);
                table.rows.push(TableRow { p, counts, external: false });
            }
            CellKind::External { p } => {
                table.rows.push(TableRow { p, counts: vec![0; 4], external: true });
                cited.push(format!("case {} p = {p}, r in {}..={}: {CITATION}", cell.case, cfg.r_min, cfg.r_max));
            }
            CellKind::Lehmer => {
                for (p, counts) in merged {
                    table.rows.push(TableRow { p, counts, external: false });
                }
            }
            CellKind::Even { p_last } => table.span = Some((cfg.p_min, p_last, cfg.r_min, cfg.r_max)),
        }
    }
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, &rec_path).map_err(|e| Error::io(&rec_path, e))?;

    let tables: Vec<SurvivorTable> = tables.into_values().collect();
    for t in &tables {
        write_atomic(&cfg.out.join(format!("case{}_table.csv", t.case)), t.to_csv().as_bytes())?;
    }
    if let Some(path) = &cfg.thue_export {
        export_instances(&thue, path)?;
    }
    let verdict = verdict(cfg, survivors, bounded_thue, descent_skipped, cited);
    write_atomic(&cfg.out.join("verdict.txt"), verdict.text.as_bytes())?;
    Ok(RunSummary { tables, verdict, complete: true })
}

fn verdict(
    cfg: &RunConfig,
    survivors: Vec<EliminationRecord>,
    bounded_thue: u64,
    descent_skipped: u64,
    cited: Vec<String>,
) -> Verdict {
    let only_trivial = survivors.is_empty();
    let mut text = String::new();
    let mut cases = cfg.cases.clone();
    cases.sort_unstable();
    cases.dedup();
    let p_hi = cfg.p_max.map_or("auto".to_string(), |p| p.to_string());
    writeln!(text, "equation: 7x(x^2 + 12r^2) = y^p").unwrap();
    writeln!(text, "cases: {}", join(&cases.iter().map(|&c| c as u64).collect::<Vec<_>>())).unwrap();
    writeln!(text, "exponents: {}..={p_hi}", cfg.p_min).unwrap();
    writeln!(text, "r: {}..={}", cfg.r_min, cfg.r_max).unwrap();
    if only_trivial {
        writeln!(text, "verdict: only solutions with xy = 0").unwrap();
    } else {
        writeln!(text, "verdict: open, {} nontrivial survivor(s)", survivors.len()).unwrap();
        for s in &survivors {
            writeln!(text, "  survivor: {}", serde_json::to_string(s).expect("record")).unwrap();
        }
    }
    writeln!(text, "computed: every listed cell except the cited ones below").unwrap();
    writeln!(
        text,
        "bounded thue: {bounded_thue} equation(s) closed by search with |sigma|, |tau| <= {}",
        cfg.thue_h
    )
    .unwrap();
    writeln!(text, "descent skipped on size limits: {descent_skipped}").unwrap();
    if cited.is_empty() {
        writeln!(text, "cited, not computed: none").unwrap();
    } else {
        writeln!(text, "cited, not computed:").unwrap();
        for c in &cited {
            writeln!(text, "  {c}").unwrap();
        }
    }
    Verdict { only_trivial, survivors, bounded_thue, descent_skipped, cited, text }
}

/// Re-checks the witness of one record from scratch.
pub fn verify_record(rec: &EliminationRecord) -> Result<bool> {
    let t = template(rec.case)?;
    let need = |o: Option<u64>, what: &str| {
        o.ok_or_else(|| Error::InvalidInput(format!("record lacks {what}")))
    };
    Ok(match &rec.witness {
        Witness::CoprimeFilter { prime } => {
            let r = need(rec.r, "r")?;
            r % prime == 0 && t.forbidden_r_primes().contains(prime)
        }
        Witness::Germain { q } => {
            let (p, r) = (need(rec.p, "p")?, need(rec.r, "r")?);
            let inst = instantiate(&t, p, r)?;
            let (a, b, c) = (inst.a_value(), inst.b_value(), inst.c_value());
            let m = |x: &num_bigint::BigUint| u64::try_from(x % *q).expect("reduced");
            crate::germain::b_set_is_empty(m(&a), m(&b), m(&c), p, *q)?
        }
        Witness::Local { witness } => {
            let (p, r) = (need(rec.p, "p")?, need(rec.r, "r")?);
            let inst = instantiate(&t, p, r)?;
            let (a, b, c) = crate::localsolve::instance_coefficients(&inst);
            match (witness, crate::localsolve::reduce_coprime(&a, &b, &c, p)?) {
                (LocalWitness::Reduction { prime }, crate::localsolve::Reduction::Obstructed { prime: q, .. }) => {
                    *prime == q
                }
                (LocalWitness::QuadraticResidue { q }, crate::localsolve::Reduction::Coprime(f)) => {
                    crate::localsolve::qr_failure(&f) == Some(*q)
                }
                (LocalWitness::Adic { q, exponent }, crate::localsolve::Reduction::Coprime(f)) => {
                    match q.checked_pow(*exponent).filter(|&m| m <= 200_000) {
                        Some(_) => crate::localsolve::count_solutions_mod(&f, p, *q, *exponent) == 0,
                        None => matches!(
                            crate::localsolve::locally_soluble(&f, p, *q, DEFAULT_LIFT_CAP)?,
                            crate::localsolve::LocalResult::Insoluble { .. }
                        ),
                    }
                }
                _ => false,
            }
        }
        Witness::Selmer { .. } => {
            let (p, r) = (need(rec.p, "p")?, need(rec.r, "r")?);
            match local_test(&instantiate(&t, p, r)?, DEFAULT_LIFT_CAP)? {
                LocalOutcome::Survives(f) => crate::selmer::descent_test(&f, p)?.eliminated(),
                LocalOutcome::Eliminated(_) => true,
            }
        }
        Witness::Lehmer { exponents, intermediate } => {
            let r = need(rec.r, "r")?;
            let rep = crate::lehmer::resolve_case(rec.case, r)?;
            let mine: Vec<&Intermediate> = rep.intermediate.iter().filter(|i| exponents.contains(&i.p)).collect();
            exponents.iter().all(|p| rep.exponents.contains(p))
                && mine.len() == intermediate.len()
                && mine.iter().zip(intermediate).all(|(a, b)| *a == b)
                && !rep.solutions.iter().any(|s| exponents.contains(&s.p))
        }
        Witness::EvenCase { certificate } => {
            let lo = need(rec.p, "p")?;
            let hi = rec.p_last.unwrap_or(lo);
            primes_in(lo, hi).into_iter().all(|p| certificate.verify(p))
        }
        Witness::Solution { x, y, p } => satisfies_main_equation(x, y, &BigInt::from(need(rec.r, "r")?), *p as u32),
        Witness::ThueBounded { .. } | Witness::ExternalFact { .. } | Witness::Trivial { .. } => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path, cases: Vec<u8>, p: (u64, u64), r: (u64, u64)) -> RunConfig {
        RunConfig {
            cases,
            p_min: p.0,
            p_max: Some(p.1),
            r_min: r.0,
            r_max: r.1,
            workers: 2,
            out: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn small_run_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), vec![1, 5, 7], (5, 11), (1, 300));
        let s = run(&c).unwrap();
        assert!(s.complete);
        let recs: Vec<EliminationRecord> = fs::read_to_string(dir.path().join("records.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        // case 1: 300 r for p = 7 and 11, one block record for p = 5
        let case1: Vec<_> = recs.iter().filter(|r| r.case == 1).collect();
        assert_eq!(case1.len(), 1 + 2 * 300);
        assert_eq!(case1[0].stage, Stage::ExternalFact);
        assert!(recs.iter().filter(|r| r.case == 5).all(|r| r.stage == Stage::EvenCase));
        assert_eq!(recs.iter().filter(|r| r.case == 7).count(), 300);
        for r in &recs {
            assert!(verify_record(r).unwrap(), "{r:?}");
        }
        let t1 = &s.tables[0];
        for w in t1.rows.iter().filter(|r| !r.external) {
            assert!(w.counts.windows(2).all(|x| x[0] >= x[1]));
        }
        assert!(s.verdict.text.contains("cited, not computed:"));
        let csv = fs::read_to_string(dir.path().join("case1_table.csv")).unwrap();
        assert!(csv.starts_with("p,germain,local,selmer,thue\n5,external-fact"));
    }

    #[test]
    fn resume_matches_and_rejects_changes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let full = cfg(a.path(), vec![2, 8], (5, 7), (1, 25_000));
        run(&full).unwrap();
        let mut part = cfg(b.path(), vec![2, 8], (5, 7), (1, 25_000));
        part.workers = 3;
        part.max_new_chunks = Some(4);
        assert!(!run(&part).unwrap().complete);
        part.max_new_chunks = None;
        part.resume = true;
        assert!(run(&part).unwrap().complete);
        for f in ["records.jsonl", "case2_table.csv", "case8_table.csv", "verdict.txt"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        part.k_max = 100;
        assert!(matches!(run(&part), Err(Error::Checkpoint(_))));
        let fresh = tempfile::tempdir().unwrap();
        let mut c = cfg(fresh.path(), vec![2], (5, 5), (1, 50));
        c.resume = true;
        assert!(run(&c).unwrap().complete);
    }

    #[test]
    fn csv_layout() {
        let t = SurvivorTable {
            case: 1,
            kind: TableKind::Sieve,
            rows: vec![
                TableRow { p: 29, counts: vec![8, 5, 0, 0], external: false },
                TableRow { p: 31, counts: vec![0; 4], external: false },
                TableRow { p: 37, counts: vec![0; 4], external: false },
            ],
            span: None,
        };
        assert_eq!(t.to_csv(), "p,germain,local,selmer,thue\n29,8,5,0,0\n31-37,0,0,0,0\n");
        let empty = SurvivorTable { case: 1, kind: TableKind::Sieve, rows: vec![], span: None };
        assert_eq!(empty.to_csv(), "p,germain,local,selmer,thue\n");
    }

    #[test]
    fn config_checks() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.cases = vec![13];
        assert!(c.validate().is_err());
        c.cases = vec![1];
        c.r_max = 2_000_000;
        assert!(c.validate().is_err());
        let mut d = RunConfig::default();
        let h = d.hash();
        d.workers = 1;
        assert_eq!(d.hash(), h);
        d.k_max = 601;
        assert_ne!(d.hash(), h);
    }
}
