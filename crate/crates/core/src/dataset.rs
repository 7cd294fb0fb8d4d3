//! Trace-supervised corpora for the benchmark tasks.
//!
//! Inputs are sampled per task and encoding, labelled by running the task's
//! compiled chain-of-thought program, and written as line-delimited records
//! together with a vocabulary and a flat id rendering.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{stdlib_machine, MachineError};
use crate::compiler::{compile, CompilationSpec, CompileError, Mode};
use crate::cot::{CotProgram, RunError, Verdict};
use crate::crasp::{tok, Token};
use crate::tasks::{Encoding, Task};

pub const SOS: &str = "<sos>";
pub const SEP: &str = "<sep>";
pub const EOS: &str = "<eos>";

/// Upper bound on the default fuel of general-mode programs.
pub const FUEL_CEILING: u64 = 1 << 22;

/// Draws per sample before giving up on a length range.
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty length range {lo}..{hi}")]
    EmptyRange { lo: usize, hi: usize },
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("no {task} instance with {encoding} length in {lo}..{hi}")]
    NoInstance { task: Task, encoding: Encoding, lo: usize, hi: usize },
    #[error("task {0} has no {1} encoding")]
    Unsupported(Task, Encoding),
    #[error("no stock program for {0} with {1} encoding")]
    NoProgram(Task, Encoding),
    #[error("input length {0} lies outside every split")]
    OutOfSplits(usize),
    #[error("sample {index}: {reason}")]
    Mismatch { index: usize, reason: String },
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(Token),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test0,
    Test1,
    Test2,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Test0, Split::Test1, Split::Test2];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test0 => "test0",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
        }
    }

    /// Input lengths admitted by the split.
    pub fn lengths(self) -> RangeInclusive<usize> {
        match self {
            Split::Train | Split::Test0 => 1..=100,
            Split::Test1 => 101..=200,
            Split::Test2 => 201..=300,
        }
    }

    /// The split of an input of length `len`. In-distribution lengths go to
    /// `train` when `train` is set and to `test0` otherwise.
    pub fn for_length(len: usize, train: bool) -> Option<Split> {
        match len {
            1..=100 if train => Some(Split::Train),
            1..=100 => Some(Split::Test0),
            101..=200 => Some(Split::Test1),
            201..=300 => Some(Split::Test2),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown split `{0}`")]
pub struct UnknownSplit(pub String);

impl FromStr for Split {
    type Err = UnknownSplit;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Split::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| UnknownSplit(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub task: Task,
    pub encoding: Encoding,
    pub split: Split,
    pub input: Vec<Token>,
    pub target: Vec<Token>,
    pub label: u8,
    pub input_length: usize,
    pub trace_length: usize,
}

/// Per-sample generator; independent of thread scheduling.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws `count` inputs with lengths in `lengths`.
///
/// Unary inputs, and inputs of the non-arithmetic tasks, are uniform strings
/// over the task alphabet. Binary arithmetic inputs alternate between
/// instances of the relation (even indices) and perturbed non-instances.
pub fn sample_inputs(
    task: Task,
    encoding: Encoding,
    lengths: RangeInclusive<usize>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<Token>>> {
    let (lo, hi) = (*lengths.start(), *lengths.end());
    if lo == 0 || lo > hi {
        return Err(DatasetError::EmptyRange { lo, hi });
    }
    if count == 0 {
        return Err(DatasetError::ZeroCount);
    }
    if !task.supports(encoding) {
        return Err(DatasetError::Unsupported(task, encoding));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            if encoding == Encoding::Unary || !task.is_arithmetic() {
                let alphabet = task.alphabet(encoding);
                let n = rng.gen_range(lo..=hi);
                return Ok((0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone()).collect());
            }
            binary_instance(task, lo, hi, i % 2 == 0, &mut rng)
                .map(|xs| encode_big(&xs))
                .ok_or(DatasetError::NoInstance { task, encoding, lo, hi })
        })
        .collect()
}

fn binary_instance(task: Task, lo: usize, hi: usize, positive: bool, rng: &mut ChaCha8Rng) -> Option<Vec<BigUint>> {
    for _ in 0..MAX_ATTEMPTS {
        let len = rng.gen_range(lo..=hi);
        let Some(xs) = positive_instance(task, len, rng) else { continue };
        if !(lo..=hi).contains(&numerals_len(&xs)) {
            continue;
        }
        if positive {
            return Some(xs);
        }
        if let Some(ys) = perturb(task, &xs, rng) {
            if (lo..=hi).contains(&numerals_len(&ys)) {
                return Some(ys);
            }
        }
    }
    None
}

fn bit_len(x: &BigUint) -> usize {
    (x.bits() as usize).max(1)
}

/// Token length of the numerals joined by separators.
fn numerals_len(xs: &[BigUint]) -> usize {
    xs.iter().map(bit_len).sum::<usize>() + xs.len() - 1
}

/// Uniform numeral with exactly `len` binary digits.
fn random_numeral(len: usize, rng: &mut ChaCha8Rng) -> BigUint {
    if len <= 1 {
        return BigUint::from(rng.gen_range(0u8..2));
    }
    rng.gen_biguint((len - 1) as u64) | (BigUint::one() << (len - 1))
}

/// Uniform multiple of `d` whose numeral has exactly `len` digits.
fn multiple_with_len(d: &BigUint, len: usize, rng: &mut ChaCha8Rng) -> Option<BigUint> {
    let lo = if len == 1 { BigUint::zero() } else { BigUint::one() << (len - 1) };
    let hi = (BigUint::one() << len) - 1u8;
    let (m_lo, m_hi) = ((&lo + d - 1u8) / d, &hi / d);
    (m_lo <= m_hi).then(|| d * rng.gen_biguint_range(&m_lo, &(m_hi + 1u8)))
}

/// An instance of the relation whose numerals total about `len` tokens.
fn positive_instance(task: Task, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<BigUint>> {
    match task {
        Task::Prime => {
            if len < 2 {
                return None;
            }
            (0..8 * len).map(|_| random_numeral(len, rng)).find(is_probable_prime).map(|p| vec![p])
        }
        Task::Exponential => (0..len)
            .map(|i| vec![BigUint::from(i), BigUint::one() << i])
            .find(|xs| numerals_len(xs) == len),
        Task::Division => {
            if len < 3 {
                return None;
            }
            let lj = rng.gen_range(1..=len - 2);
            let j = random_numeral(lj, rng);
            let i = if j.is_zero() { BigUint::zero() } else { multiple_with_len(&j, len - 1 - lj, rng)? };
            Some(vec![i, j])
        }
        Task::Gcd => {
            if len < 5 {
                return None;
            }
            let lk = rng.gen_range(1..=len - 4);
            let rest = len - 2 - lk;
            let li = rng.gen_range(1..rest);
            let k = random_numeral(lk, rng);
            if k.is_zero() {
                return Some(vec![BigUint::zero(); 3]);
            }
            let i = multiple_with_len(&k, li, rng)?;
            let j = multiple_with_len(&k, rest - li, rng)?;
            (i.gcd(&j) == k).then(|| vec![i, j, k])
        }
        Task::Multiplication => {
            let s = (len.saturating_sub(2) / 2).max(2);
            let li = rng.gen_range(1..s);
            let (i, j) = (random_numeral(li, rng), random_numeral(s - li, rng));
            let k = &i * &j;
            Some(vec![i, j, k])
        }
        Task::Parity | Task::EndsInB | Task::BinaryEven => None,
    }
}

/// Moves one component by an offset in ±[1,4] so that the relation fails,
/// keeping its digit count when some offset allows it.
fn perturb(task: Task, xs: &[BigUint], rng: &mut ChaCha8Rng) -> Option<Vec<BigUint>> {
    let mut fallback = None;
    for _ in 0..64 {
        let c = rng.gen_range(0..xs.len());
        let off = BigUint::from(rng.gen_range(1u8..=4));
        let mut ys = xs.to_vec();
        if rng.gen_bool(0.5) {
            ys[c] += off;
        } else if xs[c] >= off {
            ys[c] -= off;
        } else {
            continue;
        }
        if relation_big(task, &ys) {
            continue;
        }
        if bit_len(&ys[c]) == bit_len(&xs[c]) {
            return Some(ys);
        }
        fallback.get_or_insert(ys);
    }
    fallback
}

/// The arithmetic relation on arbitrary-precision instances.
pub fn relation_big(task: Task, xs: &[BigUint]) -> bool {
    match (task, xs) {
        (Task::Prime, [n]) => is_probable_prime(n),
        (Task::Exponential, [i, j]) => {
            u32::try_from(i).is_ok_and(|i| i < 1 << 16 && *j == BigUint::one() << i)
        }
        (Task::Division, [i, j]) => {
            if j.is_zero() {
                i.is_zero()
            } else {
                (i % j).is_zero()
            }
        }
        (Task::Gcd, [i, j, k]) => i.gcd(j) == *k,
        (Task::Multiplication, [i, j, k]) => i * j == *k,
        _ => false,
    }
}

/// Miller-Rabin over the first 20 prime bases; exact below 3.3·10^24.
pub fn is_probable_prime(n: &BigUint) -> bool {
    const BASES: [u32; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
    if *n < BigUint::from(2u8) {
        return false;
    }
    for p in BASES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let m = n - 1u8;
    let s = m.trailing_zeros().unwrap_or(0);
    let d = &m >> s;
    BASES.iter().all(|&a| {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == m {
            return true;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u8), n);
            if x == m {
                return true;
            }
        }
        false
    })
}

/// Tokens for `bin(x_1) sl bin(x_2) ...`.
pub fn encode_big(xs: &[BigUint]) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(tok("sl"));
        }
        out.extend(x.to_str_radix(2).chars().map(|c| tok(if c == '1' { "b1" } else { "b0" })));
    }
    out
}

/// The program whose traces define targets: letter-bounded compilation of
/// the stock unary machine, or the strict general compilation for the
/// binary string tasks.
pub fn designated_program(task: Task, encoding: Encoding) -> Result<CotProgram> {
    if !task.supports(encoding) {
        return Err(DatasetError::Unsupported(task, encoding));
    }
    let mode = match (task, encoding) {
        (Task::Parity, _) => Mode::PermutationInvariant,
        (_, Encoding::Unary) => Mode::LetterBounded,
        (t, Encoding::Binary) if t.is_arithmetic() => return Err(DatasetError::NoProgram(task, encoding)),
        (_, Encoding::Binary) => Mode::General,
    };
    let machine = stdlib_machine(task, encoding)?;
    Ok(compile(&CompilationSpec::new(machine, task.alphabet(encoding), mode)?)?)
}

/// Step budget used when none is given.
pub fn default_fuel(encoding: Encoding, input_length: usize) -> u64 {
    let n = input_length as u64;
    match encoding {
        Encoding::Unary => 50 * n * n + 1000,
        Encoding::Binary => 32u64.checked_shl(n as u32).map_or(FUEL_CEILING, |f| f.min(FUEL_CEILING)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildConfig {
    pub task: Task,
    pub encoding: Encoding,
    /// Fixed step budget; `default_fuel` per input when absent.
    pub fuel: Option<u64>,
    /// Label in-distribution lengths as `train` rather than `test0`.
    pub train: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildReport {
    pub samples: Vec<DatasetSample>,
    /// Inputs whose run exhausted its fuel.
    pub dropped: usize,
}

/// Runs `program` on every input, keeping input order.
pub fn build_samples(inputs: &[Vec<Token>], program: &CotProgram, config: &BuildConfig) -> Result<BuildReport> {
    let runs: Vec<Option<DatasetSample>> = inputs
        .par_iter()
        .map(|input| {
            let split = Split::for_length(input.len(), config.train).ok_or(DatasetError::OutOfSplits(input.len()))?;
            let fuel = config.fuel.unwrap_or_else(|| default_fuel(config.encoding, input.len()));
            let run = program.generate(input, fuel)?;
            Ok((run.verdict != Verdict::FuelExhausted).then(|| DatasetSample {
                task: config.task,
                encoding: config.encoding,
                split,
                input: input.clone(),
                label: u8::from(run.verdict == Verdict::Accept),
                input_length: input.len(),
                trace_length: run.trace.len(),
                target: run.trace,
            }))
        })
        .collect::<Result<_>>()?;
    let dropped = runs.iter().filter(|r| r.is_none()).count();
    Ok(BuildReport { samples: runs.into_iter().flatten().collect(), dropped })
}

/// A single run as written by `crasp run --trace`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub input: Vec<Token>,
    pub target: Vec<Token>,
    pub verdict: Verdict,
}

impl TraceRecord {
    /// Replays the input with just enough fuel and compares trace and
    /// verdict.
    pub fn check(&self, program: &CotProgram) -> std::result::Result<(), String> {
        let fuel = self.target.len() as u64 + u64::from(self.verdict != Verdict::FuelExhausted);
        let run = program.generate(&self.input, fuel).map_err(|e| e.to_string())?;
        if run.trace != self.target {
            return Err("replayed trace differs from target".into());
        }
        if run.verdict != self.verdict {
            return Err(format!("replay verdict {} but recorded {}", run.verdict, self.verdict));
        }
        Ok(())
    }
}

/// Replays every sample and checks target, label, lengths and split.
pub fn validate(samples: &[DatasetSample], program: &CotProgram) -> Result<()> {
    samples.par_iter().enumerate().try_for_each(|(index, s)| {
        let bad = |reason: String| Err(DatasetError::Mismatch { index, reason });
        if s.input_length != s.input.len() || s.trace_length != s.target.len() {
            return bad("stored lengths disagree with input or target".into());
        }
        if !s.split.lengths().contains(&s.input_length) {
            return bad(format!("length {} outside split {}", s.input_length, s.split));
        }
        let verdict = match s.label {
            0 => Verdict::RejectStuck,
            1 => Verdict::Accept,
            l => return bad(format!("label {l} is not 0 or 1")),
        };
        let record = TraceRecord { input: s.input.clone(), target: s.target.clone(), verdict };
        record.check(program).or_else(bad)
    })
}

/// Token ids: the three reserved markers, then Σ in alphabet order, then the
/// remaining tokens sorted by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new(program: &CotProgram) -> Self {
        let mut rest: Vec<&Token> = program.gamma().iter().filter(|t| !program.sigma().contains(t)).collect();
        rest.sort_by(|a, b| a.as_str().cmp(b.as_str()));
        let names: Vec<String> = [SOS, SEP, EOS]
            .into_iter()
            .map(String::from)
            .chain(program.sigma().iter().chain(rest).map(|t| t.as_str().to_string()))
            .collect();
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Vocab { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// `SOS input SEP target EOS` as ids.
    pub fn encode(&self, sample: &DatasetSample) -> Result<Vec<u32>> {
        let id = |t: &Token| self.id(t.as_str()).ok_or_else(|| DatasetError::UnknownToken(t.clone()));
        let mut out = vec![self.ids[SOS]];
        for t in &sample.input {
            out.push(id(t)?);
        }
        out.push(self.ids[SEP]);
        for t in &sample.target {
            out.push(id(t)?);
        }
        out.push(self.ids[EOS]);
        Ok(out)
    }
}

pub const RECORDS_FILE: &str = "samples.jsonl";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const IDS_FILE: &str = "ids.txt";

/// Writes the record, vocabulary and id files into `dir`.
pub fn emit(samples: &[DatasetSample], vocab: &Vocab, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    let mut ids = BufWriter::new(File::create(dir.join(IDS_FILE))?);
    for s in samples {
        serde_json::to_writer(&mut records, s)?;
        records.write_all(b"\n")?;
        let line: Vec<String> = vocab.encode(s)?.iter().map(u32::to_string).collect();
        writeln!(ids, "{}", line.join(" "))?;
    }
    records.flush()?;
    ids.flush()?;
    let mut v = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
    for (i, name) in vocab.names.iter().enumerate() {
        writeln!(v, "{name}\t{i}")?;
    }
    v.flush()?;
    Ok(())
}

/// Reads a record file written by `emit`.
pub fn read_samples(path: &Path) -> Result<Vec<DatasetSample>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Everything `generate` needs to produce one corpus.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub task: Task,
    pub encoding: Encoding,
    pub lengths: RangeInclusive<usize>,
    pub count: usize,
    pub seed: u64,
    pub fuel: Option<u64>,
    pub train: bool,
}

/// Samples, labels and validates a corpus with the designated program.
pub fn generate(config: &GenConfig) -> Result<(CotProgram, BuildReport)> {
    let program = designated_program(config.task, config.encoding)?;
    let inputs = sample_inputs(config.task, config.encoding, config.lengths.clone(), config.count, config.seed)?;
    let build = BuildConfig { task: config.task, encoding: config.encoding, fuel: config.fuel, train: config.train };
    let report = build_samples(&inputs, &program, &build)?;
    validate(&report.samples, &program)?;
    Ok((program, report))
}
