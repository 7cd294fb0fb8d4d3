use std::fs;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use crasp::asm::assemble_str;
use crasp::cm::{CmVerdict, CounterMachine};
use crasp::compiler::{compile, CompilationSpec, Mode};
use crasp::cot::{CotProgram, Verdict};
use crasp::crasp::{eval_formula, eval_term, Token};
use crasp::dataset::{emit, generate, GenConfig, TraceRecord, Vocab};
use crasp::dsl::{parse_cm, parse_cot_program, parse_expr, print_cm, print_cot_program, print_formula, Expr};
use crasp::rpe::{beta, RpeKind};
use crasp::tasks::{Encoding, Task};
use rayon::prelude::*;

const EXIT_NO: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Chain-of-thought C-RASP toolchain.
#[derive(Parser)]
#[command(name = "crasp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate rule bodies, or one expression, on a word.
    Eval {
        program: PathBuf,
        word: String,
        /// Formula or term to evaluate instead of the rule bodies.
        #[arg(long)]
        expr: Option<String>,
        /// Print the value at every position, not only the last.
        #[arg(long)]
        all_positions: bool,
    },
    /// Generate the chain of thought for a word.
    Run {
        program: PathBuf,
        word: String,
        #[command(flatten)]
        fuel: FuelArgs,
        /// Write the run as a JSON record.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Decide a word; the exit code is the verdict.
    Check {
        program: PathBuf,
        word: String,
        #[command(flatten)]
        fuel: FuelArgs,
    },
    /// Run a counter machine from an initial counter vector.
    SimulateCm {
        machine: PathBuf,
        /// Comma-separated initial counters; missing ones are zero.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        init: Vec<i64>,
        #[arg(long)]
        fuel: u64,
        /// Print the fired transition indices.
        #[arg(long)]
        trace: bool,
    },
    /// Assemble macro-assembler source into a counter machine.
    Assemble {
        source: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile a counter machine into a chain-of-thought program.
    Compile {
        machine: PathBuf,
        /// Comma-separated input alphabet in counter order.
        #[arg(long, value_delimiter = ',', required = true)]
        alphabet: Vec<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Drop the exact-length conjunct of the general construction.
        #[arg(long)]
        no_strict_length: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a program against a task oracle on every word up to a length.
    Verify {
        program: PathBuf,
        #[arg(long, value_parser = parse_task)]
        oracle: Task,
        #[arg(long)]
        max_len: usize,
        #[arg(long)]
        fuel: u64,
    },
    /// Print the positional encoding of a range of lengths.
    Rpe {
        #[arg(long)]
        from: u64,
        #[arg(long)]
        to: u64,
        #[arg(long, default_value = "one", value_parser = parse_relation)]
        relation: RpeKind,
    },
    /// Generate a trace-supervised corpus.
    GenData {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, value_parser = parse_encoding)]
        encoding: Encoding,
        /// Inclusive input length range, `A..B`.
        #[arg(long, value_parser = parse_lengths)]
        lengths: RangeInclusive<usize>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed step budget; per-length default otherwise.
        #[arg(long)]
        fuel: Option<u64>,
        /// Put in-distribution lengths into `train` instead of `test0`.
        #[arg(long)]
        train: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(clap::Args)]
struct FuelArgs {
    /// Step budget; defaults to 10|w|+100, or 32*2^|w| for programs with
    /// positional relations.
    #[arg(long)]
    fuel: Option<u64>,
    /// Cap on the exponential default budget.
    #[arg(long, default_value_t = 1 << 22)]
    fuel_ceiling: u64,
}

impl FuelArgs {
    fn resolve(&self, program: &CotProgram, input_len: usize) -> u64 {
        self.fuel.unwrap_or_else(|| {
            let n = input_len as u64;
            if program.relations().is_empty() {
                10 * n + 100
            } else {
                32u64.checked_shl(n as u32).map_or(self.fuel_ceiling, |f| f.min(self.fuel_ceiling))
            }
        })
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_encoding(s: &str) -> Result<Encoding, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_relation(s: &str) -> Result<RpeKind, String> {
    RpeKind::from_keyword(s).ok_or_else(|| format!("unknown relation `{s}` (expected one or len)"))
}

fn parse_lengths(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok(num(a)?..=num(b)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_program(path: &Path) -> Result<CotProgram> {
    parse_cot_program(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_machine(path: &Path) -> Result<CounterMachine> {
    parse_cm(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing output"),
    }
}

/// Reads a word. Tokens are separated by spaces or commas; a word without
/// separators is read one character per token, with `0`, `1` and `/`
/// standing for `b0`, `b1` and `sl`.
fn parse_word(s: &str, known: &[Token]) -> Result<Vec<Token>> {
    let names: Vec<String> = if s.contains([' ', ',']) {
        s.split([' ', ',']).filter(|x| !x.is_empty()).map(String::from).collect()
    } else {
        s.chars()
            .map(|c| match c {
                '0' => "b0".to_string(),
                '1' => "b1".to_string(),
                '/' => "sl".to_string(),
                c => c.to_string(),
            })
            .collect()
    };
    if names.is_empty() {
        bail!("empty word");
    }
    names
        .iter()
        .map(|n| {
            let t = Token::new(n).with_context(|| format!("bad token `{n}`"))?;
            if known.contains(&t) {
                Ok(t)
            } else {
                bail!("token `{n}` is not declared by the program")
            }
        })
        .collect()
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Accept => 0,
        Verdict::RejectStuck => EXIT_NO,
        Verdict::FuelExhausted => EXIT_UNKNOWN,
    }
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>, sep: &str) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn execute(command: Command) -> Result<u8> {
    let mut out = io::stdout().lock();
    match command {
        Command::Eval { program, word, expr, all_positions } => {
            let p = load_program(&program)?;
            let sig = p.signature();
            let w = parse_word(&word, sig.alphabet())?;
            let show = |v: Vec<String>| if all_positions { v.join(",") } else { v.last().cloned().unwrap_or_default() };
            let bools = |v: Vec<bool>| v.into_iter().map(|b| u8::from(b).to_string()).collect();
            match expr {
                Some(e) => {
                    let values = match parse_expr(&e, &sig).context("in --expr")? {
                        Expr::Formula(f) => bools(eval_formula(&w, &f, &sig)?),
                        Expr::Term(t) => eval_term(&w, &t, &sig)?.iter().map(i64::to_string).collect(),
                    };
                    writeln!(out, "{}", show(values))?;
                }
                None => {
                    for (i, rule) in p.rules().iter().enumerate() {
                        let values = bools(eval_formula(&w, &rule.body, &sig)?);
                        writeln!(out, "{i}\t{}\t{}\t{}", rule.head, show(values), print_formula(&rule.body))?;
                    }
                }
            }
            Ok(0)
        }
        Command::Run { program, word, fuel, trace } => {
            let p = load_program(&program)?;
            let w = parse_word(&word, p.sigma())?;
            let r = p.generate(&w, fuel.resolve(&p, w.len()))?;
            writeln!(out, "{}", join(&r.trace, " "))?;
            writeln!(out, "{} after {} steps", r.verdict, r.steps)?;
            if let Some(path) = trace {
                let record = TraceRecord { input: w, target: r.trace.clone(), verdict: r.verdict };
                fs::write(&path, serde_json::to_string(&record)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(verdict_code(r.verdict))
        }
        Command::Check { program, word, fuel } => {
            let p = load_program(&program)?;
            let w = parse_word(&word, p.sigma())?;
            let v = p.generate(&w, fuel.resolve(&p, w.len()))?.verdict;
            writeln!(out, "{}", ["yes", "no", "unknown"][verdict_code(v) as usize])?;
            Ok(verdict_code(v))
        }
        Command::SimulateCm { machine, init, fuel, trace } => {
            let m = load_machine(&machine)?;
            if init.len() > m.k() {
                bail!("{} initial values for a machine with {} counters", init.len(), m.k());
            }
            let mut x = init.clone();
            x.resize(m.k(), 0);
            let r = m.run(&x, fuel)?;
            if trace {
                writeln!(out, "{}", join(&r.trace, " "))?;
            }
            let state = &m.states()[r.config.state];
            let verdict = match r.verdict {
                CmVerdict::Accept => "accept",
                CmVerdict::Stuck => "reject",
                CmVerdict::FuelExhausted => "fuel-exhausted",
            };
            writeln!(out, "{verdict} in {state} after {} steps ({})", r.trace.len(), join(&r.config.counters, ","))?;
            Ok(match r.verdict {
                CmVerdict::Accept => 0,
                CmVerdict::Stuck => EXIT_NO,
                CmVerdict::FuelExhausted => EXIT_UNKNOWN,
            })
        }
        Command::Assemble { source, output } => {
            let m = assemble_str(&read(&source)?).with_context(|| format!("in {}", source.display()))?;
            write_output(output.as_deref(), &print_cm(&m))?;
            Ok(0)
        }
        Command::Compile { machine, alphabet, mode, no_strict_length, output } => {
            let m = load_machine(&machine)?;
            let sigma = alphabet
                .iter()
                .map(|a| Token::new(a).with_context(|| format!("bad letter `{a}`")))
                .collect::<Result<Vec<_>>>()?;
            let spec = CompilationSpec::new(m, sigma, mode)?.strict_length(!no_strict_length);
            write_output(output.as_deref(), &print_cot_program(&compile(&spec)?))?;
            Ok(0)
        }
        Command::Verify { program, oracle, max_len, fuel } => {
            let p = load_program(&program)?;
            let encoding = [Encoding::Unary, Encoding::Binary]
                .into_iter()
                .find(|&e| oracle.supports(e) && oracle.alphabet(e) == p.sigma())
                .with_context(|| format!("program alphabet does not match task {oracle}"))?;
            let words = all_words(p.sigma(), max_len);
            let mismatch = words
                .par_iter()
                .map(|w| -> Result<Option<String>> {
                    let v = p.generate(w, fuel)?.verdict;
                    let want = oracle.accepts_word(encoding, w);
                    Ok((v == Verdict::FuelExhausted || (v == Verdict::Accept) != want)
                        .then(|| format!("MISMATCH {}: program {v}, oracle {}", join(w, " "), if want { "accept" } else { "reject" })))
                })
                .find_first(|r| !matches!(r, Ok(None)));
            match mismatch {
                None => {
                    writeln!(out, "OK {} words", words.len())?;
                    Ok(0)
                }
                Some(Ok(Some(line))) => {
                    writeln!(out, "{line}")?;
                    Ok(EXIT_NO)
                }
                Some(Ok(None)) => unreachable!("filtered out"),
                Some(Err(e)) => Err(e),
            }
        }
        Command::Rpe { from, to, relation } => {
            for j in from.max(1)..=to {
                let code = beta(j).map_or("-".to_string(), |b| b.bits().iter().map(|&x| if x { '1' } else { '0' }).collect());
                writeln!(out, "{j}\t{code}\t{}", join(relation.positions(j), ","))?;
            }
            Ok(0)
        }
        Command::GenData { task, encoding, lengths, count, seed, fuel, train, output } => {
            let config = GenConfig { task, encoding, lengths, count, seed, fuel, train };
            let (program, report) = generate(&config)?;
            emit(&report.samples, &Vocab::new(&program), &output)?;
            writeln!(
                out,
                "{} samples, {} dropped for fuel, written to {}",
                report.samples.len(),
                report.dropped,
                output.display()
            )?;
            Ok(0)
        }
    }
}

/// All words over `alphabet` with length in `1..=max_len`, shortest first.
fn all_words(alphabet: &[Token], max_len: usize) -> Vec<Vec<Token>> {
    let mut all = Vec::new();
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w: &Vec<Token>| {
                alphabet.iter().map(move |a| {
                    let mut w = w.clone();
                    w.push(a.clone());
                    w
                })
            })
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
