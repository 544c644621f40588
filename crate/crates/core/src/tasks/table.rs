//! Synthetic single-column table questions.
//!
//! A question is a short program over one numeric column: up to two
//! comparisons that narrow a row selection, then one aggregator. Selection
//! starts with every row; `Greater(a)` keeps rows with `x > a`, `Lesser(b)`
//! keeps rows with `x < b`; `Count` returns the number of selected rows and
//! `Sum` their total.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const VALUE_RANGE: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_COLUMN_LEN: usize = 10;
pub const MAX_PROGRAM_LEN: usize = 3;

/// One instruction of a ground-truth program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "pivot", rename_all = "lowercase")]
pub enum Instr {
    Greater(f64),
    Lesser(f64),
    Count,
    Sum,
}

impl Instr {
    pub fn is_aggregator(&self) -> bool {
        matches!(self, Instr::Count | Instr::Sum)
    }

    pub fn op(&self) -> Op {
        match self {
            Instr::Greater(_) => Op::Greater,
            Instr::Lesser(_) => Op::Lesser,
            Instr::Count => Op::Count,
            Instr::Sum => Op::Sum,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Greater(a) => write!(f, "greater {a:.2}"),
            Instr::Lesser(b) => write!(f, "lesser {b:.2}"),
            Instr::Count => write!(f, "count"),
            Instr::Sum => write!(f, "sum"),
        }
    }
}

/// The built-in operation vocabulary, in argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Greater,
    Lesser,
    Count,
    Sum,
    NoOp,
}

impl Op {
    pub const ALL: [Op; 5] = [Op::Greater, Op::Lesser, Op::Count, Op::Sum, Op::NoOp];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Greater => "Greater",
            Op::Lesser => "Lesser",
            Op::Count => "Count",
            Op::Sum => "Sum",
            Op::NoOp => "NoOp",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pivots as ops read them: `Greater` uses the first, `Lesser` the second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pivots {
    pub greater: f64,
    pub lesser: f64,
}

impl Pivots {
    pub fn of(program: &[Instr]) -> Self {
        let mut p = Pivots::default();
        for instr in program {
            match *instr {
                Instr::Greater(a) => p.greater = a,
                Instr::Lesser(b) => p.lesser = b,
                _ => {}
            }
        }
        p
    }
}

/// Hard execution of any op sequence; aggregators add into the answer
/// wherever they appear.
pub fn run_ops(column: &[f64], ops: &[Op], pivots: Pivots) -> f64 {
    let mut selected = vec![true; column.len()];
    let mut answer = 0.0;
    for op in ops {
        match op {
            Op::Greater => selected
                .iter_mut()
                .zip(column)
                .for_each(|(s, &x)| *s = *s && x > pivots.greater),
            Op::Lesser => selected
                .iter_mut()
                .zip(column)
                .for_each(|(s, &x)| *s = *s && x < pivots.lesser),
            Op::Count => answer += selected.iter().filter(|&&s| s).count() as f64,
            Op::Sum => {
                answer += selected
                    .iter()
                    .zip(column)
                    .filter(|(&s, _)| s)
                    .map(|(_, &x)| x)
                    .sum::<f64>()
            }
            Op::NoOp => {}
        }
    }
    answer
}

pub fn validate_program(program: &[Instr]) -> Result<()> {
    match program.split_last() {
        None => Err(Error::MalformedProgram("empty program".into())),
        Some((last, _)) if !last.is_aggregator() => Err(Error::MalformedProgram(format!(
            "program must end with an aggregator, ends with `{last}`"
        ))),
        Some((_, rest)) if rest.iter().any(Instr::is_aggregator) => Err(Error::MalformedProgram(
            "aggregator before the last instruction".into(),
        )),
        Some(_) => Ok(()),
    }
}

/// Answer of a well-formed program on `column`.
pub fn execute_program(column: &[f64], program: &[Instr]) -> Result<f64> {
    validate_program(program)?;
    let mut selected = vec![true; column.len()];
    let mut answer = 0.0;
    for instr in program {
        match *instr {
            Instr::Greater(a) => selected
                .iter_mut()
                .zip(column)
                .for_each(|(s, &x)| *s = *s && x > a),
            Instr::Lesser(b) => selected
                .iter_mut()
                .zip(column)
                .for_each(|(s, &x)| *s = *s && x < b),
            Instr::Count => answer = selected.iter().filter(|&&s| s).count() as f64,
            Instr::Sum => {
                answer = column
                    .iter()
                    .zip(&selected)
                    .filter(|(_, &s)| s)
                    .map(|(&x, _)| x)
                    .sum()
            }
        }
    }
    Ok(answer)
}

/// One-hot token slots followed by the two pivots.
pub const TOKEN_VOCAB: usize = 5;
pub const ENCODING_DIM: usize = MAX_PROGRAM_LEN * TOKEN_VOCAB + 2;

fn token_index(instr: &Instr) -> usize {
    match instr {
        Instr::Greater(_) => 0,
        Instr::Lesser(_) => 1,
        Instr::Count => 2,
        Instr::Sum => 3,
    }
}

/// Fixed-width question vector: `MAX_PROGRAM_LEN` one-hot slots over
/// `{greater, lesser, count, sum, pad}`, then `[greater pivot, lesser pivot]`.
pub fn encode_question(program: &[Instr]) -> Vec<f64> {
    let mut enc = vec![0.0; ENCODING_DIM];
    for slot in 0..MAX_PROGRAM_LEN {
        let tok = program.get(slot).map_or(TOKEN_VOCAB - 1, token_index);
        enc[slot * TOKEN_VOCAB + tok] = 1.0;
    }
    let p = Pivots::of(program);
    enc[MAX_PROGRAM_LEN * TOKEN_VOCAB] = p.greater;
    enc[MAX_PROGRAM_LEN * TOKEN_VOCAB + 1] = p.lesser;
    enc
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableQuestion {
    pub column: Vec<f64>,
    pub program: Vec<Instr>,
    pub answer: f64,
    pub pivots: Pivots,
    pub encoding: Vec<f64>,
}

impl TableQuestion {
    pub fn new(column: Vec<f64>, program: Vec<Instr>) -> Result<Self> {
        if program.len() > MAX_PROGRAM_LEN {
            return Err(Error::MalformedProgram(format!(
                "{} instructions, at most {MAX_PROGRAM_LEN} allowed",
                program.len()
            )));
        }
        let answer = execute_program(&column, &program)?;
        Ok(Self {
            pivots: Pivots::of(&program),
            encoding: encode_question(&program),
            column,
            program,
            answer,
        })
    }

    /// Whether an answer is correct: exact integer for `Count` questions,
    /// relative error below 1e-4 for `Sum`.
    pub fn is_correct(&self, prediction: f64) -> bool {
        answer_matches(self.program.last() == Some(&Instr::Sum), prediction, self.answer)
    }

    pub fn text(&self) -> String {
        self.program
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn answer_matches(is_sum: bool, prediction: f64, answer: f64) -> bool {
    let err = (prediction - answer).abs();
    if is_sum {
        err < 1e-4 * answer.abs() || err < 1e-6
    } else {
        err < 1e-6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDataset {
    pub questions: Vec<TableQuestion>,
}

impl TableDataset {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

fn quantize(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn random_program(rng: &mut Rng, depth: usize) -> Vec<Instr> {
    let (lo, hi) = VALUE_RANGE;
    let a = Instr::Greater(quantize(rng.uniform_range(lo, hi)));
    let b = Instr::Lesser(quantize(rng.uniform_range(lo, hi)));
    let agg = if rng.below(2) == 0 { Instr::Count } else { Instr::Sum };
    match depth {
        1 => vec![agg],
        2 => vec![if rng.below(2) == 0 { a } else { b }, agg],
        _ => {
            if rng.below(2) == 0 {
                vec![a, b, agg]
            } else {
                vec![b, a, agg]
            }
        }
    }
}

/// Random questions whose program depth is drawn uniformly from `depths`.
///
/// Column values are uniform in `[-10, 10)`; pivots are uniform in the same
/// range, rounded to two decimals.
pub fn generate_table_task(
    rng: &mut Rng,
    n_examples: usize,
    column_len: usize,
    depths: RangeInclusive<usize>,
) -> Result<TableDataset> {
    if column_len < 2 {
        return Err(Error::Argument(format!(
            "column length must be >= 2, got {column_len}"
        )));
    }
    if depths.is_empty() || *depths.start() < 1 || *depths.end() > MAX_PROGRAM_LEN {
        return Err(Error::Argument(format!(
            "program depth range {depths:?} must lie within 1..=3"
        )));
    }
    let (lo, hi) = VALUE_RANGE;
    let span = depths.end() - depths.start() + 1;
    let questions = (0..n_examples)
        .map(|_| {
            let column: Vec<f64> = (0..column_len).map(|_| rng.uniform_range(lo, hi)).collect();
            let depth = depths.start() + rng.below(span);
            TableQuestion::new(column, random_program(rng, depth))
        })
        .collect::<Result<_>>()?;
    Ok(TableDataset { questions })
}

#[derive(Serialize, Deserialize)]
struct Record {
    column: Vec<f64>,
    program: Vec<Instr>,
    answer: f64,
}

/// One JSON object per line: `{"column": [...], "program": [...], "answer": x}`.
pub fn write_jsonl(dataset: &TableDataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for q in &dataset.questions {
        let rec = Record {
            column: q.column.clone(),
            program: q.program.clone(),
            answer: q.answer,
        };
        serde_json::to_writer(&mut out, &rec)
            .map_err(|e| Error::Consistency(format!("serializing question: {e}")))?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_jsonl(path: &Path) -> Result<TableDataset> {
    let f = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut questions = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Consistency(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let q = TableQuestion::new(rec.column, rec.program)?;
        if q.answer != rec.answer {
            return Err(Error::Consistency(format!(
                "{}:{}: stored answer {} but program gives {}",
                path.display(),
                i + 1,
                rec.answer,
                q.answer
            )));
        }
        questions.push(q);
    }
    Ok(TableDataset { questions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    const COL: [f64; 3] = [1.0, 5.0, 9.0];

    #[test]
    fn hand_examples() {
        assert_eq!(execute_program(&COL, &[Instr::Greater(4.0), Instr::Count]).unwrap(), 2.0);
        assert_eq!(
            execute_program(&COL, &[Instr::Greater(4.0), Instr::Lesser(8.0), Instr::Count]).unwrap(),
            1.0
        );
        assert_eq!(execute_program(&COL, &[Instr::Sum]).unwrap(), 15.0);
        assert_eq!(execute_program(&[0.5; 7], &[Instr::Count]).unwrap(), 7.0);
        assert_eq!(
            execute_program(&[-10.0, 3.0, 10.0], &[Instr::Greater(11.0), Instr::Count]).unwrap(),
            0.0
        );
    }

    #[test]
    fn malformed_programs() {
        for bad in [
            vec![],
            vec![Instr::Greater(1.0)],
            vec![Instr::Count, Instr::Greater(1.0)],
            vec![Instr::Count, Instr::Sum],
        ] {
            assert!(matches!(
                execute_program(&COL, &bad),
                Err(Error::MalformedProgram(_))
            ));
        }
    }

    #[test]
    fn run_ops_accumulates() {
        let p = Pivots {
            greater: 4.0,
            lesser: 8.0,
        };
        assert_eq!(run_ops(&COL, &[Op::Greater, Op::Lesser, Op::NoOp, Op::Count], p), 1.0);
        assert_eq!(run_ops(&COL, &[Op::Count, Op::Count], p), 6.0);
        assert_eq!(run_ops(&COL, &[Op::NoOp], p), 0.0);
    }

    #[test]
    fn encoding_layout() {
        let enc = encode_question(&[Instr::Lesser(-3.25), Instr::Sum]);
        assert_eq!(enc.len(), ENCODING_DIM);
        assert_eq!(&enc[0..5], &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&enc[5..10], &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&enc[10..15], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(&enc[15..], &[0.0, -3.25]);
    }

    #[test]
    fn generator_validation() {
        let mut rng = Rng::new(0);
        assert!(generate_table_task(&mut rng, 5, 1, 1..=2).is_err());
        assert!(generate_table_task(&mut rng, 5, 10, 0..=2).is_err());
        assert!(generate_table_task(&mut rng, 5, 10, 1..=4).is_err());
    }

    #[test]
    fn generated_questions_are_consistent() {
        let ds = generate_table_task(&mut Rng::new(17), 500, 10, 1..=3).unwrap();
        let mut depths = [0usize; 4];
        for q in &ds.questions {
            depths[q.program.len()] += 1;
            assert_eq!(q.answer, execute_program(&q.column, &q.program).unwrap());
            assert_eq!(q.encoding, encode_question(&q.program));
            assert!(q.column.iter().all(|v| (-10.0..10.0).contains(v)));
            for instr in &q.program {
                if let Instr::Greater(p) | Instr::Lesser(p) = instr {
                    assert!((-10.0..=10.0).contains(p));
                    assert_eq!(*p, quantize(*p));
                }
            }
            if q.program.len() == 3 {
                assert_ne!(q.program[0].op(), q.program[1].op());
            }
        }
        assert!(depths[1..].iter().all(|&c| c > 100), "{depths:?}");
    }

    #[test]
    fn correctness_tolerances() {
        let count = TableQuestion::new(COL.to_vec(), vec![Instr::Count]).unwrap();
        assert!(count.is_correct(3.0));
        assert!(!count.is_correct(3.00001));
        let sum = TableQuestion::new(COL.to_vec(), vec![Instr::Sum]).unwrap();
        assert!(sum.is_correct(15.0 + 1e-4));
        assert!(!sum.is_correct(15.01));
        assert_eq!(sum.text(), "sum");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        let ds = generate_table_task(&mut Rng::new(3), 20, 10, 1..=3).unwrap();
        write_jsonl(&ds, &path).unwrap();
        let first = fs::read_to_string(&path).unwrap();
        assert_eq!(first.lines().count(), 20);
        assert!(first.contains("\"op\":\""));
        assert_eq!(read_jsonl(&path).unwrap(), ds);
    }

    fn program_strategy() -> impl Strategy<Value = Vec<Instr>> {
        let cmp = prop_oneof![
            (-11.0f64..11.0).prop_map(Instr::Greater),
            (-11.0f64..11.0).prop_map(Instr::Lesser),
        ];
        let agg = prop_oneof![Just(Instr::Count), Just(Instr::Sum)];
        (proptest::collection::vec(cmp, 0..3), agg).prop_map(|(mut v, a)| {
            v.push(a);
            v
        })
    }

    proptest! {
        #[test]
        fn permutation_equivariant(
            column in proptest::collection::vec(-10.0f64..10.0, 2..12),
            program in program_strategy(),
            seed in any::<u64>(),
        ) {
            let mut shuffled = column.clone();
            Rng::new(seed).shuffle(&mut shuffled);
            let a = execute_program(&column, &program).unwrap();
            let b = execute_program(&shuffled, &program).unwrap();
            if program.last() == Some(&Instr::Count) {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!((a - b).abs() <= 1e-12 * column.len() as f64 * 10.0);
            }
        }
    }
}
