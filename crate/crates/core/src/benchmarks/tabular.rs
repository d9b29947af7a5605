//! Lookup-table objectives over fixed-length categorical sequences.
//!
//! Each symbol is encoded as its alphabet index in `ceil(log2 |alphabet|)`
//! bits (most significant first) and the codes are concatenated in sequence
//! order. For alphabets whose size is not a power of two the unused codes are
//! invalid points.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Objective;
use crate::{BinaryPoint, Error, Result};

/// Ordered symbol set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.len() < 2 {
            return Err(Error::InvalidConfig("alphabet needs at least two symbols".into()));
        }
        let mut seen = symbols.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != symbols.len() {
            return Err(Error::InvalidConfig("alphabet symbols must be distinct".into()));
        }
        Ok(Self { symbols })
    }

    pub fn dna() -> Self {
        Self { symbols: vec!['A', 'C', 'G', 'T'] }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Bits per symbol.
    pub fn width(&self) -> usize {
        (usize::BITS - (self.symbols.len() - 1).leading_zeros()) as usize
    }

    fn index(&self, c: char) -> Result<usize> {
        self.symbols.iter().position(|&s| s == c).ok_or(Error::UnknownSymbol(c))
    }
}

pub fn encode_categorical(sequence: &str, alphabet: &Alphabet) -> Result<BinaryPoint> {
    let w = alphabet.width();
    let mut bits = Vec::with_capacity(sequence.chars().count() * w);
    for c in sequence.chars() {
        let idx = alphabet.index(c)?;
        bits.extend((0..w).map(|b| (idx >> (w - 1 - b)) & 1 == 1));
    }
    BinaryPoint::new(bits)
}

pub fn decode_categorical(x: &BinaryPoint, alphabet: &Alphabet) -> Result<String> {
    let w = alphabet.width();
    if !x.len().is_multiple_of(w) {
        return Err(Error::InvalidPoint(x.to_string()));
    }
    x.bits()
        .chunks(w)
        .map(|code| {
            let idx = code.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            alphabet.symbols.get(idx).copied().ok_or_else(|| Error::InvalidPoint(x.to_string()))
        })
        .collect()
}

/// Complete table from every length-`L` sequence to a value.
#[derive(Clone, Debug)]
pub struct TabularSpec {
    name: String,
    alphabet: Alphabet,
    sequence_length: usize,
    sign: f64,
    table: HashMap<String, f64>,
}

impl TabularSpec {
    /// Builds a spec from raw entries; `sign` is applied to every value.
    pub fn from_entries(
        name: impl Into<String>,
        alphabet: Alphabet,
        sequence_length: usize,
        entries: impl IntoIterator<Item = (String, f64)>,
        sign: f64,
    ) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidConfig(format!("sign must be +1 or -1, got {sign}")));
        }
        if sequence_length == 0 {
            return Err(Error::InvalidConfig("sequence length must be >= 1".into()));
        }
        let mut table = HashMap::new();
        for (k, (seq, v)) in entries.into_iter().enumerate() {
            check_entry(&seq, v, &alphabet, sequence_length).map_err(|m| Error::Load { line: k + 1, message: m })?;
            if table.insert(seq.clone(), sign * v).is_some() {
                return Err(Error::Load { line: k + 1, message: format!("duplicate sequence {seq:?}") });
            }
        }
        let spec = Self { name: name.into(), alphabet, sequence_length, sign, table };
        spec.check_complete()?;
        Ok(spec)
    }

    /// Seeded synthetic landscape: per-position terms plus neighbouring-pair
    /// interactions, all standard normal.
    pub fn synthetic(alphabet: Alphabet, sequence_length: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = alphabet.len();
        let unary: Vec<f64> = (0..sequence_length * a).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pair: Vec<f64> =
            (0..sequence_length.saturating_sub(1) * a * a).map(|_| StandardNormal.sample(&mut rng)).collect();
        let total = a.checked_pow(sequence_length as u32).ok_or(Error::TooLarge { n: sequence_length, cap: 16 })?;
        let mut entries = Vec::with_capacity(total);
        let mut idx = vec![0usize; sequence_length];
        for _ in 0..total {
            let mut v = 0.0;
            for p in 0..sequence_length {
                v += unary[p * a + idx[p]];
                if p + 1 < sequence_length {
                    v += pair[(p * a + idx[p]) * a + idx[p + 1]];
                }
            }
            let seq: String = idx.iter().map(|&i| alphabet.symbols[i]).collect();
            entries.push((seq, v));
            // odometer increment
            for p in (0..sequence_length).rev() {
                idx[p] += 1;
                if idx[p] < a {
                    break;
                }
                idx[p] = 0;
            }
        }
        Self::from_entries(format!("synthetic{a}x{sequence_length}"), alphabet, sequence_length, entries, 1.0)
    }

    fn check_complete(&self) -> Result<()> {
        let expected = (self.alphabet.len() as u128).pow(self.sequence_length as u32);
        if self.table.len() as u128 == expected {
            return Ok(());
        }
        let mut idx = vec![0usize; self.sequence_length];
        loop {
            let seq: String = idx.iter().map(|&i| self.alphabet.symbols[i]).collect();
            if !self.table.contains_key(&seq) {
                return Err(Error::Table(format!(
                    "table has {} of {expected} sequences; missing {seq:?}",
                    self.table.len()
                )));
            }
            let mut p = self.sequence_length;
            loop {
                if p == 0 {
                    return Ok(());
                }
                p -= 1;
                idx[p] += 1;
                if idx[p] < self.alphabet.len() {
                    break;
                }
                idx[p] = 0;
            }
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn sequence_length(&self) -> usize {
        self.sequence_length
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// Same table under another sign (+1 or -1).
    pub fn with_sign(mut self, sign: f64) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidConfig(format!("sign must be +1 or -1, got {sign}")));
        }
        if sign != self.sign {
            for v in self.table.values_mut() {
                *v = -*v;
            }
            self.sign = sign;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Signed value of a sequence.
    pub fn lookup(&self, sequence: &str) -> Option<f64> {
        self.table.get(sequence).copied()
    }

    /// Writes the raw (unsigned) table as `sequence,value` rows in sorted order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows: Vec<_> = self.table.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sequence", "value"])?;
        for (seq, v) in rows {
            w.write_record([seq.as_str(), &(v * self.sign).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_entry(seq: &str, v: f64, alphabet: &Alphabet, len: usize) -> std::result::Result<(), String> {
    if seq.chars().count() != len {
        return Err(format!("sequence {seq:?} has length {}, expected {len}", seq.chars().count()));
    }
    if let Some(c) = seq.chars().find(|&c| alphabet.index(c).is_err()) {
        return Err(format!("unknown symbol {c:?} in {seq:?}"));
    }
    if !v.is_finite() {
        return Err(format!("non-finite value for {seq:?}"));
    }
    Ok(())
}

impl Objective for TabularSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.sequence_length * self.alphabet.width()
    }

    fn evaluate(&self, x: &BinaryPoint) -> Result<f64> {
        let seq = decode_categorical(x, &self.alphabet)?;
        self.lookup(&seq).ok_or_else(|| Error::InvalidPoint(x.to_string()))
    }

    fn table(&self) -> Option<Vec<(BinaryPoint, f64)>> {
        let mut out: Vec<_> = self
            .table
            .iter()
            .map(|(s, &v)| (encode_categorical(s, &self.alphabet).expect("table keys are valid"), v))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Some(out)
    }
}

/// Loads a `sequence,value` CSV. The alphabet is the sorted set of symbols
/// that occur; every sequence over it must be present exactly once. Values
/// are multiplied by `sign` on load.
pub fn load_tabular(path: impl AsRef<Path>, sign: f64) -> Result<TabularSpec> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "sequence" || &headers[1] != "value" {
        return Err(Error::Load { line: 1, message: "header must be `sequence,value`".into() });
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Load { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let value: f64 =
            record[1].parse().map_err(|_| Error::Load { line, message: format!("bad value {:?}", &record[1]) })?;
        rows.push((line, record[0].to_string(), value));
    }
    let Some((_, first, _)) = rows.first() else {
        return Err(Error::Load { line: 1, message: "table has no rows".into() });
    };
    let length = first.chars().count();
    let mut symbols: Vec<char> = rows.iter().flat_map(|(_, s, _)| s.chars()).collect();
    symbols.sort_unstable();
    symbols.dedup();
    let alphabet = Alphabet::new(symbols)?;

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (line, seq, _) in &rows {
        if seq.chars().count() != length {
            return Err(Error::Load {
                line: *line,
                message: format!("sequence {seq:?} has length {}, expected {length}", seq.chars().count()),
            });
        }
        if let Some(prev) = seen.insert(seq.as_str(), *line) {
            return Err(Error::Load { line: *line, message: format!("duplicate sequence {seq:?} (first on line {prev})") });
        }
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("tabular").to_string();
    TabularSpec::from_entries(name, alphabet, length, rows.into_iter().map(|(_, s, v)| (s, v)), sign)
}
