use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pricing::{OptionContract, OptionKind};

/// The contracts priced on every tick of one underlying.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractBook {
    contracts: Vec<OptionContract>,
}

impl ContractBook {
    pub fn new(contracts: Vec<OptionContract>) -> Result<Self> {
        if contracts.is_empty() {
            return Err(Error::validation("contract book is empty"));
        }
        let mut seen = HashSet::new();
        for c in &contracts {
            c.validate()?;
            if !seen.insert(c.id.as_str()) {
                return Err(Error::validation(format!("duplicate contract id {:?}", c.id)));
            }
        }
        Ok(ContractBook { contracts })
    }

    pub fn contracts(&self) -> &[OptionContract] {
        &self.contracts
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.contracts.iter().position(|c| c.id == id)
    }

    /// `size` contracts alternating call/put. Each call/put pair shares a
    /// strike and expiry; expiries cycle fastest, strikes are spread evenly
    /// over `[strike_lo, strike_hi]` and rounded to cents.
    pub fn generate(size: usize, strike_lo: f64, strike_hi: f64, expiries: &[f64]) -> Result<Self> {
        if size == 0 {
            return Err(Error::argument("book size must be at least 1"));
        }
        if !(strike_lo > 0.0 && strike_hi >= strike_lo && strike_hi.is_finite()) {
            return Err(Error::argument(format!("bad strike grid {strike_lo}:{strike_hi}")));
        }
        if expiries.is_empty() {
            return Err(Error::argument("at least one expiry is needed"));
        }
        let pairs = size.div_ceil(2);
        let strikes = pairs.div_ceil(expiries.len());
        let step = if strikes > 1 {
            (strike_hi - strike_lo) / (strikes - 1) as f64
        } else {
            0.0
        };
        let contracts = (0..size)
            .map(|i| {
                let pair = i / 2;
                let expiry = expiries[pair % expiries.len()];
                let strike = ((strike_lo + step * (pair / expiries.len()) as f64) * 100.0).round() / 100.0;
                let kind = if i % 2 == 0 { OptionKind::Call } else { OptionKind::Put };
                let letter = if kind == OptionKind::Call { 'C' } else { 'P' };
                OptionContract::new(format!("{letter}{i:04}"), kind, strike, expiry)
            })
            .collect::<Result<Vec<_>>>()?;
        ContractBook::new(contracts)
    }

    /// Reads `id,kind,strike,expiry_years` rows. A first row starting with
    /// `id` is taken as a header; blank lines and `#` comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut contracts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if contracts.is_empty() && fields.first() == Some(&"id") {
                continue;
            }
            let [id, kind, strike, expiry] = fields[..] else {
                return Err(Error::parse(line_no, format!("expected 4 fields, got {}", fields.len())));
            };
            let kind: OptionKind = kind.parse().map_err(|_| Error::parse(line_no, format!("bad kind {kind:?}")))?;
            let strike: f64 = strike
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad strike {strike:?}")))?;
            let expiry: f64 = expiry
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad expiry {expiry:?}")))?;
            let contract = OptionContract::new(id, kind, strike, expiry)
                .map_err(|e| Error::validation(format!("line {line_no}: {e}")))?;
            contracts.push(contract);
        }
        ContractBook::new(contracts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        ContractBook::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,kind,strike,expiry_years\n");
        for c in &self.contracts {
            out.push_str(&format!("{},{},{},{}\n", c.id, c.kind, c.strike, c.time_to_expiry));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
        file.write_all(self.to_csv().as_bytes()).map_err(|e| Error::file(path, e))
    }
}

/// Splits `book` into `workers` contiguous index ranges whose sizes differ
/// by at most one; the first `len % workers` ranges get the extra contract.
/// Workers beyond the book size get empty ranges.
pub fn partition_book(book: &ContractBook, workers: usize) -> Result<Vec<Range<usize>>> {
    partition_len(book.len(), workers)
}

pub(crate) fn partition_len(len: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 {
        return Err(Error::argument("worker count must be at least 1"));
    }
    let (base, extra) = (len / workers, len % workers);
    let mut start = 0;
    Ok((0..workers)
        .map(|w| {
            let size = base + usize::from(w < extra);
            let range = start..start + size;
            start += size;
            range
        })
        .collect())
}
