//! Random set systems: packed incidence matrices, colorings and the
//! elementary statistics of the signed discrepancy `D = Ax`.
//!
//! Both orientations of the 0/1 matrix are stored as packed 64-bit words,
//! so a row can be intersected with a coloring's positive set by popcount
//! and a column's row support can be walked directly when a single sign is
//! flipped. Empty rows are permitted and contribute discrepancy 0.
//!
//! Parity: `D_i` always has the parity of the row sum `‖A_i‖₁`. (Some
//! write-ups state this with the ∞-norm of the row; the row sum is the
//! quantity that actually determines parity.)

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

const WORD: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Indices of the set bits of a packed word slice, ascending.
pub fn bit_indices(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * WORD + b)
            }
        })
    })
}

/// How an instance was produced. Carried through the instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    m: usize,
    n: usize,
    row_words: usize,
    col_words: usize,
    rows: Vec<u64>,
    cols: Vec<u64>,
    meta: Option<GenerationMeta>,
}

impl IncidenceMatrix {
    /// Build from an entry predicate `f(i, j)`.
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid(format!("dimensions must be positive, got {m}x{n}")));
        }
        let row_words = words_for(n);
        let col_words = words_for(m);
        let mut rows = vec![0u64; m * row_words];
        let mut cols = vec![0u64; n * col_words];
        for i in 0..m {
            for j in 0..n {
                if f(i, j) {
                    rows[i * row_words + j / WORD] |= 1 << (j % WORD);
                    cols[j * col_words + i / WORD] |= 1 << (i % WORD);
                }
            }
        }
        Ok(Self {
            m,
            n,
            row_words,
            col_words,
            rows,
            cols,
            meta: None,
        })
    }

    /// Build from dense rows of 0/1 entries.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(invalid(format!("entry {v} in row {i} is not 0 or 1")));
            }
        }
        Self::from_fn(m, n, |i, j| rows[i][j] == 1)
    }

    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        Self::from_fn(m, n, |_, _| false)
    }

    pub fn ones(m: usize, n: usize) -> Result<Self> {
        Self::from_fn(m, n, |_, _| true)
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::from_fn(m, m, |i, j| i == j)
    }

    pub fn with_meta(mut self, meta: GenerationMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn meta(&self) -> Option<&GenerationMeta> {
        self.meta.as_ref()
    }

    /// Expected element frequency `t = p·m`. Falls back to the observed mean
    /// column sum when the instance carries no sampling probability.
    pub fn t(&self) -> f64 {
        match self.meta.as_ref().and_then(|g| g.p) {
            Some(p) => p * self.m as f64,
            None => self.nnz() as f64 / self.n as f64,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.m && j < self.n, "entry ({i},{j}) out of range");
        self.rows[i * self.row_words + j / WORD] >> (j % WORD) & 1 == 1
    }

    pub fn row_bits(&self, i: usize) -> &[u64] {
        &self.rows[i * self.row_words..(i + 1) * self.row_words]
    }

    pub fn col_bits(&self, j: usize) -> &[u64] {
        &self.cols[j * self.col_words..(j + 1) * self.col_words]
    }

    /// Elements of set `i`.
    pub fn row_support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        bit_indices(self.row_bits(i))
    }

    /// Sets containing element `j`.
    pub fn col_support(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        bit_indices(self.col_bits(j))
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.row_bits(i)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        self.col_bits(j)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Column supports as index lists, the layout the enumeration kernels use.
    pub fn column_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|j| self.col_support(j).collect()).collect()
    }

    /// Rows with odd row sum.
    pub fn odd_rows(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| self.row_sum(i) % 2 == 1).collect()
    }

    /// The same set system with columns reordered: column `k` of the result
    /// is column `perm[k]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; self.n];
        for &j in perm {
            if j >= self.n || std::mem::replace(&mut seen[j], true) {
                return Err(invalid("column permutation is not a bijection"));
            }
        }
        let mut out = Self::from_fn(self.m, self.n, |i, k| self.get(i, perm[k]))?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

/// Entrywise Bernoulli(p) incidence matrix. Row `i` is drawn from
/// `rng::stream(seed, i)`, so the output does not depend on thread count.
pub fn sample_bernoulli(m: usize, n: usize, p: f64, seed: u64) -> Result<IncidenceMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} is outside [0, 1]")));
    }
    if m == 0 || n == 0 {
        return Err(invalid(format!("dimensions must be positive, got {m}x{n}")));
    }
    let rows: Vec<Vec<bool>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            (0..n).map(|_| rng.random_bool(p)).collect()
        })
        .collect();
    Ok(
        IncidenceMatrix::from_fn(m, n, |i, j| rows[i][j])?.with_meta(GenerationMeta {
            p: Some(p),
            seed: Some(seed),
            generator: "bernoulli".into(),
        }),
    )
}

/// Per-entry success probabilities for the semi-random generator, capped
/// entrywise by `delta_cap` and per column by `column_budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMatrix {
    probs: Vec<Vec<f64>>,
    delta_cap: f64,
    column_budget: f64,
}

impl DistributionMatrix {
    pub fn new(probs: Vec<Vec<f64>>, delta_cap: f64, column_budget: f64) -> Result<Self> {
        if !(delta_cap > 0.0 && delta_cap <= 1.0) {
            return Err(invalid(format!(
                "delta_cap = {delta_cap} is outside (0, 1]"
            )));
        }
        let m = probs.len();
        let n = probs.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(invalid("distribution matrix must be non-empty"));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if let Some(&v) = row.iter().find(|&&v| !(0.0..=delta_cap).contains(&v)) {
                return Err(invalid(format!(
                    "P[{i}][..] = {v} is outside [0, {delta_cap}]"
                )));
            }
        }
        for j in 0..n {
            let s: f64 = probs.iter().map(|r| r[j]).sum();
            if s > column_budget {
                return Err(invalid(format!(
                    "column {j} sums to {s}, above the budget {column_budget}"
                )));
            }
        }
        Ok(Self {
            probs,
            delta_cap,
            column_budget,
        })
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn n(&self) -> usize {
        self.probs[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i][j]
    }

    pub fn delta_cap(&self) -> f64 {
        self.delta_cap
    }

    pub fn column_budget(&self) -> f64 {
        self.column_budget
    }
}

/// Entrywise Bernoulli(P[i][j]) incidence matrix, row streams as in
/// [`sample_bernoulli`].
pub fn sample_semirandom(dist: &DistributionMatrix, seed: u64) -> IncidenceMatrix {
    let rows: Vec<Vec<bool>> = (0..dist.m())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            (0..dist.n())
                .map(|j| rng.random_bool(dist.get(i, j)))
                .collect()
        })
        .collect();
    IncidenceMatrix::from_fn(dist.m(), dist.n(), |i, j| rows[i][j])
        .expect("validated dimensions")
        .with_meta(GenerationMeta {
            p: None,
            seed: Some(seed),
            generator: "semirandom".into(),
        })
}

/// A ±1 vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coloring {
    signs: Vec<i8>,
}

impl Coloring {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(invalid(format!("coloring entry {s} is not ±1")));
        }
        Ok(Self { signs })
    }

    pub fn all_plus(n: usize) -> Self {
        Self { signs: vec![1; n] }
    }

    pub fn random(n: usize, rng: &mut Stream) -> Self {
        Self {
            signs: (0..n)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect(),
        }
    }

    /// Bit `j` of `mask` set means `x_j = +1`. Only for `n ≤ 64`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        assert!(n <= 64);
        Self {
            signs: (0..n)
                .map(|j| if mask >> j & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn flip(&mut self, j: usize) {
        self.signs[j] = -self.signs[j];
    }

    pub fn negated(&self) -> Self {
        Self {
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }

    fn positive_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; words_for(self.signs.len())];
        for (j, &s) in self.signs.iter().enumerate() {
            if s == 1 {
                words[j / WORD] |= 1 << (j % WORD);
            }
        }
        words
    }

    /// `+`/`-` string, one character per element.
    pub fn to_sign_string(&self) -> String {
        self.signs
            .iter()
            .map(|&s| if s == 1 { '+' } else { '-' })
            .collect()
    }

    pub fn parse_sign_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(invalid(format!(
                    "unexpected character {other:?} in coloring"
                ))),
            })
            .collect::<Result<Vec<i8>>>()
            .map(|signs| Self { signs })
    }
}

impl Serialize for Coloring {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_sign_string())
    }
}

impl<'de> Deserialize<'de> for Coloring {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Coloring::parse_sign_string(&s).map_err(serde::de::Error::custom)
    }
}

fn check_len(a: &IncidenceMatrix, x: &Coloring) -> Result<()> {
    if x.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `D = Ax`, exactly.
pub fn signed_discrepancy(a: &IncidenceMatrix, x: &Coloring) -> Result<Vec<i64>> {
    check_len(a, x)?;
    let pos = x.positive_words();
    Ok((0..a.m())
        .map(|i| {
            let row = a.row_bits(i);
            let plus: u32 = row
                .iter()
                .zip(&pos)
                .map(|(r, p)| (r & p).count_ones())
                .sum();
            2 * plus as i64 - a.row_sum(i) as i64
        })
        .collect())
}

/// `‖Ax‖∞`.
pub fn disc_of_coloring(a: &IncidenceMatrix, x: &Coloring) -> Result<u64> {
    Ok(signed_discrepancy(a, x)?
        .into_iter()
        .map(i64::unsigned_abs)
        .max()
        .unwrap_or(0))
}

/// `AAᵀ`, whose entry `(i, k)` is `|S_i ∩ S_k|`.
pub fn covariance_empirical(a: &IncidenceMatrix) -> DMatrix<i64> {
    DMatrix::from_fn(a.m(), a.m(), |i, k| {
        a.row_bits(i)
            .iter()
            .zip(a.row_bits(k))
            .map(|(x, y)| (x & y).count_ones() as i64)
            .sum()
    })
}

/// `E[AAᵀ] = (1-p)pn·I + p²n·11ᵀ`: diagonal `np`, off-diagonal `np²`.
pub fn covariance_expected(m: usize, n: usize, p: f64) -> DMatrix<f64> {
    let n = n as f64;
    DMatrix::from_fn(m, m, |i, k| if i == k { n * p } else { n * p * p })
}

/// Largest number of sets containing a single element.
pub fn max_column_frequency(a: &IncidenceMatrix) -> usize {
    (0..a.n()).map(|j| a.col_sum(j)).max().unwrap_or(0)
}

/// On-disk instance. Each row is hex of `ceil(n/8)` bytes; within a byte
/// the most significant bit is the lowest column, so the first hex digit
/// of a row holds columns 0..4 with column 0 in its high bit. Padding bits
/// past column `n-1` must be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub generator: String,
    pub rows: Vec<String>,
}

fn encode_row(a: &IncidenceMatrix, i: usize) -> String {
    let mut bytes = vec![0u8; a.n().div_ceil(8)];
    for j in a.row_support(i) {
        bytes[j / 8] |= 0x80 >> (j % 8);
    }
    hex::encode(bytes)
}

impl From<&IncidenceMatrix> for InstanceFile {
    fn from(a: &IncidenceMatrix) -> Self {
        let meta = a.meta();
        InstanceFile {
            m: a.m(),
            n: a.n(),
            p: meta.and_then(|g| g.p),
            seed: meta.and_then(|g| g.seed),
            generator: meta.map_or_else(|| "manual".into(), |g| g.generator.clone()),
            rows: (0..a.m()).map(|i| encode_row(a, i)).collect(),
        }
    }
}

impl TryFrom<&InstanceFile> for IncidenceMatrix {
    type Error = Error;

    fn try_from(f: &InstanceFile) -> Result<Self> {
        if f.rows.len() != f.m {
            return Err(Error::Format(format!(
                "{} rows listed, m = {}",
                f.rows.len(),
                f.m
            )));
        }
        let nbytes = f.n.div_ceil(8);
        let decoded = f
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let bytes = hex::decode(r).map_err(|e| Error::Format(format!("row {i}: {e}")))?;
                if bytes.len() != nbytes {
                    return Err(Error::Format(format!(
                        "row {i} has {} bytes, expected {nbytes}",
                        bytes.len()
                    )));
                }
                if !f.n.is_multiple_of(8) && bytes[nbytes - 1] & (0xFF >> (f.n % 8)) != 0 {
                    return Err(Error::Format(format!("row {i} has nonzero padding bits")));
                }
                Ok(bytes)
            })
            .collect::<Result<Vec<_>>>()?;
        let a =
            IncidenceMatrix::from_fn(f.m, f.n, |i, j| decoded[i][j / 8] & (0x80 >> (j % 8)) != 0)?;
        Ok(a.with_meta(GenerationMeta {
            p: f.p,
            seed: f.seed,
            generator: f.generator.clone(),
        }))
    }
}

impl IncidenceMatrix {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(s)?;
        Self::try_from(&f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
