//! Brute-force ground truth: root counts modulo `p^k`, exhaustive partition
//! checks over residue classes, and sampled order-law checks.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cells::{BallStatus, Cell1, Decomposition, Shape};
use crate::error::{Error, Result};
use crate::padic::{modulo, ord_p, truncate, Prime, Rat, Val};
use crate::poly::{fmt_rat, Poly};

/// Seed used by [`verify_laws`] unless another is given.
pub const DEFAULT_SEED: u64 = 0x5eed_cafe;

/// `f` scaled to integer coefficients by a factor prime to `p`.
fn integral(f: &Poly, p: Prime) -> Result<Vec<BigInt>> {
    if f.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let pb = p.big();
    let mut l = BigInt::one();
    for c in f.coeffs() {
        if (c.denom() % &pb).is_zero() {
            return Err(Error::PDenominator);
        }
        l = l.lcm(c.denom());
    }
    Ok(f.coeffs().iter().map(|c| (c * Rat::from_integer(l.clone())).to_integer()).collect())
}

fn eval_int(a: &[BigInt], x: &BigInt) -> BigInt {
    a.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c)
}

/// Taylor coefficients of the integer polynomial `a` at `r`.
fn shift_int(a: &[BigInt], r: &BigInt) -> Vec<BigInt> {
    let mut out = a.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = &out[j + 1] * r;
            out[j] += t;
        }
    }
    out
}

fn ord_big(x: &BigInt, p: &BigInt, cap: u32) -> u32 {
    if x.is_zero() {
        return cap;
    }
    let mut x = x.clone();
    let mut v = 0;
    while v < cap && (&x % p).is_zero() {
        x /= p;
        v += 1;
    }
    v
}

/// `#{ y mod p^k : f(y) ≡ 0 mod p^k }` by digit lifting with pruning.
pub fn count_roots_mod(f: &Poly, p: Prime, k: u32) -> Result<BigInt> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    let a = integral(f, p)?;
    let pb = p.big();
    let per_digit = crate::par::map_range(p.get(), |d| count_below(&a, &pb, BigInt::from(d), 1, k));
    Ok(per_digit.into_iter().sum())
}

/// Roots mod `p^k` inside the class `r mod p^j`.
fn count_below(a: &[BigInt], p: &BigInt, r: BigInt, j: u32, k: u32) -> BigInt {
    let t = shift_int(a, &r);
    // ord f(r + p^j z) >= min_i ord(t_i) + i j for every z
    let floor = t.iter().enumerate().map(|(i, c)| ord_big(c, p, k) + i as u32 * j).min().unwrap_or(k);
    if floor >= k {
        return p.pow(k - j);
    }
    if ord_big(&t[0], p, k) < j {
        return BigInt::zero();
    }
    if j == k {
        return BigInt::one();
    }
    let step = p.pow(j);
    let mut total = BigInt::zero();
    let mut d = BigInt::zero();
    while &d < p {
        total += count_below(a, p, &r + &d * &step, j + 1, k);
        d += 1;
    }
    total
}

/// Reference count by scanning every residue modulo `p^k`.
pub fn count_roots_full_scan(f: &Poly, p: Prime, k: u32) -> Result<BigInt> {
    let a = integral(f, p)?;
    let modulus = p.pow(k);
    let n = modulus.to_u64().ok_or_else(|| Error::InvalidInput("modulus too large for a scan".into()))?;
    let hits: Vec<bool> = crate::par::map_range(n, |y| (eval_int(&a, &BigInt::from(y)) % &modulus).is_zero());
    Ok(BigInt::from(hits.into_iter().filter(|h| *h).count()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RootCounts {
    pub prime: Prime,
    /// `counts[k - 1] = N_k`.
    #[serde(serialize_with = "crate::ser::bigs")]
    pub counts: Vec<BigInt>,
}

impl RootCounts {
    pub fn compute(f: &Poly, p: Prime, k_max: u32) -> Result<RootCounts> {
        let counts = (1..=k_max).map(|k| count_roots_mod(f, p, k)).collect::<Result<_>>()?;
        Ok(RootCounts { prime: p, counts })
    }

    pub fn n(&self, k: u32) -> BigInt {
        if k == 0 {
            BigInt::one()
        } else {
            self.counts[k as usize - 1].clone()
        }
    }

    /// `mu(ord f >= k) = N_k p^{-k}`.
    pub fn tail(&self, k: u32) -> Rat {
        Rat::from_integer(self.n(k)) * self.prime.rpow(-(k as i64))
    }

    /// `mu(ord f = m) = N_m p^{-m} - N_{m+1} p^{-m-1}` for `m + 1 <= k_max`.
    pub fn measure_of_order(&self, m: u32) -> Rat {
        self.tail(m) - self.tail(m + 1)
    }

    pub fn is_monotone(&self) -> bool {
        let pb = self.prime.big();
        (0..self.counts.len()).all(|i| {
            let prev = if i == 0 { pb.clone() } else { &pb * &self.counts[i - 1] };
            self.counts[i] <= prev
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// The residue class as `r mod p^j`.
    #[serde(serialize_with = "crate::ser::rat")]
    pub class: Rat,
    pub modulus_exp: i64,
    /// Cells containing the whole class, or meeting it when one already does.
    pub cells: Vec<usize>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Overlap,
    Uncovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionReport {
    pub k: u32,
    /// Residue classes modulo `p^k` affected by a violation.
    #[serde(serialize_with = "crate::ser::big")]
    pub violating_classes: BigInt,
    /// Classes modulo `p^k` whose membership needs more digits.
    #[serde(serialize_with = "crate::ser::big")]
    pub undecided: BigInt,
    pub violations: Vec<Violation>,
}

impl PartitionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that each residue class modulo `p^k` of the domain lies in exactly
/// one cell, descending digit by digit only where some cell is undecided.
pub fn verify_partition(d: &Decomposition, k: u32) -> PartitionReport {
    let p = d.prime;
    let base = truncate(&d.domain.center, p, d.domain.min_ord);
    let leaf = d.domain.min_ord + k as i64;
    let start = d.domain.min_ord;
    let children: Vec<Rat> = (0..p.get())
        .map(|u| &base + Rat::from_integer(BigInt::from(u)) * p.rpow(start))
        .collect();
    let parts = if k == 0 {
        vec![walk(d, base, start, leaf)]
    } else {
        crate::par::map(&children, |r| walk(d, r.clone(), start + 1, leaf))
    };
    let mut report = PartitionReport {
        k,
        violating_classes: BigInt::zero(),
        undecided: BigInt::zero(),
        violations: Vec::new(),
    };
    for part in parts {
        report.violating_classes += part.violating_classes;
        report.undecided += part.undecided;
        report.violations.extend(part.violations);
    }
    report
}

fn walk(d: &Decomposition, r: Rat, j: i64, leaf: i64) -> PartitionReport {
    let p = d.prime;
    let mut inside = Vec::new();
    let mut partial = Vec::new();
    for (i, c) in d.cells.iter().enumerate() {
        match c.ball_status(&r, j) {
            BallStatus::Inside => inside.push(i),
            BallStatus::Partial => partial.push(i),
            BallStatus::Outside => {}
        }
    }
    let weight = p.pow((leaf - j) as u32);
    let k = (leaf - d.domain.min_ord) as u32;
    let mut report = PartitionReport {
        k,
        violating_classes: BigInt::zero(),
        undecided: BigInt::zero(),
        violations: Vec::new(),
    };
    let flag = |report: &mut PartitionReport, cells: Vec<usize>, kind| {
        report.violating_classes += &weight;
        report.violations.push(Violation { class: r.clone(), modulus_exp: j, cells, kind });
    };
    match (inside.len(), partial.len()) {
        (1, 0) => {}
        (0, 0) => flag(&mut report, Vec::new(), ViolationKind::Uncovered),
        (0, _) if j >= leaf => report.undecided += 1,
        (0, _) => {
            for u in 0..p.get() {
                let child = &r + Rat::from_integer(BigInt::from(u)) * p.rpow(j);
                let sub = walk(d, child, j + 1, leaf);
                report.violating_classes += sub.violating_classes;
                report.undecided += sub.undecided;
                report.violations.extend(sub.violations);
            }
        }
        _ => {
            inside.extend(partial);
            flag(&mut report, inside, ViolationKind::Overlap)
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LawFailure {
    pub cell: usize,
    #[serde(serialize_with = "crate::ser::rat")]
    pub y: Rat,
    pub expected: Val,
    pub actual: Val,
    /// `true` when the inequality with the recorded `k` failed, not the law.
    pub inequality: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub cell: usize,
    #[serde(serialize_with = "crate::ser::rat")]
    pub y: Rat,
    pub ord_f: Val,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LawReport {
    pub poly: String,
    pub seed: u64,
    pub k: i64,
    pub samples_per_cell: usize,
    pub checked: usize,
    pub failures: Vec<LawFailure>,
    /// The first few samples, for inspection.
    pub transcript: Vec<Sample>,
}

impl LawReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failing_cells(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.failures.iter().map(|f| f.cell).collect();
        v.dedup();
        v
    }
}

pub fn verify_laws(d: &Decomposition, f: &Poly, samples: usize) -> LawReport {
    verify_laws_seeded(d, f, samples, DEFAULT_SEED)
}

/// Sample members of every cell (every residue class, the low shells and the
/// high end of each range) and compare `ord f(y)` with the cell's law, and
/// with `ord k + min_i ord a_i (y - c)^i` for the recorded `k`.
pub fn verify_laws_seeded(d: &Decomposition, f: &Poly, samples: usize, seed: u64) -> LawReport {
    let k = d.k_for(f).unwrap_or(0);
    let indexed: Vec<(usize, &Cell1)> = d.cells.iter().enumerate().collect();
    let per_cell = crate::par::map(&indexed, |&(i, c)| check_cell(i, c, f, samples, seed ^ i as u64, k));
    let mut report = LawReport {
        poly: f.to_string(),
        seed,
        k,
        samples_per_cell: samples,
        checked: 0,
        failures: Vec::new(),
        transcript: Vec::new(),
    };
    for (checked, failures, transcript) in per_cell {
        report.checked += checked;
        report.failures.extend(failures);
        if report.transcript.len() < 32 {
            report.transcript.extend(transcript.into_iter().take(4));
        }
    }
    report
}

fn check_cell(i: usize, c: &Cell1, f: &Poly, samples: usize, seed: u64, k: i64) -> (usize, Vec<LawFailure>, Vec<Sample>) {
    let p = c.prime();
    let mut failures = Vec::new();
    let mut transcript = Vec::new();
    let Some(law) = c.law_for(f) else {
        return (0, vec![LawFailure { cell: i, y: Rat::zero(), expected: Val::Inf, actual: Val::Inf, inequality: false }], transcript);
    };
    let Shape::Annuli { range, residue } = &c.shape else {
        let actual = c.center.ord_of(f);
        if actual != law.e0 {
            let y = c.center.approx(8);
            failures.push(LawFailure { cell: i, y, expected: law.e0, actual, inequality: false });
        }
        return (1, failures, transcript);
    };
    let v = c.center.taylor_vals(f);
    let dd = residue.depth();
    let units: Vec<BigInt> = residue.lift(dd, p).into_iter().collect();
    let mut shells: Vec<i64> = range.iter_upto(range.lo + 3 * range.step).collect();
    match range.hi {
        Some(h) => shells.extend(range.iter_upto(h).filter(|&m| m > h - 2 * range.step)),
        None => shells.extend([range.lo + 7 * range.step, range.lo + 20 * range.step]),
    }
    shells.sort_unstable();
    shells.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.max(shells.len() * units.len().min(64));
    let spread = p.pow(6);
    for s in 0..n {
        let m = shells[s % shells.len()];
        let w = &units[(s / shells.len()) % units.len()];
        let z = modulo(&BigInt::from(rng.gen::<u64>()), &spread);
        let z = if rng.gen_bool(0.5) { -z } else { z };
        let c_rep = truncate(&c.center.approx(m + dd as i64 + 1), p, m + dd as i64);
        let y = c_rep + Rat::from_integer(w + &p.pow(dd) * z) * p.rpow(m);
        let dist = c.center.dist_rat(&y);
        let actual = ord_p(&f.eval(&y), p);
        let expected = law.at(dist);
        if transcript.len() < 4 {
            transcript.push(Sample { cell: i, y: y.clone(), ord_f: actual });
        }
        if actual != expected || !c.contains(&y) {
            failures.push(LawFailure { cell: i, y, expected, actual, inequality: false });
            continue;
        }
        let bound = v.iter().enumerate().map(|(j, vj)| *vj + dist.unwrap() * j as i64).min().unwrap() + k;
        if actual > bound {
            failures.push(LawFailure { cell: i, y, expected: bound, actual, inequality: true });
        }
    }
    (n, failures, transcript)
}

/// Human-readable one-line summary of a residue class.
pub fn describe_class(v: &Violation, p: Prime) -> String {
    format!("{} mod {}^{}", fmt_rat(&v.class), p, v.modulus_exp)
}
