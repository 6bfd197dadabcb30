//! End-to-end acceptance run: one PASS/FAIL line per criterion, exact arithmetic throughout.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use padic_cells::cells::{
    check_partition, refine_common, Ball, Cell1, CellKind, CenterValue, Center, Decomposition, MRange, OrderLaw,
    Residue,
};
use padic_cells::decompose::{decompose_set, prepare};
use padic_cells::dim::{dim_of, dim_of_products, dim_product, dim_union, product_cells, Dim};
use padic_cells::hensel::{h, order_law_at_root, refine_root, root_ord, HenselValue};
use padic_cells::kgroup::{chi, chi_products, cv_check, k0_add, k0_mul};
use padic_cells::measure::{igusa_zeta, measure, measure_of_order, ZetaFn};
use padic_cells::oracle::{verify_laws, verify_partition, RootCounts, ViolationKind};
use padic_cells::padic::{ord_p, rat, rv, Prime, Rat, RvData, UnitDigits, Val};
use padic_cells::parse::{parse_formula, parse_poly};
use padic_cells::poly::Poly;
use padic_cells::Error;

type Check = Result<(), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

const PRIMES: [u64; 4] = [2, 3, 5, 7];

/// Degrees 1-4, integer coefficients in [-20, 20]; `y^2 - p` depends on the prime.
const CORPUS: [&str; 25] = [
    "y",
    "y^2",
    "y^3",
    "y^4",
    "y^2 - 1",
    "y^2 - p",
    "y^3 - y",
    "(y - 1)^2*(y + 1)",
    "y^2 - 2",
    "y^2 - 3",
    "y^2 - 7",
    "2*y + 3",
    "3*y - 20",
    "y^2 + y + 1",
    "y^2 - 20",
    "y^3 - 2",
    "y^4 - 1",
    "y^4 - 16",
    "y^3 - 3*y + 1",
    "y^4 + y^3 - 7*y^2 - y + 6",
    "y^2 - 12",
    "5*y^2 - 20*y + 15",
    "y^4 - 2*y^2 + 1",
    "y^3 - 12*y + 16",
    "y^4 - 18",
];

fn prime(p: u64) -> Prime {
    Prime::new(p).unwrap()
}

fn corpus() -> Vec<(Prime, Poly, Decomposition)> {
    let mut out = Vec::new();
    for &p in &PRIMES {
        for src in CORPUS {
            let f = parse_poly(&src.replace('p', &p.to_string())).unwrap();
            let d = prepare(&f, prime(p), &Ball::zp()).unwrap_or_else(|e| panic!("prepare({f}) at p={p}: {e}"));
            out.push((prime(p), f, d));
        }
    }
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn partition_exactness(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    for (p, f, d) in corpus {
        let exact = check_partition(d).map_err(|e| e.to_string())?;
        ensure(exact.is_partition(), || format!("{f} at p={p}: constraint check {exact:?}"))?;
        let sampled = verify_partition(d, 6);
        ensure(sampled.ok(), || format!("{f} at p={p}: {} violations mod p^6", sampled.violations.len()))?;
    }
    Ok(())
}

fn order_laws(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    for (p, f, d) in corpus {
        let r = verify_laws(d, f, 200);
        ensure(r.ok(), || format!("{f} at p={p}: {:?}", r.failures.first()))?;
        ensure(r.checked >= 200 * d.cells.iter().filter(|c| c.kind() == CellKind::One).count(), || {
            format!("{f} at p={p}: only {} samples", r.checked)
        })?;
    }
    Ok(())
}

fn oracle_measures(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    for (p, f, d) in corpus {
        let counts = RootCounts::compute(f, *p, 7).map_err(|e| e.to_string())?;
        for m in 0..=5u32 {
            let ours = measure_of_order(d, f, m as i64).map_err(|e| e.to_string())?;
            let theirs = counts.measure_of_order(m);
            ensure(ours == theirs, || format!("{f} at p={p}, m={m}: {ours} vs {theirs}"))?;
        }
        for k in 0..=6u32 {
            let mut tail = Rat::zero();
            for m in 0..k as i64 {
                tail += measure_of_order(d, f, m).map_err(|e| e.to_string())?;
            }
            let ours = Rat::one() - tail;
            ensure(ours == counts.tail(k), || format!("{f} at p={p}: tail {k} is {ours}, oracle {}", counts.tail(k)))?;
        }
    }
    Ok(())
}

fn zeta_closed_forms(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    for &pv in &[3u64, 5, 7] {
        let p = prime(pv);
        let q = p.rpow(-1);
        for k in 1..=3usize {
            let mut f = vec![0i64; k + 1];
            f[k] = 1;
            let f = Poly::from_ints(&f);
            let z = igusa_zeta(&prepare(&f, p, &Ball::zp()).unwrap(), &f, p).map_err(|e| e.to_string())?;
            let mut den = vec![Rat::zero(); k + 1];
            den[0] = Rat::one();
            den[k] = -q.clone();
            let want = ZetaFn::new(Poly::constant(Rat::one() - &q), Poly::new(den));
            ensure(z == want, || format!("y^{k} at p={pv}: {z:?}"))?;
        }
    }
    for (p, f, d) in corpus {
        let z = igusa_zeta(d, f, *p).map_err(|e| e.to_string())?;
        ensure(z.eval(&Rat::one()) == Some(Rat::one()), || format!("{f} at p={p}: Z(1) = {:?}", z.eval(&Rat::one())))?;
        let mut series = Vec::new();
        for m in 0..6 {
            series.push(measure_of_order(d, f, m).map_err(|e| e.to_string())?);
        }
        ensure(z.taylor(6) == series, || format!("{f} at p={p}: Taylor coefficients differ"))?;
    }
    Ok(())
}

/// Every unit digit string of depth `d` as an rv class at valuation `m`.
fn classes(p: Prime, m: i64, d: u32) -> Vec<RvData> {
    let modulus = p.pow(d);
    let mut out = Vec::new();
    let mut u = BigInt::one();
    while u < modulus {
        if !(&u % p.big()).is_zero() {
            out.push(RvData::NonZero { valuation: m, unit: UnitDigits::new(d, u.clone(), p).unwrap() });
        }
        u += 1;
    }
    out
}

fn hensel_suite(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e5e1);
    let mut roots = 0;
    for (p, f, _) in corpus {
        let pb = p.get() as i64;
        for m in 0..=2i64 {
            for d in 1..=2u32 {
                for x0 in classes(*p, m, d) {
                    let HenselValue::Root(r) = h(f.coeffs(), &x0, *p) else { continue };
                    roots += 1;
                    let RvData::NonZero { unit, .. } = &x0 else { unreachable!() };
                    let tag = format!("{f} at p={p}, class ({m}, {}, d={d})", unit.digits);
                    // the witness is the squarefree part of f
                    let g = &r.witness;
                    let e = order_law_at_root(g, &r, *p).map_err(|err| format!("{tag}: {err}"))?;
                    let e = e.finite().ok_or_else(|| format!("{tag}: infinite b_1"))?;
                    let fine = refine_root(&r, m + d as i64 + 2 * e + 8, *p);

                    let fv = ord_p(&g.eval(&fine.approx), *p);
                    let dv = ord_p(&g.derivative().eval(&fine.approx), *p);
                    ensure(fine.is_exact() || fv >= fine.precision + dv, || format!("{tag}: Newton certificate fails"))?;
                    ensure(root_ord(f, &fine, *p) == Val::Inf, || format!("{tag}: not a root of f"))?;
                    ensure(rv(&fine.approx, *p, d).ok() == Some(x0.clone()), || format!("{tag}: rv tag mismatch"))?;

                    // brute force: exactly one class mod p^k inside x0 carries roots of f
                    let s = (e as u32 + 2).min(if pb <= 3 { 8 } else { 4 });
                    let k = m + d as i64 + s as i64;
                    let base = Rat::from_integer(unit.digits.clone()) * p.rpow(m);
                    let step = p.rpow(m + d as i64);
                    let mut hits = Vec::new();
                    for t in 0..pb.pow(s) {
                        let y = &base + &step * rat(t);
                        if ord_p(&g.eval(&y), *p) >= Val::Fin(e + k) {
                            hits.push(y);
                        }
                    }
                    ensure(hits.len() == 1, || format!("{tag}: {} root classes mod p^{k}", hits.len()))?;
                    ensure(ord_p(&(&hits[0] - &fine.approx), *p) >= Val::Fin(k), || format!("{tag}: lifted class off"))?;

                    // (h5) on 50 members of the class
                    for _ in 0..50 {
                        let t: i64 = rng.gen_range(0..pb.pow(6));
                        let w = &base + &step * rat(t);
                        let lhs = ord_p(&g.eval(&w), *p);
                        let rhs = Val::Fin(e) + root_ord(&Poly::linear_root(&w), &fine, *p);
                        ensure(lhs == rhs, || format!("{tag}: ord f({w}) = {lhs}, law gives {rhs}"))?;
                    }
                }
            }
        }
    }
    ensure(roots > 100, || format!("only {roots} Hensel roots exercised"))
}

fn set_of(phi: &str, p: Prime) -> Decomposition {
    decompose_set(&parse_formula(phi).unwrap(), p, &Ball::zp()).unwrap().as_set()
}

fn worked_examples() -> Check {
    // nonzero cubes of Z_7: ord divisible by 3 and leading digit a cube mod 7
    let p = prime(7);
    let cubes = "ord(y) % 3 = 0 & (ac(1, y) = 1 | ac(1, y) = 6)";
    let full = set_of(cubes, p);
    ensure(full.cells.iter().all(|c| c.kind() == CellKind::One), || "cube cells must be (1)-cells".into())?;
    let mu = measure(&full).map_err(|e| e.to_string())?;
    ensure(mu == Rat::new(49.into(), 171.into()), || format!("cube measure {mu}"))?;

    let modulus = 7i64.pow(4);
    let mut images = std::collections::BTreeSet::new();
    for x in 1..modulus {
        if x % 7 != 0 {
            images.insert(x.pow(3) % modulus);
        }
    }
    let shell = Rat::new(BigInt::from(images.len()), BigInt::from(modulus));
    let low = measure(&set_of(&format!("{cubes} & ord(y) < 3"), p)).map_err(|e| e.to_string())?;
    ensure(low == shell, || format!("ord < 3 part {low}, brute force {shell}"))?;
    let limit = &shell / (Rat::one() - p.rpow(-3));
    ensure(mu == limit, || format!("limit {limit} vs {mu}"))?;

    // Z_5 minus {5}
    let p = prime(5);
    let sd = decompose_set(&parse_formula("!(rv(2, y - 5) = 0)").unwrap(), p, &Ball::zp()).map_err(|e| e.to_string())?;
    ensure(check_partition(&sd.decomposition).map_err(|e| e.to_string())?.is_partition(), || "Z_5 split".into())?;
    ensure(verify_partition(&sd.decomposition, 6).ok(), || "Z_5 split violates partition".into())?;
    let set = sd.as_set();
    ensure(set.cells.iter().all(|c| c.kind() == CellKind::One), || "kept cells must be (1)-cells".into())?;
    ensure(set.cells.iter().all(|c| c.center.exact_value() == Some(&rat(5))), || "centers must be 5".into())?;
    ensure(measure(&set).map_err(|e| e.to_string())? == Rat::one(), || "measure of Z_5 minus a point".into())?;
    ensure(set.members(&rat(5)).is_empty(), || "5 is kept".into())?;
    for y in [0, 1, 4, 30, 130, 630, -5] {
        ensure(set.members(&rat(y)).len() == 1, || format!("{y} not covered exactly once"))?;
    }
    Ok(())
}

fn around(c: i64, p: Prime) -> Decomposition {
    let center = Center::exact(rat(c), p);
    Decomposition::new(
        p,
        Ball::zp(),
        vec![Cell1::point(center.clone()), Cell1::annuli(center, MRange::from(0), Residue::All)],
    )
}

fn grothendieck() -> Check {
    let p5 = prime(5);
    let mut pairs: Vec<(String, Decomposition, Decomposition)> = Vec::new();
    for &pv in &[3u64, 5, 7] {
        let p = prime(pv);
        pairs.push((
            format!("depth 1 vs 2 at p={pv}"),
            Decomposition::rv_split(p, rat(0), 0, 1, false),
            Decomposition::rv_split(p, rat(0), 0, 2, false),
        ));
    }
    for &pv in &[2u64, 3, 5, 7] {
        let p = prime(pv);
        pairs.push((format!("center 0 vs 1 at p={pv}"), around(0, p), around(1, p)));
    }
    pairs.push(("Z_5 by two formulas".into(), set_of("ord(y) >= 0", p5), set_of("y = 0 | !(y = 0)", p5)));
    pairs.push(("1 + 5Z_5 by ord and rv".into(), set_of("ord(y - 1) >= 1", p5), set_of("rv(1, y) = (0, 1)", p5)));
    let f = Poly::from_ints(&[-1, 0, 1]);
    pairs.push(("Z_5 prepared for y^2 - 1 and y".into(), prepare(&f, p5, &Ball::zp()).unwrap(), around(0, p5)));
    let p7 = prime(7);
    pairs.push((
        "Z_7 prepared for y^3 - y and y^2 - 7".into(),
        prepare(&Poly::from_ints(&[0, -1, 0, 1]), p7, &Ball::zp()).unwrap(),
        prepare(&Poly::from_ints(&[-7, 0, 1]), p7, &Ball::zp()).unwrap(),
    ));
    ensure(pairs.len() >= 10, || "too few pairs".into())?;
    for (name, a, b) in &pairs {
        ensure(cv_check(a, b) == Ok(true), || format!("{name}: {:?}", cv_check(a, b)))?;
    }

    // additivity over a disjoint union and grading of products
    let point = Decomposition::new(p5, Ball::zp(), vec![Cell1::point(Center::exact(rat(0), p5))]);
    let rest = Decomposition::rv_split(p5, rat(0), 0, 1, false);
    let mut union = point.clone();
    union.cells.extend(rest.cells.clone());
    ensure(chi(&union) == k0_add(&chi(&point), &chi(&rest)), || "chi is not additive".into())?;
    for (a, b) in [(&rest, &rest), (&point, &rest), (&union, &rest)] {
        let pc = product_cells(&[a, b]).map_err(|e| e.to_string())?;
        ensure(chi_products(&pc) == k0_mul(&chi(a), &chi(b)), || "chi is not multiplicative".into())?;
    }
    Ok(())
}

fn dimension(corpus: &[(Prime, Poly, Decomposition)]) -> Check {
    let p = prime(5);
    let zp = around(0, p);
    ensure(dim_of(&zp) == Dim::Fin(1), || "dim Z_5".into())?;
    let points = |xs: &[i64]| {
        Decomposition::new(p, Ball::zp(), xs.iter().map(|&x| Cell1::point(Center::exact(rat(x), p))).collect())
    };
    let empty = points(&[]);
    ensure(dim_of(&empty) == Dim::MinusInfinity, || "empty set".into())?;
    let sets = [
        zp.clone(),
        points(&[3]),
        points(&[1, 2, 7]),
        empty.clone(),
        set_of("ord(y - 1) >= 2", p),
    ];
    let mut products = 0;
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i..] {
            let direct = dim_of_products(&product_cells(&[a, b]).map_err(|e| e.to_string())?);
            ensure(direct == dim_product(dim_of(a), dim_of(b)), || format!("product {direct}"))?;
            products += 1;
        }
    }
    ensure(products >= 10, || "too few products".into())?;

    let unions: Vec<Vec<Decomposition>> = vec![
        vec![points(&[0]), Decomposition::rv_split(p, rat(0), 0, 1, false)],
        vec![points(&[1]), points(&[2])],
        vec![empty.clone(), empty.clone()],
        vec![empty.clone(), zp.clone()],
        vec![points(&[1, 2]), points(&[3]), points(&[4])],
        vec![set_of("ord(y) = 0", p), set_of("ord(y) >= 1", p)],
        vec![set_of("ord(y - 1) >= 1", p), points(&[2, 3])],
        vec![set_of("ac(1, y) = 1", p), set_of("ac(1, y) = 2", p), points(&[0])],
        vec![set_of("y^2 - 1 = 0", p), set_of("ord(y) >= 1", p)],
        vec![set_of("!(rv(2, y - 5) = 0)", p), points(&[5])],
    ];
    for ds in &unions {
        let want = ds.iter().map(dim_of).max().unwrap();
        ensure(dim_union(ds) == Ok(want), || format!("union gives {:?}, want {want}", dim_union(ds)))?;
    }
    ensure(dim_union(&[points(&[1]), zp.clone()]) == Err(Error::Overlap), || "overlap not signalled".into())?;

    for (p, f, d) in corpus.iter().step_by(7) {
        let r = refine_common(d, &around(1, *p)).map_err(|e| e.to_string())?;
        ensure(dim_of(&r) == dim_of(d), || format!("{f} at p={p}: refinement changes dimension"))?;
    }
    Ok(())
}

fn negative_controls() -> Check {
    let p = prime(5);
    let c = Center::exact(rat(0), p);
    let overlapping = Decomposition::new(
        p,
        Ball::zp(),
        vec![
            Cell1::point(c.clone()),
            Cell1::annuli(c.clone(), MRange::from(0), Residue::All),
            Cell1::annuli(c, MRange::between(1, 3).unwrap(), Residue::All),
        ],
    );
    let r = verify_partition(&overlapping, 6);
    ensure(!r.ok() && r.violations.iter().all(|v| v.kind == ViolationKind::Overlap), || "overlap missed".into())?;
    ensure(!check_partition(&overlapping).unwrap().is_disjoint(), || "overlap missed by constraints".into())?;

    let punctured = Decomposition::rv_split(p, rat(0), 0, 1, false);
    ensure(!check_partition(&punctured).unwrap().is_partition(), || "missing point not flagged".into())?;
    let zero = Center::exact(rat(0), p);
    let gappy = Decomposition::new(
        p,
        Ball::zp(),
        vec![Cell1::point(zero.clone()), Cell1::annuli(zero, MRange::from(1), Residue::All)],
    );
    let r = verify_partition(&gappy, 6);
    ensure(r.violations.iter().any(|v| v.kind == ViolationKind::Uncovered), || "gap missed".into())?;

    let f = Poly::from_ints(&[-1, 0, 1]);
    let mut d = prepare(&f, p, &Ball::zp()).unwrap();
    let victim = d
        .cells
        .iter()
        .position(|c| c.kind() == CellKind::One && matches!(c.center.value(), CenterValue::Exact(_)))
        .unwrap();
    let law = d.cells[victim].law_for(&f).unwrap();
    d.cells[victim].set_law(&f, OrderLaw { e0: law.e0 + 1, i0: law.i0 });
    let r = verify_laws(&d, &f, 200);
    ensure(r.failing_cells() == vec![victim], || format!("off-by-one law not localized: {:?}", r.failing_cells()))?;

    for q in ["exists y (y = 0)", "forall y (ord(y) >= 0)", "ord(y) > 0 & exists z (z = 0)"] {
        ensure(parse_formula(q) == Err(Error::QuantifierNotSupported), || format!("{q} accepted"))?;
    }
    ensure(
        decompose_set(&parse_formula("ord(0) >= 1").unwrap(), p, &Ball::zp()).err() == Some(Error::ZeroPolynomial),
        || "zero polynomial accepted".into(),
    )
}

fn main() {
    let start = Instant::now();
    let corpus = corpus();
    println!("corpus: {} prepared cases in {:.1?}", corpus.len(), start.elapsed());
    let criteria: Vec<Criterion> = vec![
        ("partition exactness", Box::new(|| partition_exactness(&corpus))),
        ("order-law exactness", Box::new(|| order_laws(&corpus))),
        ("oracle measure agreement", Box::new(|| oracle_measures(&corpus))),
        ("igusa closed forms", Box::new(|| zeta_closed_forms(&corpus))),
        ("hensel suite", Box::new(|| hensel_suite(&corpus))),
        ("worked examples", Box::new(worked_examples)),
        ("chi and cv", Box::new(grothendieck)),
        ("dimension", Box::new(|| dimension(&corpus))),
        ("negative controls", Box::new(negative_controls)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("criterion {}: {name}: PASS ({:.1?})", i + 1, t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {}: {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.1?}", criteria.len() - failed, criteria.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
