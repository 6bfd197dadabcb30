use num_traits::One;
use proptest::prelude::*;

use padic_cells::cells::{check_partition, refine_common, Ball, Decomposition};
use padic_cells::decompose::{decompose_set, prepare, Atom, Formula, Rel};
use padic_cells::dim::dim_of;
use padic_cells::kgroup::cv_check;
use padic_cells::measure::{igusa_zeta, measure, measure_of_order};
use padic_cells::oracle::RootCounts;
use padic_cells::padic::{ord_p, rat, Prime, Rat, RvData, UnitDigits};
use padic_cells::poly::Poly;

fn arb_prime() -> impl Strategy<Value = Prime> {
    prop::sample::select(vec![2u64, 3, 5, 7]).prop_map(|p| Prime::new(p).unwrap())
}

fn arb_poly() -> impl Strategy<Value = Poly> {
    (1usize..=4, prop::collection::vec(-20i64..=20, 4), 1i64..=20, prop::bool::ANY).prop_map(|(deg, low, lead, neg)| {
        let mut c = low[..deg].to_vec();
        c.push(if neg { -lead } else { lead });
        Poly::from_ints(&c)
    })
}

fn law_holds(d: &Decomposition, f: &Poly, y: &Rat) -> bool {
    let idx = d.members(y);
    if idx.len() != 1 {
        return false;
    }
    let c = &d.cells[idx[0]];
    c.law_for(f).is_some_and(|law| law.at(c.center.dist_rat(y)) == ord_p(&f.eval(y), d.prime))
}

fn arb_atom(p: Prime) -> BoxedStrategy<Atom> {
    let f = arb_poly().boxed();
    prop_oneof![
        (f.clone(), -1i64..=3, 0usize..5).prop_map(|(f, offset, r)| Atom::OrdCmp {
            f,
            g: Poly::constant(Rat::one()),
            offset,
            rel: [Rel::Lt, Rel::Le, Rel::Eq, Rel::Ge, Rel::Gt][r],
        }),
        (f.clone(), 1i64..=3, 0i64..3).prop_map(|(f, modulus, residue)| Atom::OrdMod { f, modulus, residue }),
        (f.clone(), 1u64..p.get()).prop_map(move |(f, u)| Atom::AcEq {
            depth: 1,
            f,
            u: UnitDigits::new(1, u.into(), p).unwrap(),
        }),
        (f.clone(), 0i64..=2, 1u64..p.get()).prop_map(move |(f, m, u)| Atom::RvEq {
            depth: 1,
            f,
            tag: RvData::NonZero { valuation: m, unit: UnitDigits::new(1, u.into(), p).unwrap() },
        }),
        f.prop_map(Atom::OrdEqInf),
    ]
    .boxed()
}

fn arb_formula(p: Prime) -> impl Strategy<Value = Formula> {
    arb_atom(p).prop_map(Formula::Atom).prop_recursive(2, 4, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.prop_map(Formula::not),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prepare_partitions_and_laws_hold(p in arb_prime(), f in arb_poly(), ys in prop::collection::vec(-5000i64..5000, 40)) {
        let d = prepare(&f, p, &Ball::zp()).unwrap();
        prop_assert!(check_partition(&d).unwrap().is_partition());
        prop_assert_eq!(measure(&d).unwrap(), Rat::one());
        for y in ys {
            prop_assert!(law_holds(&d, &f, &rat(y)), "y = {}", y);
        }
    }

    #[test]
    fn measures_match_root_counts(p in arb_prime(), f in arb_poly()) {
        let d = prepare(&f, p, &Ball::zp()).unwrap();
        let counts = RootCounts::compute(&f, p, 5).unwrap();
        for m in 0..4u32 {
            prop_assert_eq!(measure_of_order(&d, &f, m as i64).unwrap(), counts.measure_of_order(m));
        }
        prop_assert_eq!(igusa_zeta(&d, &f, p).unwrap().eval(&Rat::one()), Some(Rat::one()));
    }

    #[test]
    fn refinement_is_consistent(p in arb_prime(), f in arb_poly(), g in arb_poly()) {
        let a = prepare(&f, p, &Ball::zp()).unwrap();
        let b = prepare(&g, p, &Ball::zp()).unwrap();
        let r = refine_common(&a, &b).unwrap();
        prop_assert!(check_partition(&r).unwrap().is_partition());
        prop_assert_eq!(dim_of(&r), dim_of(&a));
        prop_assert_eq!(cv_check(&a, &b), Ok(true));
    }

    #[test]
    fn decomposed_sets_match_formulas(
        (p, phi) in arb_prime().prop_flat_map(|p| (Just(p), arb_formula(p))),
        ys in prop::collection::vec(-3000i64..3000, 40),
    ) {
        let sd = decompose_set(&phi, p, &Ball::zp()).unwrap();
        prop_assert!(check_partition(&sd.decomposition).unwrap().is_partition());
        let set = sd.as_set();
        for y in ys {
            let y = rat(y);
            prop_assert_eq!(set.members(&y).len() == 1, phi.eval(&y, p), "y = {} in {}", y, phi);
        }
    }
}
