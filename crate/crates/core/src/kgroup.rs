//! Classes of auxiliary sets and the graded semiring they generate.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::cells::{intersect, Cell1, Center, Decomposition, ProductCell, Shape};
use crate::error::{Error, Result};
use crate::measure::{cell_measure, measure};
use crate::padic::Rat;

/// One factor of the order part: a finite interval of length `ℓ > 1`, or a half line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderPart {
    Len(u64),
    H,
}

impl fmt::Display for OrderPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderPart::Len(l) => write!(f, "len:{l}"),
            OrderPart::H => write!(f, "H"),
        }
    }
}

/// `[R x I_1 x ... x I_k]` up to the bijections recording only `|R|` and the interval lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuxShape {
    pub residues: BigInt,
    /// Sorted; singleton intervals are dropped.
    pub orders: Vec<OrderPart>,
}

impl AuxShape {
    pub fn point() -> AuxShape {
        AuxShape { residues: BigInt::one(), orders: Vec::new() }
    }

    pub fn new(residues: BigInt, orders: impl IntoIterator<Item = OrderPart>) -> AuxShape {
        let mut orders: Vec<OrderPart> = orders.into_iter().filter(|o| *o != OrderPart::Len(1)).collect();
        orders.sort();
        AuxShape { residues, orders }
    }

    pub fn mul(&self, other: &AuxShape) -> AuxShape {
        AuxShape::new(&self.residues * &other.residues, self.orders.iter().chain(&other.orders).cloned())
    }

    pub fn orders_label(&self) -> String {
        if self.orders.is_empty() {
            return "len:1".into();
        }
        self.orders.iter().map(|o| o.to_string()).collect::<Vec<_>>().join("x")
    }
}

/// A finite multiset of graded classes `[A][i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct K0Element {
    pub terms: BTreeMap<(AuxShape, u32), u64>,
}

impl K0Element {
    pub fn zero() -> K0Element {
        K0Element::default()
    }

    pub fn single(shape: AuxShape, grade: u32) -> K0Element {
        let mut terms = BTreeMap::new();
        terms.insert((shape, grade), 1);
        K0Element { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, shape: AuxShape, grade: u32, mult: u64) {
        if mult > 0 {
            *self.terms.entry((shape, grade)).or_insert(0) += mult;
        }
    }

    pub fn total(&self) -> u64 {
        self.terms.values().sum()
    }
}

impl Serialize for K0Element {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry {
            residues: String,
            orders: String,
            grade: u32,
            mult: u64,
        }
        let mut seq = s.serialize_seq(Some(self.terms.len()))?;
        for ((shape, grade), mult) in &self.terms {
            seq.serialize_element(&Entry {
                residues: shape.residues.to_string(),
                orders: shape.orders_label(),
                grade: *grade,
                mult: *mult,
            })?;
        }
        seq.end()
    }
}

impl fmt::Display for K0Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|((s, g), m)| {
                let base = format!("[({}, {})][{g}]", s.residues, s.orders_label());
                if *m == 1 {
                    base
                } else {
                    format!("{m}*{base}")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

pub fn k0_add(a: &K0Element, b: &K0Element) -> K0Element {
    let mut out = a.clone();
    for ((s, g), m) in &b.terms {
        out.add_term(s.clone(), *g, *m);
    }
    out
}

pub fn k0_mul(a: &K0Element, b: &K0Element) -> K0Element {
    let mut out = K0Element::zero();
    for ((sa, ga), ma) in &a.terms {
        for ((sb, gb), mb) in &b.terms {
            out.add_term(sa.mul(sb), ga + gb, ma * mb);
        }
    }
    out
}

/// The auxiliary image of a cell and its grade.
pub fn chi_cell(c: &Cell1) -> (AuxShape, u32) {
    match &c.shape {
        Shape::Point => (AuxShape::point(), 0),
        Shape::Annuli { range, residue } => {
            let order = range.len().map_or(OrderPart::H, OrderPart::Len);
            (AuxShape::new(residue.count(c.prime()), [order]), 1)
        }
    }
}

pub fn chi_product_cell(pc: &ProductCell) -> (AuxShape, u32) {
    pc.factors.iter().map(chi_cell).fold((AuxShape::point(), 0), |(s, g), (t, h)| (s.mul(&t), g + h))
}

pub fn chi(d: &Decomposition) -> K0Element {
    let mut out = K0Element::zero();
    for c in &d.cells {
        let (s, g) = chi_cell(c);
        out.add_term(s, g, 1);
    }
    out
}

pub fn chi_products(cells: &[ProductCell]) -> K0Element {
    let mut out = K0Element::zero();
    for c in cells {
        let (s, g) = chi_product_cell(c);
        out.add_term(s, g, 1);
    }
    out
}

/// Outcome of [`cv_check_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CvReport {
    pub chi_left: K0Element,
    pub chi_right: K0Element,
    pub chi_refined: K0Element,
    /// Parents on either side whose children do not refine them exactly.
    pub bad_parents_left: Vec<usize>,
    pub bad_parents_right: Vec<usize>,
    pub agree: bool,
}

/// Whether `chi(D1)` and `chi(D2)` both reduce to `chi(refine_common(D1, D2))`.
pub fn cv_check(d1: &Decomposition, d2: &Decomposition) -> Result<bool> {
    Ok(cv_check_report(d1, d2)?.agree)
}

pub fn cv_check_report(d1: &Decomposition, d2: &Decomposition) -> Result<CvReport> {
    let r = crate::cells::refine_common(d1, d2)?;
    same_set(d1, d2, &r)?;
    let left = reduction(d1, &r)?;
    let right = reduction(d2, &r)?;
    Ok(CvReport {
        chi_left: chi(d1),
        chi_right: chi(d2),
        chi_refined: chi(&r),
        agree: left.is_empty() && right.is_empty(),
        bad_parents_left: left,
        bad_parents_right: right,
    })
}

/// Equal measures plus agreement on every center: two finite unions of cells
/// can only differ away from their centers on a set of positive measure.
fn same_set(d1: &Decomposition, d2: &Decomposition, r: &Decomposition) -> Result<()> {
    let (m1, m2, mr) = (measure(d1)?, measure(d2)?, measure(r)?);
    if m1 != m2 || m1 != mr {
        return Err(Error::DifferentSets);
    }
    let centers: Vec<&Center> = d1.cells.iter().chain(&d2.cells).map(|c| &c.center).collect();
    for c in centers {
        let probe = Cell1::point(c.clone());
        let hits = |d: &Decomposition| d.cells.iter().filter(|x| !intersect(&probe, x).is_empty()).count();
        let (h1, h2) = (hits(d1), hits(d2));
        if h1 > 1 || h2 > 1 {
            return Err(Error::Overlap);
        }
        if h1 != h2 {
            return Err(Error::DifferentSets);
        }
    }
    Ok(())
}

/// Assign each refined cell to its parent in `d` and list the parents whose
/// children fail to cover them exactly.
fn reduction(d: &Decomposition, r: &Decomposition) -> Result<Vec<usize>> {
    let p = d.prime;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); d.cells.len()];
    for (j, rc) in r.cells.iter().enumerate() {
        let parents: Vec<usize> =
            d.cells.iter().enumerate().filter(|(_, a)| !intersect(rc, a).is_empty()).map(|(i, _)| i).collect();
        match parents.as_slice() {
            [i] => children[*i].push(j),
            [] => return Err(Error::DifferentSets),
            _ => return Err(Error::Overlap),
        }
    }
    let mut bad = Vec::new();
    for (i, a) in d.cells.iter().enumerate() {
        let kids = &children[i];
        let mut covered = Rat::zero();
        for &j in kids {
            covered += cell_measure(&r.cells[j], p)?;
        }
        let exact = covered == cell_measure(a, p)?
            && match a.shape {
                // a point is its own unique child
                Shape::Point => kids.len() == 1,
                // only the children's centers can be missed by a measure-exact cover
                Shape::Annuli { .. } => kids.iter().all(|&j| {
                    let probe = Cell1::point(r.cells[j].center.clone());
                    let inside_parent = !intersect(&probe, a).is_empty();
                    let covered = kids.iter().any(|&k| !intersect(&probe, &r.cells[k]).is_empty());
                    inside_parent == covered
                }),
            };
        if !exact {
            bad.push(i);
        }
    }
    Ok(bad)
}
