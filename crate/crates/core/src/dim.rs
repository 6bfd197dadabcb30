//! Dimension of decomposed sets.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::cells::{intersect, Decomposition, ProductCell};
use crate::error::{Error, Result};

/// A dimension; the empty set has dimension `-inf`, which absorbs sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dim {
    MinusInfinity,
    Fin(u32),
}

impl std::ops::Add for Dim {
    type Output = Dim;
    fn add(self, rhs: Dim) -> Dim {
        match (self, rhs) {
            (Dim::Fin(a), Dim::Fin(b)) => Dim::Fin(a + b),
            _ => Dim::MinusInfinity,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::MinusInfinity => write!(f, "-inf"),
            Dim::Fin(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for Dim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dim::MinusInfinity => s.serialize_str("-inf"),
            Dim::Fin(d) => s.serialize_u32(*d),
        }
    }
}

pub fn dim_of(d: &Decomposition) -> Dim {
    d.cells.iter().map(|c| Dim::Fin(c.kind().as_u8() as u32)).max().unwrap_or(Dim::MinusInfinity)
}

/// Maximum over product cells of the sum of the type.
pub fn dim_of_products(cells: &[ProductCell]) -> Dim {
    cells
        .iter()
        .map(|c| Dim::Fin(c.cell_type.iter().map(|&t| t as u32).sum()))
        .max()
        .unwrap_or(Dim::MinusInfinity)
}

/// All products of one cell from each factor.
pub fn product_cells(factors: &[&Decomposition]) -> Result<Vec<ProductCell>> {
    let mut acc: Vec<Vec<crate::cells::Cell1>> = vec![Vec::new()];
    for d in factors {
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                d.cells.iter().map(move |c| {
                    let mut v = prefix.clone();
                    v.push(c.clone());
                    v
                })
            })
            .collect();
    }
    if factors.is_empty() {
        return Ok(Vec::new());
    }
    acc.iter().map(|cs| crate::cells::product(cs)).collect()
}

pub fn dim_product(a: Dim, b: Dim) -> Dim {
    a + b
}

/// Dimension of a union of sets that must be pairwise disjoint.
pub fn dim_union(ds: &[Decomposition]) -> Result<Dim> {
    for (i, a) in ds.iter().enumerate() {
        for b in &ds[i + 1..] {
            for x in &a.cells {
                if b.cells.iter().any(|y| !intersect(x, y).is_empty()) {
                    return Err(Error::Overlap);
                }
            }
        }
    }
    Ok(ds.iter().map(dim_of).max().unwrap_or(Dim::MinusInfinity))
}
