//! Serde helpers: arbitrary-precision numbers are emitted as decimal strings.

use num_bigint::BigInt;
use serde::Serializer;

use crate::padic::Rat;
use crate::poly::fmt_rat;

pub fn big<S: Serializer>(x: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

pub fn rat<S: Serializer>(x: &Rat, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_rat(x))
}

pub fn bigs<S: Serializer>(xs: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| x.to_string()))
}
