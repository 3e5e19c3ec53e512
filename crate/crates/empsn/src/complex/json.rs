//! JSON round-tripping for complexes:
//! `{"n": ambient_dim, "positions": [[...]], "simplices": {"0": [[ids]], ...}}`.
//!
//! Positions are written in scientific notation with 17 significant digits,
//! enough for a bit-exact f64 round trip; vertex ids round-trip exactly.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ComplexError, Simplex, SimplicialComplex};
use crate::geometry::Point;
use crate::scalar::{real, Real};

#[derive(Serialize, Deserialize)]
struct ComplexDoc {
    n: usize,
    positions: Vec<Vec<f64>>,
    simplices: BTreeMap<String, Vec<Vec<usize>>>,
}

/// Emits floats as `d.dddddddddddddddde±x` (17 significant digits).
struct SigFig17;

impl serde_json::ser::Formatter for SigFig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

impl<R: Real> SimplicialComplex<R> {
    pub fn to_json_string(&self) -> Result<String, ComplexError> {
        let mut simplices = BTreeMap::new();
        for d in 0..=self.max_dim() {
            simplices.insert(
                d.to_string(),
                self.level_iter(d).map(<[usize]>::to_vec).collect(),
            );
        }
        let doc = ComplexDoc {
            n: self.ambient_dim(),
            positions: self
                .positions()
                .iter()
                .map(|p| p.coords().iter().map(|c| c.to_f64_lossy()).collect())
                .collect(),
            simplices,
        };
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFig17);
        doc.serialize(&mut ser)?;
        Ok(String::from_utf8(buf).expect("serializer emits utf-8"))
    }

    pub fn from_json_str(text: &str) -> Result<Self, ComplexError> {
        let doc: ComplexDoc = serde_json::from_str(text)?;
        let positions: Vec<Point<R>> = doc
            .positions
            .into_iter()
            .map(|row| {
                if row.len() != doc.n {
                    return Err(ComplexError::InvalidInput(format!(
                        "position of dimension {}, expected n={}",
                        row.len(),
                        doc.n
                    )));
                }
                if row.iter().any(|c| !c.is_finite()) {
                    return Err(ComplexError::InvalidInput("non-finite coordinate".into()));
                }
                Ok(Point::new(row.into_iter().map(real::<R>).collect()))
            })
            .collect::<Result<_, _>>()?;
        let mut max_dim = 0usize;
        let mut by_dim: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
        for (key, lists) in doc.simplices {
            let d: usize = key.parse().map_err(|_| {
                ComplexError::InvalidInput(format!("simplex dimension key {key:?}"))
            })?;
            max_dim = max_dim.max(d);
            by_dim.insert(d, lists);
        }
        let mut levels: Vec<Vec<Simplex>> = vec![Vec::new(); max_dim + 1];
        for (d, lists) in by_dim {
            levels[d] = lists.into_iter().map(Simplex::new).collect::<Result<_, _>>()?;
        }
        Self::from_parts(positions, levels)
    }
}
