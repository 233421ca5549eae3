//! Measurement exchange format: CSV with the fixed header
//! `snapshot,leaf,head,flow,sigma_head,sigma_flow`. One row per
//! (snapshot, leaf) pair; the sigma columns are empty when the noise
//! level is unknown. Values round-trip exactly (shortest f64 form).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{LeafMeasurement, MeasurementSet};
use crate::network::VertexId;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    snapshot: String,
    leaf: usize,
    head: f64,
    flow: f64,
    sigma_head: Option<f64>,
    sigma_flow: Option<f64>,
}

/// Writes snapshots in order; rows within a snapshot are ascending by
/// leaf id, so identical inputs produce byte-identical files.
pub fn write_measurements<W: Write>(writer: W, sets: &[MeasurementSet]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for set in sets {
        for (leaf, m) in set.iter() {
            out.serialize(Row {
                snapshot: set.label.clone(),
                leaf: leaf.0,
                head: m.head,
                flow: m.flow,
                sigma_head: m.sigma_head,
                sigma_flow: m.sigma_flow,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads snapshots grouped by label, preserving first-appearance order.
/// A duplicated (snapshot, leaf) pair is an error.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementSet>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut sets: Vec<MeasurementSet> = Vec::new();
    for record in csv_reader.deserialize() {
        let row: Row = record?;
        let set = match sets.iter_mut().find(|s| s.label == row.snapshot) {
            Some(set) => set,
            None => {
                sets.push(MeasurementSet::new(row.snapshot.clone()));
                sets.last_mut().expect("just pushed")
            }
        };
        let leaf = VertexId(row.leaf);
        if set.get(leaf).is_some() {
            return Err(Error::InvalidMeasurement(format!(
                "duplicate reading for leaf {} in snapshot {:?}",
                row.leaf, row.snapshot
            )));
        }
        for sigma in [row.sigma_head, row.sigma_flow].into_iter().flatten() {
            if sigma < 0.0 || !sigma.is_finite() {
                return Err(Error::InvalidMeasurement(format!(
                    "negative or non-finite sigma {sigma} for leaf {} in snapshot {:?}",
                    row.leaf, row.snapshot
                )));
            }
        }
        set.insert(
            leaf,
            LeafMeasurement {
                head: row.head,
                flow: row.flow,
                sigma_head: row.sigma_head,
                sigma_flow: row.sigma_flow,
            },
        );
    }
    if sets.is_empty() {
        return Err(Error::InvalidMeasurement("no measurement rows".into()));
    }
    Ok(sets)
}
