//! Leaf measurements: one pressure head and one signed flow per leaf,
//! taken at a single time snapshot. Flows are positive into the
//! network, so the sum over all leaves of a leak-free snapshot is zero.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafMeasurement {
    /// Pressure head (m).
    pub head: f64,
    /// Signed flow (m^3/s), positive into the network.
    pub flow: f64,
    /// Known standard deviation of the head channel, if any.
    pub sigma_head: Option<f64>,
    /// Known standard deviation of the flow channel, if any.
    pub sigma_flow: Option<f64>,
}

impl LeafMeasurement {
    pub fn exact(head: f64, flow: f64) -> Self {
        Self { head, flow, sigma_head: None, sigma_flow: None }
    }
}

/// All leaf readings of one snapshot, keyed by leaf id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub label: String,
    readings: BTreeMap<VertexId, LeafMeasurement>,
}

impl MeasurementSet {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), readings: BTreeMap::new() }
    }

    pub fn insert(&mut self, leaf: VertexId, reading: LeafMeasurement) {
        self.readings.insert(leaf, reading);
    }

    pub fn get(&self, leaf: VertexId) -> Option<&LeafMeasurement> {
        self.readings.get(&leaf)
    }

    pub fn reading(&self, leaf: VertexId) -> Result<&LeafMeasurement> {
        self.readings
            .get(&leaf)
            .ok_or(Error::IncompleteCoverage { missing: vec![leaf.0] })
    }

    /// Readings in ascending leaf-id order.
    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &LeafMeasurement)> {
        self.readings.iter().map(|(v, m)| (*v, m))
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    /// Requires the reading set to be exactly the leaf set of `net`.
    pub fn check_coverage(&self, net: &Network) -> Result<()> {
        let missing: Vec<usize> = net
            .leaves()
            .iter()
            .filter(|v| !self.readings.contains_key(v))
            .map(|v| v.0)
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteCoverage { missing });
        }
        let extra: Vec<usize> = self
            .readings
            .keys()
            .filter(|v| !net.leaves().contains(v))
            .map(|v| v.0)
            .collect();
        if !extra.is_empty() {
            return Err(Error::ExtraneousCoverage { extra });
        }
        Ok(())
    }

    /// Net signed inflow over all covered leaves. Equals the leak
    /// demand of the state the measurements were taken from.
    pub fn total_inflow(&self) -> f64 {
        self.readings.values().map(|m| m.flow).sum()
    }

    /// Perturbs every channel with independent zero-mean Gaussian
    /// draws. The draw order is fixed (ascending leaf id, head before
    /// flow), so a given seed reproduces the output bit-exactly.
    /// Sigma metadata is left untouched; see [`Self::with_sigmas`].
    pub fn with_noise(&self, sigma_head: f64, sigma_flow: f64, seed: u64) -> Result<Self> {
        if sigma_head < 0.0 || sigma_flow < 0.0 {
            return Err(Error::InvalidArgument(
                "noise standard deviations must be non-negative".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = self.clone();
        for reading in out.readings.values_mut() {
            reading.head += sigma_head * unit.sample(&mut rng);
            reading.flow += sigma_flow * unit.sample(&mut rng);
        }
        Ok(out)
    }

    /// Stamps every reading with the given channel standard deviations.
    pub fn with_sigmas(&self, sigma_head: f64, sigma_flow: f64) -> Self {
        let mut out = self.clone();
        for reading in out.readings.values_mut() {
            reading.sigma_head = Some(sigma_head);
            reading.sigma_flow = Some(sigma_flow);
        }
        out
    }

    /// Adds deterministic per-leaf offsets `(delta_head, delta_flow)`.
    /// Leaves absent from the map are left unchanged.
    pub fn with_offsets(&self, offsets: &BTreeMap<VertexId, (f64, f64)>) -> Self {
        let mut out = self.clone();
        for (leaf, reading) in out.readings.iter_mut() {
            if let Some((dh, dq)) = offsets.get(leaf) {
                reading.head += dh;
                reading.flow += dq;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> MeasurementSet {
        let mut m = MeasurementSet::new("0");
        m.insert(VertexId(0), LeafMeasurement::exact(50.0, 0.05));
        m.insert(VertexId(1), LeafMeasurement::exact(48.0, -0.045));
        m
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let m = sample_set();
        assert_eq!(m.with_noise(0.0, 0.0, 7).unwrap(), m);
    }

    #[test]
    fn noise_is_reproducible_and_seed_sensitive() {
        let m = sample_set();
        let a = m.with_noise(0.01, 1e-5, 42).unwrap();
        let b = m.with_noise(0.01, 1e-5, 42).unwrap();
        let c = m.with_noise(0.01, 1e-5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_statistics_match_law_of_large_numbers() {
        // 1e5 head draws at sigma = 0.5: sample mean within 4 sigma/sqrt(N),
        // sample variance within 5% of sigma^2.
        let base = sample_set();
        let sigma = 0.5;
        let n = 100_000;
        let mut deltas = Vec::with_capacity(n);
        for seed in 0..n as u64 {
            let noisy = base.with_noise(sigma, 0.0, seed).unwrap();
            deltas.push(noisy.get(VertexId(0)).unwrap().head - 50.0);
        }
        let mean = deltas.iter().sum::<f64>() / n as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt(), "mean = {mean}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn zero_offset_is_identity() {
        let m = sample_set();
        let offsets = BTreeMap::new();
        assert_eq!(m.with_offsets(&offsets), m);
    }

    #[test]
    fn flow_only_offsets_leave_heads_unchanged() {
        let m = sample_set();
        let mut offsets = BTreeMap::new();
        offsets.insert(VertexId(0), (0.0, 1e-3));
        offsets.insert(VertexId(1), (0.0, -2e-3));
        let shifted = m.with_offsets(&offsets);
        assert_eq!(shifted.get(VertexId(0)).unwrap().head, 50.0);
        assert_eq!(shifted.get(VertexId(1)).unwrap().head, 48.0);
        assert_eq!(shifted.get(VertexId(0)).unwrap().flow, 0.05 + 1e-3);
        assert_eq!(shifted.get(VertexId(1)).unwrap().flow, -0.045 - 2e-3);
    }

    #[test]
    fn total_inflow_sums_flows() {
        assert!((sample_set().total_inflow() - 0.005).abs() < 1e-15);
    }
}
