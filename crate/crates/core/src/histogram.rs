//! Fixed-range 1-D histograms and the distances between them.

use crate::error::{Error, Result};

/// A fixed-range binned distribution over `[lo, hi]`.
///
/// Values outside the range are clamped into the first or last bin so that
/// every vote lands somewhere and normalization keeps total mass at one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram1D {
    lo: f64,
    hi: f64,
    mass: Vec<f64>,
}

impl Histogram1D {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "histogram range [{lo}, {hi}] is empty or non-finite"
            )));
        }
        Ok(Self {
            lo,
            hi,
            mass: vec![0.0; bins],
        })
    }

    pub fn from_mass(lo: f64, hi: f64, mass: Vec<f64>) -> Result<Self> {
        let mut h = Self::new(lo, hi, mass.len())?;
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidConfig("histogram mass must be finite and non-negative".into()));
        }
        h.mass = mass;
        Ok(h)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.mass.len() as f64
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = self.bin_width();
        let lo = self.lo + k as f64 * w;
        let hi = if k + 1 == self.mass.len() {
            self.hi
        } else {
            self.lo + (k + 1) as f64 * w
        };
        (lo, hi)
    }

    /// Bin index for `value`, clamped into range. `hi` itself falls in the
    /// last bin.
    pub fn bin_of(&self, value: f64) -> usize {
        let last = self.mass.len() - 1;
        if value.is_nan() || value <= self.lo {
            return 0;
        }
        let k = ((value - self.lo) / self.bin_width()).floor();
        if k >= last as f64 {
            last
        } else {
            k as usize
        }
    }

    pub fn vote(&mut self, value: f64, weight: f64) {
        let k = self.bin_of(value);
        self.mass[k] += weight;
    }

    pub(crate) fn add_to_bin(&mut self, k: usize, weight: f64) {
        self.mass[k] += weight;
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Scales the mass to sum to one. A histogram with zero total mass is
    /// left untouched.
    pub fn normalize(&mut self) {
        let total = self.total();
        if total > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= total);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn same_support(&self, other: &Histogram1D) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.mass.len() == other.mass.len()
    }

    fn check_support(&self, other: &Histogram1D) -> Result<()> {
        if self.same_support(other) {
            Ok(())
        } else {
            Err(Error::MismatchedSupport(format!(
                "[{}, {}]x{} vs [{}, {}]x{}",
                self.lo,
                self.hi,
                self.bins(),
                other.lo,
                other.hi,
                other.bins()
            )))
        }
    }
}

/// Exact Earth Mover's Distance between two normalized histograms sharing the
/// same support: the L1 distance between their CDFs times the bin width.
pub fn emd_1d(a: &Histogram1D, b: &Histogram1D) -> Result<f64> {
    a.check_support(b)?;
    let mut cdf_diff = 0.0;
    let mut total = 0.0;
    for (ma, mb) in a.mass.iter().zip(&b.mass) {
        cdf_diff += ma - mb;
        total += cdf_diff.abs();
    }
    Ok(total * a.bin_width())
}

/// Bin-wise L1 distance between two histograms sharing the same support.
pub fn l1_distance(a: &Histogram1D, b: &Histogram1D) -> Result<f64> {
    a.check_support(b)?;
    Ok(a.mass.iter().zip(&b.mass).map(|(x, y)| (x - y).abs()).sum())
}
