//! Positive-definite kernels and the median bandwidth heuristic.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    /// `exp(-‖x-y‖² / 2σ²)`
    Gaussian,
    /// `exp(-‖x-y‖ / σ)`
    Laplacian,
    /// `(1 + ‖x-y‖²/σ²)^(-1/2)`
    InverseMultiquadratic,
    /// `xᵀy`
    Linear,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Linear,
        KernelKind::Gaussian,
        KernelKind::Laplacian,
        KernelKind::InverseMultiquadratic,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gs",
            KernelKind::Laplacian => "lp",
            KernelKind::InverseMultiquadratic => "im",
            KernelKind::Linear => "ln",
        }
    }

    pub fn uses_bandwidth(self) -> bool {
        !matches!(self, KernelKind::Linear)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gs" | "gaussian" => Ok(KernelKind::Gaussian),
            "lp" | "laplacian" => Ok(KernelKind::Laplacian),
            "im" | "imq" | "inverse_multiquadratic" => Ok(KernelKind::InverseMultiquadratic),
            "ln" | "linear" => Ok(KernelKind::Linear),
            _ => Err(Error::UnknownKernel(s.to_string())),
        }
    }
}

/// Parses a comma-separated kernel list such as `"ln,gs,lp,im"`.
///
/// Duplicates are rejected; order is preserved.
pub fn parse_kernel_set(list: &str) -> Result<Vec<KernelKind>> {
    let mut kinds: Vec<KernelKind> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let kind: KernelKind = part.parse()?;
        if kinds.contains(&kind) {
            return Err(Error::UnknownKernel(alloc::format!("duplicate kernel {part:?}")));
        }
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(Error::UnknownKernel(list.to_string()));
    }
    Ok(kinds)
}

/// Formats a kernel set as `"ln,gs"`.
pub fn kernel_set_name(kinds: &[KernelKind]) -> alloc::string::String {
    let names: Vec<&str> = kinds.iter().map(|k| k.short_name()).collect();
    names.join(",")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Bandwidth; ignored by the linear kernel.
    pub sigma: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, sigma: f64) -> Result<Self> {
        if kind.uses_bandwidth() && !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidBandwidth(sigma));
        }
        Ok(Self { kind, sigma })
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            sigma: 1.0,
        }
    }

    /// Kernel value for equal-length inputs (unchecked).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.kind {
            KernelKind::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            _ => self.radial(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()),
        }
    }

    /// Value of a translation-invariant kernel at squared distance `sq`.
    /// Meaningless for the linear kernel.
    #[inline]
    pub fn radial(&self, sq: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => libm::exp(-sq / (2.0 * self.sigma * self.sigma)),
            KernelKind::Laplacian => libm::exp(-libm::sqrt(sq) / self.sigma),
            KernelKind::InverseMultiquadratic => 1.0 / libm::sqrt(1.0 + sq / (self.sigma * self.sigma)),
            KernelKind::Linear => f64::NAN,
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(spec.eval(x, y))
}

/// Row-major `xs.len() × ys.len()` matrix of kernel values.
pub fn kernel_gram<P: AsRef<[f64]>>(spec: &KernelSpec, xs: &[P], ys: &[P]) -> Result<Vec<f64>> {
    let mut gram = Vec::with_capacity(xs.len() * ys.len());
    for x in xs {
        for y in ys {
            gram.push(kernel_eval(spec, x.as_ref(), y.as_ref())?);
        }
    }
    Ok(gram)
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    libm::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Median pairwise Euclidean distance over index pairs `i < j`.
///
/// For an even number of pairs the lower of the two middle values is used.
/// A zero median falls back to the smallest positive distance, and to 1.0 when
/// all points coincide.
pub fn median_heuristic<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::BatchTooSmall(points.len()));
    }
    let mut distances = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, x) in points.iter().enumerate() {
        for y in &points[i + 1..] {
            let (x, y) = (x.as_ref(), y.as_ref());
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    left: x.len(),
                    right: y.len(),
                });
            }
            distances.push(distance(x, y));
        }
    }
    let mid = (distances.len() - 1) / 2;
    let (_, median, _) = distances.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median > 0.0 {
        return Ok(median);
    }
    Ok(distances
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
        .unwrap_or(1.0))
}

/// [`median_heuristic`] for a multiset given as distinct points with counts.
///
/// Gives exactly the same value as expanding every point `count` times, at a
/// cost quadratic in the number of distinct points only.
pub fn median_heuristic_weighted<P: AsRef<[f64]>>(points: &[(P, u64)]) -> Result<f64> {
    let n: u64 = points.iter().map(|(_, c)| c).sum();
    if n < 2 {
        return Err(Error::BatchTooSmall(n as usize));
    }
    // (distance, multiplicity); coincident index pairs contribute zeros
    let mut zero_pairs = 0u64;
    let mut weighted: Vec<(f64, u64)> = Vec::new();
    for (i, (x, cx)) in points.iter().enumerate() {
        zero_pairs += cx * cx.saturating_sub(1) / 2;
        for (y, cy) in &points[i + 1..] {
            let (x, y) = (x.as_ref(), y.as_ref());
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    left: x.len(),
                    right: y.len(),
                });
            }
            weighted.push((distance(x, y), cx * cy));
        }
    }
    if zero_pairs > 0 {
        weighted.push((0.0, zero_pairs));
    }
    let total_pairs = n * (n - 1) / 2;
    let mid = (total_pairs - 1) / 2;
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seen = 0u64;
    let mut median = 0.0;
    for &(d, c) in &weighted {
        seen += c;
        if seen > mid {
            median = d;
            break;
        }
    }
    if median > 0.0 {
        return Ok(median);
    }
    Ok(weighted
        .iter()
        .filter(|&&(d, c)| d > 0.0 && c > 0)
        .map(|&(d, _)| d)
        .min_by(f64::total_cmp)
        .unwrap_or(1.0))
}
