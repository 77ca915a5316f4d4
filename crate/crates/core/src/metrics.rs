//! Luma PSNR and Bjøntegaard delta metrics.
//!
//! Both BD metrics fit a cubic polynomial per curve (least squares, which is
//! exact interpolation for four points), integrate the difference of the two
//! fits over the overlapping interval and average it. Abscissae are centered
//! and scaled by one transform shared by both curves so that a constant
//! offset between the curves survives the fit exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::video::Frame;

/// PSNR reported for identical frames.
pub const PSNR_LOSSLESS_DB: f64 = 100.0;

/// PSNR over the Y plane: `10 log10((2^cbd - 1)^2 / MSE)`.
pub fn psnr_luma(a: &Frame, b: &Frame) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let cbd = a.bit_depth().cbd();
    if cbd != b.bit_depth().cbd() {
        return Err(Error::Shape(format!(
            "coding bit depths differ: {cbd} vs {}",
            b.bit_depth().cbd()
        )));
    }
    let sse: u64 = a
        .y
        .data()
        .iter()
        .zip(b.y.data())
        .map(|(&p, &q)| {
            let d = p as i64 - q as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(PSNR_LOSSLESS_DB);
    }
    let mse = sse as f64 / a.y.data().len() as f64;
    let peak = ((1u64 << cbd) - 1) as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean of per-frame luma PSNR over two equally long sequences.
pub fn psnr_luma_sequence(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "sequences must be non-empty and equally long ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += psnr_luma(x, y)?;
    }
    Ok(total / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// kbps
    pub bitrate: f64,
    /// dB
    pub quality: f64,
}

impl RdPoint {
    pub fn new(bitrate: f64, quality: f64) -> Self {
        RdPoint { bitrate, quality }
    }

    pub fn is_lossless(&self) -> bool {
        self.quality >= PSNR_LOSSLESS_DB
    }
}

/// At least four rate-distortion points, strictly increasing in bitrate with
/// non-decreasing quality.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    /// Sorts by bitrate and validates.
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Parameter(format!(
                "an RD curve needs at least 4 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.bitrate.is_finite() && p.bitrate > 0.0) || !p.quality.is_finite())
        {
            return Err(Error::Parameter(format!(
                "invalid RD point ({}, {})",
                p.bitrate, p.quality
            )));
        }
        points.sort_by(|a, b| a.bitrate.total_cmp(&b.bitrate));
        for w in points.windows(2) {
            if w[1].bitrate <= w[0].bitrate {
                return Err(Error::NonMonotoneCurve(format!(
                    "duplicate bitrate {}",
                    w[0].bitrate
                )));
            }
            if w[1].quality < w[0].quality {
                return Err(Error::NonMonotoneCurve(format!(
                    "quality drops from {} to {} as bitrate rises from {} to {}",
                    w[0].quality, w[1].quality, w[0].bitrate, w[1].bitrate
                )));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    /// Points usable for fitting: lossless sentinels are dropped.
    fn fit_points(&self) -> Result<Vec<RdPoint>> {
        let kept: Vec<RdPoint> = self
            .points
            .iter()
            .copied()
            .filter(|p| !p.is_lossless())
            .collect();
        if kept.len() < self.points.len() {
            log::warn!(
                "excluding {} lossless point(s) from the BD fit",
                self.points.len() - kept.len()
            );
        }
        if kept.len() < 4 {
            return Err(Error::Parameter(format!(
                "only {} non-lossless points remain, the cubic fit needs 4",
                kept.len()
            )));
        }
        Ok(kept)
    }
}

/// Polynomial in a normalized variable `t = (x - center) / scale`.
#[derive(Debug, Clone)]
pub struct Cubic {
    coeffs: [f64; 4],
    center: f64,
    scale: f64,
}

impl Cubic {
    /// Least-squares cubic through `(x, y)` samples using the given abscissa
    /// normalization.
    pub fn fit(xs: &[f64], ys: &[f64], center: f64, scale: f64) -> Result<Cubic> {
        let n = xs.len();
        let a = DMatrix::from_fn(n, 4, |r, c| ((xs[r] - center) / scale).powi(c as i32));
        let b = DVector::from_column_slice(ys);
        let svd = a.svd(true, true);
        let sol = svd
            .solve(&b, 1e-12)
            .map_err(|e| Error::Parameter(format!("cubic fit failed: {e}")))?;
        if sol.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("cubic fit is degenerate".into()));
        }
        Ok(Cubic {
            coeffs: [sol[0], sol[1], sol[2], sol[3]],
            center,
            scale,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        let [c0, c1, c2, c3] = self.coeffs;
        self.scale * t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
    }

    /// Integral over `[lo, hi]` in the original variable.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

/// Average difference `test - anchor` of the two fitted curves over the
/// overlap of their abscissa ranges.
fn average_gap(anchor: (&[f64], &[f64]), test: (&[f64], &[f64]), what: &str) -> Result<f64> {
    let range = |xs: &[f64]| {
        xs.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (a_lo, a_hi) = range(anchor.0);
    let (t_lo, t_hi) = range(test.0);
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if hi <= lo {
        return Err(Error::NonOverlappingCurves(format!(
            "{what} ranges [{a_lo}, {a_hi}] and [{t_lo}, {t_hi}] do not overlap"
        )));
    }
    // One shared, order-independent normalization for both fits.
    let all_lo = a_lo.min(t_lo);
    let all_hi = a_hi.max(t_hi);
    let center = 0.5 * (all_lo + all_hi);
    let scale = (0.5 * (all_hi - all_lo)).max(f64::MIN_POSITIVE);
    let fa = Cubic::fit(anchor.0, anchor.1, center, scale)?;
    let ft = Cubic::fit(test.0, test.1, center, scale)?;
    Ok((ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo))
}

/// Bjøntegaard delta rate in percent: negative means `test` needs less rate
/// than `anchor` for the same PSNR.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let split = |c: &RdCurve| -> Result<(Vec<f64>, Vec<f64>)> {
        let pts = c.fit_points()?;
        Ok((
            pts.iter().map(|p| p.quality).collect(),
            pts.iter().map(|p| p.bitrate.log10()).collect(),
        ))
    };
    let (aq, ar) = split(anchor)?;
    let (tq, tr) = split(test)?;
    let d = average_gap((&aq, &ar), (&tq, &tr), "PSNR")?;
    Ok((10f64.powf(d) - 1.0) * 100.0)
}

/// Bjøntegaard delta PSNR in dB: positive means `test` has higher quality at
/// the same rate.
pub fn bd_psnr(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let split = |c: &RdCurve| -> Result<(Vec<f64>, Vec<f64>)> {
        let pts = c.fit_points()?;
        Ok((
            pts.iter().map(|p| p.bitrate.log10()).collect(),
            pts.iter().map(|p| p.quality).collect(),
        ))
    };
    let (ar, aq) = split(anchor)?;
    let (tr, tq) = split(test)?;
    average_gap((&ar, &aq), (&tr, &tq), "log-rate")
}
