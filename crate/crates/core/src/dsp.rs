//! Butterworth low-pass design as cascaded biquads, and causal filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid filter spec: {0}")]
    Design(String),
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("frequency {freq_hz} Hz outside [0, {nyquist_hz}] Hz")]
    Frequency { freq_hz: f64, nyquist_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            order: 4,
            cutoff_hz: 5.0,
            sample_rate_hz: 200.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(DspError::Design(format!(
                "order must be even and >= 2, got {}",
                self.order
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(DspError::Design(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(DspError::Design(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }

    /// Closed-form magnitude of the bilinear-transformed Butterworth response.
    pub fn analytic_magnitude(&self, freq_hz: f64) -> f64 {
        let warp = |f: f64| (PI * f / self.sample_rate_hz).tan();
        let ratio = warp(freq_hz) / warp(self.cutoff_hz);
        1.0 / (1.0 + ratio.powi(2 * self.order as i32)).sqrt()
    }
}

/// One second-order section, `a0` normalised to 1:
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
}

impl BiquadCascade {
    /// Pass-through cascade.
    pub fn identity() -> Self {
        BiquadCascade {
            sections: vec![Biquad::IDENTITY],
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2))
            .product()
    }

    pub fn is_stable(&self) -> bool {
        self.sections
            .iter()
            .all(|s| s.poles().iter().all(|p| p.norm() < 1.0))
    }
}

/// Designs an `order`-th order Butterworth low-pass as `order / 2` biquads.
///
/// Each section realises one conjugate pole pair of the analog prototype,
/// mapped with a prewarped bilinear transform; every section has unit DC gain.
pub fn design_butterworth(spec: &FilterSpec) -> Result<BiquadCascade, DspError> {
    spec.validate()?;
    let k = (PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    let k2 = k * k;
    let n = spec.order;
    let sections = (0..n / 2)
        .map(|i| {
            // Pole pair at angle (2i+1)π/(2n) from the imaginary axis.
            let theta = PI * (2 * i + 1) as f64 / (2 * n) as f64;
            let inv_q = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + k * inv_q + k2);
            let b0 = k2 * norm;
            Biquad {
                b0,
                b1: 2.0 * b0,
                b2: b0,
                a1: 2.0 * (k2 - 1.0) * norm,
                a2: (1.0 - k * inv_q + k2) * norm,
            }
        })
        .collect();
    Ok(BiquadCascade { sections })
}

/// Causal single pass with zero initial state (transposed direct form II).
pub fn filter_signal(series: &[f64], cascade: &BiquadCascade) -> Result<Vec<f64>, DspError> {
    if let Some(index) = series.iter().position(|v| !v.is_finite()) {
        return Err(DspError::NonFinite { index });
    }
    let mut out = series.to_vec();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in out.iter_mut() {
            let x = *v;
            let y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
    Ok(out)
}

/// Forward pass followed by a time-reversed pass; zero phase, squared magnitude.
pub fn filter_signal_zero_phase(
    series: &[f64],
    cascade: &BiquadCascade,
) -> Result<Vec<f64>, DspError> {
    let mut fwd = filter_signal(series, cascade)?;
    fwd.reverse();
    let mut out = filter_signal(&fwd, cascade)?;
    out.reverse();
    Ok(out)
}

/// `|H(e^{jω})|` at `freq_hz`.
pub fn frequency_response(
    cascade: &BiquadCascade,
    freq_hz: f64,
    sample_rate_hz: f64,
) -> Result<f64, DspError> {
    let nyquist_hz = sample_rate_hz / 2.0;
    if !(freq_hz >= 0.0 && freq_hz <= nyquist_hz) {
        return Err(DspError::Frequency { freq_hz, nyquist_hz });
    }
    let omega = 2.0 * PI * freq_hz / sample_rate_hz;
    let z_inv = Complex64::from_polar(1.0, -omega);
    let h: Complex64 = cascade.sections.iter().map(|s| s.response(z_inv)).product();
    Ok(h.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn default_cascade() -> BiquadCascade {
        design_butterworth(&FilterSpec::default()).unwrap()
    }

    /// Independent design: bilinear-map every analog pole, expand the
    /// denominator polynomial and normalise the numerator `(1 + z^-1)^n`
    /// for unit DC gain. Returns direct-form (b, a).
    fn direct_form_oracle(spec: &FilterSpec) -> (Vec<f64>, Vec<f64>) {
        let n = spec.order;
        let fs = spec.sample_rate_hz;
        let wc = 2.0 * fs * (PI * spec.cutoff_hz / fs).tan();
        let mut a = vec![Complex64::new(1.0, 0.0)];
        for k in 0..n {
            let ang = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let s = Complex64::from_polar(wc, ang);
            let z = (2.0 * fs + s) / (2.0 * fs - s);
            // multiply by (1 - z p^-1) in z^-1 powers
            let mut next = vec![Complex64::new(0.0, 0.0); a.len() + 1];
            for (i, c) in a.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * z;
            }
            a = next;
        }
        let a: Vec<f64> = a.iter().map(|c| c.re).collect();
        let mut b = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; b.len() + 1];
            for (i, c) in b.iter().enumerate() {
                next[i] += c;
                next[i + 1] += c;
            }
            b = next;
        }
        let gain = a.iter().sum::<f64>() / b.iter().sum::<f64>();
        (b.iter().map(|c| c * gain).collect(), a)
    }

    fn direct_form_filter(b: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut acc = 0.0;
            for (k, bk) in b.iter().enumerate() {
                if i >= k {
                    acc += bk * x[i - k];
                }
            }
            for (k, ak) in a.iter().enumerate().skip(1) {
                if i >= k {
                    acc -= ak * y[i - k];
                }
            }
            y[i] = acc / a[0];
        }
        y
    }

    #[test]
    fn spec_validation() {
        assert!(FilterSpec::default().validate().is_ok());
        let bad = |order, cutoff_hz| FilterSpec { order, cutoff_hz, sample_rate_hz: 200.0 };
        assert!(design_butterworth(&bad(4, 100.0)).is_err());
        assert!(design_butterworth(&bad(4, 150.0)).is_err());
        assert!(design_butterworth(&bad(4, 0.0)).is_err());
        assert!(design_butterworth(&bad(3, 5.0)).is_err());
        assert!(design_butterworth(&bad(0, 5.0)).is_err());
    }

    #[test]
    fn two_sections_for_fourth_order() {
        assert_eq!(default_cascade().sections.len(), 2);
    }

    #[test]
    fn dc_gain_is_unity() {
        let c = default_cascade();
        assert!((c.dc_gain() - 1.0).abs() < 1e-9);
        assert!((frequency_response(&c, 0.0, 200.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minus_three_db_at_cutoff() {
        let h = frequency_response(&default_cascade(), 5.0, 200.0).unwrap();
        assert!((h - FRAC_1_SQRT_2).abs() < 1e-6, "{h}");
    }

    #[test]
    fn matches_warped_prototype_at_ten_hz() {
        let r = (PI * 10.0 / 200.0).tan() / (PI * 5.0 / 200.0).tan();
        let expected = 1.0 / (1.0 + r.powi(8)).sqrt();
        let h = frequency_response(&default_cascade(), 10.0, 200.0).unwrap();
        assert!((h - expected).abs() / expected < 1e-9, "{h} vs {expected}");
    }

    #[test]
    fn nyquist_is_deeply_attenuated() {
        let h = frequency_response(&default_cascade(), 100.0, 200.0).unwrap();
        assert!(h < 1e-4, "{h}");
        assert!(frequency_response(&default_cascade(), 100.5, 200.0).is_err());
        assert!(frequency_response(&default_cascade(), -1.0, 200.0).is_err());
    }

    #[test]
    fn identity_cascade_passes_everything() {
        let c = BiquadCascade::identity();
        for f in [0.0, 1.0, 37.5, 100.0] {
            assert_eq!(frequency_response(&c, f, 200.0).unwrap(), 1.0);
        }
        let x = [1.0, -2.0, 3.5];
        assert_eq!(filter_signal(&x, &c).unwrap(), x.to_vec());
    }

    #[test]
    fn poles_inside_unit_circle() {
        for order in [2, 4, 6, 8] {
            for cutoff in [0.5, 5.0, 40.0, 90.0] {
                let c = design_butterworth(&FilterSpec { order, cutoff_hz: cutoff, sample_rate_hz: 200.0 }).unwrap();
                assert!(c.is_stable(), "order {order} cutoff {cutoff}");
            }
        }
    }

    #[test]
    fn constant_input_settles() {
        let out = filter_signal(&vec![3.25; 2000], &default_cascade()).unwrap();
        assert_eq!(out.len(), 2000);
        assert!(out[1900..].iter().all(|v| (v - 3.25).abs() < 1e-6));
    }

    #[test]
    fn zeros_in_zeros_out() {
        let out = filter_signal(&[0.0; 64], &default_cascade()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_input_reports_index() {
        let err = filter_signal(&[0.0, 1.0, f64::NAN, 2.0], &default_cascade()).unwrap_err();
        assert_eq!(err, DspError::NonFinite { index: 2 });
    }

    #[test]
    fn impulse_response_matches_direct_form_oracle() {
        let spec = FilterSpec::default();
        let (b, a) = direct_form_oracle(&spec);
        let mut x = vec![0.0; 1000];
        x[0] = 1.0;
        let expected = direct_form_filter(&b, &a, &x);
        let got = filter_signal(&x, &default_cascade()).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
        let energy: f64 = got.iter().map(|v| v * v).sum();
        assert!(energy.is_finite() && energy > 0.0);
        assert!(got[900..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_phase_has_unit_dc_gain() {
        let out = filter_signal_zero_phase(&vec![2.0; 3000], &default_cascade()).unwrap();
        assert!(out[1000..2000].iter().all(|v| (v - 2.0).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn filtering_is_linear(
            x in prop::collection::vec(-100.0f64..100.0, 1..300),
            seed_y in prop::collection::vec(-100.0f64..100.0, 300),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let c = default_cascade();
            let y = &seed_y[..x.len()];
            let mix: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            let lhs = filter_signal(&mix, &c).unwrap();
            let fx = filter_signal(&x, &c).unwrap();
            let fy = filter_signal(y, &c).unwrap();
            for i in 0..x.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn filtering_is_shift_invariant(
            x in prop::collection::vec(-100.0f64..100.0, 1..300),
            shift in 1usize..50,
        ) {
            let c = default_cascade();
            let mut padded = vec![0.0; shift];
            padded.extend_from_slice(&x);
            let a = filter_signal(&x, &c).unwrap();
            let b = filter_signal(&padded, &c).unwrap();
            prop_assert!(b[..shift].iter().all(|&v| v == 0.0));
            for i in 0..x.len() {
                prop_assert!((a[i] - b[i + shift]).abs() <= 1e-9 * (1.0 + a[i].abs()));
            }
        }
    }
}
