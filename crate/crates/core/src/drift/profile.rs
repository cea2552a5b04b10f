//! Time-independent deterministic profiles `b0(x)` with closed-form derivatives.

use super::mollifier::cutoff;

/// Closed-form spatial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    Constant { c: f64 },
    /// `b(x) = -λ x`.
    Linear { lambda: f64 },
    /// `a · exp(1 - 1/(1 - s²))`, `s = (x - center)/radius`; peak value `a`.
    Bump {
        amplitude: f64,
        center: f64,
        radius: f64,
    },
    /// `κ · sign(x) · sqrt|x| · η(x / radius)` with the C² cutoff `η`.
    SignSqrt { kappa: f64, radius: f64 },
    /// `height` on `[lo, hi)`, zero elsewhere.
    Box { lo: f64, hi: f64, height: f64 },
    /// `a / (1 + x²)`.
    Lorentzian { amplitude: f64 },
    /// `sign(x)`, with `sign(0) = 0`.
    Sign,
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { c } => c,
            Profile::Linear { lambda } => -lambda * x,
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => {
                let s = (x - center) / radius;
                let q = 1.0 - s * s;
                if q <= 0.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / q).exp()
                }
            }
            Profile::SignSqrt { kappa, radius } => {
                kappa * sign(x) * x.abs().sqrt() * cutoff(x / radius).0
            }
            Profile::Box { lo, hi, height } => {
                if x >= lo && x < hi {
                    height
                } else {
                    0.0
                }
            }
            Profile::Lorentzian { amplitude } => amplitude / (1.0 + x * x),
            Profile::Sign => sign(x),
        }
    }

    pub fn d1(&self, x: f64) -> Option<f64> {
        match *self {
            Profile::Zero | Profile::Constant { .. } => Some(0.0),
            Profile::Linear { lambda } => Some(-lambda),
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => {
                let s = (x - center) / radius;
                let q = 1.0 - s * s;
                if q <= 0.0 {
                    return Some(0.0);
                }
                let e = amplitude * (1.0 - 1.0 / q).exp();
                Some(e * (-2.0 * s / (q * q)) / radius)
            }
            Profile::Lorentzian { amplitude } => {
                let d = 1.0 + x * x;
                Some(-2.0 * amplitude * x / (d * d))
            }
            Profile::SignSqrt { .. } | Profile::Box { .. } | Profile::Sign => None,
        }
    }

    pub fn d2(&self, x: f64) -> Option<f64> {
        match *self {
            Profile::Zero | Profile::Constant { .. } | Profile::Linear { .. } => Some(0.0),
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => {
                let s = (x - center) / radius;
                let q = 1.0 - s * s;
                if q <= 0.0 {
                    return Some(0.0);
                }
                let e = amplitude * (1.0 - 1.0 / q).exp();
                let g1 = -2.0 * s / (q * q);
                let g2 = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
                Some(e * (g1 * g1 + g2) / (radius * radius))
            }
            Profile::Lorentzian { amplitude } => {
                let d = 1.0 + x * x;
                Some(amplitude * (6.0 * x * x - 2.0) / (d * d * d))
            }
            Profile::SignSqrt { .. } | Profile::Box { .. } | Profile::Sign => None,
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(
            self,
            Profile::SignSqrt { .. } | Profile::Box { .. } | Profile::Sign
        )
    }

    /// Interval outside which the profile vanishes, when it has one.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Profile::Zero => Some((0.0, 0.0)),
            Profile::Bump { center, radius, .. } => Some((center - radius, center + radius)),
            Profile::SignSqrt { radius, .. } => Some((-2.0 * radius, 2.0 * radius)),
            Profile::Box { lo, hi, .. } => Some((lo, hi)),
            _ => None,
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
