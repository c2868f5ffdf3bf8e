//! Penalty functions, their threshold primitives, and the classification of
//! which regularity properties (P1-P4) each satisfies.

use crate::error::MtError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Ridge,
    Lasso,
    ElasticNet,
    Bridge,
    Scad,
    Mcp,
    Sign,
}

/// A penalty `P_{lambda,alpha}(beta)` applied to the slopes (the intercept
/// is unpenalized unless `penalize_intercept` is set).
///
/// `alpha` is the elastic-net mixing parameter in [0,1], the bridge
/// exponent (> 0), or the SCAD (> 2) / MCP (> 1) shape parameter; it is
/// unused for ridge, lasso and sign.
#[derive(Debug, Clone, Copy)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub alpha: f64,
    pub penalize_intercept: bool,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(MtError::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        match kind {
            PenaltyKind::ElasticNet if !(0.0..=1.0).contains(&alpha) => {
                return Err(MtError::Config(format!(
                    "elastic net mixing must lie in [0,1], got {alpha}"
                )))
            }
            PenaltyKind::Bridge if !(alpha > 0.0) => {
                return Err(MtError::Config(format!(
                    "bridge exponent must be positive, got {alpha}"
                )))
            }
            PenaltyKind::Scad if !(alpha > 2.0) => {
                return Err(MtError::Config(format!(
                    "SCAD shape must exceed 2, got {alpha}"
                )))
            }
            PenaltyKind::Mcp if !(alpha > 1.0) => {
                return Err(MtError::Config(format!(
                    "MCP shape must exceed 1, got {alpha}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            lambda,
            alpha,
            penalize_intercept: false,
        })
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::new(PenaltyKind::Lasso, lambda, 1.0).expect("valid lasso spec")
    }

    pub fn ridge(lambda: f64) -> Self {
        Self::new(PenaltyKind::Ridge, lambda, 0.0).expect("valid ridge spec")
    }

    pub fn elastic_net(lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(PenaltyKind::ElasticNet, lambda, alpha)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Elastic-net mixing weight implied by the kind: 1 for lasso, 0 for
    /// ridge, `alpha` for elastic net; `None` for kinds outside that family.
    pub fn mixing(&self) -> Option<f64> {
        match self.kind {
            PenaltyKind::Lasso => Some(1.0),
            PenaltyKind::Ridge => Some(0.0),
            PenaltyKind::ElasticNet => Some(self.alpha),
            _ => None,
        }
    }

    /// True when the kind is handled natively by the coordinate-descent
    /// inner solver (elastic-net family) or via its local linear
    /// approximation (SCAD, MCP).
    pub fn solver_supported(&self) -> bool {
        !matches!(self.kind, PenaltyKind::Bridge | PenaltyKind::Sign)
    }

    fn scad_value(&self, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.alpha);
        if t <= l {
            l * t
        } else if t <= a * l {
            (2.0 * a * l * t - t * t - l * l) / (2.0 * (a - 1.0))
        } else {
            l * l * (a + 1.0) / 2.0
        }
    }

    fn mcp_value(&self, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.alpha);
        if t <= a * l {
            l * t - t * t / (2.0 * a)
        } else {
            a * l * l / 2.0
        }
    }

    /// Marginal penalty derivative `P'(t)` at `t = |beta_j| >= 0` for the
    /// folded-concave kinds; used by the local linear approximation.
    pub fn concave_derivative(&self, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.alpha);
        match self.kind {
            PenaltyKind::Scad => {
                if t <= l {
                    l
                } else if t <= a * l {
                    (a * l - t) / (a - 1.0)
                } else {
                    0.0
                }
            }
            PenaltyKind::Mcp => (l - t / a).max(0.0),
            _ => l,
        }
    }

    fn slopes<'b>(&self, beta: &'b [f64]) -> &'b [f64] {
        if self.penalize_intercept {
            beta
        } else {
            &beta[1..]
        }
    }

    /// Penalty value at the full coefficient vector (intercept first).
    pub fn value(&self, beta: &[f64]) -> f64 {
        let b = self.slopes(beta);
        match self.kind {
            PenaltyKind::Ridge => self.lambda * 0.5 * b.iter().map(|v| v * v).sum::<f64>(),
            PenaltyKind::Lasso => self.lambda * b.iter().map(|v| v.abs()).sum::<f64>(),
            PenaltyKind::ElasticNet => {
                let a = self.alpha;
                self.lambda
                    * b.iter()
                        .map(|v| 0.5 * (1.0 - a) * v * v + a * v.abs())
                        .sum::<f64>()
            }
            PenaltyKind::Bridge => {
                self.lambda * b.iter().map(|v| v.abs().powf(self.alpha)).sum::<f64>()
            }
            PenaltyKind::Scad => b.iter().map(|v| self.scad_value(v.abs())).sum(),
            PenaltyKind::Mcp => b.iter().map(|v| self.mcp_value(v.abs())).sum(),
            PenaltyKind::Sign => {
                let l1: f64 = b.iter().map(|v| v.abs()).sum();
                let l2: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                if l2 == 0.0 {
                    0.0
                } else {
                    self.lambda * l1 / l2
                }
            }
        }
    }

    /// Subgradient of the penalty, taking 0 on the l1 part at exact zeros.
    pub fn subgradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; beta.len()];
        let start = if self.penalize_intercept { 0 } else { 1 };
        for j in start..beta.len() {
            let v = beta[j];
            g[j] = match self.kind {
                PenaltyKind::Ridge => self.lambda * v,
                PenaltyKind::Lasso => self.lambda * v.signum() * (v != 0.0) as u8 as f64,
                PenaltyKind::ElasticNet => {
                    self.lambda
                        * ((1.0 - self.alpha) * v
                            + self.alpha * v.signum() * (v != 0.0) as u8 as f64)
                }
                PenaltyKind::Bridge => {
                    if v == 0.0 {
                        0.0
                    } else {
                        self.lambda * self.alpha * v.abs().powf(self.alpha - 1.0) * v.signum()
                    }
                }
                PenaltyKind::Scad | PenaltyKind::Mcp => {
                    self.concave_derivative(v.abs()) * v.signum() * (v != 0.0) as u8 as f64
                }
                PenaltyKind::Sign => {
                    let b = self.slopes(beta);
                    let l1: f64 = b.iter().map(|x| x.abs()).sum();
                    let l2: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if l2 == 0.0 || v == 0.0 {
                        0.0
                    } else {
                        self.lambda * (v.signum() / l2 - l1 * v / (l2 * l2 * l2))
                    }
                }
            };
        }
        g
    }

    /// Diagonal curvature of the penalty where twice differentiable; the l1
    /// part contributes zero.
    pub fn curvature(&self, beta: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; beta.len()];
        let start = if self.penalize_intercept { 0 } else { 1 };
        for j in start..beta.len() {
            let v = beta[j].abs();
            c[j] = match self.kind {
                PenaltyKind::Ridge => self.lambda,
                PenaltyKind::Lasso | PenaltyKind::Sign => 0.0,
                PenaltyKind::ElasticNet => self.lambda * (1.0 - self.alpha),
                PenaltyKind::Bridge => {
                    if v == 0.0 {
                        0.0
                    } else {
                        self.lambda * self.alpha * (self.alpha - 1.0) * v.powf(self.alpha - 2.0)
                    }
                }
                PenaltyKind::Scad => {
                    if v > self.lambda && v <= self.alpha * self.lambda {
                        -1.0 / (self.alpha - 1.0)
                    } else {
                        0.0
                    }
                }
                PenaltyKind::Mcp => {
                    if v <= self.alpha * self.lambda {
                        -1.0 / self.alpha
                    } else {
                        0.0
                    }
                }
            };
        }
        c
    }
}

/// Soft-thresholding operator `S(z, gamma) = sign(z) (|z| - gamma)_+`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    let mag = z.abs() - gamma;
    if mag <= 0.0 {
        0.0
    } else {
        z.signum() * mag
    }
}

/// Which of the regularity assumptions P1-P4 a penalty satisfies, with the
/// lambda-dependent thresholds evaluated (bound constant `a = 1`).
///
/// P1: local Lipschitz continuity near the target. P2: a second-order
/// Taylor expansion. P3 / P3': the penalty grows enough at infinity
/// relative to the loss bound. P4: the limit at infinity exists and equals
/// the supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertyFlags {
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
    pub p3_prime: bool,
    pub p4: bool,
}

/// Classifies `spec` against P1-P4.
pub fn property_flags(spec: &PenaltySpec) -> PropertyFlags {
    let l = spec.lambda;
    match spec.kind {
        PenaltyKind::Ridge => PropertyFlags {
            p1: true,
            p2: true,
            p3: l > 0.0,
            p3_prime: l > 0.0,
            p4: true,
        },
        PenaltyKind::Lasso | PenaltyKind::ElasticNet => PropertyFlags {
            p1: true,
            p2: false,
            p3: l > 0.0,
            p3_prime: l > 0.0,
            p4: true,
        },
        PenaltyKind::Bridge => PropertyFlags {
            p1: spec.alpha >= 1.0,
            p2: spec.alpha >= 1.0,
            p3: l > 0.0,
            p3_prime: l > 0.0,
            p4: true,
        },
        PenaltyKind::Scad => {
            let p3p = l * l * l > 2.0 / (spec.alpha + 1.0);
            PropertyFlags {
                p1: true,
                p2: true,
                p3: false,
                p3_prime: p3p,
                p4: false,
            }
        }
        PenaltyKind::Mcp => {
            let p3p = l * l * l > 2.0 / spec.alpha;
            PropertyFlags {
                p1: true,
                p2: true,
                p3: false,
                p3_prime: p3p,
                p4: false,
            }
        }
        PenaltyKind::Sign => PropertyFlags {
            p1: true,
            p2: false,
            p3: false,
            p3_prime: false,
            p4: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn elastic_net_arithmetic() {
        // alpha = 1 is the l1 penalty: lambda * (|1| + |-2|) = 3 lambda.
        let en = PenaltySpec::elastic_net(1.0, 1.0).unwrap();
        assert!((en.value(&[5.0, 1.0, -2.0]) - 3.0).abs() < 1e-15);
        // alpha = 0.5, lambda = 2, slopes (2, 0).
        let en = PenaltySpec::elastic_net(2.0, 0.5).unwrap();
        assert!((en.value(&[0.0, 2.0, 0.0]) - 4.0).abs() < 1e-15);
        // Kind consistency at the endpoints.
        let lasso = PenaltySpec::lasso(0.7);
        let ridge = PenaltySpec::ridge(0.7);
        let beta = [0.3, 1.5, -0.4, 0.0];
        let as_en1 = PenaltySpec::elastic_net(0.7, 1.0).unwrap();
        let as_en0 = PenaltySpec::elastic_net(0.7, 0.0).unwrap();
        assert!((lasso.value(&beta) - as_en1.value(&beta)).abs() < 1e-15);
        assert!((ridge.value(&beta) - as_en0.value(&beta)).abs() < 1e-15);
    }

    #[test]
    fn sign_penalty_single_coordinate() {
        let sp = PenaltySpec::new(PenaltyKind::Sign, 0.8, 0.0).unwrap();
        for &c in &[2.5, -0.1, 7.0] {
            assert!((sp.value(&[0.4, 0.0, c, 0.0]) - 0.8).abs() < 1e-12);
        }
        assert_eq!(sp.value(&[0.4, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn sign_penalty_bounded_by_lambda_sqrt_p() {
        let sp = PenaltySpec::new(PenaltyKind::Sign, 2.0, 0.0).unwrap();
        let beta = [0.0, 1.0, -1.0, 1.0, 1.0];
        let p = 4.0f64;
        assert!(sp.value(&beta) <= 2.0 * p.sqrt() + 1e-12);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(1.25, 0.0), 1.25);
        assert_eq!(soft_threshold(-4.0, 1.5), -2.5);
    }

    #[test]
    fn scad_mcp_values_and_derivatives() {
        let scad = PenaltySpec::new(PenaltyKind::Scad, 0.5, 3.7).unwrap();
        // Linear region, concave region, constant tail.
        assert!((scad.value(&[0.0, 0.3]) - 0.15).abs() < 1e-12);
        let tail = 0.25 * 4.7 / 2.0;
        assert!((scad.value(&[0.0, 5.0]) - tail).abs() < 1e-12);
        assert_eq!(scad.concave_derivative(5.0), 0.0);
        let mcp = PenaltySpec::new(PenaltyKind::Mcp, 0.5, 3.0).unwrap();
        assert!((mcp.value(&[0.0, 10.0]) - 3.0 * 0.25 / 2.0).abs() < 1e-12);
        assert!((mcp.concave_derivative(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn property_flag_classification() {
        let en = PenaltySpec::elastic_net(0.3, 0.5).unwrap();
        let f = property_flags(&en);
        assert!(f.p1 && f.p3 && f.p4 && !f.p2);

        let scad = PenaltySpec::new(PenaltyKind::Scad, 2.0, 3.7).unwrap();
        let f = property_flags(&scad);
        assert!(f.p3_prime, "8 > 2/4.7 must flag P3'");
        assert!(!f.p3 && !f.p4 && f.p2);
        let scad_small = PenaltySpec::new(PenaltyKind::Scad, 0.1, 3.7).unwrap();
        assert!(!property_flags(&scad_small).p3_prime);

        let sign = PenaltySpec::new(PenaltyKind::Sign, 1.0, 0.0).unwrap();
        let f = property_flags(&sign);
        assert!(!f.p3 && !f.p4);

        let mcp = PenaltySpec::new(PenaltyKind::Mcp, 2.0, 3.0).unwrap();
        assert!(property_flags(&mcp).p3_prime, "8 > 2/3 must flag P3'");
    }

    #[test]
    fn sign_penalty_continuous_away_from_origin() {
        let sp = PenaltySpec::new(PenaltyKind::Sign, 1.0, 0.0).unwrap();
        let base = [0.0, 0.6, -0.8];
        let v0 = sp.value(&base);
        for eps in [1e-6, 1e-8] {
            let nudged = [0.0, 0.6 + eps, -0.8];
            assert!((sp.value(&nudged) - v0).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn lambda_scale_covariance(c in 0.01f64..50.0, b1 in -5.0f64..5.0, b2 in -5.0f64..5.0) {
            let beta = [0.7, b1, b2];
            for kind in [PenaltyKind::Ridge, PenaltyKind::Lasso, PenaltyKind::ElasticNet,
                         PenaltyKind::Bridge, PenaltyKind::Sign] {
                let alpha = match kind {
                    PenaltyKind::ElasticNet => 0.4,
                    PenaltyKind::Bridge => 1.3,
                    _ => 0.0,
                };
                let base = PenaltySpec::new(kind, 1.7, alpha).unwrap();
                let scaled = PenaltySpec::new(kind, 1.7 * c, alpha).unwrap();
                prop_assert!((scaled.value(&beta) - c * base.value(&beta)).abs()
                    <= 1e-9 * (1.0 + base.value(&beta).abs() * c));
            }
        }

        #[test]
        fn soft_threshold_minimizes_quadratic_plus_l1(z in -8.0f64..8.0, g in 0.0f64..4.0) {
            let star = soft_threshold(z, g);
            let obj = |x: f64| 0.5 * (x - z) * (x - z) + g * x.abs();
            let fstar = obj(star);
            let mut x = -10.0;
            while x <= 10.0 {
                prop_assert!(fstar <= obj(x) + 1e-9);
                x += 1e-2;
            }
        }
    }
}
