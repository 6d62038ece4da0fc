//! Loss terms of the anonymizer objective.
//!
//! Log arguments are clamped to `[CLAMP_EPS, 1 − CLAMP_EPS]`. Gradients are
//! evaluated at the clamped argument, so saturated heads still pass signal
//! back instead of the zero derivative of the clamp itself.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CLAMP_EPS: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// Non-negative weights of the identity, activity and distortion terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffWeights {
    pub beta_i: f64,
    pub beta_a: f64,
    pub beta_d: f64,
    /// Extra multipliers for the encoder and decoder identity heads.
    #[serde(default = "unit_heads")]
    pub identity_heads: [f64; 2],
}

fn unit_heads() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for TradeoffWeights {
    fn default() -> Self {
        TradeoffWeights::new(1.0, 1.0, 1.0)
    }
}

impl TradeoffWeights {
    pub fn new(beta_i: f64, beta_a: f64, beta_d: f64) -> Self {
        TradeoffWeights {
            beta_i,
            beta_a,
            beta_d,
            identity_heads: unit_heads(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta_i, self.beta_a, self.beta_d, self.identity_heads[0], self.identity_heads[1]];
        if all.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config(format!("trade-off weights must be non-negative: {self:?}")));
        }
        if self.beta_i == 0.0 && self.beta_a == 0.0 && self.beta_d == 0.0 {
            return Err(Error::Config("trade-off weights are all zero".into()));
        }
        Ok(())
    }
}

/// Cross-entropy `−Σ T log T̂`.
pub fn activity_loss(t: &[f64], t_hat: &[f64]) -> f64 {
    -t.iter().zip(t_hat).map(|(t, p)| t * clamp(*p).ln()).sum::<f64>()
}

/// Cross-entropy for a class index, writing `∂/∂T̂` into `grad`.
pub fn cross_entropy_with_grad(target: usize, t_hat: &[f64], grad: &mut [f64]) -> f64 {
    grad.fill(0.0);
    let p = clamp(t_hat[target]);
    grad[target] = -1.0 / p;
    -p.ln()
}

/// Mean squared difference over all entries.
pub fn distortion_loss(x: &[f64], x_rec: &[f64]) -> Result<f64> {
    if x.len() != x_rec.len() || x.is_empty() {
        return Err(Error::shape(0, &[x.len()], &[x_rec.len()]));
    }
    Ok(x.iter().zip(x_rec).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `−(U·log(1 − Û) + log(1 − max Û))`.
pub fn identity_loss(u: &[f64], u_hat: &[f64]) -> f64 {
    let own: f64 = u.iter().zip(u_hat).map(|(u, p)| u * (1.0 - clamp(*p)).ln()).sum();
    let top = clamp(u_hat[argmax(u_hat)]);
    -(own + (1.0 - top).ln())
}

/// Identity loss for a class index, writing `∂/∂Û` into `grad`. The max
/// term differentiates through the first arg-max entry.
pub fn identity_loss_with_grad(target: usize, u_hat: &[f64], grad: &mut [f64]) -> f64 {
    grad.fill(0.0);
    let own = clamp(u_hat[target]);
    let m = argmax(u_hat);
    let top = clamp(u_hat[m]);
    grad[target] += 1.0 / (1.0 - own);
    grad[m] += 1.0 / (1.0 - top);
    -((1.0 - own).ln() + (1.0 - top).ln())
}

/// Per-sample values of the four loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub identity_enc: f64,
    pub identity_dec: f64,
    pub activity: f64,
    pub distortion: f64,
}

impl LossComponents {
    pub fn add(&mut self, o: &LossComponents) {
        self.identity_enc += o.identity_enc;
        self.identity_dec += o.identity_dec;
        self.activity += o.activity;
        self.distortion += o.distortion;
    }

    pub fn scaled(&self, f: f64) -> LossComponents {
        LossComponents {
            identity_enc: self.identity_enc * f,
            identity_dec: self.identity_dec * f,
            activity: self.activity * f,
            distortion: self.distortion * f,
        }
    }

    /// `βi (h₀·Li_enc + h₁·Li_dec) + βa CE + βd Ld`.
    pub fn combine(&self, w: &TradeoffWeights) -> f64 {
        w.beta_i * (w.identity_heads[0] * self.identity_enc + w.identity_heads[1] * self.identity_dec)
            + w.beta_a * self.activity
            + w.beta_d * self.distortion
    }
}

/// Head outputs for one window.
#[derive(Clone, Copy, Debug)]
pub struct Heads<'a> {
    pub u: &'a [f64],
    pub u_hat_enc: &'a [f64],
    pub u_hat_dec: &'a [f64],
    pub t: &'a [f64],
    pub t_hat: &'a [f64],
    pub x: &'a [f64],
    pub x_rec: &'a [f64],
}

impl Heads<'_> {
    pub fn components(&self) -> Result<LossComponents> {
        if self.u.len() != self.u_hat_enc.len() || self.u.len() != self.u_hat_dec.len() || self.t.len() != self.t_hat.len() {
            return Err(Error::ContractViolation("head widths do not match their labels".into()));
        }
        Ok(LossComponents {
            identity_enc: identity_loss(self.u, self.u_hat_enc),
            identity_dec: identity_loss(self.u, self.u_hat_dec),
            activity: activity_loss(self.t, self.t_hat),
            distortion: distortion_loss(self.x, self.x_rec)?,
        })
    }
}

pub fn multi_objective_loss(heads: &Heads, w: &TradeoffWeights) -> Result<f64> {
    Ok(heads.components()?.combine(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(i: usize, n: usize) -> Vec<f64> {
        (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn activity_loss_values() {
        let t = one_hot(2, 4);
        assert!((activity_loss(&t, &[0.25; 4]) - 4f64.ln()).abs() < 1e-9);
        assert!(activity_loss(&t, &t) < 2.0 * CLAMP_EPS);
        assert!((activity_loss(&t, &[0.2, 0.2, 0.5, 0.1]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distortion_loss_values() {
        let x = [0.0, 2.0, 1.0, 3.0];
        assert_eq!(distortion_loss(&x, &x).unwrap(), 0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        assert_eq!(distortion_loss(&x, &shifted).unwrap(), 1.0);
        assert_eq!(distortion_loss(&x, &[1.0, 2.0, 1.0, 1.0]).unwrap(), 1.25);
        assert!(distortion_loss(&x, &[1.0]).is_err());
    }

    #[test]
    fn identity_loss_values() {
        let u = one_hot(0, 24);
        let expected = -2.0 * (23.0f64 / 24.0).ln();
        assert!((identity_loss(&u, &[1.0 / 24.0; 24]) - expected).abs() < 1e-12);
        assert!((identity_loss(&u, &[1.0 / 24.0; 24]) - 0.08512).abs() < 1e-4);

        let confident = one_hot(0, 24);
        let e = -2.0 * CLAMP_EPS.ln();
        assert!((identity_loss(&u, &confident) - e).abs() < 1e-6);
        assert!((identity_loss(&u, &confident) - 32.24).abs() < 0.01);

        let swapped = one_hot(5, 24);
        let s = -((1.0 - CLAMP_EPS).ln() + CLAMP_EPS.ln());
        assert!((identity_loss(&u, &swapped) - s).abs() < 1e-9);
        assert!((identity_loss(&u, &swapped) - 16.12).abs() < 0.01);
    }

    #[test]
    fn identity_loss_grows_with_true_probability() {
        let u = one_hot(0, 3);
        assert!(identity_loss(&u, &[0.9, 0.05, 0.05]) > identity_loss(&u, &[0.1, 0.45, 0.45]));
        assert!(identity_loss(&u, &[0.9, 0.05, 0.05]) > identity_loss(&u, &[0.1, 0.8, 0.1]));
    }

    fn grid_minimum(n: usize, steps: usize, target: usize) -> (f64, Vec<f64>) {
        let u = one_hot(target, n);
        let mut best = (f64::INFINITY, Vec::new());
        let h = 1.0 / steps as f64;
        let mut visit = |p: Vec<f64>| {
            let v = identity_loss(&u, &p);
            if v < best.0 - 1e-15 {
                best = (v, p);
            }
        };
        match n {
            2 => (0..=steps).for_each(|i| visit(vec![i as f64 * h, 1.0 - i as f64 * h])),
            3 => {
                for i in 0..=steps {
                    for j in 0..=steps - i {
                        let (a, b) = (i as f64 * h, j as f64 * h);
                        visit(vec![a, b, (1.0 - a - b).max(0.0)]);
                    }
                }
            }
            _ => unreachable!(),
        }
        best
    }

    #[test]
    fn two_class_minimum_is_uniform() {
        let (v, p) = grid_minimum(2, 1000, 0);
        assert!((p[0] - 0.5).abs() < 1e-9, "{p:?}");
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn three_class_minimum_moves_mass_off_the_true_class() {
        // With the true class emptied, the remaining mass splits evenly:
        // −(log 1 + log ½) = ln 2, below the uniform value −2·ln(2/3).
        let (v, p) = grid_minimum(3, 600, 0);
        assert!(p[0] < 1e-9 && (p[1] - 0.5).abs() < 1e-9, "{p:?}");
        assert!((v - 2f64.ln()).abs() < 1e-6);
        let uniform = identity_loss(&one_hot(0, 3), &[1.0 / 3.0; 3]);
        assert!(v < uniform);
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let p = [0.1, 0.6, 0.3];
        let mut g = [0.0; 3];
        identity_loss_with_grad(0, &p, &mut g);
        let mut ce = [0.0; 3];
        cross_entropy_with_grad(2, &p, &mut ce);
        let u = one_hot(0, 3);
        let t = one_hot(2, 3);
        for j in 0..3 {
            let mut a = p;
            let mut b = p;
            a[j] += 1e-6;
            b[j] -= 1e-6;
            let num = (identity_loss(&u, &a) - identity_loss(&u, &b)) / 2e-6;
            assert!((num - g[j]).abs() < 1e-6, "identity {j}");
            let num = (activity_loss(&t, &a) - activity_loss(&t, &b)) / 2e-6;
            assert!((num - ce[j]).abs() < 1e-6, "ce {j}");
        }
    }

    #[test]
    fn combination_examples() {
        let c = LossComponents {
            identity_enc: 0.1,
            identity_dec: 0.1,
            activity: 1.0,
            distortion: 0.5,
        };
        assert!((c.combine(&TradeoffWeights::new(1.0, 1.0, 1.0)) - 1.7).abs() < 1e-12);
        assert_eq!(c.combine(&TradeoffWeights::new(0.0, 1.0, 0.0)), 1.0);
        assert!((c.combine(&TradeoffWeights::new(2.0, 1.0, 0.5)) - 1.65).abs() < 1e-12);
    }

    #[test]
    fn weights_are_validated() {
        assert!(TradeoffWeights::new(0.0, 0.0, 0.0).validate().is_err());
        assert!(TradeoffWeights::new(-1.0, 1.0, 0.0).validate().is_err());
        assert!(TradeoffWeights::new(0.0, 0.0, 1.0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn linear_in_each_beta(
            comps in proptest::array::uniform4(0.0f64..10.0),
            b in proptest::array::uniform3(0.0f64..5.0),
            k in 0.0f64..4.0,
            which in 0usize..3,
        ) {
            let c = LossComponents { identity_enc: comps[0], identity_dec: comps[1], activity: comps[2], distortion: comps[3] };
            let base = TradeoffWeights::new(b[0], b[1], b[2]);
            let mut unit = TradeoffWeights::new(0.0, 0.0, 0.0);
            let mut scaled = base;
            match which {
                0 => { unit.beta_i = 1.0; scaled.beta_i += k; }
                1 => { unit.beta_a = 1.0; scaled.beta_a += k; }
                _ => { unit.beta_d = 1.0; scaled.beta_d += k; }
            }
            let lhs = c.combine(&scaled);
            let rhs = c.combine(&base) + k * c.combine(&unit);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
