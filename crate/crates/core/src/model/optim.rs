use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// First-order optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adam {
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl OptimizerSpec {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerSpec::Sgd { lr, .. } | OptimizerSpec::Adam { lr, .. } => lr,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), &'static str> {
        let ok = match *self {
            OptimizerSpec::Sgd { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err("optimizer needs lr > 0, momentum/betas in [0, 1) and eps > 0")
        }
    }
}

/// Optimizer state over a fixed sequence of parameter groups.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    t: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        Self {
            spec,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    /// One update of every group. Groups must be passed in the same order and
    /// with the same sizes on every call.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter group");
        let total: usize = params.iter().map(|p| p.len()).sum();
        if self.first.is_empty() {
            self.first = vec![0.0; total];
            self.second = vec![0.0; total];
        }
        assert_eq!(self.first.len(), total, "parameter groups changed size");
        self.t += 1;
        let mut offset = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            assert_eq!(p.len(), g.len());
            let m = &mut self.first[offset..offset + p.len()];
            let v = &mut self.second[offset..offset + p.len()];
            match self.spec {
                OptimizerSpec::Sgd { lr, momentum } => {
                    for i in 0..p.len() {
                        m[i] = momentum * m[i] + g[i];
                        p[i] -= lr * m[i];
                    }
                }
                OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - libm::pow(beta1, f64::from(self.t));
                    let c2 = 1.0 - libm::pow(beta2, f64::from(self.t));
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + eps);
                    }
                }
            }
            offset += p.len();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::new(OptimizerSpec::Sgd { lr: 0.1, momentum: 0.5 });
        let mut p = [1.0, 2.0];
        opt.step(&mut [&mut p[..]], &[&[1.0, -1.0]]);
        assert_eq!(p, [0.9, 2.1]);
        opt.step(&mut [&mut p[..]], &[&[1.0, -1.0]]);
        assert!((p[0] - (0.9 - 0.1 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerSpec::default());
        let mut a = [0.0];
        let mut b = [5.0, 5.0];
        opt.step(&mut [&mut a[..], &mut b[..]], &[&[3.0], &[-0.2, 0.0]]);
        assert!((a[0] + 1e-3).abs() < 1e-9);
        assert!((b[0] - 5.0 - 1e-3).abs() < 1e-9);
        assert_eq!(b[1], 5.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Optimizer::new(OptimizerSpec::Adam {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        });
        let mut x = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut [&mut x[..]], &[&g[..]]);
        }
        assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3);
    }
}
