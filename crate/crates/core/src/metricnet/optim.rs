use serde::{Deserialize, Serialize};

use super::net::{Gradients, MetricNet};

/// Learning rate decaying linearly from `start` (first epoch) to `end` (last epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
    pub epochs: usize,
}

impl LrSchedule {
    pub fn at(&self, epoch: f64) -> f64 {
        if self.epochs <= 1 {
            return self.start;
        }
        let t = (epoch / (self.epochs - 1) as f64).clamp(0.0, 1.0);
        self.start + (self.end - self.start) * t
    }
}

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(net: &MetricNet, weight_decay: f64) -> Self {
        Adam {
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            eps: Self::EPS,
            weight_decay,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn update(&mut self, net: &mut MetricNet, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[l];
            let (mw, mb) = &mut self.m.layers[l];
            let (vw, vb) = &mut self.v.layers[l];
            let params = layer.weight.iter_mut().chain(layer.bias.iter_mut());
            let g = gw.iter().chain(gb.iter());
            let m = mw.iter_mut().chain(mb.iter_mut());
            let v = vw.iter_mut().chain(vb.iter_mut());
            for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
                let g = g + wd * *p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricnet::NetConfig;

    #[test]
    fn midpoint_rate() {
        let s = LrSchedule {
            start: 0.02,
            end: 0.01,
            epochs: 11,
        };
        assert!((s.at(5.0) - 0.015).abs() < 1e-15);
        assert_eq!(s.at(0.0), 0.02);
        assert_eq!(s.at(10.0), 0.01);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let cfg = NetConfig::new(3, vec![4], 2);
        let mut net = MetricNet::new(&cfg, 1).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net, 0.0);
        let zero = Gradients::zeros_like(&net);
        for _ in 0..10 {
            adam.update(&mut net, &zero, 0.02);
        }
        assert_eq!(net, before);
    }
}
