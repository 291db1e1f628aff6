use serde::{Deserialize, Serialize};

use super::net::{Gradients, MetricNet, NetConfig};
use super::optim::{Adam, LrSchedule};
use crate::error::{Error, Result};
use crate::par::Exec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Summed loss over the batches of each epoch.
    pub epoch_losses: Vec<f64>,
    pub skipped_batches: usize,
    pub optimizer: Adam,
}

/// Epoch loop: `sample(epoch)` yields that epoch's batches, `loss` evaluates
/// one batch (returning `None` to skip it). Batch gradients are evaluated
/// under `exec`, summed in batch order and applied as one Adam step per epoch
/// with the linearly decaying learning rate from `cfg`.
pub fn train<B, S, L>(
    net: &mut MetricNet,
    cfg: &NetConfig,
    exec: Exec,
    mut sample: S,
    loss: L,
) -> Result<TrainReport>
where
    B: Sync,
    S: FnMut(usize) -> Result<Vec<B>>,
    L: Fn(&MetricNet, &B) -> Result<Option<(f64, Gradients)>> + Sync + Send,
{
    cfg.validate()?;
    let schedule = LrSchedule {
        start: cfg.lr_start,
        end: cfg.lr_end,
        epochs: cfg.epochs,
    };
    let mut adam = Adam::new(net, cfg.weight_decay);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;
    for epoch in 0..cfg.epochs {
        let batches = sample(epoch)?;
        if batches.is_empty() {
            return Err(Error::Config(format!("epoch {epoch} produced no batches")));
        }
        let frozen: &MetricNet = net;
        let results = exec.map_slice(&batches, |b| loss(frozen, b));
        let mut total = Gradients::zeros_like(net);
        let mut epoch_loss = 0.0;
        let mut used = 0;
        for (batch, r) in results.into_iter().enumerate() {
            match r? {
                Some((l, g)) => {
                    if !l.is_finite() {
                        return Err(Error::NonFiniteLoss { epoch, batch });
                    }
                    epoch_loss += l;
                    total.add_assign(&g);
                    used += 1;
                }
                None => skipped += 1,
            }
        }
        if used > 0 {
            adam.update(net, &total, schedule.at(epoch as f64));
            if !net.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.4} over {used} batches");
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainReport {
        epoch_losses,
        skipped_batches: skipped,
        optimizer: adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_to_minimizer() {
        // One input, one output: loss (w - 3)^2 touches only the weight.
        let cfg = NetConfig::new(1, vec![], 1).with_schedule(0.05, 1e-4, 500);
        let mut net = MetricNet::new(&cfg, 3).unwrap();
        train(
            &mut net,
            &cfg,
            Exec::Sequential,
            |_| Ok(vec![()]),
            |net, _| {
                let w = net.layers[0].weight[[0, 0]];
                let mut g = Gradients::zeros_like(net);
                g.layers[0].0[[0, 0]] = 2.0 * (w - 3.0);
                Ok(Some(((w - 3.0).powi(2), g)))
            },
        )
        .unwrap();
        assert!((net.layers[0].weight[[0, 0]] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let cfg = NetConfig::new(1, vec![], 1).with_schedule(0.02, 0.01, 5);
        let mut net = MetricNet::new(&cfg, 3).unwrap();
        let err = train(
            &mut net,
            &cfg,
            Exec::Sequential,
            |_| Ok(vec![0, 1]),
            |net, &b| {
                let l = if b == 1 { f64::NAN } else { 0.0 };
                Ok(Some((l, Gradients::zeros_like(net))))
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 1 }));
    }

    #[test]
    fn empty_batches_rejected() {
        let cfg = NetConfig::new(1, vec![], 1).with_schedule(0.02, 0.01, 5);
        let mut net = MetricNet::new(&cfg, 3).unwrap();
        let r = train(
            &mut net,
            &cfg,
            Exec::Sequential,
            |_| Ok(Vec::<()>::new()),
            |_, _| Ok(None),
        );
        assert!(r.is_err());
    }
}
