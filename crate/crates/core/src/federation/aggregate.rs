use super::client::LocalUpdate;
use super::config::StrategyConfig;
use crate::error::{Error, Result};
use crate::nn::ModelParams;

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelParams,
    /// Rounds completed so far.
    pub round: usize,
    /// SCAFFOLD server control `c`; `None` for other strategies.
    pub control: Option<ModelParams>,
}

impl ServerState {
    pub fn new(global: ModelParams, strategy: StrategyConfig) -> Self {
        let control = matches!(strategy, StrategyConfig::Scaffold).then(|| global.zeros_like());
        Self {
            global,
            round: 0,
            control,
        }
    }
}

/// Folds one round of client updates into the server state.
///
/// With `p_i = n_i / sum_j n_j` over the participants:
///
/// ```text
/// FedAvg, FedProx, SCAFFOLD:  w = sum_i p_i w_i
/// SCAFFOLD control:           c = c + (1 / K) sum_i (c_i+ - c_i)
/// FedNova:                    w = w_g - (sum_i p_i tau_i) sum_i p_i (w_g - w_i) / tau_i
/// ```
///
/// Updates are summed in ascending client-id order whatever order they arrive in.
pub fn aggregate(
    server: &mut ServerState,
    strategy: StrategyConfig,
    num_clients: usize,
    mut updates: Vec<LocalUpdate>,
) -> Result<()> {
    if updates.is_empty() {
        return Err(Error::Invariant("no client updates to aggregate".into()));
    }
    updates.sort_by_key(|u| u.client_id);
    if updates.windows(2).any(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::Invariant("duplicate client update".into()));
    }
    if let Some(u) = updates.iter().find(|u| !u.params.same_layout(&server.global)) {
        return Err(Error::Invariant(format!(
            "client {} returned parameters with a different layout",
            u.client_id
        )));
    }
    if let Some(u) = updates.iter().find(|u| u.steps == 0) {
        return Err(Error::Invariant(format!("client {} took no local steps", u.client_id)));
    }
    let total: usize = updates.iter().map(|u| u.n_samples).sum();
    if total == 0 {
        return Err(Error::Invariant("participants hold no training samples".into()));
    }
    let p: Vec<f64> = updates.iter().map(|u| u.n_samples as f64 / total as f64).collect();

    let mut next = server.global.zeros_like();
    match strategy {
        StrategyConfig::FedAvg | StrategyConfig::FedProx { .. } | StrategyConfig::Scaffold => {
            for (u, &pi) in updates.iter().zip(&p) {
                for (a, &w) in next.as_mut_slice().iter_mut().zip(u.params.as_slice()) {
                    *a += pi * w;
                }
            }
        }
        StrategyConfig::FedNova => {
            let tau_eff: f64 = updates.iter().zip(&p).map(|(u, pi)| pi * u.steps as f64).sum();
            let mut d = server.global.zeros_like();
            for (u, &pi) in updates.iter().zip(&p) {
                let s = pi / u.steps as f64;
                for ((a, &g), &w) in d.as_mut_slice().iter_mut().zip(server.global.as_slice()).zip(u.params.as_slice()) {
                    *a += s * (g - w);
                }
            }
            for ((a, &g), &di) in next.as_mut_slice().iter_mut().zip(server.global.as_slice()).zip(d.as_slice()) {
                *a = g - tau_eff * di;
            }
        }
    }

    if let StrategyConfig::Scaffold = strategy {
        let c = server
            .control
            .as_mut()
            .ok_or_else(|| Error::Invariant("SCAFFOLD server has no control variate".into()))?;
        let scale = 1.0 / num_clients as f64;
        for u in &updates {
            let dc = u
                .control_delta
                .as_ref()
                .ok_or_else(|| Error::Invariant(format!("client {} sent no control delta", u.client_id)))?;
            for (a, &d) in c.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                *a += scale * d;
            }
        }
    }

    server.global = next;
    server.round += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mlp_shapes, LayerShape};

    fn shapes() -> Vec<LayerShape> {
        mlp_shapes(2, &[], 2)
    }

    fn params(v: &[f64]) -> ModelParams {
        ModelParams::from_flat(shapes(), v.to_vec()).unwrap()
    }

    fn update(id: usize, v: &[f64], n: usize, steps: usize) -> LocalUpdate {
        LocalUpdate {
            client_id: id,
            params: params(v),
            steps,
            n_samples: n,
            control_delta: None,
            mean_loss: 0.0,
        }
    }

    #[test]
    fn weighted_mean() {
        let mut s = ServerState::new(params(&[0.0; 6]), StrategyConfig::FedAvg);
        let ups = vec![update(0, &[1.0; 6], 1, 1), update(1, &[4.0; 6], 2, 1)];
        aggregate(&mut s, StrategyConfig::FedAvg, 2, ups).unwrap();
        for &v in s.global.as_slice() {
            assert!((v - 3.0).abs() < 1e-15);
        }
        assert_eq!(s.round, 1);
    }

    #[test]
    fn fednova_rescales_by_steps() {
        let g = [1.0; 6];
        let mut s = ServerState::new(params(&g), StrategyConfig::FedNova);
        // p = (0.5, 0.5), tau = (1, 3), tau_eff = 2.
        // d = 0.5 * (1 - 0) / 1 + 0.5 * (1 - (-2)) / 3 = 1.0; w = 1 - 2 * 1 = -1.
        let ups = vec![update(0, &[0.0; 6], 5, 1), update(1, &[-2.0; 6], 5, 3)];
        aggregate(&mut s, StrategyConfig::FedNova, 2, ups).unwrap();
        for &v in s.global.as_slice() {
            assert!((v + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scaffold_server_control() {
        let mut s = ServerState::new(params(&[0.0; 6]), StrategyConfig::Scaffold);
        let mut a = update(0, &[0.0; 6], 1, 1);
        a.control_delta = Some(params(&[2.0; 6]));
        let mut b = update(3, &[0.0; 6], 1, 1);
        b.control_delta = Some(params(&[4.0; 6]));
        aggregate(&mut s, StrategyConfig::Scaffold, 4, vec![b, a]).unwrap();
        // (|S| / K) * mean = (2 / 4) * 3
        for &v in s.control.as_ref().unwrap().as_slice() {
            assert!((v - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_updates() {
        let mut s = ServerState::new(params(&[0.0; 6]), StrategyConfig::FedAvg);
        assert!(aggregate(&mut s, StrategyConfig::FedAvg, 2, vec![]).is_err());
        let dup = vec![update(1, &[0.0; 6], 1, 1), update(1, &[0.0; 6], 1, 1)];
        assert!(aggregate(&mut s, StrategyConfig::FedAvg, 2, dup).is_err());
        let other = ModelParams::zeros(mlp_shapes(3, &[], 2)).unwrap();
        let mut bad = update(0, &[0.0; 6], 1, 1);
        bad.params = other;
        assert!(aggregate(&mut s, StrategyConfig::FedAvg, 2, vec![bad]).is_err());
        assert_eq!(s.round, 0);
    }
}
