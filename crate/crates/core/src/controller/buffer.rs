//! Transition storage, discounted returns and generalised advantage estimation.

/// Transitions stored episode by episode; each episode segment ends with `ends = true`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub feature_dim: usize,
    /// Row-major `len × feature_dim`.
    pub features: Vec<f64>,
    /// Unclipped normalised actions.
    pub actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// The episode ended in an absorbing state (no bootstrap).
    pub terminals: Vec<bool>,
    /// The segment ends here, by termination, time limit or rollout cut-off.
    pub ends: Vec<bool>,
    /// `V(s′)` used to bootstrap a non-terminal segment end.
    pub next_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        features: &[f64],
        action: [f64; 2],
        log_prob: f64,
        value: f64,
        reward: f64,
        terminal: bool,
        end: bool,
        next_value: f64,
    ) {
        assert_eq!(features.len(), self.feature_dim, "feature width");
        self.features.extend_from_slice(features);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.terminals.push(terminal);
        self.ends.push(end || terminal);
        self.next_values
            .push(if terminal { 0.0 } else { next_value });
    }

    /// Appends every transition of `other`; both must already be finished or both not.
    pub fn extend(&mut self, other: &RolloutBuffer) {
        assert_eq!(self.feature_dim, other.feature_dim, "feature width");
        self.features.extend_from_slice(&other.features);
        self.actions.extend_from_slice(&other.actions);
        self.log_probs.extend_from_slice(&other.log_probs);
        self.values.extend_from_slice(&other.values);
        self.rewards.extend_from_slice(&other.rewards);
        self.terminals.extend_from_slice(&other.terminals);
        self.ends.extend_from_slice(&other.ends);
        self.next_values.extend_from_slice(&other.next_values);
        self.advantages.extend_from_slice(&other.advantages);
        self.value_targets.extend_from_slice(&other.value_targets);
        self.returns.extend_from_slice(&other.returns);
    }

    /// Computes advantages, value targets and discounted returns.
    pub fn finish(&mut self, gamma: f64, lambda: f64) {
        if let Some(last) = self.ends.last_mut() {
            *last = true;
        }
        let (adv, targets) = gae(
            &self.rewards,
            &self.values,
            &self.next_values,
            &self.terminals,
            &self.ends,
            gamma,
            lambda,
        );
        self.advantages = adv;
        self.value_targets = targets;
        self.returns = discounted_returns(&self.rewards, &self.ends, gamma);
    }

    /// Advantages shifted to zero mean and scaled to unit deviation.
    pub fn normalised_advantages(&self) -> Vec<f64> {
        let n = self.advantages.len() as f64;
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt() + 1e-8;
        self.advantages.iter().map(|a| (a - mean) / sd).collect()
    }

    /// Whether every stored feature row is identical.
    pub fn is_degenerate(&self) -> bool {
        let f = self.feature_dim;
        if self.len() < 2 || f == 0 {
            return true;
        }
        let first = &self.features[..f];
        self.features.chunks(f).all(|row| row == first)
    }
}

/// `Aₜ = δₜ + γλAₜ₊₁` with `δₜ = rₜ + γV(sₜ₊₁) − V(sₜ)`; the recursion restarts at segment
/// ends, where `V(sₜ₊₁)` is `next_values[t]` (zero when terminal). Returns advantages and
/// the value targets `Aₜ + V(sₜ)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminals: &[bool],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let end = ends[t] || t + 1 == n;
        let v_next = if terminals[t] {
            0.0
        } else if end {
            next_values[t]
        } else {
            values[t + 1]
        };
        let delta = rewards[t] + gamma * v_next - values[t];
        let carry = if end { 0.0 } else { next_adv };
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// `Rₜ = rₜ + γRₜ₊₁`, restarting at segment ends.
pub fn discounted_returns(rewards: &[f64], ends: &[bool], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for t in (0..rewards.len()).rev() {
        let carry = if ends[t] { 0.0 } else { next };
        out[t] = rewards[t] + gamma * carry;
        next = out[t];
    }
    out
}
