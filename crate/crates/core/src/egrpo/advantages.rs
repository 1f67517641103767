/// Stabilizer added to the group standard deviation.
pub const ADV_EPS: f64 = 1e-8;

/// Group-relative advantages: `(r - mean) / (population std + eps)`.
pub fn local_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards
        .iter()
        .map(|r| {
            let d = r - mean;
            if d == 0.0 {
                0.0
            } else {
                d / (std + ADV_EPS)
            }
        })
        .collect()
}

/// Uniform terminal credit `R - b` for every visited edge.
pub fn global_advantages(terminal: f64, baseline: f64, visited_edges: usize) -> Vec<f64> {
    vec![terminal - baseline; visited_edges]
}

/// Exponential moving average of the terminal reward, starting at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaBaseline {
    pub value: f64,
    pub decay: f64,
}

impl Default for EmaBaseline {
    fn default() -> Self {
        EmaBaseline { value: 0.0, decay: 0.9 }
    }
}

impl EmaBaseline {
    pub fn update(&mut self, terminal: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * terminal;
    }
}
