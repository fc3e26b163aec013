//! Generalized advantage estimation over a single trajectory.

/// Advantages and returns for one trajectory of length T.
///
/// `values` holds V(s_0..s_{T-1}); `bootstrap` is V(s_T) used when the
/// trajectory was truncated rather than terminated. `dones[t]` marks a true
/// episode end after step t, cutting the bootstrap chain.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len);
    assert_eq!(dones.len(), t_len);
    let mut adv = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < t_len { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
