//! Generalized advantage estimation.

/// Advantages and returns for one contiguous sequence.
///
/// `dones[t]` marks that the episode ended after step `t`, which cuts the
/// bootstrap from `values[t + 1]` (or `last_value` at the end).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "GAE inputs must have equal length");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to mean 0, std 1 (population std). No-op for fewer than
/// two entries or a constant batch.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        adv.iter_mut().for_each(|a| *a -= mean);
        return;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_inputs_give_zero_advantages() {
        let (a, r) = compute_gae(&[0.0; 5], &[0.0; 5], &[false; 5], 0.0, 0.99, 0.95);
        assert!(a.iter().chain(r.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn done_cuts_bootstrap() {
        // Second segment values must not leak into the first.
        let r = [1.0, 1.0, 1.0, 1.0];
        let v = [0.5, 0.2, 100.0, 3.0];
        let (a, _) = compute_gae(&r, &v, &[false, true, false, false], 7.0, 0.9, 1.0);
        let (a1, _) = compute_gae(&r[..2], &v[..2], &[false, true], 0.0, 0.9, 1.0);
        let (a2, _) = compute_gae(&r[2..], &v[2..], &[false, false], 7.0, 0.9, 1.0);
        assert_eq!(&a[..2], &a1[..]);
        assert_eq!(&a[2..], &a2[..]);
    }

    proptest! {
        #[test]
        fn normalized_moments(v in prop::collection::vec(-100.0f64..100.0, 2..200)) {
            let mut a = v.clone();
            normalize_advantages(&mut a);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-6);
            let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 1e-6 {
                let std = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
                prop_assert!((std - 1.0).abs() < 1e-6);
            }
        }
    }
}
