//! Wynn's epsilon algorithm for accelerating slowly converging partial sums.

/// Returns the extrapolated limit of `partial_sums` together with the change
/// between the last two diagonal estimates (a convergence indicator).
pub fn wynn_epsilon(partial_sums: &[f64]) -> (f64, f64) {
    let n = partial_sums.len();
    if n < 3 {
        let last = partial_sums.last().copied().unwrap_or(0.0);
        let prev = if n == 2 { partial_sums[0] } else { last };
        return (last, (last - prev).abs());
    }
    // columns[k][j] = eps_k^{(j)}; even k are estimates of the limit
    let mut below: Vec<f64> = vec![0.0; n + 1];
    let mut current: Vec<f64> = partial_sums.to_vec();
    let mut best = (partial_sums[n - 1], partial_sums[n - 2]);
    let mut k = 0;
    while current.len() >= 2 {
        let mut next = Vec::with_capacity(current.len() - 1);
        for j in 0..current.len() - 1 {
            let diff = current[j + 1] - current[j];
            if diff == 0.0 || !diff.is_finite() {
                break;
            }
            next.push(below[j + 1] + 1.0 / diff);
        }
        if next.len() < current.len() - 1 {
            break;
        }
        k += 1;
        if k % 2 == 0 {
            let m = next.len();
            if m >= 2 {
                best = (next[m - 1], next[m - 2]);
            } else {
                best = (next[0], best.0);
            }
        }
        below = current;
        current = next;
    }
    (best.0, (best.0 - best.1).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_alternating_harmonic() {
        let mut sums = Vec::new();
        let mut s = 0.0;
        for k in 1..=20 {
            s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            sums.push(s);
        }
        let (v, _) = wynn_epsilon(&sums);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn accelerates_slow_alternating_power() {
        // sum (-1)^k / sqrt(k+1) = (1 - sqrt 2) zeta(1/2)
        let mut sums = Vec::new();
        let mut s = 0.0;
        for k in 0..30 {
            s += if k % 2 == 0 { 1.0 } else { -1.0 } / ((k + 1) as f64).sqrt();
            sums.push(s);
        }
        let (v, _) = wynn_epsilon(&sums);
        let exact = (1.0 - 2f64.sqrt()) * -1.460_354_508_809_586_8;
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
    }
}
