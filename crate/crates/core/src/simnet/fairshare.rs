use alloc::vec;
use alloc::vec::Vec;

/// Max-min fair rates by progressive filling.
///
/// `flows[f]` lists the link indices flow `f` crosses and `capacity[l]` is the
/// capacity of link `l`. At each step the link with the smallest equal share
/// of its residual capacity among its unfrozen flows is saturated, and those
/// flows are frozen at that share. Ties go to the lower link index. A flow
/// with no links gets rate 0.
pub fn max_min_fair_rates<L: AsRef<[usize]>>(flows: &[L], capacity: &[f64]) -> Vec<f64> {
    weighted_max_min_rates(flows, &vec![1.0; flows.len()], capacity)
}

/// Weighted variant of [`max_min_fair_rates`]: flow `f` receives `weight[f]`
/// shares wherever it is bottlenecked. Weights must be positive.
pub fn weighted_max_min_rates<L: AsRef<[usize]>>(
    flows: &[L],
    weight: &[f64],
    capacity: &[f64],
) -> Vec<f64> {
    let n = flows.len();
    debug_assert_eq!(weight.len(), n);
    let mut rate = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut residual: Vec<f64> = capacity.iter().map(|&c| c.max(0.0)).collect();
    let mut shares = vec![0.0f64; capacity.len()];
    let mut count = vec![0usize; capacity.len()];
    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); capacity.len()];
    for (f, links) in flows.iter().enumerate() {
        let links = links.as_ref();
        if links.is_empty() {
            frozen[f] = true;
        }
        for &l in links {
            shares[l] += weight[f];
            count[l] += 1;
            on_link[l].push(f);
        }
    }

    loop {
        let mut best: Option<(usize, f64)> = None;
        for l in 0..capacity.len() {
            if count[l] == 0 {
                continue;
            }
            let share = residual[l] / shares[l];
            if best.is_none_or(|(_, s)| share < s) {
                best = Some((l, share));
            }
        }
        let Some((l, share)) = best else { break };
        for &f in &on_link[l] {
            if frozen[f] {
                continue;
            }
            frozen[f] = true;
            rate[f] = share * weight[f];
            for &k in flows[f].as_ref() {
                residual[k] = (residual[k] - rate[f]).max(0.0);
                shares[k] -= weight[f];
                count[k] -= 1;
            }
        }
    }
    rate
}
