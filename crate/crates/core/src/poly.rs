//! Polynomial codes over prime fields.
//!
//! A color `c ∈ {0..m-1}` is encoded as the degree-≤k polynomial over `F_p̂`
//! whose coefficients are the base-`p̂` digits of `c` (requires
//! `p̂^(k+1) ≥ m`, so the encoding is injective). Two distinct codes agree on
//! at most `k` evaluation points, which is what every color-reduction step
//! here exploits.

use serde::{Deserialize, Serialize};

/// Deterministic primality test by trial division; fine for the field sizes
/// used here (at most a few million).
pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x % 2 == 0 {
        return x == 2;
    }
    let mut d = 3u64;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

pub fn next_prime(x: u64) -> u64 {
    let mut p = x.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// Does `base^exp >= target`, without overflowing.
pub fn pow_at_least(base: u64, exp: u32, target: u128) -> bool {
    let mut acc: u128 = 1;
    let base = base as u128;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc >= target {
            return true;
        }
    }
    acc >= target
}

/// `⌈target^(1/r)⌉` for `r ≥ 1`.
pub fn ceil_root(target: u128, r: u32) -> u64 {
    if target <= 1 {
        return 1;
    }
    let mut lo = 1u64;
    let mut hi = u64::MAX;
    // smallest x with x^r >= target
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pow_at_least(mid, r, target) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// A color encoded as polynomial coefficients over `F_p̂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialCode {
    prime: u64,
    /// `k+1` coefficients, lowest degree first, each in `0..p̂`.
    coefficients: Vec<u64>,
}

impl PolynomialCode {
    /// Encodes `value` (0-based) as base-`p̂` digits, `k+1` of them.
    /// Requires `p̂^(k+1) ≥ m` for the values in play, i.e. `value < p̂^(k+1)`.
    pub fn encode(value: u128, prime: u64, degree_bound: u32) -> Self {
        let mut digits = Vec::with_capacity(degree_bound as usize + 1);
        let mut rest = value;
        for _ in 0..=degree_bound {
            digits.push((rest % prime as u128) as u64);
            rest /= prime as u128;
        }
        assert_eq!(rest, 0, "value {value} does not fit p^(k+1)");
        PolynomialCode {
            prime,
            coefficients: digits,
        }
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn degree_bound(&self) -> u32 {
        self.coefficients.len() as u32 - 1
    }

    /// Horner evaluation at `point` in `F_p̂`.
    pub fn eval(&self, point: u64) -> u64 {
        let p = self.prime as u128;
        let x = (point as u128) % p;
        let mut acc: u128 = 0;
        for &c in self.coefficients.iter().rev() {
            acc = (acc * x + c as u128) % p;
        }
        acc as u64
    }

    /// The encoded value back.
    pub fn value(&self) -> u128 {
        let mut acc: u128 = 0;
        for &c in self.coefficients.iter().rev() {
            acc = acc * self.prime as u128 + c as u128;
        }
        acc
    }

    /// Number of conflicts at `point`: codes distinct from `self` that
    /// evaluate to the same value there.
    pub fn conflicts_at(&self, point: u64, others: &[PolynomialCode]) -> usize {
        let own = self.eval(point);
        others
            .iter()
            .filter(|g| g.coefficients != self.coefficients && g.eval(point) == own)
            .count()
    }
}

/// The evaluation point in `0..p̂` minimizing the number of distinct
/// neighbor codes that agree with `own` there; lowest point on ties.
///
/// By pigeonhole over agreement points the minimum is at most
/// `k·|others| / p̂`.
pub fn choose_evaluation_point(own: &PolynomialCode, others: &[PolynomialCode]) -> u64 {
    debug_assert!(others
        .iter()
        .all(|g| g.prime == own.prime && g.coefficients.len() == own.coefficients.len()));
    let mut best_point = 0u64;
    let mut best_conflicts = usize::MAX;
    for a in 0..own.prime {
        let c = own.conflicts_at(a, others);
        if c < best_conflicts {
            best_conflicts = c;
            best_point = a;
            if c == 0 {
                break; // lowest zero-conflict point
            }
        }
    }
    best_point
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_coeffs(prime: u64, coeffs: &[u64]) -> PolynomialCode {
        PolynomialCode {
            prime,
            coefficients: coeffs.to_vec(),
        }
    }

    #[test]
    fn primes_are_found() {
        assert_eq!(next_prime(1), 2);
        assert_eq!(next_prime(8), 11);
        assert_eq!(next_prime(11), 11);
        assert!(is_prime(1031));
        assert!(!is_prime(1033 * 3));
    }

    #[test]
    fn ceil_root_matches_brute_force() {
        for target in 1u128..200 {
            for r in 1u32..5 {
                let got = ceil_root(target, r);
                assert!(pow_at_least(got, r, target));
                assert!(got == 1 || !pow_at_least(got - 1, r, target));
            }
        }
        assert_eq!(ceil_root(1 << 64, 2), 1 << 32);
    }

    #[test]
    fn encoding_round_trips() {
        for value in 0u128..600 {
            let code = PolynomialCode::encode(value, 7, 3);
            assert_eq!(code.value(), value);
        }
    }

    #[test]
    fn no_outneighbors_gives_point_zero() {
        let own = PolynomialCode::encode(3, 5, 1);
        assert_eq!(choose_evaluation_point(&own, &[]), 0);
    }

    #[test]
    fn equal_slope_distinct_lines_never_agree() {
        // k=1, p=5, own = x, neighbor = x + 1: 0 conflicts everywhere -> 0
        let own = from_coeffs(5, &[0, 1]);
        let other = from_coeffs(5, &[1, 1]);
        for a in 0..5 {
            assert_eq!(own.conflicts_at(a, std::slice::from_ref(&other)), 0);
        }
        assert_eq!(choose_evaluation_point(&own, &[other]), 0);
    }

    #[test]
    fn chosen_point_achieves_global_minimum() {
        // k=1, p=5, own = 2x, neighbors {3x, x+1, 2x+2}
        let own = from_coeffs(5, &[0, 2]);
        let others = vec![
            from_coeffs(5, &[0, 3]),
            from_coeffs(5, &[1, 1]),
            from_coeffs(5, &[2, 2]),
        ];
        let chosen = choose_evaluation_point(&own, &others);
        let chosen_conflicts = own.conflicts_at(chosen, &others);
        let min_by_scan = (0..5)
            .map(|a| own.conflicts_at(a, &others))
            .min()
            .unwrap();
        assert_eq!(chosen_conflicts, min_by_scan);
        // identical code (2x+2 differs; add true duplicate) is never counted
        let with_dup = [others.as_slice(), &[own.clone()]].concat();
        assert_eq!(own.conflicts_at(chosen, &with_dup), chosen_conflicts);
    }

    /// Distinct codes agree on at most k points (exhaustive for small fields).
    #[test]
    fn agreement_bound_holds_exhaustively() {
        for &p in &[5u64, 7, 11, 13] {
            for k in 1u32..=3 {
                let space = (p as u128).pow(k + 1).min(300);
                for a in 0..space.min(40) {
                    for b in 0..space.min(40) {
                        if a == b {
                            continue;
                        }
                        let ca = PolynomialCode::encode(a, p, k);
                        let cb = PolynomialCode::encode(b, p, k);
                        let agreements =
                            (0..p).filter(|&x| ca.eval(x) == cb.eval(x)).count();
                        assert!(
                            agreements <= k as usize,
                            "p={p} k={k}: {a} vs {b} agree on {agreements} points"
                        );
                    }
                }
            }
        }
    }
}
