use crate::error::AnalyticsError;

/// Euler's constant, to more digits than the model needs.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Closed-form model of q-ary tree splitting over the preamble space.
///
/// The root contention frame has N_P slots; every deeper level m has G*q^m
/// slots, and the devices at each level land on slots independently and
/// uniformly. All quantities below follow from that single assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub n_devices: u64,
    pub n_preambles: u16,
    pub split_factor: u16,
    pub n_groups: u16,
    /// Stop infinite sums once a term falls below this.
    pub tail_epsilon: f64,
    /// Truncate the TRAO sum at the first level whose expected collided-slot
    /// count rounds to zero, i.e. drops below this cutoff.
    pub collision_cutoff: f64,
    /// Flip the sign of the constant term in `approx_transmissions`, matching
    /// derivations that print it subtracted. The additive form is the one that
    /// agrees with the exact sum; the subtracted variant is kept for
    /// comparison only.
    pub literal_approx_form: bool,
}

impl TreeModel {
    pub fn new(n_devices: u64, n_preambles: u16, split_factor: u16) -> Result<Self, AnalyticsError> {
        if n_devices < 2 {
            return Err(AnalyticsError::DomainError(format!(
                "model needs at least 2 devices, got {n_devices}"
            )));
        }
        if split_factor < 2 {
            return Err(AnalyticsError::DomainError(format!(
                "split_factor {split_factor} must be at least 2"
            )));
        }
        if n_preambles == 0 || !n_preambles.is_multiple_of(split_factor) {
            return Err(AnalyticsError::DomainError(format!(
                "split_factor {split_factor} does not divide n_preambles {n_preambles}"
            )));
        }
        Ok(TreeModel {
            n_devices,
            n_preambles,
            split_factor,
            n_groups: n_preambles / split_factor,
            tail_epsilon: 1e-12,
            collision_cutoff: 0.5,
            literal_approx_form: false,
        })
    }

    pub fn with_tail_epsilon(mut self, eps: f64) -> Self {
        self.tail_epsilon = eps;
        self
    }

    pub fn with_collision_cutoff(mut self, cutoff: f64) -> Self {
        self.collision_cutoff = cutoff;
        self
    }

    pub fn with_literal_approx_form(mut self, literal: bool) -> Self {
        self.literal_approx_form = literal;
        self
    }

    /// Slots available at level m (the root, level 1 in slot count terms,
    /// has G*q = N_P slots).
    fn slots_at(&self, m: u32) -> f64 {
        self.n_groups as f64 * (self.split_factor as f64).powi(m as i32)
    }

    /// P_S(m) extended with the anchor P_S(0) = 0: the first transmission is
    /// never "already resolved" before the root frame.
    fn ps(&self, m: u32) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let slots = self.slots_at(m);
        ((self.n_devices - 1) as f64 * (-1.0 / slots).ln_1p()).exp()
    }

    /// Probability a tagged device is alone in its level-m slot,
    /// (1 - 1/(G*q^m))^(N-1).
    pub fn slot_success_prob(&self, m: u32) -> Result<f64, AnalyticsError> {
        if m < 1 {
            return Err(AnalyticsError::DomainError(
                "slot_success_prob needs a level m >= 1".into(),
            ));
        }
        Ok(self.ps(m))
    }

    /// Probability exactly m levels are needed: P_S(m) - P_S(m-1).
    pub fn level_resolution_prob(&self, m: u32) -> Result<f64, AnalyticsError> {
        if m < 1 {
            return Err(AnalyticsError::DomainError(
                "level_resolution_prob needs a level m >= 1".into(),
            ));
        }
        Ok(self.ps(m) - self.ps(m - 1))
    }

    /// Probability more than max_tx levels are needed: 1 - P_S(max_tx).
    pub fn outage_prob(&self, max_tx: u32) -> Result<f64, AnalyticsError> {
        if max_tx < 1 {
            return Err(AnalyticsError::DomainError(
                "outage_prob needs max_tx >= 1".into(),
            ));
        }
        Ok(1.0 - self.ps(max_tx))
    }

    /// Mean number of levels (= preamble transmissions) to resolution, via
    /// the tail-sum form sum_{m>=0} (1 - P_S(m)). With `max_level` = Some(L)
    /// the sum stops after L terms, giving E[min(levels, L)] — the quantity a
    /// simulator with a transmission budget of L observes.
    pub fn expected_transmissions(&self, max_level: Option<u32>) -> f64 {
        let mut sum = KahanSum::default();
        let mut m = 0u32;
        loop {
            if let Some(cap) = max_level {
                if m >= cap {
                    break;
                }
            }
            let term = 1.0 - self.ps(m);
            if term < self.tail_epsilon {
                break;
            }
            sum.add(term);
            m += 1;
        }
        sum.value()
    }

    /// Splitting-tree asymptotic for the mean transmission count:
    /// log_q((N-1)/G) + (1/2 + gamma/ln q) + 1/(2 N ln q).
    pub fn approx_transmissions(&self) -> Result<f64, AnalyticsError> {
        let n = self.n_devices as f64;
        let arg = (n - 1.0) / self.n_groups as f64;
        if arg <= 0.0 {
            return Err(AnalyticsError::DomainError(format!(
                "(N-1)/G = {arg} is outside the log domain"
            )));
        }
        let ln_q = (self.split_factor as f64).ln();
        let constant = 0.5 + EULER_GAMMA / ln_q;
        let sign = if self.literal_approx_form { -1.0 } else { 1.0 };
        Ok(arg.ln() / ln_q + sign * constant + 1.0 / (2.0 * n * ln_q))
    }

    /// Expected number of collided slots in level m,
    /// C(m) = K(1 - (1-1/K)^N) - N(1-1/K)^(N-1) with K = G*q^m slots.
    pub fn expected_collisions(&self, m: u32) -> Result<f64, AnalyticsError> {
        if m < 1 {
            return Err(AnalyticsError::DomainError(
                "expected_collisions needs a level m >= 1".into(),
            ));
        }
        let slots = self.slots_at(m);
        let n = self.n_devices as f64;
        let a = (-1.0 / slots).ln_1p();
        let collided = -slots * (n * a).exp_m1() - n * ((n - 1.0) * a).exp();
        // Cancellation can leave a tiny negative once C is ~0; clamp.
        Ok(collided.max(0.0))
    }

    /// Expected TRAOs to drain the tree: 1 + sum_m ceil(C(m)/G), truncated at
    /// the first level with C(m) below the cutoff (the literal infinite sum
    /// diverges, since ceil of any positive value is at least 1).
    pub fn expected_traos(&self) -> u64 {
        let mut traos: u64 = 1;
        let mut m = 1u32;
        loop {
            let collided = self.expected_collisions(m).expect("level is >= 1");
            if collided < self.collision_cutoff {
                return traos;
            }
            traos += (collided / self.n_groups as f64).ceil() as u64;
            m += 1;
        }
    }
}

/// Compensated (Kahan) accumulator; the level sums mix magnitudes near 1
/// with tails near 1e-12.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn model(n: u64, np: u16, q: u16) -> TreeModel {
        TreeModel::new(n, np, q).unwrap()
    }

    #[test]
    fn constructor_guards_domain() {
        assert!(TreeModel::new(1, 54, 2).is_err());
        assert!(TreeModel::new(100, 54, 1).is_err());
        assert!(TreeModel::new(100, 54, 4).is_err());
        assert_eq!(model(100, 54, 6).n_groups, 9);
    }

    #[test]
    fn gamma_has_at_least_ten_digits() {
        assert!((EULER_GAMMA - 0.5772156649).abs() < 1e-10);
    }

    #[test]
    fn slot_success_two_devices_is_one_competitor_over_54_slots() {
        let m = model(2, 54, 2);
        let p = m.slot_success_prob(1).unwrap();
        assert!((p - 53.0 / 54.0).abs() < 1e-15, "{p}");
        assert!(m.slot_success_prob(0).is_err());
    }

    #[test]
    fn slot_success_approaches_one_and_never_decreases() {
        let m = model(1000, 54, 6);
        let mut last = 0.0;
        for level in 1..=40 {
            let p = m.slot_success_prob(level).unwrap();
            assert!(p >= last, "dropped at level {level}");
            assert!((0.0..=1.0).contains(&p));
            last = p;
        }
        assert!(last > 1.0 - 1e-9);
    }

    // Monte Carlo oracle: drop 5 devices uniformly into the 8 level-2 slots
    // and measure how often a tagged one is alone.
    #[test]
    fn slot_success_matches_monte_carlo_occupancy() {
        let m = model(5, 4, 2);
        let p = m.slot_success_prob(2).unwrap();
        assert!((p - 0.586181640625).abs() < 1e-12, "{p}");

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xA11CE);
        let trials = 200_000;
        let mut alone = 0u32;
        for _ in 0..trials {
            let tagged = rng.gen_range(0..8u8);
            if (0..4).all(|_| rng.gen_range(0..8u8) != tagged) {
                alone += 1;
            }
        }
        let estimate = alone as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (estimate - p).abs() < 3.0 * sigma,
            "estimate {estimate} vs {p} (3 sigma = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn level_resolution_is_a_difference_of_slot_successes() {
        let m = model(5, 4, 2);
        assert_eq!(
            m.level_resolution_prob(1).unwrap(),
            m.slot_success_prob(1).unwrap()
        );
        let pl2 = m.level_resolution_prob(2).unwrap();
        assert!((pl2 - 0.269775390625).abs() < 1e-12, "{pl2}");
        assert!(m.level_resolution_prob(0).is_err());
    }

    #[test]
    fn outage_telescopes_to_closed_form() {
        let m = model(2, 54, 2);
        let po = m.outage_prob(10).unwrap();
        assert!((po - 1.0 / 27648.0).abs() < 1e-15, "{po}");
        let m = model(1000, 54, 6);
        let mut last = 1.0;
        for max_tx in 1..=30 {
            let po = m.outage_prob(max_tx).unwrap();
            assert!(po <= last);
            last = po;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn expected_transmissions_matches_geometric_closed_form() {
        // N = 2: each level resolves unless the rival picks the same of the
        // G*q^m slots, so T = 1 + sum 1/(27*2^m) = 1 + 1/27. The truncated
        // geometric tail is itself on the order of tail_epsilon.
        let t = model(2, 54, 2).expected_transmissions(None);
        assert!((t - 28.0 / 27.0).abs() < 5e-12, "{t}");
    }

    #[test]
    fn expected_transmissions_cap_gives_truncated_mean() {
        let m = model(1000, 54, 2);
        assert_eq!(m.expected_transmissions(Some(1)), 1.0);
        let capped = m.expected_transmissions(Some(10));
        let full = m.expected_transmissions(None);
        assert!(capped < full);
        assert!(capped >= 1.0);
        // The cap only removes the levels beyond 10.
        let mut tail = 0.0;
        for level in (10..60).rev() {
            tail += 1.0 - m.slot_success_prob(level).unwrap();
        }
        assert!((full - capped - tail).abs() < 1e-9);
    }

    #[test]
    fn approximation_tracks_the_exact_sum() {
        let m = model(30_000, 54, 6);
        let that = m.approx_transmissions().unwrap();
        assert!((that - 5.349382537227962).abs() < 1e-9, "{that}");
        let t = m.expected_transmissions(None);
        assert!((t - 5.355403921030396).abs() < 1e-9, "{t}");
        assert!((that - t).abs() / t < 0.05);

        let m = model(30_000, 54, 2);
        let that = m.approx_transmissions().unwrap();
        assert!((that - 11.45050950966514).abs() < 1e-9, "{that}");
        let t = m.expected_transmissions(None);
        assert!((that - t).abs() / t < 0.05);
    }

    #[test]
    fn literal_approx_form_subtracts_the_constant_term() {
        let m = model(30_000, 54, 6).with_literal_approx_form(true);
        let literal = m.approx_transmissions().unwrap();
        assert!((literal - 3.705082144441183).abs() < 1e-9, "{literal}");
        // Small-N boundary still returns a finite value.
        let m = model(2, 2, 2);
        assert!(m.approx_transmissions().unwrap().is_finite());
    }

    // Exhaustive oracle: all 4^6 ways to drop 6 devices into the 4 root
    // slots, counting slots holding two or more.
    #[test]
    fn expected_collisions_matches_exhaustive_enumeration() {
        let mut total_collided_slots = 0u32;
        for assignment in 0..4096u32 {
            let mut occupancy = [0u8; 4];
            let mut a = assignment;
            for _ in 0..6 {
                occupancy[(a % 4) as usize] += 1;
                a /= 4;
            }
            total_collided_slots += occupancy.iter().filter(|&&o| o >= 2).count() as u32;
        }
        let oracle = total_collided_slots as f64 / 4096.0;
        assert_eq!(oracle, 1.8642578125);

        let m = model(6, 4, 2);
        let c1 = m.expected_collisions(1).unwrap();
        assert!((c1 - oracle).abs() < 1e-12, "{c1}");
    }

    #[test]
    fn expected_collisions_boundary_cases() {
        // Two devices over two slots: collision probability one half.
        let m = model(2, 2, 2);
        assert!((m.expected_collisions(1).unwrap() - 0.5).abs() < 1e-15);
        // Deep levels hold no collisions.
        let m = model(6, 4, 2);
        assert!(m.expected_collisions(40).unwrap() < 1e-9);
        for level in 1..=20 {
            let c = m.expected_collisions(level).unwrap();
            assert!((0.0..=3.0).contains(&c), "C({level}) = {c}");
        }
    }

    #[test]
    fn expected_traos_follows_the_cutoff_rule() {
        // C(1) = 0.0185 < 0.5: truncated before contributing.
        assert_eq!(model(2, 54, 2).expected_traos(), 1);
        // C = 1.864, 1.332, 0.792, then 0.431 < 0.5: three ceil(C/2) = 1 terms.
        assert_eq!(model(6, 4, 2).expected_traos(), 4);
        assert_eq!(model(1000, 54, 6).expected_traos(), 65);
        // Lowering the cutoff extends the sum.
        assert!(model(6, 4, 2).with_collision_cutoff(0.1).expected_traos() > 4);
    }

    #[test]
    fn trao_estimate_is_not_monotone_from_binary_to_ternary() {
        // Ternary splitting is the efficiency optimum, so moving from q=2 to
        // q=3 can lower the TRAO demand even though each TRAO carries fewer
        // contention frames; beyond q=3 the demand grows again.
        let r2 = model(10_000, 54, 2).expected_traos();
        let r3 = model(10_000, 54, 3).expected_traos();
        let r6 = model(10_000, 54, 6).expected_traos();
        let r9 = model(10_000, 54, 9).expected_traos();
        assert_eq!((r2, r3, r6, r9), (543, 511, 619, 785));
        assert!(r2 > r3);
        assert!(r3 <= r6 && r6 <= r9);
    }
}
