//! Byte-based token bucket and the per-sender limiter used to bound delta
//! piece intake from any one neighbor.

/// Token bucket over a microsecond clock. Tokens are bytes.
#[derive(Clone, Debug)]
pub struct TokenBucket {
    capacity: f64,
    tokens: f64,
    rate_per_us: f64,
    last: u64,
}

impl TokenBucket {
    pub fn new(capacity_bytes: f64, rate_bytes_per_sec: f64, now: u64) -> Self {
        TokenBucket {
            capacity: capacity_bytes,
            tokens: capacity_bytes,
            rate_per_us: rate_bytes_per_sec / 1e6,
            last: now,
        }
    }

    fn refill(&mut self, now: u64) {
        if now > self.last {
            let dt = (now - self.last) as f64;
            self.tokens = (self.tokens + dt * self.rate_per_us).min(self.capacity);
            self.last = now;
        }
    }

    /// Take `amount` tokens if available.
    pub fn try_consume(&mut self, amount: f64, now: u64) -> bool {
        self.refill(now);
        if self.tokens >= amount {
            self.tokens -= amount;
            true
        } else {
            false
        }
    }

    pub fn available(&mut self, now: u64) -> f64 {
        self.refill(now);
        self.tokens
    }
}

/// Per-sender intake limiter: a bucket plus mute-after-breach.
#[derive(Clone, Debug)]
pub struct SenderLimiter {
    bucket: TokenBucket,
    muted_until: u64,
    pub breaches: u32,
}

impl SenderLimiter {
    pub fn new(capacity_bytes: f64, rate_bytes_per_sec: f64, now: u64) -> Self {
        SenderLimiter {
            bucket: TokenBucket::new(capacity_bytes, rate_bytes_per_sec, now),
            muted_until: 0,
            breaches: 0,
        }
    }

    pub fn is_muted(&self, now: u64) -> bool {
        now < self.muted_until
    }

    /// Admit `bytes` from this sender, muting it for `mute_duration` on a
    /// budget breach.
    pub fn admit(&mut self, bytes: usize, now: u64, mute_duration: u64) -> bool {
        if self.is_muted(now) {
            return false;
        }
        if self.bucket.try_consume(bytes as f64, now) {
            true
        } else {
            self.breaches += 1;
            self.muted_until = now + mute_duration;
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_caps_burst_and_refills() {
        let mut b = TokenBucket::new(1000.0, 1000.0, 0);
        assert!(b.try_consume(1000.0, 0));
        assert!(!b.try_consume(1.0, 0));
        // After 100 ms, 100 bytes are back.
        assert!(b.try_consume(90.0, 100_000));
        assert!(!b.try_consume(20.0, 100_000));
        // Never exceeds capacity.
        assert!((b.available(3_600_000_000) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn limiter_mutes_after_breach_and_recovers() {
        let mut l = SenderLimiter::new(100.0, 100.0, 0);
        assert!(l.admit(80, 0, 1_000_000));
        assert!(!l.admit(80, 0, 1_000_000)); // breach, mutes for 1 s
        assert_eq!(l.breaches, 1);
        assert!(l.is_muted(500_000));
        assert!(!l.admit(1, 500_000, 1_000_000));
        // After the mute the bucket has refilled.
        assert!(l.admit(80, 1_200_000, 1_000_000));
    }
}
