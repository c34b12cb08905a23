use serde::{Deserialize, Serialize};

/// How a duplex link divides its capacity between the two directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkSharing {
    /// One FIFO at the full rate for both directions.
    #[default]
    Shared,
    /// Fixed per-direction rates in proportion to the Interest and Data
    /// packet sizes.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Interest direction, toward the server.
    Up,
    /// Data direction, away from the server.
    Down,
}

#[derive(Debug, Clone)]
pub struct DuplexLink {
    pub bandwidth: f64,
    pub delay: f64,
    sharing: LinkSharing,
    /// Fraction of the rate owned by the Up direction in split mode.
    up_share: f64,
    busy_until: [f64; 2],
}

impl DuplexLink {
    pub fn new(bandwidth: f64, delay: f64, sharing: LinkSharing, up_share: f64) -> Self {
        Self { bandwidth, delay, sharing, up_share, busy_until: [0.0; 2] }
    }

    /// Queues `bits` at time `now`. Returns `(start of serialization,
    /// arrival at the far end)`, or `None` on a zero-capacity link.
    pub fn transmit(&mut self, now: f64, bits: f64, dir: Direction) -> Option<(f64, f64)> {
        let (slot, rate) = match self.sharing {
            LinkSharing::Shared => (0, self.bandwidth),
            LinkSharing::Split => match dir {
                Direction::Up => (0, self.bandwidth * self.up_share),
                Direction::Down => (1, self.bandwidth * (1.0 - self.up_share)),
            },
        };
        if bits > 0.0 && rate <= 0.0 {
            return None;
        }
        let start = now.max(self.busy_until[slot]);
        let end = if bits > 0.0 { start + bits / rate } else { start };
        self.busy_until[slot] = end;
        Some((start, end + self.delay))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_plus_propagation() {
        let mut l = DuplexLink::new(512_000.0, 0.010, LinkSharing::Shared, 0.5);
        let (_, at) = l.transmit(2.0, 1600.0 * 8.0, Direction::Down).unwrap();
        assert!((at - 2.035).abs() < 1e-12);
    }

    #[test]
    fn zero_length_only_propagates() {
        let mut l = DuplexLink::new(1000.0, 0.02, LinkSharing::Shared, 0.5);
        assert_eq!(l.transmit(1.0, 0.0, Direction::Up), Some((1.0, 1.02)));
    }

    #[test]
    fn opposite_directions_share_the_rate() {
        let mut l = DuplexLink::new(1000.0, 0.0, LinkSharing::Shared, 0.5);
        let (_, a) = l.transmit(0.0, 1000.0, Direction::Up).unwrap();
        let (_, b) = l.transmit(0.0, 1000.0, Direction::Down).unwrap();
        assert_eq!((a, b), (1.0, 2.0));
        // Split mode keeps the directions independent.
        let mut l = DuplexLink::new(1000.0, 0.0, LinkSharing::Split, 0.5);
        let (_, a) = l.transmit(0.0, 500.0, Direction::Up).unwrap();
        let (_, b) = l.transmit(0.0, 500.0, Direction::Down).unwrap();
        assert_eq!((a, b), (1.0, 1.0));
    }

    #[test]
    fn zero_bandwidth_drops() {
        let mut l = DuplexLink::new(0.0, 0.01, LinkSharing::Shared, 0.5);
        assert_eq!(l.transmit(0.0, 8.0, Direction::Up), None);
    }
}
