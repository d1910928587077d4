//! Piecewise-linear waypoint mobility.

use rand::Rng;

use crate::net_graph::Position;

/// A node walking through its waypoints at constant speed, then stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct Walker {
    pub position: Position,
    waypoints: Vec<Position>,
    next: usize,
    speed: f64,
}

impl Walker {
    pub fn new(start: Position, waypoints: Vec<Position>, speed: f64) -> Self {
        Self { position: start, waypoints, next: 0, speed }
    }

    pub fn is_idle(&self) -> bool {
        self.next >= self.waypoints.len() || self.speed == 0.0
    }

    /// Advances one round. Returns true if the node moved.
    pub fn advance(&mut self) -> bool {
        if self.is_idle() {
            return false;
        }
        let mut budget = self.speed;
        let start = self.position;
        while budget > 0.0 && self.next < self.waypoints.len() {
            let target = self.waypoints[self.next];
            let d = self.position.distance(&target);
            if d <= budget {
                self.position = target;
                budget -= d;
                self.next += 1;
            } else {
                let f = budget / d;
                self.position = Position::new(
                    self.position.x + f * (target.x - self.position.x),
                    self.position.y + f * (target.y - self.position.y),
                );
                budget = 0.0;
            }
        }
        self.position != start
    }
}

/// Random-walk itinerary: `count` waypoints, each a uniformly random step of
/// at most `max_step` from the previous one, clamped to the box `[lo, hi]`.
pub fn random_walk<R: Rng + ?Sized>(
    start: Position,
    count: usize,
    max_step: f64,
    (lo, hi): (Position, Position),
    rng: &mut R,
) -> Vec<Position> {
    let mut at = start;
    (0..count)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = rng.gen_range(0.0..=max_step);
            at = Position::new(
                (at.x + len * angle.cos()).clamp(lo.x, hi.x),
                (at.y + len * angle.sin()).clamp(lo.y, hi.y),
            );
            at
        })
        .collect()
}
