//! Random-waypoint avatar movement.
//!
//! The walker picks a waypoint, walks straight toward it in steps of exactly
//! `walk_speed / movement_hz`, and on arrival (remaining distance under one
//! step) optionally pauses, then heads for a fresh waypoint. Direction only
//! changes on sample boundaries, so every pair of consecutive emitted
//! positions is exactly one step apart; itinerancy differences between user
//! classes come from the pause share, not the speed.
//!
//! Flagged avatars teleport on every [`TELEPORT_EVERY`]-th emitted sample:
//! the step is replaced by a jump of `teleport_speed_factor` steps, giving
//! the jump an implied speed of exactly that multiple of the walk speed.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Virtual world bounds in Wm; z stays shallow.
pub const WORLD: [f64; 3] = [10_000.0, 10_000.0, 100.0];

/// Waypoint leg lengths, Wm.
pub const LEG_RANGE: (f64, f64) = (50.0, 200.0);

/// Emitted-sample period of teleports on flagged avatars.
pub const TELEPORT_EVERY: u64 = 10;

#[derive(Debug)]
pub struct Walker {
    pub pos: [f64; 3],
    target: [f64; 3],
    rng: ChaCha12Rng,
    /// Mean pause at a waypoint, in ticks; zero never pauses.
    pause_mean_ticks: f64,
    pause_ticks_left: u64,
    step_len: f64,
    teleport_factor: f64,
    flagged: bool,
    /// Emitted samples so far, across all of the avatar's sessions.
    emitted: u64,
    /// Heading of the last step, for the orientation field.
    pub heading: f64,
}

/// Outcome of one movement tick.
pub enum Tick {
    /// Emit a sample at the new position; `teleported` marks jump steps.
    Emit { pos: [f64; 3], teleported: bool },
    /// Pausing at a waypoint; no message this tick.
    Pause,
}

impl Walker {
    pub fn new(
        mut rng: ChaCha12Rng,
        walk_speed: f64,
        movement_hz: f64,
        pause_s: f64,
        teleport_factor: f64,
        flagged: bool,
    ) -> Self {
        let pos = [
            rng.gen_range(0.0..WORLD[0]),
            rng.gen_range(0.0..WORLD[1]),
            rng.gen_range(0.0..WORLD[2]),
        ];
        let step_len = if movement_hz > 0.0 { walk_speed / movement_hz } else { 0.0 };
        let mut walker = Walker {
            pos,
            target: pos,
            rng,
            pause_mean_ticks: pause_s * movement_hz,
            pause_ticks_left: 0,
            step_len,
            teleport_factor,
            flagged,
            emitted: 0,
            heading: 0.0,
        };
        walker.target = walker.new_waypoint();
        walker
    }

    /// The avatar's current position; emitted as the first sample of a
    /// session without moving.
    pub fn emit_current(&mut self) -> [f64; 3] {
        self.emitted += 1;
        self.pos
    }

    /// Advance one sample interval.
    pub fn tick(&mut self) -> Tick {
        if self.pause_ticks_left > 0 {
            self.pause_ticks_left -= 1;
            return Tick::Pause;
        }
        if self.flagged && self.emitted % TELEPORT_EVERY == 0 && self.emitted > 0 {
            let dir = self.jump_direction();
            for (p, d) in self.pos.iter_mut().zip(dir) {
                *p += d * self.step_len * self.teleport_factor;
            }
            self.emitted += 1;
            return Tick::Emit { pos: self.pos, teleported: true };
        }
        if distance(self.pos, self.target) < self.step_len {
            self.target = self.new_waypoint();
            if self.pause_mean_ticks > 0.0 {
                let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
                self.pause_ticks_left = (-u.ln() * self.pause_mean_ticks).round() as u64;
                if self.pause_ticks_left > 0 {
                    self.pause_ticks_left -= 1;
                    return Tick::Pause;
                }
            }
        }
        let dir = normalize(sub(self.target, self.pos));
        for (p, d) in self.pos.iter_mut().zip(dir) {
            *p += d * self.step_len;
        }
        self.heading = dir[1].atan2(dir[0]);
        self.emitted += 1;
        Tick::Emit { pos: self.pos, teleported: false }
    }

    fn new_waypoint(&mut self) -> [f64; 3] {
        let leg = self.rng.gen_range(LEG_RANGE.0..LEG_RANGE.1);
        let dir = self.random_direction();
        let mut wp = [0.0f64; 3];
        for i in 0..3 {
            wp[i] = (self.pos[i] + dir[i] * leg).clamp(0.0, WORLD[i]);
        }
        wp
    }

    fn random_direction(&mut self) -> [f64; 3] {
        // Uniform on the sphere, z component damped to keep avatars near
        // the ground plane.
        loop {
            let v = [
                self.rng.gen_range(-1.0..1.0f64),
                self.rng.gen_range(-1.0..1.0f64),
                self.rng.gen_range(-0.1..0.1f64),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-6 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    /// Teleports bounce back toward the world center once outside it, so
    /// coordinates stay well within f32 precision.
    fn jump_direction(&mut self) -> [f64; 3] {
        let center = [WORLD[0] / 2.0, WORLD[1] / 2.0, WORLD[2] / 2.0];
        let outside = (0..3).any(|i| self.pos[i] < 0.0 || self.pos[i] > WORLD[i]);
        if outside {
            normalize(sub(center, self.pos))
        } else {
            self.random_direction()
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-9 {
        [1.0, 0.0, 0.0]
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sub_rng;

    #[test]
    fn steps_are_exactly_one_step_long() {
        let mut w = Walker::new(sub_rng(7, 99), 4.25, 1.0, 0.0, 1000.0, false);
        let mut prev = w.emit_current();
        for _ in 0..5000 {
            match w.tick() {
                Tick::Emit { pos, .. } => {
                    let d = distance(prev, pos);
                    assert!((d - 4.25).abs() < 1e-9, "step {d}");
                    prev = pos;
                }
                Tick::Pause => panic!("no pauses configured"),
            }
        }
    }

    #[test]
    fn teleports_jump_factor_steps() {
        let mut w = Walker::new(sub_rng(7, 99), 4.25, 1.0, 0.0, 1000.0, true);
        let mut prev = w.emit_current();
        let mut teleports = 0;
        for _ in 0..100 {
            match w.tick() {
                Tick::Emit { pos, teleported } => {
                    let d = distance(prev, pos);
                    if teleported {
                        teleports += 1;
                        assert!((d - 4250.0).abs() < 1e-6, "jump {d}");
                    } else {
                        assert!((d - 4.25).abs() < 1e-9);
                    }
                    prev = pos;
                }
                Tick::Pause => panic!("no pauses configured"),
            }
        }
        assert_eq!(teleports, 10);
    }

    #[test]
    fn pauses_occur_with_positive_mean() {
        let mut w = Walker::new(sub_rng(7, 99), 4.25, 1.0, 5.0, 1000.0, false);
        w.emit_current();
        let mut pauses = 0;
        let mut emits = 0;
        for _ in 0..20_000 {
            match w.tick() {
                Tick::Pause => pauses += 1,
                Tick::Emit { .. } => emits += 1,
            }
        }
        assert!(pauses > 100, "pauses {pauses}");
        assert!(emits > 100);
    }

    #[test]
    fn deterministic_for_fixed_stream() {
        let run = || {
            let mut w = Walker::new(sub_rng(3, 4), 4.25, 2.0, 1.0, 500.0, true);
            let mut acc = Vec::new();
            for _ in 0..200 {
                if let Tick::Emit { pos, .. } = w.tick() {
                    acc.push(pos.map(|c| c as f32));
                }
            }
            acc
        };
        assert_eq!(run(), run());
    }
}
