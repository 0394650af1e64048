//! Scenario planning: assign users to IPs per the group-size histogram,
//! schedule their sessions, and fix per-user protocol versions and movement
//! parameters. Everything is a pure function of (scenario, seed).

use std::net::Ipv4Addr;

use rand::Rng;

use mmoscope_core::protocol::{AvatarId, ProtocolVersion, BUILD_VERSION_A, BUILD_VERSION_B};

use crate::scenario::Scenario;
use crate::stats::{lognormal_quantile, sub_rng};

/// Margin kept free at both ends of the trace, microseconds.
const EDGE_MARGIN_US: u64 = 2_000_000;
/// Minimum gap between two sessions of one user.
const SESSION_GAP_US: u64 = 30_000_000;
/// Minimum session length.
const MIN_SESSION_US: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannedClass {
    Tiger,
    Lion,
}

#[derive(Debug, Clone)]
pub struct PlannedSession {
    pub start_us: u64,
    pub end_us: u64,
    pub ip: Ipv4Addr,
}

#[derive(Debug, Clone)]
pub struct SimUser {
    pub idx: u32,
    pub token: String,
    pub home_ip: Ipv4Addr,
    pub class: PlannedClass,
    pub version: ProtocolVersion,
    pub build: u16,
    pub avatar: AvatarId,
    pub teleporter: bool,
    pub pause_s: f64,
    pub duration_scale: f64,
    pub sessions: Vec<PlannedSession>,
}

#[derive(Debug, Clone)]
pub struct SimPlan {
    pub users: Vec<SimUser>,
    pub trace_start_us: u64,
    pub trace_end_us: u64,
}

pub fn plan(scenario: &Scenario, seed: u64) -> SimPlan {
    let trace_start_us = scenario.trace_start_epoch * 1_000_000;
    let trace_end_us = trace_start_us + scenario.duration_s * 1_000_000;

    // IP per histogram slot; users fill IPs in order.
    let mut assignments: Vec<(Ipv4Addr, u32)> = Vec::new(); // (ip, group size)
    let mut ip_index = 0u32;
    for (size, n_ips) in scenario.histogram() {
        for _ in 0..n_ips {
            let ip = client_ip(ip_index);
            ip_index += 1;
            for _ in 0..size {
                assignments.push((ip, size));
            }
        }
    }
    debug_assert_eq!(assignments.len(), scenario.users.count as usize);

    let count = scenario.users.count;
    let n_version_a = (scenario.version_mix.fraction_a * count as f64).round() as u32;
    let n_teleporters = (scenario.movement.teleport_avatar_fraction * count as f64).round() as u32;

    // Teleporters are spread over the population, not clustered at the front.
    let mut teleport_rng = sub_rng(seed, 0x7e1e);
    let mut teleport_idx: Vec<u32> = (0..count).collect();
    for i in (1..teleport_idx.len()).rev() {
        let j = teleport_rng.gen_range(0..=i);
        teleport_idx.swap(i, j);
    }
    let teleporters: std::collections::BTreeSet<u32> =
        teleport_idx.into_iter().take(n_teleporters as usize).collect();

    let mut users = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let (home_ip, group_size) = assignments[idx as usize];
        let class = if group_size == 1 { PlannedClass::Tiger } else { PlannedClass::Lion };
        let version =
            if idx < n_version_a { ProtocolVersion::A } else { ProtocolVersion::B };
        let build = match version {
            ProtocolVersion::A => BUILD_VERSION_A,
            ProtocolVersion::B => BUILD_VERSION_B,
        };
        let avatar = match version {
            ProtocolVersion::A => AvatarId::Short(0x0001_0000 + idx),
            ProtocolVersion::B => AvatarId::Guid { low: 0x2000 + idx, high: 0, realm: 1 },
        };
        let o = match class {
            PlannedClass::Tiger => &scenario.class_overrides.tiger,
            PlannedClass::Lion => &scenario.class_overrides.lion,
        };
        users.push(SimUser {
            idx,
            token: format!("U{idx:05}"),
            home_ip,
            class,
            version,
            build,
            avatar,
            teleporter: teleporters.contains(&idx),
            pause_s: o.waypoint_pause_s.unwrap_or(scenario.movement.waypoint_pause_s),
            duration_scale: o.duration_scale,
            sessions: Vec::new(),
        });
    }

    schedule_sessions(scenario, seed, &mut users, trace_start_us, trace_end_us);
    reallocate_ips(scenario, &mut users);

    SimPlan { users, trace_start_us, trace_end_us }
}

fn client_ip(index: u32) -> Ipv4Addr {
    Ipv4Addr::new(10, (index >> 16) as u8 & 0x3f, (index >> 8) as u8, (index & 0xff) as u8)
}

fn schedule_sessions(
    scenario: &Scenario,
    seed: u64,
    users: &mut [SimUser],
    trace_start_us: u64,
    trace_end_us: u64,
) {
    let sm = &scenario.users.session_model;
    let mut rng = sub_rng(seed, 0x5e55);
    let span_us = trace_end_us - trace_start_us;

    // Stratified duration grid per class: user i of a class takes quantile
    // (i + 0.5) / n, shuffled so the grid position does not follow the IP
    // layout. Pins empirical duration fractions exactly at small counts.
    let stratified_u = if sm.stratified_durations {
        let mut per_class = std::collections::BTreeMap::new();
        for class in [PlannedClass::Tiger, PlannedClass::Lion] {
            let members: Vec<u32> =
                users.iter().filter(|u| u.class == class).map(|u| u.idx).collect();
            let n = members.len();
            let mut slots: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                slots.swap(i, j);
            }
            for (member_pos, &idx) in members.iter().enumerate() {
                let u = (slots[member_pos] as f64 + 0.5) / n as f64;
                per_class.insert(idx, u);
            }
        }
        Some(per_class)
    } else {
        None
    };

    for user in users.iter_mut() {
        let n_sessions = {
            let base = sm.sessions_per_user_mean.floor() as u32;
            let frac = sm.sessions_per_user_mean - base as f64;
            let extra = if frac > 0.0 && rng.gen::<f64>() < frac { 1 } else { 0 };
            (base + extra).max(1)
        };
        let min_sessions = if scenario.users.reallocated_users > 0
            && user.idx < scenario.users.reallocated_users
        {
            2
        } else {
            1
        };
        let n_sessions = n_sessions.max(min_sessions);

        let mut starts: Vec<u64> = (0..n_sessions)
            .map(|_| trace_start_us + draw_start_offset(&mut rng, &sm.start_weights_per_hour, span_us))
            .collect();
        starts.sort_unstable();

        let mut prev_end = trace_start_us;
        for (i, start) in starts.iter().enumerate() {
            let u = match (&stratified_u, i) {
                (Some(grid), 0) => grid[&user.idx],
                _ => rng.gen_range(1e-9..1.0 - 1e-9),
            };
            let drawn_s =
                lognormal_quantile(sm.duration_lognormal_mu, sm.duration_lognormal_sigma, u)
                    * user.duration_scale;
            let mut duration_us = (drawn_s * 1e6) as u64;

            let mut start_us = (*start).max(trace_start_us + EDGE_MARGIN_US);
            if i > 0 {
                start_us = start_us.max(prev_end + SESSION_GAP_US);
            }
            // Long sessions slide toward the trace start so they still fit.
            let latest_end = trace_end_us - EDGE_MARGIN_US;
            if start_us + duration_us > latest_end {
                if i == 0 {
                    start_us = latest_end
                        .saturating_sub(duration_us)
                        .max(trace_start_us + EDGE_MARGIN_US);
                }
                if start_us + duration_us > latest_end {
                    if latest_end <= start_us + MIN_SESSION_US {
                        continue; // no room for this session
                    }
                    duration_us = latest_end - start_us;
                }
            }
            if duration_us < MIN_SESSION_US {
                duration_us = MIN_SESSION_US;
                if start_us + duration_us > latest_end {
                    continue;
                }
            }
            let end_us = start_us + duration_us;
            user.sessions.push(PlannedSession { start_us, end_us, ip: user.home_ip });
            prev_end = end_us;
        }

        // A user must exist in the trace: force one minimal session if
        // everything got squeezed out.
        if user.sessions.is_empty() {
            let start_us = trace_start_us + EDGE_MARGIN_US;
            user.sessions.push(PlannedSession {
                start_us,
                end_us: start_us + MIN_SESSION_US,
                ip: user.home_ip,
            });
        }
    }
}

fn draw_start_offset(rng: &mut rand_chacha::ChaCha12Rng, weights: &[f64], span_us: u64) -> u64 {
    let hours = span_us.div_ceil(3_600_000_000).max(1) as usize;
    let w: Vec<f64> = (0..hours).map(|h| weights[h % weights.len()]).collect();
    let total: f64 = w.iter().sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut hour = 0usize;
    for (h, &wh) in w.iter().enumerate() {
        if pick < wh {
            hour = h;
            break;
        }
        pick -= wh;
        hour = h;
    }
    let hour_start = hour as u64 * 3_600_000_000;
    let hour_len = (span_us - hour_start).min(3_600_000_000);
    hour_start + (rng.gen::<f64>() * hour_len as f64) as u64
}

/// Move later sessions of the first `reallocated_users` users onto a shared
/// IP, so those users appear behind two different IPs over the trace.
fn reallocate_ips(scenario: &Scenario, users: &mut [SimUser]) {
    let n = scenario.users.reallocated_users;
    if n == 0 {
        return;
    }
    // Prefer an IP that already hosts several users; fall back to the last
    // user's home IP.
    let partner_ip = users
        .iter()
        .map(|u| u.home_ip)
        .fold(std::collections::BTreeMap::<Ipv4Addr, u32>::new(), |mut acc, ip| {
            *acc.entry(ip).or_default() += 1;
            acc
        })
        .into_iter()
        .max_by_key(|&(ip, count)| (count, std::cmp::Reverse(ip)))
        .map(|(ip, _)| ip);
    let Some(partner_ip) = partner_ip else { return };
    for user in users.iter_mut().take(n as usize) {
        if user.home_ip == partner_ip {
            continue;
        }
        for session in user.sessions.iter_mut().skip(1) {
            session.ip = partner_ip;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::minimal;

    #[test]
    fn plan_assigns_histogram_ips() {
        let s = minimal(5, &[(1, 3), (2, 1)]);
        let p = plan(&s, 9);
        assert_eq!(p.users.len(), 5);
        let tigers = p.users.iter().filter(|u| u.class == PlannedClass::Tiger).count();
        assert_eq!(tigers, 3);
        // The two lions share one IP.
        assert_eq!(p.users[3].home_ip, p.users[4].home_ip);
        assert_ne!(p.users[0].home_ip, p.users[1].home_ip);
    }

    #[test]
    fn every_user_has_a_session_within_trace() {
        let s = minimal(5, &[(1, 3), (2, 1)]);
        let p = plan(&s, 9);
        for u in &p.users {
            assert!(!u.sessions.is_empty());
            for sess in &u.sessions {
                assert!(sess.start_us >= p.trace_start_us);
                assert!(sess.end_us <= p.trace_end_us);
                assert!(sess.end_us > sess.start_us);
            }
        }
    }

    #[test]
    fn stratified_durations_pin_fractions() {
        let mut s = minimal(100, &[(1, 100)]);
        s.duration_s = 3600;
        s.users.session_model.stratified_durations = true;
        s.users.session_model.duration_lognormal_mu = 5.45;
        s.users.session_model.duration_lognormal_sigma = 0.5;
        let p = plan(&s, 7);
        let median = lognormal_quantile(5.45, 0.5, 0.5);
        let below = p
            .users
            .iter()
            .filter(|u| {
                let d = (u.sessions[0].end_us - u.sessions[0].start_us) as f64 / 1e6;
                d < median
            })
            .count();
        assert_eq!(below, 50);
    }

    #[test]
    fn reallocated_user_gets_two_ips() {
        let mut s = minimal(4, &[(1, 2), (2, 1)]);
        s.users.reallocated_users = 1;
        let p = plan(&s, 9);
        let u = &p.users[0];
        assert!(u.sessions.len() >= 2);
        let first_ip = u.sessions[0].ip;
        let later_ip = u.sessions[1].ip;
        assert_ne!(first_ip, later_ip);
    }

    #[test]
    fn plan_is_deterministic() {
        let s = minimal(10, &[(1, 6), (2, 2)]);
        let a = plan(&s, 11);
        let b = plan(&s, 11);
        for (ua, ub) in a.users.iter().zip(&b.users) {
            assert_eq!(ua.sessions.len(), ub.sessions.len());
            for (sa, sb) in ua.sessions.iter().zip(&ub.sessions) {
                assert_eq!((sa.start_us, sa.end_us, sa.ip), (sb.start_us, sb.end_us, sb.ip));
            }
        }
    }
}
