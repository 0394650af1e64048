//! User sessions: attribute connections to account tokens, compute playing
//! time, and classify users as Tigers (only player behind an IP) or Lions
//! (sharing the IP with other players).

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::Serialize;

use crate::dissect::WowConnection;
use crate::dpd::Kind;
use crate::time::{merge_intervals, union_length_us};

/// How long before a game connection a logon on the same client IP may be
/// used for fallback attribution.
pub const LOGON_LINK_WINDOW_US: u64 = 300 * 1_000_000;

#[derive(Debug, Clone)]
pub struct User {
    pub token: String,
    /// Indexes into the connections slice passed to [`attribute`].
    pub connections: Vec<usize>,
    pub client_ips: BTreeSet<Ipv4Addr>,
    /// Disjoint, normalized game-connection intervals in microseconds.
    pub playing_intervals_us: Vec<(u64, u64)>,
    pub playing_us: u64,
}

/// Result of attribution: users sorted by token, plus a per-connection user
/// index aligned with the input slice.
#[derive(Debug, Clone, Default)]
pub struct Attribution {
    pub users: Vec<User>,
    pub conn_user: Vec<Option<usize>>,
    /// Confirmed connections no user could be derived for.
    pub unattributed: u64,
}

/// Key game connections by their auth token and logon connections by their
/// challenge token. A game connection with malformed auth falls back to the
/// most recent logon token seen on the same client IP within the linkage
/// window; failing that it stays unattributed (traffic metrics only).
pub fn attribute(conns: &[WowConnection]) -> Attribution {
    let mut conn_token: Vec<Option<String>> = conns.iter().map(|c| c.token.clone()).collect();

    // Fallback pass for unattributed game connections.
    for idx in 0..conns.len() {
        if conn_token[idx].is_some() || conns[idx].kind != Kind::Game {
            continue;
        }
        let conn = &conns[idx];
        let best = conns
            .iter()
            .filter(|c| {
                c.kind == Kind::Logon
                    && c.token.is_some()
                    && c.flow.client.ip == conn.flow.client.ip
                    && c.flow.first_ts <= conn.flow.first_ts
                    && conn.flow.first_ts.since(c.flow.first_ts) <= LOGON_LINK_WINDOW_US
            })
            .max_by_key(|c| c.flow.first_ts);
        if let Some(logon) = best {
            conn_token[idx] = logon.token.clone();
        }
    }

    let mut by_token: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut unattributed = 0u64;
    for (idx, token) in conn_token.iter().enumerate() {
        match token {
            Some(t) => by_token.entry(t.clone()).or_default().push(idx),
            None => unattributed += 1,
        }
    }

    let mut users = Vec::with_capacity(by_token.len());
    let mut conn_user = vec![None; conns.len()];
    for (token, conn_idxs) in by_token {
        let user_idx = users.len();
        let mut client_ips = BTreeSet::new();
        let mut intervals = Vec::new();
        for &ci in &conn_idxs {
            conn_user[ci] = Some(user_idx);
            client_ips.insert(conns[ci].flow.client.ip);
            if conns[ci].kind == Kind::Game {
                intervals.push((conns[ci].flow.first_ts.0, conns[ci].flow.last_ts.0));
            }
        }
        let playing_intervals_us = merge_intervals(&intervals);
        let playing_us = playing_intervals_us.iter().map(|(s, e)| e - s).sum();
        users.push(User {
            token,
            connections: conn_idxs,
            client_ips,
            playing_intervals_us,
            playing_us,
        });
    }
    Attribution { users, conn_user, unattributed }
}

/// Total playing time: the union of the user's game-connection intervals.
pub fn playing_time_us(intervals: &[(u64, u64)]) -> u64 {
    union_length_us(intervals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum GroupLabel {
    Tiger,
    Lion,
}

impl GroupLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::Tiger => "tiger",
            GroupLabel::Lion => "lion",
        }
    }
}

/// Class of a user over all IPs they appeared on. Users who changed location
/// or IP can legitimately be both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum UserClass {
    Tiger,
    Lion,
    Both,
}

impl UserClass {
    pub fn as_str(self) -> &'static str {
        match self {
            UserClass::Tiger => "tiger",
            UserClass::Lion => "lion",
            UserClass::Both => "both",
        }
    }

    pub fn includes(self, label: GroupLabel) -> bool {
        matches!(
            (self, label),
            (UserClass::Tiger, GroupLabel::Tiger)
                | (UserClass::Lion, GroupLabel::Lion)
                | (UserClass::Both, _)
        )
    }
}

/// One client IP with every account token seen on it.
#[derive(Debug, Clone)]
pub struct GroupRecord {
    pub ip: Ipv4Addr,
    pub users: BTreeSet<String>,
    pub label: GroupLabel,
    /// Payload bytes of confirmed WoW traffic on this IP.
    pub wow_bytes: u64,
}

impl GroupRecord {
    pub fn size(&self) -> usize {
        self.users.len()
    }
}

/// Group-size buckets as reported: 1, 2, 3, 4, and everything above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SizeBucket {
    Exact(u8),
    GreaterThanFour,
}

impl SizeBucket {
    pub fn of(size: usize) -> Self {
        if size <= 4 {
            SizeBucket::Exact(size as u8)
        } else {
            SizeBucket::GreaterThanFour
        }
    }

    pub fn all() -> [SizeBucket; 5] {
        [
            SizeBucket::Exact(1),
            SizeBucket::Exact(2),
            SizeBucket::Exact(3),
            SizeBucket::Exact(4),
            SizeBucket::GreaterThanFour,
        ]
    }

    pub fn as_str(self) -> String {
        match self {
            SizeBucket::Exact(n) => n.to_string(),
            SizeBucket::GreaterThanFour => ">4".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    pub bucket: String,
    pub n_ips: u64,
    /// Sum of group sizes over the bucket's IPs (user-IP pairs, so a user on
    /// several IPs counts once per IP).
    pub n_users: u64,
    pub wow_bytes: u64,
    pub volume_share_pct: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GroupTable {
    pub rows: Vec<GroupRow>,
    pub total_ips: u64,
    pub total_users: u64,
    pub total_wow_bytes: u64,
}

/// Classify each client IP by the number of distinct tokens seen on it over
/// the whole trace and aggregate into the report table.
pub fn classify_groups(users: &[User], conns: &[WowConnection]) -> (Vec<GroupRecord>, GroupTable) {
    let mut tokens_by_ip: BTreeMap<Ipv4Addr, BTreeSet<String>> = BTreeMap::new();
    for user in users {
        for &ip in &user.client_ips {
            tokens_by_ip.entry(ip).or_default().insert(user.token.clone());
        }
    }
    // Payload bytes of confirmed WoW traffic per client IP, attributed or not.
    let mut bytes_by_ip: BTreeMap<Ipv4Addr, u64> = BTreeMap::new();
    for conn in conns {
        let bytes = conn.flow.c2s.len() as u64 + conn.flow.s2c.len() as u64;
        *bytes_by_ip.entry(conn.flow.client.ip).or_default() += bytes;
    }

    let records: Vec<GroupRecord> = tokens_by_ip
        .into_iter()
        .map(|(ip, tokens)| {
            let label = if tokens.len() == 1 { GroupLabel::Tiger } else { GroupLabel::Lion };
            let wow_bytes = bytes_by_ip.get(&ip).copied().unwrap_or(0);
            GroupRecord { ip, users: tokens, label, wow_bytes }
        })
        .collect();

    let mut table = GroupTable::default();
    let mut per_bucket: BTreeMap<SizeBucket, (u64, u64, u64)> = BTreeMap::new();
    for rec in &records {
        let entry = per_bucket.entry(SizeBucket::of(rec.size())).or_default();
        entry.0 += 1;
        entry.1 += rec.size() as u64;
        entry.2 += rec.wow_bytes;
        table.total_ips += 1;
        table.total_users += rec.size() as u64;
        table.total_wow_bytes += rec.wow_bytes;
    }
    for bucket in SizeBucket::all() {
        let (n_ips, n_users, wow_bytes) = per_bucket.get(&bucket).copied().unwrap_or_default();
        let volume_share_pct = if table.total_wow_bytes > 0 {
            wow_bytes as f64 / table.total_wow_bytes as f64 * 100.0
        } else {
            0.0
        };
        table.rows.push(GroupRow {
            bucket: bucket.as_str(),
            n_ips,
            n_users,
            wow_bytes,
            volume_share_pct,
        });
    }
    (records, table)
}

/// Class of each user (aligned with `users`) over all group records.
pub fn user_classes(users: &[User], records: &[GroupRecord]) -> Vec<UserClass> {
    let label_by_ip: BTreeMap<Ipv4Addr, GroupLabel> =
        records.iter().map(|r| (r.ip, r.label)).collect();
    users
        .iter()
        .map(|user| {
            let mut tiger = false;
            let mut lion = false;
            for ip in &user.client_ips {
                match label_by_ip.get(ip) {
                    Some(GroupLabel::Tiger) => tiger = true,
                    Some(GroupLabel::Lion) => lion = true,
                    None => {}
                }
            }
            match (tiger, lion) {
                (true, true) => UserClass::Both,
                (false, true) => UserClass::Lion,
                _ => UserClass::Tiger,
            }
        })
        .collect()
}
