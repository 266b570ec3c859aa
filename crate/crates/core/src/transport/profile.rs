use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::party::PartyId;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed profile: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid profile: {0}")]
    Invalid(String),
}

/// Latency and bandwidth of one directed channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkProfile {
    pub latency_ms: f64,
    /// `None` means unlimited.
    pub bytes_per_ms: Option<f64>,
}

impl Default for LinkProfile {
    fn default() -> Self {
        LinkProfile { latency_ms: 0.0, bytes_per_ms: None }
    }
}

impl LinkProfile {
    pub fn transfer_ms(&self, bytes: usize) -> f64 {
        match self.bytes_per_ms {
            Some(bw) => bytes as f64 / bw,
            None => 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: PartyId,
    to: PartyId,
    #[serde(default)]
    latency_ms: f64,
    #[serde(default)]
    bandwidth_bytes_per_ms: Option<f64>,
    /// Applies the same numbers in the reverse direction too.
    #[serde(default)]
    symmetric: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    #[serde(default)]
    channels: Vec<RawLink>,
    #[serde(default)]
    endpoints: BTreeMap<PartyId, SocketAddr>,
}

/// Per-channel network characteristics, plus TCP endpoints when running
/// over real sockets. Channels not listed have zero latency and unlimited
/// bandwidth.
///
/// ```json
/// { "channels": [ { "from": "P2", "to": "P3", "latency_ms": 1, "symmetric": true } ],
///   "endpoints": { "P1": "127.0.0.1:7101" } }
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetProfile {
    links: BTreeMap<(PartyId, PartyId), LinkProfile>,
    pub endpoints: BTreeMap<PartyId, SocketAddr>,
}

impl NetProfile {
    pub fn new() -> NetProfile {
        NetProfile::default()
    }

    pub fn from_json(text: &str) -> Result<NetProfile, ProfileError> {
        let raw: RawProfile = serde_json::from_str(text)?;
        let mut p = NetProfile { endpoints: raw.endpoints, ..Default::default() };
        for l in raw.channels {
            if !(l.latency_ms >= 0.0) {
                return Err(ProfileError::Invalid(format!("{}->{}: negative latency", l.from, l.to)));
            }
            if let Some(bw) = l.bandwidth_bytes_per_ms {
                if !(bw > 0.0) {
                    return Err(ProfileError::Invalid(format!("{}->{}: bandwidth must be positive", l.from, l.to)));
                }
            }
            let link = LinkProfile { latency_ms: l.latency_ms, bytes_per_ms: l.bandwidth_bytes_per_ms };
            p.links.insert((l.from, l.to), link);
            if l.symmetric {
                p.links.insert((l.to, l.from), link);
            }
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<NetProfile, ProfileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn link(&self, from: PartyId, to: PartyId) -> LinkProfile {
        self.links.get(&(from, to)).copied().unwrap_or_default()
    }

    pub fn set_link(&mut self, from: PartyId, to: PartyId, link: LinkProfile) -> &mut Self {
        self.links.insert((from, to), link);
        self
    }

    /// Sets both directions between `a` and `b`.
    pub fn set_pair(&mut self, a: PartyId, b: PartyId, latency_ms: f64) -> &mut Self {
        let link = LinkProfile { latency_ms, bytes_per_ms: None };
        self.set_link(a, b, link).set_link(b, a, link)
    }
}
