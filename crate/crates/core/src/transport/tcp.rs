//! TCP backend: one stream per party pair, one reader thread per peer.
//!
//! The party with the lower index dials; the other accepts. The first byte
//! on a fresh stream is the dialer's party index.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};

use super::{Endpoint, Frame, Metrics, NetError, HEADER_LEN};
use crate::party::PartyId;

pub struct TcpEndpoint {
    me: PartyId,
    writers: HashMap<PartyId, TcpStream>,
    inbox: HashMap<PartyId, Receiver<Frame>>,
    started: Instant,
    timeout: Duration,
    metrics: Metrics,
}

fn io(e: std::io::Error) -> NetError {
    NetError::Io(e.to_string())
}

fn reader(mut stream: TcpStream, tx: crossbeam_channel::Sender<Frame>) {
    let mut header = [0u8; HEADER_LEN];
    loop {
        if stream.read_exact(&mut header).is_err() {
            return;
        }
        let Ok((len, phase, kind, id)) = Frame::decode_header(&header) else { return };
        let mut payload = vec![0u8; len];
        if stream.read_exact(&mut payload).is_err() {
            return;
        }
        if tx.send(Frame { phase, kind, id, payload }).is_err() {
            return;
        }
    }
}

/// Connects party `me` to every other party in `addrs`, using an already
/// bound listener for incoming connections.
pub fn connect_with(
    me: PartyId,
    listener: TcpListener,
    addrs: &BTreeMap<PartyId, SocketAddr>,
    timeout: Duration,
) -> Result<TcpEndpoint, NetError> {
    let deadline = Instant::now() + timeout.max(Duration::from_secs(5));
    let mut streams: HashMap<PartyId, TcpStream> = HashMap::new();
    for (&peer, addr) in addrs {
        if peer.index() <= me.index() {
            continue;
        }
        let mut s = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
                Err(e) => return Err(io(e)),
            }
        };
        s.write_all(&[me.index() as u8]).map_err(io)?;
        streams.insert(peer, s);
    }
    let lower = addrs.keys().filter(|p| p.index() < me.index()).count();
    for _ in 0..lower {
        let (mut s, _) = listener.accept().map_err(io)?;
        let mut who = [0u8; 1];
        s.read_exact(&mut who).map_err(io)?;
        let peer = PartyId::from_index(who[0] as usize)
            .filter(|p| addrs.contains_key(p) && p.index() < me.index())
            .ok_or_else(|| NetError::Io(format!("unexpected handshake byte {}", who[0])))?;
        streams.insert(peer, s);
    }
    let mut writers = HashMap::new();
    let mut inbox = HashMap::new();
    for (peer, s) in streams {
        s.set_nodelay(true).map_err(io)?;
        let (tx, rx) = unbounded();
        let rs = s.try_clone().map_err(io)?;
        thread::spawn(move || reader(rs, tx));
        writers.insert(peer, s);
        inbox.insert(peer, rx);
    }
    Ok(TcpEndpoint { me, writers, inbox, started: Instant::now(), timeout, metrics: Metrics::new() })
}

/// Binds `addrs[me]` and connects to the other parties.
pub fn connect(me: PartyId, addrs: &BTreeMap<PartyId, SocketAddr>, timeout: Duration) -> Result<TcpEndpoint, NetError> {
    let addr = addrs.get(&me).ok_or(NetError::NoRoute(me))?;
    let listener = TcpListener::bind(addr).map_err(io)?;
    connect_with(me, listener, addrs, timeout)
}

/// Binds the given endpoints for every party in this process. Falls back to
/// [`local_mesh`] when `addrs` does not name all of `parties`.
pub fn mesh(
    parties: &[PartyId],
    addrs: &BTreeMap<PartyId, SocketAddr>,
    timeout: Duration,
) -> Result<Vec<TcpEndpoint>, NetError> {
    if !parties.iter().all(|p| addrs.contains_key(p)) {
        return local_mesh(parties, timeout);
    }
    let addrs: BTreeMap<PartyId, SocketAddr> = parties.iter().map(|p| (*p, addrs[p])).collect();
    let mut listeners = Vec::new();
    for p in parties {
        listeners.push(TcpListener::bind(addrs[p]).map_err(io)?);
    }
    let handles: Vec<_> = parties
        .iter()
        .zip(listeners)
        .map(|(&p, l)| {
            let addrs = addrs.clone();
            thread::spawn(move || connect_with(p, l, &addrs, timeout))
        })
        .collect();
    handles.into_iter().map(|h| h.join().expect("connect thread panicked")).collect()
}

/// All parties on loopback with OS-assigned ports, for tests and
/// single-process runs.
pub fn local_mesh(parties: &[PartyId], timeout: Duration) -> Result<Vec<TcpEndpoint>, NetError> {
    let mut listeners = Vec::new();
    let mut addrs = BTreeMap::new();
    for &p in parties {
        let l = TcpListener::bind("127.0.0.1:0").map_err(io)?;
        addrs.insert(p, l.local_addr().map_err(io)?);
        listeners.push(l);
    }
    let handles: Vec<_> = parties
        .iter()
        .zip(listeners)
        .map(|(&p, l)| {
            let addrs = addrs.clone();
            thread::spawn(move || connect_with(p, l, &addrs, timeout))
        })
        .collect();
    handles.into_iter().map(|h| h.join().expect("connect thread panicked")).collect()
}

impl Endpoint for TcpEndpoint {
    fn me(&self) -> PartyId {
        self.me
    }

    fn send(&mut self, to: PartyId, frame: Frame, elements: u64) -> Result<(), NetError> {
        let s = self.writers.get_mut(&to).ok_or(NetError::NoRoute(to))?;
        // Like the simulator: a peer that left just never reads it, and the
        // failure shows up on the next receive from that peer.
        let _ = s.write_all(&frame.encode());
        self.metrics.record(self.me, to, frame.phase, frame.kind, elements, frame.payload.len() as u64);
        Ok(())
    }

    fn recv(&mut self, from: PartyId) -> Result<Frame, NetError> {
        let rx = self.inbox.get(&from).ok_or(NetError::NoRoute(from))?;
        match rx.recv_timeout(self.timeout) {
            Ok(f) => Ok(f),
            Err(RecvTimeoutError::Timeout) => Err(NetError::Timeout(from)),
            Err(RecvTimeoutError::Disconnected) => Err(NetError::Closed(from)),
        }
    }

    fn next_round(&mut self) {
        self.metrics.next_round();
    }

    fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    fn metrics(&self) -> &Metrics {
        &self.metrics
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        for s in self.writers.values() {
            let _ = s.shutdown(std::net::Shutdown::Write);
        }
    }
}
