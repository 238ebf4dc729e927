//! TCP transport between gateway and middlebox.
//!
//! The gateway writes `SHVEPKT1` frames; the middlebox answers each frame with
//! one binary verdict record, in frame order. The client half-closes its write
//! side when done and the server closes the connection after the last verdict.

use std::collections::HashSet;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::crypto::EncryptedPacket;
use crate::engine::{Inspector, Verdict};
use crate::wire::{read_frame, read_verdict, write_frame, write_verdict, FrameError};

pub struct Server {
    listener: TcpListener,
    inspector: Arc<Inspector>,
}

/// Running server; dropping it does not stop the accept loop, call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicU64>,
    thread: JoinHandle<()>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, inspector: Arc<Inspector>) -> io::Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, inspector })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves forever on the calling thread.
    pub fn run(self) -> io::Result<()> {
        let stop = AtomicBool::new(false);
        self.accept_loop(&stop, &AtomicU64::new(0));
        Ok(())
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let served = Arc::new(AtomicU64::new(0));
        let (s, n) = (stop.clone(), served.clone());
        let thread = thread::Builder::new()
            .name("shvebox-accept".into())
            .spawn(move || self.accept_loop(&s, &n))?;
        Ok(ServerHandle { addr, stop, served, thread })
    }

    fn accept_loop(&self, stop: &AtomicBool, served: &AtomicU64) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            served.fetch_add(1, Ordering::Relaxed);
            let inspector = self.inspector.clone();
            let spawned = thread::Builder::new().name("shvebox-conn".into()).spawn(move || {
                let peer = stream.peer_addr().ok();
                match handle_connection(stream, &inspector) {
                    Ok(n) => log::debug!("{peer:?}: {n} verdicts"),
                    Err(e) => log::warn!("{peer:?}: connection ended: {e}"),
                }
            });
            if let Err(e) = spawned {
                log::error!("cannot spawn connection thread: {e}");
            }
        }
    }
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Connections accepted so far.
    pub fn connections(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    /// Stops accepting. Open connections finish on their own.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        let _ = self.thread.join();
    }
}

/// Serves one connection until the peer half-closes. Returns the number of verdicts sent.
///
/// A repeated `packet_id` within the connection is inspected at most once;
/// later copies get no verdict. A malformed frame ends the connection since the
/// byte stream can no longer be trusted to be aligned.
pub fn handle_connection(stream: TcpStream, inspector: &Inspector) -> Result<u64, FrameError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut seen = HashSet::new();
    let mut sent = 0;
    loop {
        let pkt = match read_frame(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => break,
            Err(e) => {
                let _ = writer.flush();
                return Err(e);
            }
        };
        if !seen.insert(pkt.packet_id) {
            log::debug!("duplicate packet id {} ignored", pkt.packet_id);
            continue;
        }
        write_verdict(&mut writer, &inspector.inspect(&pkt))?;
        sent += 1;
        // batch replies while the client is pipelining
        if reader.buffer().is_empty() {
            writer.flush()?;
        }
    }
    writer.flush()?;
    Ok(sent)
}

#[derive(Debug, thiserror::Error)]
#[error("connection lost after {} verdicts (last acknowledged packet id: {last_acked:?}): {source}", verdicts.len())]
pub struct SessionError {
    pub last_acked: Option<u64>,
    /// Verdicts received before the failure.
    pub verdicts: Vec<Verdict>,
    #[source]
    pub source: FrameError,
}

/// Gateway-side connection.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    last_acked: Option<u64>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            last_acked: None,
        })
    }

    pub fn last_acked(&self) -> Option<u64> {
        self.last_acked
    }

    /// Sends one frame and waits for its verdict.
    pub fn inspect(&mut self, pkt: &EncryptedPacket) -> Result<Verdict, FrameError> {
        write_frame(&mut self.writer, pkt)?;
        self.writer.flush()?;
        self.recv()?.ok_or(FrameError::Truncated)
    }

    /// Next verdict, or `None` once the server has closed the connection.
    pub fn recv(&mut self) -> Result<Option<Verdict>, FrameError> {
        let v = read_verdict(&mut self.reader)?;
        if let Some(v) = &v {
            self.last_acked = Some(v.packet_id);
        }
        Ok(v)
    }

    /// Pipelines every packet and collects the verdicts, in order.
    ///
    /// Frames are written from a helper thread while verdicts are read here, so
    /// neither side's socket buffer can fill up and stall the other.
    pub fn run<I>(mut self, packets: I) -> Result<Vec<Verdict>, SessionError>
    where
        I: IntoIterator<Item = EncryptedPacket> + Send,
        I::IntoIter: Send,
    {
        let mut writer = self.writer;
        let packets = packets.into_iter();
        thread::scope(|s| {
            let sender = s.spawn(move || -> Result<usize, FrameError> {
                let mut ids = HashSet::new();
                for pkt in packets {
                    write_frame(&mut writer, &pkt)?;
                    ids.insert(pkt.packet_id);
                }
                writer.flush()?;
                writer.get_ref().shutdown(Shutdown::Write)?;
                Ok(ids.len())
            });

            let mut verdicts = Vec::new();
            let read_err = loop {
                match read_verdict(&mut self.reader) {
                    Ok(Some(v)) => {
                        self.last_acked = Some(v.packet_id);
                        verdicts.push(v);
                    }
                    Ok(None) => break None,
                    Err(e) => break Some(e),
                }
            };
            if read_err.is_some() {
                // unblock a sender stuck on a full socket
                let _ = self.reader.get_ref().shutdown(Shutdown::Both);
            }
            let sent = sender.join().expect("sender thread panicked");
            let err = match (read_err, sent) {
                (Some(e), _) | (None, Err(e)) => Some(e),
                (None, Ok(n)) if n != verdicts.len() => Some(FrameError::Truncated),
                _ => None,
            };
            match err {
                None => Ok(verdicts),
                Some(source) => Err(SessionError { last_acked: self.last_acked, verdicts, source }),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile_filter, compile_patterns};
    use crate::crypto::{MasterKey, Prf, shve_enc};
    use crate::engine::Decision;
    use crate::rules::parse_ruleset;
    use rand::SeedableRng;

    fn setup() -> (Prf, Arc<Inspector>) {
        let msk = MasterKey::from_bytes(&[4; 16]).unwrap();
        let rules = parse_ruleset("drop content:\"evil\"\nalert content:\"ab\" depth:10").unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        let db = compile_patterns(&msk, &rules, &mut rng);
        let f = compile_filter(&msk, &rules, &mut rng);
        (Prf::new(&msk), Arc::new(Inspector::new(db, f)))
    }

    #[test]
    fn lockstep_and_pipelined() {
        let (prf, insp) = setup();
        let server = Server::bind("127.0.0.1:0", insp).unwrap().spawn().unwrap();

        let mut c = Client::connect(server.local_addr()).unwrap();
        let v = c.inspect(&shve_enc(&prf, b"xx evil xx", 5).unwrap()).unwrap();
        assert_eq!((v.packet_id, v.decision), (5, Decision::Drop));
        assert_eq!(c.last_acked(), Some(5));

        let pkts: Vec<_> = (0..50u64)
            .map(|i| shve_enc(&prf, if i % 7 == 0 { b"ab......" } else { b"benign.." }, i).unwrap())
            .collect();
        let verdicts = Client::connect(server.local_addr()).unwrap().run(pkts).unwrap();
        assert_eq!(verdicts.len(), 50);
        for (i, v) in verdicts.iter().enumerate() {
            assert_eq!(v.packet_id, i as u64);
            let want = if i % 7 == 0 { Decision::Alert } else { Decision::Pass };
            assert_eq!(v.decision, want);
        }
        server.shutdown();
    }

    #[test]
    fn duplicate_ids_get_one_verdict() {
        let (prf, insp) = setup();
        let server = Server::bind("127.0.0.1:0", insp).unwrap().spawn().unwrap();
        let p = shve_enc(&prf, b"evil", 9).unwrap();
        let q = shve_enc(&prf, b"fine", 10).unwrap();
        let pkts = vec![p.clone(), p, q];
        let verdicts = Client::connect(server.local_addr()).unwrap().run(pkts).unwrap();
        assert_eq!(verdicts.iter().map(|v| v.packet_id).collect::<Vec<_>>(), vec![9, 10]);
        server.shutdown();
    }
}
