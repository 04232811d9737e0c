//! Inter-process transport over localhost TCP.
//!
//! Rendezvous: worker 0 listens on an ephemeral port; every other worker
//! binds its own listener, connects to worker 0 and reports `(rank, port)`.
//! Worker 0 answers with the port table, after which each worker connects
//! to every lower rank and accepts connections from every higher one.
//! Frames are `[len u64][tag u64][kind u8][body]`, little endian.

use std::io::{self, BufReader, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{Message, Payload, Transport, TransportError};
use crate::scalar::Real;
use crate::state::BlockState;

const KIND_STATES: u8 = 1;
const KIND_VALUES: u8 = 2;
const KIND_ABORT: u8 = 3;

const RENDEZVOUS_TIMEOUT: Duration = Duration::from_secs(60);

fn io_err(e: io::Error) -> TransportError {
    TransportError::Io(e.to_string())
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode<T: Real>(msg: &Message<T>) -> Vec<u8> {
    let mut body = Vec::new();
    put_u64(&mut body, msg.tag);
    match &msg.payload {
        Payload::States(states) => {
            body.push(KIND_STATES);
            put_u64(&mut body, states.len() as u64);
            for s in states {
                put_u64(&mut body, s.grid as u64);
                put_u64(&mut body, s.field.len() as u64);
                put_u64(&mut body, s.scalars.len() as u64);
                for v in s.values() {
                    put_f64(&mut body, v.as_f64());
                }
            }
        }
        Payload::Values(values) => {
            body.push(KIND_VALUES);
            put_u64(&mut body, values.len() as u64);
            for &v in values {
                put_f64(&mut body, v);
            }
        }
        Payload::Abort(reason) => {
            body.push(KIND_ABORT);
            put_u64(&mut body, reason.len() as u64);
            body.extend_from_slice(reason.as_bytes());
        }
    }
    let mut frame = Vec::with_capacity(body.len() + 8);
    put_u64(&mut frame, body.len() as u64);
    frame.extend_from_slice(&body);
    frame
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| TransportError::Malformed("truncated frame".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, TransportError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, TransportError> {
        let v = self.u64()? as usize;
        // every counted item occupies at least one byte
        if v > self.buf.len() {
            return Err(TransportError::Malformed("count exceeds frame".into()));
        }
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64, TransportError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode<T: Real>(body: &[u8]) -> Result<Message<T>, TransportError> {
    let mut c = Cursor { buf: body, pos: 0 };
    let tag = c.u64()?;
    let kind = c.take(1)?[0];
    let payload = match kind {
        KIND_STATES => {
            let n = c.len()?;
            let mut states = Vec::with_capacity(n);
            for _ in 0..n {
                let grid = c.len()?;
                let nf = c.len()?;
                let ns = c.len()?;
                let field = (0..nf).map(|_| c.f64().map(T::lit)).collect::<Result<_, _>>()?;
                let scalars = (0..ns).map(|_| c.f64().map(T::lit)).collect::<Result<_, _>>()?;
                states.push(BlockState::new(field, scalars, grid));
            }
            Payload::States(states)
        }
        KIND_VALUES => {
            let n = c.len()?;
            Payload::Values((0..n).map(|_| c.f64()).collect::<Result<_, _>>()?)
        }
        KIND_ABORT => {
            let n = c.len()?;
            Payload::Abort(String::from_utf8_lossy(c.take(n)?).into_owned())
        }
        k => return Err(TransportError::Malformed(format!("unknown kind {k}"))),
    };
    if c.pos != body.len() {
        return Err(TransportError::Malformed("trailing bytes".into()));
    }
    Ok(Message { tag, payload })
}

fn read_frame(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut body = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_u64s(w: &mut impl Write, vals: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for &v in vals {
        put_u64(&mut buf, v);
    }
    w.write_all(&buf)?;
    w.flush()
}

fn accept_before(listener: &TcpListener, deadline: Instant) -> io::Result<TcpStream> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(io::Error::new(io::ErrorKind::TimedOut, "rendezvous timed out"));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e),
        }
    }
}

fn local_listener() -> io::Result<TcpListener> {
    TcpListener::bind((Ipv4Addr::LOCALHOST, 0))
}

/// Worker 0's side of the rendezvous.
pub struct TcpRendezvous {
    listener: TcpListener,
}

impl TcpRendezvous {
    pub fn bind() -> Result<Self, TransportError> {
        Ok(Self {
            listener: local_listener().map_err(io_err)?,
        })
    }

    pub fn addr(&self) -> Result<SocketAddr, TransportError> {
        self.listener.local_addr().map_err(io_err)
    }

    /// Waits for the other `size - 1` workers and returns worker 0's transport.
    pub fn accept_all<T: Real>(self, size: usize) -> Result<TcpTransport<T>, TransportError> {
        let deadline = Instant::now() + RENDEZVOUS_TIMEOUT;
        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        let mut ports = vec![0u64; size];
        for _ in 1..size {
            let mut s = accept_before(&self.listener, deadline).map_err(io_err)?;
            let rank = read_u64(&mut s).map_err(io_err)? as usize;
            let port = read_u64(&mut s).map_err(io_err)?;
            if rank == 0 || rank >= size || streams[rank].is_some() {
                return Err(TransportError::Malformed(format!("bad rendezvous rank {rank}")));
            }
            ports[rank] = port;
            streams[rank] = Some(s);
        }
        let mut table = vec![size as u64];
        table.extend_from_slice(&ports);
        for s in streams.iter_mut().flatten() {
            write_u64s(s, &table).map_err(io_err)?;
        }
        TcpTransport::from_streams(0, streams)
    }
}

/// Transport whose links are TCP connections, one reader thread per link.
pub struct TcpTransport<T> {
    rank: usize,
    writers: Vec<Option<Mutex<TcpStream>>>,
    receivers: Vec<Option<Receiver<Result<Message<T>, TransportError>>>>,
}

impl<T: Real> TcpTransport<T> {
    /// Joins the rendezvous hosted by worker 0 at `root`.
    pub fn connect(rank: usize, size: usize, root: SocketAddr) -> Result<Self, TransportError> {
        if rank == 0 || rank >= size {
            return Err(TransportError::InvalidPeer { peer: rank, size });
        }
        let listener = local_listener().map_err(io_err)?;
        let port = listener.local_addr().map_err(io_err)?.port() as u64;
        let mut root_stream = TcpStream::connect(root).map_err(io_err)?;
        write_u64s(&mut root_stream, &[rank as u64, port]).map_err(io_err)?;
        let n = read_u64(&mut root_stream).map_err(io_err)? as usize;
        if n != size {
            return Err(TransportError::Malformed(format!("worker count {n} != {size}")));
        }
        let ports = (0..size)
            .map(|_| read_u64(&mut root_stream))
            .collect::<io::Result<Vec<_>>>()
            .map_err(io_err)?;

        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        streams[0] = Some(root_stream);
        for (peer, &p) in ports.iter().enumerate().take(rank).skip(1) {
            let mut s = TcpStream::connect((Ipv4Addr::LOCALHOST, p as u16)).map_err(io_err)?;
            write_u64s(&mut s, &[rank as u64]).map_err(io_err)?;
            streams[peer] = Some(s);
        }
        let deadline = Instant::now() + RENDEZVOUS_TIMEOUT;
        for _ in rank + 1..size {
            let mut s = accept_before(&listener, deadline).map_err(io_err)?;
            let peer = read_u64(&mut s).map_err(io_err)? as usize;
            if peer <= rank || peer >= size || streams[peer].is_some() {
                return Err(TransportError::Malformed(format!("bad peer rank {peer}")));
            }
            streams[peer] = Some(s);
        }
        Self::from_streams(rank, streams)
    }

    fn from_streams(rank: usize, streams: Vec<Option<TcpStream>>) -> Result<Self, TransportError> {
        let mut writers = Vec::with_capacity(streams.len());
        let mut receivers = Vec::with_capacity(streams.len());
        for (peer, s) in streams.into_iter().enumerate() {
            let Some(s) = s else {
                writers.push(None);
                receivers.push(None);
                continue;
            };
            s.set_nodelay(true).map_err(io_err)?;
            let reader = s.try_clone().map_err(io_err)?;
            let (tx, rx) = channel();
            thread::spawn(move || {
                let mut r = BufReader::new(reader);
                loop {
                    let item = match read_frame(&mut r) {
                        Ok(body) => decode::<T>(&body),
                        Err(_) => Err(TransportError::Disconnected { peer }),
                    };
                    let stop = item.is_err();
                    if tx.send(item).is_err() || stop {
                        break;
                    }
                }
            });
            writers.push(Some(Mutex::new(s)));
            receivers.push(Some(rx));
        }
        Ok(Self {
            rank,
            writers,
            receivers,
        })
    }
}

impl<T: Real> Transport<T> for TcpTransport<T> {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.writers.len()
    }

    fn send(&self, to: usize, msg: Message<T>) -> Result<(), TransportError> {
        let size = self.size();
        let w = self
            .writers
            .get(to)
            .and_then(Option::as_ref)
            .ok_or(TransportError::InvalidPeer { peer: to, size })?;
        let frame = encode(&msg);
        let mut s = w.lock().unwrap_or_else(|e| e.into_inner());
        s.write_all(&frame)
            .and_then(|_| s.flush())
            .map_err(|_| TransportError::Disconnected { peer: to })
    }

    fn recv(&self, from: usize) -> Result<Message<T>, TransportError> {
        let size = self.size();
        let rx = self
            .receivers
            .get(from)
            .and_then(Option::as_ref)
            .ok_or(TransportError::InvalidPeer { peer: from, size })?;
        let msg = rx.recv().map_err(|_| TransportError::Disconnected { peer: from })??;
        match msg.payload {
            Payload::Abort(reason) => Err(TransportError::Aborted { from, reason }),
            _ => Ok(msg),
        }
    }
}

impl<T> Drop for TcpTransport<T> {
    fn drop(&mut self) {
        for w in self.writers.iter().flatten() {
            if let Ok(s) = w.lock() {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let msgs = vec![
            Message {
                tag: 42,
                payload: Payload::States(vec![
                    BlockState::new(vec![1.5, -2.25], vec![3.0], 1),
                    BlockState::new(vec![], vec![], 0),
                ]),
            },
            Message {
                tag: 7,
                payload: Payload::Values(vec![f64::MIN_POSITIVE, -0.0, 1e300]),
            },
            Message {
                tag: 0,
                payload: Payload::Abort("step 3 failed".into()),
            },
        ];
        for m in msgs {
            let frame = encode::<f64>(&m);
            let body = read_frame(&mut frame.as_slice()).unwrap();
            assert_eq!(decode::<f64>(&body).unwrap(), m);
        }
    }

    #[test]
    fn truncated_frame_is_rejected() {
        let m = Message::<f64> {
            tag: 1,
            payload: Payload::Values(vec![1.0, 2.0]),
        };
        let frame = encode(&m);
        let body = &frame[8..frame.len() - 3];
        assert!(matches!(decode::<f64>(body), Err(TransportError::Malformed(_))));
    }
}
