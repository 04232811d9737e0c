//! Message passing between time-parallel workers.
//!
//! Workers are peers that run the same program. Every ordered pair of
//! workers has a reliable FIFO link, so a message sequence sent from `a` to
//! `b` arrives in order regardless of the backend.

mod channel;
mod decomposition;
mod tcp;

use thiserror::Error;

pub use channel::ChannelTransport;
pub use decomposition::Decomposition;
pub use tcp::{TcpRendezvous, TcpTransport};

use crate::scalar::Real;
use crate::state::BlockState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("worker {from} aborted: {reason}")]
    Aborted { from: usize, reason: String },
    #[error("link to worker {peer} closed")]
    Disconnected { peer: usize },
    #[error("expected message tag {expected:#x} from worker {from}, got {got:#x}")]
    UnexpectedTag { from: usize, expected: u64, got: u64 },
    #[error("expected {expected} from worker {from}")]
    UnexpectedPayload { from: usize, expected: &'static str },
    #[error("worker {peer} out of range for {size} workers")]
    InvalidPeer { peer: usize, size: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload<T> {
    States(Vec<BlockState<T>>),
    Values(Vec<f64>),
    Abort(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub tag: u64,
    pub payload: Payload<T>,
}

/// Point-to-point transport. `recv` blocks until a message from `from` arrives
/// and turns an abort notice into [`TransportError::Aborted`].
pub trait Transport<T>: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&self, to: usize, msg: Message<T>) -> Result<(), TransportError>;
    fn recv(&self, from: usize) -> Result<Message<T>, TransportError>;
}

impl<T, Tr: Transport<T> + ?Sized> Transport<T> for Box<Tr> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn size(&self) -> usize {
        (**self).size()
    }
    fn send(&self, to: usize, msg: Message<T>) -> Result<(), TransportError> {
        (**self).send(to, msg)
    }
    fn recv(&self, from: usize) -> Result<Message<T>, TransportError> {
        (**self).recv(from)
    }
}

/// Message kinds; the tag combines a kind with a level index.
pub mod tags {
    pub const BOUNDARY: u64 = 1;
    pub const COARSE_BOUNDARY: u64 = 2;
    pub const REDUCE: u64 = 3;
    pub const BROADCAST: u64 = 4;
    pub const GATHER: u64 = 5;
    pub const SCATTER: u64 = 6;
    pub const OUTPUT: u64 = 7;

    pub fn tag(kind: u64, level: usize) -> u64 {
        (kind << 32) | level as u64
    }
}

/// Collective helpers on top of a transport. Reductions gather partials on
/// worker 0, combine them in rank order and broadcast the result, so the
/// value is identical on all workers and across runs.
pub struct Communicator<T, Tr> {
    transport: Tr,
    _marker: std::marker::PhantomData<fn() -> T>,
}

impl<T: Real, Tr: Transport<T>> Communicator<T, Tr> {
    pub fn new(transport: Tr) -> Self {
        Self {
            transport,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn size(&self) -> usize {
        self.transport.size()
    }

    pub fn send_states(&self, to: usize, tag: u64, states: Vec<BlockState<T>>) -> Result<(), TransportError> {
        self.transport.send(
            to,
            Message {
                tag,
                payload: Payload::States(states),
            },
        )
    }

    fn recv_tagged(&self, from: usize, tag: u64) -> Result<Payload<T>, TransportError> {
        let msg = self.transport.recv(from)?;
        if msg.tag != tag {
            return Err(TransportError::UnexpectedTag {
                from,
                expected: tag,
                got: msg.tag,
            });
        }
        Ok(msg.payload)
    }

    pub fn recv_states(&self, from: usize, tag: u64) -> Result<Vec<BlockState<T>>, TransportError> {
        match self.recv_tagged(from, tag)? {
            Payload::States(s) => Ok(s),
            _ => Err(TransportError::UnexpectedPayload {
                from,
                expected: "states",
            }),
        }
    }

    pub fn send_values(&self, to: usize, tag: u64, values: Vec<f64>) -> Result<(), TransportError> {
        self.transport.send(
            to,
            Message {
                tag,
                payload: Payload::Values(values),
            },
        )
    }

    pub fn recv_values(&self, from: usize, tag: u64) -> Result<Vec<f64>, TransportError> {
        match self.recv_tagged(from, tag)? {
            Payload::Values(v) => Ok(v),
            _ => Err(TransportError::UnexpectedPayload {
                from,
                expected: "values",
            }),
        }
    }

    /// Sends the boundary state to the right neighbour.
    pub fn send_boundary(&self, to: usize, level: usize, state: BlockState<T>) -> Result<(), TransportError> {
        self.send_states(to, tags::tag(tags::BOUNDARY, level), vec![state])
    }

    /// Receives the state immediately left of the owned range.
    pub fn recv_boundary(&self, from: usize, level: usize) -> Result<BlockState<T>, TransportError> {
        let mut v = self.recv_states(from, tags::tag(tags::BOUNDARY, level))?;
        match (v.pop(), v.is_empty()) {
            (Some(s), true) => Ok(s),
            _ => Err(TransportError::Malformed("boundary message must hold one state".into())),
        }
    }

    /// Elementwise combination of per-worker vectors in rank order; every
    /// worker receives the result.
    pub fn allreduce(&self, partial: Vec<f64>, op: fn(f64, f64) -> f64) -> Result<Vec<f64>, TransportError> {
        let tag_r = tags::tag(tags::REDUCE, 0);
        let tag_b = tags::tag(tags::BROADCAST, 0);
        if self.rank() != 0 {
            self.send_values(0, tag_r, partial)?;
            return self.recv_values(0, tag_b);
        }
        let mut acc = partial;
        for w in 1..self.size() {
            let p = self.recv_values(w, tag_r)?;
            if p.len() != acc.len() {
                return Err(TransportError::Malformed("reduction length mismatch".into()));
            }
            for (a, b) in acc.iter_mut().zip(p) {
                *a = op(*a, b);
            }
        }
        for w in 1..self.size() {
            self.send_values(w, tag_b, acc.clone())?;
        }
        Ok(acc)
    }

    /// Global norm from local sums of squares.
    pub fn global_norm(&self, local_sum_squares: f64) -> Result<f64, TransportError> {
        Ok(self.allreduce(vec![local_sum_squares], |a, b| a + b)?[0].sqrt())
    }

    pub fn global_max(&self, local: f64) -> Result<f64, TransportError> {
        Ok(self.allreduce(vec![local], f64::max)?[0])
    }

    /// Collects every worker's states on worker 0 in rank order. Other
    /// workers get `None`.
    pub fn gather_states(
        &self,
        tag: u64,
        local: Vec<BlockState<T>>,
    ) -> Result<Option<Vec<Vec<BlockState<T>>>>, TransportError> {
        if self.rank() != 0 {
            self.send_states(0, tag, local)?;
            return Ok(None);
        }
        let mut all = Vec::with_capacity(self.size());
        all.push(local);
        for w in 1..self.size() {
            all.push(self.recv_states(w, tag)?);
        }
        Ok(Some(all))
    }

    /// Inverse of [`Self::gather_states`]: worker 0 passes one block per
    /// worker and every worker receives its own block.
    pub fn scatter_states(
        &self,
        tag: u64,
        blocks: Option<Vec<Vec<BlockState<T>>>>,
    ) -> Result<Vec<BlockState<T>>, TransportError> {
        if self.rank() != 0 {
            return self.recv_states(0, tag);
        }
        let blocks = blocks.ok_or_else(|| TransportError::Malformed("worker 0 must supply blocks".into()))?;
        if blocks.len() != self.size() {
            return Err(TransportError::Malformed("one block per worker required".into()));
        }
        let mut it = blocks.into_iter();
        let own = it.next().unwrap_or_default();
        for (w, b) in it.enumerate() {
            self.send_states(w + 1, tag, b)?;
        }
        Ok(own)
    }

    /// Best-effort notice to all peers that this worker is giving up.
    pub fn abort(&self, reason: &str) {
        for w in (0..self.size()).filter(|&w| w != self.rank()) {
            let _ = self.transport.send(
                w,
                Message {
                    tag: 0,
                    payload: Payload::Abort(reason.to_string()),
                },
            );
        }
    }
}

/// Runs `body` on `n` worker threads connected by channels and returns the
/// results in rank order.
pub fn run_threads<T, R, F>(n: usize, body: F) -> Vec<R>
where
    T: Real,
    R: Send,
    F: Fn(ChannelTransport<T>) -> R + Sync,
{
    let transports = ChannelTransport::mesh(n);
    std::thread::scope(|scope| {
        let handles: Vec<_> = transports
            .into_iter()
            .map(|t| {
                let body = &body;
                scope.spawn(move || body(t))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    })
}
