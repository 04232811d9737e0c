use std::sync::mpsc::{channel, Receiver, Sender};

use super::{Message, Payload, Transport, TransportError};

/// In-process transport: one unbounded channel per ordered worker pair.
pub struct ChannelTransport<T> {
    rank: usize,
    senders: Vec<Sender<Message<T>>>,
    receivers: Vec<Receiver<Message<T>>>,
}

impl<T: Send> ChannelTransport<T> {
    /// Fully connected set of `n` endpoints, indexed by rank.
    pub fn mesh(n: usize) -> Vec<Self> {
        // links[a][b] carries messages from a to b
        let mut senders: Vec<Vec<Option<Sender<Message<T>>>>> = (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
        let mut receivers: Vec<Vec<Option<Receiver<Message<T>>>>> = (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
        for a in 0..n {
            for b in 0..n {
                let (tx, rx) = channel();
                senders[a][b] = Some(tx);
                receivers[b][a] = Some(rx);
            }
        }
        senders
            .into_iter()
            .zip(receivers)
            .enumerate()
            .map(|(rank, (s, r))| Self {
                rank,
                senders: s.into_iter().flatten().collect(),
                receivers: r.into_iter().flatten().collect(),
            })
            .collect()
    }
}

impl<T: Send> Transport<T> for ChannelTransport<T> {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.senders.len()
    }

    fn send(&self, to: usize, msg: Message<T>) -> Result<(), TransportError> {
        let tx = self.senders.get(to).ok_or(TransportError::InvalidPeer {
            peer: to,
            size: self.size(),
        })?;
        tx.send(msg).map_err(|_| TransportError::Disconnected { peer: to })
    }

    fn recv(&self, from: usize) -> Result<Message<T>, TransportError> {
        let rx = self.receivers.get(from).ok_or(TransportError::InvalidPeer {
            peer: from,
            size: self.size(),
        })?;
        let msg = rx.recv().map_err(|_| TransportError::Disconnected { peer: from })?;
        match msg.payload {
            Payload::Abort(reason) => Err(TransportError::Aborted { from, reason }),
            _ => Ok(msg),
        }
    }
}
