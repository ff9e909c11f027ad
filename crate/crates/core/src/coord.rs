//! Simulated intention exchange: per-recipient queues, a connectivity matrix,
//! and a per-tick delivery barrier that makes coordination rounds independent
//! of agent service order.

use crate::error::{Error, Result};
use serde::Serialize;

/// A robot's currently selected policy, broadcast once per tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentionMessage {
    pub sender: usize,
    pub tick: u64,
    pub policy_id: usize,
    pub actions: Vec<String>,
    pub goal: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetachReason {
    None,
    Battery,
}

#[derive(Debug, Clone)]
pub struct MessageBus {
    robots: usize,
    queues: Vec<Vec<IntentionMessage>>,
    connected: Vec<Vec<bool>>,
    detach_reason: Vec<DetachReason>,
    last_tick: Vec<Option<u64>>,
}

impl MessageBus {
    pub fn new(robots: usize) -> Self {
        MessageBus {
            robots,
            queues: vec![Vec::new(); robots],
            connected: (0..robots)
                .map(|i| (0..robots).map(|j| i != j).collect())
                .collect(),
            detach_reason: vec![DetachReason::None; robots],
            last_tick: vec![None; robots],
        }
    }

    pub fn robots(&self) -> usize {
        self.robots
    }

    /// Enqueue the message for every peer currently connected to the sender.
    /// Disconnected peers are silently skipped; self-delivery never occurs.
    pub fn broadcast_intention(&mut self, msg: IntentionMessage) -> Result<()> {
        if let Some(last) = self.last_tick[msg.sender] {
            if msg.tick < last {
                return Err(Error::Config(format!(
                    "sender {} tick went backwards: {} after {}",
                    msg.sender, msg.tick, last
                )));
            }
        }
        self.last_tick[msg.sender] = Some(msg.tick);
        for peer in 0..self.robots {
            if peer != msg.sender && self.connected[msg.sender][peer] {
                self.queues[peer].push(msg.clone());
            }
        }
        Ok(())
    }

    /// Drain the recipient's queue of messages with `tick <= now`, ordered by
    /// sender id then tick. Enqueue order within a round does not matter.
    pub fn collect_intentions(&mut self, recipient: usize, now: u64) -> Vec<IntentionMessage> {
        let queue = &mut self.queues[recipient];
        let mut ready: Vec<IntentionMessage> = Vec::new();
        let mut rest: Vec<IntentionMessage> = Vec::new();
        for msg in queue.drain(..) {
            if msg.tick <= now {
                ready.push(msg);
            } else {
                rest.push(msg);
            }
        }
        *queue = rest;
        ready.sort_by_key(|m| (m.sender, m.tick));
        ready
    }

    /// Peers currently connected to `robot`.
    pub fn count_connected(&self, robot: usize) -> usize {
        self.connected[robot].iter().filter(|c| **c).count()
    }

    pub fn is_connected(&self, a: usize, b: usize) -> bool {
        a != b && self.connected[a][b]
    }

    pub fn detach(&mut self, robot: usize, reason: DetachReason) {
        self.detach_reason[robot] = reason;
        for peer in 0..self.robots {
            self.connected[robot][peer] = false;
            self.connected[peer][robot] = false;
        }
        self.connected[robot][robot] = false;
        // a detached robot's stale messages must not arrive later
        for q in &mut self.queues {
            q.retain(|m| m.sender != robot);
        }
        self.queues[robot].clear();
    }

    pub fn reconnect(&mut self, robot: usize) {
        self.detach_reason[robot] = DetachReason::None;
        for peer in 0..self.robots {
            if peer != robot && self.detach_reason[peer] == DetachReason::None {
                self.connected[robot][peer] = true;
                self.connected[peer][robot] = true;
            }
        }
    }

    pub fn detach_reason(&self, robot: usize) -> DetachReason {
        self.detach_reason[robot]
    }

    /// Per-tick barrier: canonicalize queue order so the round outcome does
    /// not depend on the order agents submitted their broadcasts.
    pub fn barrier_round(&mut self, _tick: u64) {
        for q in &mut self.queues {
            q.sort_by_key(|m| (m.sender, m.tick));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: usize, tick: u64, policy: usize) -> IntentionMessage {
        IntentionMessage {
            sender,
            tick,
            policy_id: policy,
            actions: vec![],
            goal: None,
        }
    }

    #[test]
    fn broadcast_fans_out_to_connected_peers() {
        let mut bus = MessageBus::new(3);
        bus.broadcast_intention(msg(0, 0, 7)).unwrap();
        assert_eq!(bus.collect_intentions(1, 0).len(), 1);
        assert_eq!(bus.collect_intentions(2, 0).len(), 1);
        // self-delivery never occurs
        assert!(bus.collect_intentions(0, 0).is_empty());
    }

    #[test]
    fn detached_sender_reaches_nobody() {
        let mut bus = MessageBus::new(3);
        bus.detach(0, DetachReason::Battery);
        bus.broadcast_intention(msg(0, 1, 7)).unwrap();
        assert!(bus.collect_intentions(1, 1).is_empty());
        assert!(bus.collect_intentions(2, 1).is_empty());
        assert_eq!(bus.detach_reason(0), DetachReason::Battery);
        assert_eq!(bus.count_connected(1), 1);
        bus.reconnect(0);
        assert_eq!(bus.count_connected(0), 2);
        assert_eq!(bus.detach_reason(0), DetachReason::None);
    }

    #[test]
    fn count_connected_bounds() {
        let bus = MessageBus::new(3);
        assert_eq!(bus.count_connected(0), 2);
        let single = MessageBus::new(1);
        assert_eq!(single.count_connected(0), 0);
    }

    #[test]
    fn collect_sorts_regardless_of_enqueue_order() {
        let mut a = MessageBus::new(4);
        let mut b = MessageBus::new(4);
        let order_a = [2usize, 1, 3];
        let order_b = [3usize, 2, 1];
        for s in order_a {
            a.broadcast_intention(msg(s, 0, s)).unwrap();
        }
        for s in order_b {
            b.broadcast_intention(msg(s, 0, s)).unwrap();
        }
        a.barrier_round(0);
        b.barrier_round(0);
        let ra = a.collect_intentions(0, 0);
        let rb = b.collect_intentions(0, 0);
        assert_eq!(ra, rb);
        assert_eq!(ra.iter().map(|m| m.sender).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn future_messages_stay_queued() {
        let mut bus = MessageBus::new(2);
        bus.broadcast_intention(msg(0, 5, 1)).unwrap();
        assert!(bus.collect_intentions(1, 4).is_empty());
        assert_eq!(bus.collect_intentions(1, 5).len(), 1);
    }

    #[test]
    fn sender_tick_must_be_monotone() {
        let mut bus = MessageBus::new(2);
        bus.broadcast_intention(msg(0, 3, 1)).unwrap();
        assert!(bus.broadcast_intention(msg(0, 2, 1)).is_err());
    }
}
