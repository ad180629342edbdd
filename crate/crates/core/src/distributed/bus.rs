use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// `(row, Σ_k Λ[k](row, owned cols) ĝ)` partial budgets sent to the row owner
    Budget(Vec<(usize, f64)>),
    /// `(row, σ_row)` from the row owner
    Sigma(Vec<(usize, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub round: usize,
    pub payload: Payload,
}

/// Simulated network that only carries messages between declared neighbors.
#[derive(Clone, Debug)]
pub struct MessageBus {
    neighbors: Vec<Vec<usize>>,
    inbox: Vec<Vec<Message>>,
    log: Vec<Message>,
}

impl MessageBus {
    /// `neighbors[i]` must be sorted.
    pub fn new(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        Self {
            neighbors,
            inbox: vec![Vec::new(); n],
            log: Vec::new(),
        }
    }

    pub fn send(&mut self, msg: Message) -> Result<()> {
        let ok = self
            .neighbors
            .get(msg.from)
            .is_some_and(|nb| nb.binary_search(&msg.to).is_ok());
        if !ok {
            return Err(Error::Invalid(format!(
                "patch {} tried to message non-neighbor {}",
                msg.from, msg.to
            )));
        }
        self.log.push(msg.clone());
        self.inbox[msg.to].push(msg);
        Ok(())
    }

    /// Take every message waiting for `to`, in send order.
    pub fn drain(&mut self, to: usize) -> Vec<Message> {
        std::mem::take(&mut self.inbox[to])
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbors.get(a).is_some_and(|nb| nb.binary_search(&b).is_ok())
    }
}
