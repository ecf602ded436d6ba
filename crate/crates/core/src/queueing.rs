//! Fluid queue ledgers.
//!
//! Each queue holds timestamped chunks of content. A slot's arrivals join
//! the queue, then service removes content from the front (FIFO) or back
//! (LIFO); service beyond the content present is emitted as a null
//! departure, so `q(t+1) = max[q(t) − μ(t) + A(t), 0]` and every arrival
//! enters the queue. Delay is amount-weighted; content served in its
//! arrival slot has delay 0.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    Fifo,
    Lifo,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("queue {queue}: negative or non-finite {field} {value}")]
    BadInput { queue: usize, field: &'static str, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Chunk {
    arrival_slot: u64,
    amount: f64,
    is_null: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepartureRecord {
    pub queue: usize,
    pub amount: f64,
    pub arrival_slot: u64,
    pub departure_slot: u64,
    pub was_null: bool,
}

impl DepartureRecord {
    pub fn delay(&self) -> u64 {
        self.departure_slot - self.arrival_slot
    }
}

/// Result of forcing the backlog to a target vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentRecord {
    /// Content removed per queue (real and null).
    pub dropped: Vec<f64>,
    /// Real (non-null) content among `dropped`.
    pub dropped_real: Vec<f64>,
    pub added_null: Vec<f64>,
}

impl AdjustmentRecord {
    pub fn is_noop(&self) -> bool {
        self.dropped.iter().chain(&self.added_null).all(|x| *x == 0.0)
    }
}

/// Running per-queue totals used for conservation checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub arrived: f64,
    pub departed_real: f64,
    pub departed_null_content: f64,
    pub null_service: f64,
    pub dropped_real: f64,
    pub dropped_null: f64,
    pub added_null: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueLedger {
    queues: Vec<VecDeque<Chunk>>,
    totals: Vec<f64>,
    stats: Vec<LedgerTotals>,
}

impl QueueLedger {
    pub fn new(r: usize) -> Self {
        Self { queues: vec![VecDeque::new(); r], totals: vec![0.0; r], stats: vec![LedgerTotals::default(); r] }
    }

    pub fn r(&self) -> usize {
        self.queues.len()
    }

    /// Current backlog vector `q(t)`.
    pub fn backlog(&self) -> &[f64] {
        &self.totals
    }

    /// Real (non-null) content currently queued.
    pub fn real_backlog(&self, queue: usize) -> f64 {
        self.queues[queue].iter().filter(|c| !c.is_null).map(|c| c.amount).sum()
    }

    pub fn totals(&self, queue: usize) -> &LedgerTotals {
        &self.stats[queue]
    }

    /// Sum of chunk amounts; equals `backlog()[queue]` up to rounding.
    pub fn chunk_sum(&self, queue: usize) -> f64 {
        self.queues[queue].iter().map(|c| c.amount).sum()
    }

    pub fn chunk_count(&self, queue: usize) -> usize {
        self.queues[queue].len()
    }

    /// Arrival slots front-to-back.
    pub fn arrival_slots(&self, queue: usize) -> impl Iterator<Item = u64> + '_ {
        self.queues[queue].iter().map(|c| c.arrival_slot)
    }

    fn check(&self, v: &[f64], field: &'static str) -> Result<(), QueueError> {
        if v.len() != self.r() {
            return Err(QueueError::Dimension { expected: self.r(), got: v.len() });
        }
        for (queue, &value) in v.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(QueueError::BadInput { queue, field, value });
            }
        }
        Ok(())
    }

    /// One slot: arrivals join, then service. Departures are appended to `out`.
    pub fn apply_slot(
        &mut self,
        arrivals: &[f64],
        services: &[f64],
        slot: u64,
        discipline: Discipline,
        out: &mut Vec<DepartureRecord>,
    ) -> Result<(), QueueError> {
        self.check(arrivals, "arrival")?;
        self.check(services, "service")?;
        for j in 0..self.r() {
            let a = arrivals[j];
            if a > 0.0 {
                self.queues[j].push_back(Chunk { arrival_slot: slot, amount: a, is_null: false });
                self.stats[j].arrived += a;
            }
            self.serve(j, services[j], slot, discipline, out);
            // The cached total follows the scalar recursion exactly.
            self.totals[j] = (self.totals[j] - services[j] + a).max(0.0);
            if self.queues[j].is_empty() {
                self.totals[j] = 0.0;
            }
        }
        Ok(())
    }

    fn serve(&mut self, j: usize, mu: f64, slot: u64, discipline: Discipline, out: &mut Vec<DepartureRecord>) {
        let mut remaining = mu;
        let q = &mut self.queues[j];
        let stats = &mut self.stats[j];
        while remaining > 0.0 {
            let chunk = match discipline {
                Discipline::Fifo => q.front_mut(),
                Discipline::Lifo => q.back_mut(),
            };
            let Some(chunk) = chunk else { break };
            let take = remaining.min(chunk.amount);
            let rec = DepartureRecord {
                queue: j,
                amount: take,
                arrival_slot: chunk.arrival_slot,
                departure_slot: slot,
                was_null: chunk.is_null,
            };
            if chunk.is_null {
                stats.departed_null_content += take;
            } else {
                stats.departed_real += take;
            }
            out.push(rec);
            remaining -= take;
            // Whole chunk consumed (or a rounding sliver left).
            if chunk.amount - take <= 1e-12 * chunk.amount.max(1.0) {
                let _ = match discipline {
                    Discipline::Fifo => q.pop_front(),
                    Discipline::Lifo => q.pop_back(),
                };
            } else {
                chunk.amount -= take;
            }
        }
        if remaining > 1e-12 {
            stats.null_service += remaining;
            out.push(DepartureRecord {
                queue: j,
                amount: remaining,
                arrival_slot: slot,
                departure_slot: slot,
                was_null: true,
            });
        }
    }

    /// Drops newest content or appends null content until `q = target`.
    pub fn adjust_to(&mut self, target: &[f64], slot: u64) -> Result<AdjustmentRecord, QueueError> {
        self.check(target, "target")?;
        let r = self.r();
        let mut rec = AdjustmentRecord { dropped: vec![0.0; r], dropped_real: vec![0.0; r], added_null: vec![0.0; r] };
        for j in 0..r {
            let q = self.totals[j];
            if q > target[j] {
                let mut excess = q - target[j];
                while excess > 0.0 {
                    let Some(chunk) = self.queues[j].back_mut() else { break };
                    let take = excess.min(chunk.amount);
                    rec.dropped[j] += take;
                    if !chunk.is_null {
                        rec.dropped_real[j] += take;
                    }
                    excess -= take;
                    if chunk.amount - take <= 1e-12 * chunk.amount.max(1.0) {
                        self.queues[j].pop_back();
                    } else {
                        chunk.amount -= take;
                    }
                }
                self.stats[j].dropped_real += rec.dropped_real[j];
                self.stats[j].dropped_null += rec.dropped[j] - rec.dropped_real[j];
            } else if q < target[j] {
                let add = target[j] - q;
                self.queues[j].push_back(Chunk { arrival_slot: slot, amount: add, is_null: true });
                rec.added_null[j] = add;
                self.stats[j].added_null += add;
            }
            self.totals[j] = target[j];
        }
        Ok(rec)
    }
}

/// Delay and throughput summary of a departure stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    /// Amount-weighted mean delay; `None` when nothing departed.
    pub mean_delay: Option<f64>,
    /// Delivered (non-null) amount per queue per slot.
    pub delivered_rate: Vec<f64>,
    /// Ledger totals left at the horizon.
    pub stuck_backlog: Vec<f64>,
}

/// Incremental form of [`delay_stats`], so runs need not store departures.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayAccumulator {
    include_null: bool,
    weighted_delay: f64,
    weight: f64,
    delivered: Vec<f64>,
}

impl DelayAccumulator {
    pub fn new(r: usize, include_null: bool) -> Self {
        Self { include_null, weighted_delay: 0.0, weight: 0.0, delivered: vec![0.0; r] }
    }

    pub fn add(&mut self, rec: &DepartureRecord) {
        if !rec.was_null {
            self.delivered[rec.queue] += rec.amount;
        }
        if !rec.was_null || self.include_null {
            self.weighted_delay += rec.amount * rec.delay() as f64;
            self.weight += rec.amount;
        }
    }

    pub fn finish(&self, horizon: u64, stuck_backlog: &[f64]) -> DelayStats {
        let h = horizon.max(1) as f64;
        DelayStats {
            mean_delay: (self.weight > 0.0).then(|| self.weighted_delay / self.weight),
            delivered_rate: self.delivered.iter().map(|d| d / h).collect(),
            stuck_backlog: stuck_backlog.to_vec(),
        }
    }
}

pub fn delay_stats<'a>(
    departures: impl IntoIterator<Item = &'a DepartureRecord>,
    include_null: bool,
    horizon: u64,
    stuck_backlog: &[f64],
) -> DelayStats {
    let mut acc = DelayAccumulator::new(stuck_backlog.len(), include_null);
    for d in departures {
        acc.add(d);
    }
    acc.finish(horizon, stuck_backlog)
}
