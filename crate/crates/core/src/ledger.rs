//! Exposure ledger: an audit layer recording which pieces of the sampled
//! randomness each stage has revealed.
//!
//! The full sample is generated upfront; by the principle of deferred
//! decisions this is distributionally identical to lazy sampling. The ledger
//! makes the exposure discipline checkable: a quantity must be revealed
//! before it is read, strict quantities may be revealed at most once, and
//! membership probes are cached so a probe outcome is never re-randomized.
//!
//! Enforcement is optional: with `enforce = false` every call is a cheap
//! no-op, which is what parameter sweeps use.

use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Layer index 0..3 for the three sampled digraphs.
pub type Layer = u8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerViolation {
    #[error("degree of vertex {v} in layer {layer} read before reveal")]
    DegreeNotRevealed { layer: Layer, v: u32 },
    #[error("arc slot {idx} of vertex {v} in layer {layer} revealed twice")]
    DoubleLocationReveal { layer: Layer, v: u32, idx: u32 },
    #[error("arc color at slot {idx} of vertex {v} in layer {layer} revealed twice")]
    DoubleColorReveal { layer: Layer, v: u32, idx: u32 },
    #[error("arc slot {idx} of vertex {v} in layer {layer} read before reveal")]
    LocationNotRevealed { layer: Layer, v: u32, idx: u32 },
    #[error("count {tag:?} at vertex {v} in layer {layer} revealed twice")]
    DoubleCountReveal { layer: Layer, v: u32, tag: CountTag },
    #[error("probe of pair ({u},{v}) in layer {layer} re-randomized: was {was}, got {got}")]
    ProbeMismatch { layer: Layer, u: u32, v: u32, was: bool, got: bool },
}

/// Tags for numeric counts revealed without locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountTag {
    /// Residual out-degree after the dangerous-set growth.
    Residual,
    /// Out-arcs into the first endpoint partition side.
    TowardB1,
    /// Out-arcs into the post-absorption A side.
    TowardA2,
    /// Out-arcs into the final B side.
    TowardB3,
    /// Out-arcs into the final A side.
    TowardA3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Degree { layer: Layer, v: u32 },
    ArcLocation { layer: Layer, v: u32, idx: u32 },
    ArcColor { layer: Layer, v: u32, idx: u32 },
    Count { layer: Layer, v: u32, tag: CountTag },
    Probe { layer: Layer, u: u32, v: u32, present: bool },
    EdgeColor { graph: u8, u: u32, v: u32 },
}

/// Chronological record of everything a pipeline run has revealed.
#[derive(Debug, Clone)]
pub struct ExposureLedger {
    enforce: bool,
    degrees: HashSet<(Layer, u32)>,
    locations: HashSet<(Layer, u32, u32)>,
    colors: HashSet<(Layer, u32, u32)>,
    counts: HashSet<(Layer, u32, CountTag)>,
    probes: HashMap<(Layer, u32, u32), bool>,
    edge_colors: HashSet<(u8, u32, u32)>,
    log: Vec<Event>,
}

impl ExposureLedger {
    pub fn new(enforce: bool) -> Self {
        ExposureLedger {
            enforce,
            degrees: HashSet::new(),
            locations: HashSet::new(),
            colors: HashSet::new(),
            counts: HashSet::new(),
            probes: HashMap::new(),
            edge_colors: HashSet::new(),
            log: Vec::new(),
        }
    }

    pub fn enforcing(&self) -> bool {
        self.enforce
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    /// Degree reveals are idempotent: the first access logs, later accesses
    /// are reads of already-revealed data.
    pub fn reveal_degree(&mut self, layer: Layer, v: u32) {
        if !self.enforce {
            return;
        }
        if self.degrees.insert((layer, v)) {
            self.log.push(Event::Degree { layer, v });
        }
    }

    pub fn reveal_arc_location(
        &mut self,
        layer: Layer,
        v: u32,
        idx: u32,
    ) -> Result<(), LedgerViolation> {
        if !self.enforce {
            return Ok(());
        }
        if !self.locations.insert((layer, v, idx)) {
            return Err(LedgerViolation::DoubleLocationReveal { layer, v, idx });
        }
        self.log.push(Event::ArcLocation { layer, v, idx });
        Ok(())
    }

    /// Reveals an arc location if it is still hidden; reading an
    /// already-revealed location is allowed.
    pub fn reveal_arc_location_idempotent(&mut self, layer: Layer, v: u32, idx: u32) {
        if !self.enforce {
            return;
        }
        if self.locations.insert((layer, v, idx)) {
            self.log.push(Event::ArcLocation { layer, v, idx });
        }
    }

    pub fn reveal_arc_color(
        &mut self,
        layer: Layer,
        v: u32,
        idx: u32,
    ) -> Result<(), LedgerViolation> {
        if !self.enforce {
            return Ok(());
        }
        if !self.colors.insert((layer, v, idx)) {
            return Err(LedgerViolation::DoubleColorReveal { layer, v, idx });
        }
        self.log.push(Event::ArcColor { layer, v, idx });
        Ok(())
    }

    /// Reveals an arc color if still hidden; re-reading revealed data is
    /// allowed (stage retries re-examine what an earlier attempt exposed).
    pub fn reveal_arc_color_idempotent(&mut self, layer: Layer, v: u32, idx: u32) {
        if !self.enforce {
            return;
        }
        if self.colors.insert((layer, v, idx)) {
            self.log.push(Event::ArcColor { layer, v, idx });
        }
    }

    pub fn assert_location_revealed(
        &self,
        layer: Layer,
        v: u32,
        idx: u32,
    ) -> Result<(), LedgerViolation> {
        if self.enforce && !self.locations.contains(&(layer, v, idx)) {
            return Err(LedgerViolation::LocationNotRevealed { layer, v, idx });
        }
        Ok(())
    }

    pub fn location_revealed(&self, layer: Layer, v: u32, idx: u32) -> bool {
        self.locations.contains(&(layer, v, idx))
    }

    pub fn reveal_count(
        &mut self,
        layer: Layer,
        v: u32,
        tag: CountTag,
    ) -> Result<(), LedgerViolation> {
        if !self.enforce {
            return Ok(());
        }
        if !self.counts.insert((layer, v, tag)) {
            return Err(LedgerViolation::DoubleCountReveal { layer, v, tag });
        }
        self.log.push(Event::Count { layer, v, tag });
        Ok(())
    }

    /// Records a membership probe of the ordered pair `(u, v)`. Probes are
    /// cached: repeating a probe is fine, but the outcome must match.
    pub fn probe_pair(
        &mut self,
        layer: Layer,
        u: u32,
        v: u32,
        present: bool,
    ) -> Result<(), LedgerViolation> {
        if !self.enforce {
            return Ok(());
        }
        match self.probes.get(&(layer, u, v)) {
            Some(&was) => {
                if was != present {
                    return Err(LedgerViolation::ProbeMismatch {
                        layer,
                        u,
                        v,
                        was,
                        got: present,
                    });
                }
            }
            None => {
                self.probes.insert((layer, u, v), present);
                self.log.push(Event::Probe {
                    layer,
                    u,
                    v,
                    present,
                });
            }
        }
        Ok(())
    }

    /// Records that the precise color of an undirected edge of `G_i` has
    /// been revealed. Idempotent: examining the same edge from the other
    /// endpoint is a read.
    pub fn reveal_edge_color(&mut self, graph: u8, u: u32, v: u32) {
        if !self.enforce {
            return;
        }
        let key = (graph, u.min(v), u.max(v));
        if self.edge_colors.insert(key) {
            self.log.push(Event::EdgeColor {
                graph,
                u: key.1,
                v: key.2,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_reveals_fire_once() {
        let mut led = ExposureLedger::new(true);
        led.reveal_arc_location(1, 3, 0).unwrap();
        assert!(matches!(
            led.reveal_arc_location(1, 3, 0),
            Err(LedgerViolation::DoubleLocationReveal { .. })
        ));
        assert!(led.assert_location_revealed(1, 3, 0).is_ok());
        assert!(led.assert_location_revealed(1, 3, 1).is_err());
    }

    #[test]
    fn probes_cache_and_reject_rerandomization() {
        let mut led = ExposureLedger::new(true);
        led.probe_pair(0, 1, 2, false).unwrap();
        led.probe_pair(0, 1, 2, false).unwrap();
        assert!(led.probe_pair(0, 1, 2, true).is_err());
        assert_eq!(led.log().len(), 1);
    }

    #[test]
    fn disabled_ledger_is_silent() {
        let mut led = ExposureLedger::new(false);
        led.reveal_arc_location(1, 3, 0).unwrap();
        led.reveal_arc_location(1, 3, 0).unwrap();
        assert!(led.log().is_empty());
    }

    #[test]
    fn degree_reveal_idempotent() {
        let mut led = ExposureLedger::new(true);
        led.reveal_degree(2, 5);
        led.reveal_degree(2, 5);
        assert_eq!(led.log().len(), 1);
    }
}
