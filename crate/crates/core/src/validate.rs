//! Checks of the structural assumptions on an instance's cost functions.

use std::fmt;

use serde::Serialize;

use crate::cost::{Shape, ShapeViolation};
use crate::instance::Instance;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Finding {
    Distortion { packet: u32, problem: String },
    DelayCost { packet: u32, problem: String },
    Energy { server: u32, problem: String },
    ArrivalBeyondHorizon { packet: u32, arrival: u32, horizon: u32 },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Distortion { packet, problem } => write!(f, "packet {packet}: D {problem}"),
            Finding::DelayCost { packet, problem } => write!(f, "packet {packet}: C {problem}"),
            Finding::Energy { server, problem } => write!(f, "server {server}: g {problem}"),
            Finding::ArrivalBeyondHorizon { packet, arrival, horizon } => {
                write!(f, "packet {packet}: arrival {arrival} beyond horizon {horizon}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return f.write_str("valid");
        }
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{finding}")?;
        }
        Ok(())
    }
}

fn describe(v: &ShapeViolation) -> String {
    v.to_string()
}

/// Lists every violated assumption: utilities must be non-decreasing with
/// non-increasing increments on `0..=k_p` and vanish at 0; delay costs must be
/// convex, non-decreasing and vanish at 0 over the horizon; energies likewise
/// up to the total number of sub-packets.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut findings = Vec::new();
    let span = u64::from(inst.horizon) + 1;
    let load = u64::from(inst.total_subpackets().max(2));
    for p in &inst.packets {
        if p.arrival > inst.horizon {
            findings.push(Finding::ArrivalBeyondHorizon { packet: p.id, arrival: p.arrival, horizon: inst.horizon });
        }
        for v in p.distortion.check_shape(Shape::Concave, p.subpackets.into()) {
            findings.push(Finding::Distortion { packet: p.id, problem: describe(&v) });
        }
        for v in p.delay_cost.check_shape(Shape::Convex, span) {
            findings.push(Finding::DelayCost { packet: p.id, problem: describe(&v) });
        }
    }
    for (server, g) in inst.energy.iter().enumerate() {
        for v in g.check_shape(Shape::Convex, load) {
            findings.push(Finding::Energy { server: server as u32, problem: describe(&v) });
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFamily;
    use crate::instance::Packet;
    use crate::value::int;

    fn with_distortion(d: CostFamily, k: u32) -> Instance {
        Instance::new("v", 4, CostFamily::linear(int(1)))
            .with_packet(Packet::new(1, 0, k, d, CostFamily::linear(int(1))))
    }

    #[test]
    fn shannon_energy_instance_is_valid() {
        let inst = Instance::new("shannon", 4, CostFamily::Exponential { scale: int(1), base: int(2) })
            .with_packet(Packet::new(1, 0, 2, CostFamily::table(&[0, 4, 6]), CostFamily::linear(int(1))));
        assert!(validate_instance(&inst).is_valid());
    }

    #[test]
    fn concave_table_is_valid() {
        assert!(validate_instance(&with_distortion(CostFamily::table(&[0, 5, 8, 10]), 3)).is_valid());
    }

    #[test]
    fn increasing_increments_are_reported() {
        let r = validate_instance(&with_distortion(CostFamily::table(&[0, 3, 8]), 2));
        assert_eq!(
            r.findings,
            vec![Finding::Distortion { packet: 1, problem: "increments increase at i=2".into() }]
        );
        assert_eq!(r.to_string(), "packet 1: D increments increase at i=2");
    }

    #[test]
    fn energy_and_horizon_findings() {
        let mut inst = with_distortion(CostFamily::table(&[0, 5]), 1);
        inst.energy = vec![CostFamily::table(&[1, 2, 3])];
        inst.packets[0].arrival = 9;
        let r = validate_instance(&inst);
        assert!(r.findings.iter().any(|f| matches!(f, Finding::Energy { .. })));
        assert!(r.findings.iter().any(|f| matches!(f, Finding::ArrivalBeyondHorizon { .. })));
    }

    #[test]
    fn concave_delay_is_reported() {
        let mut inst = with_distortion(CostFamily::table(&[0, 5]), 1);
        inst.packets[0].delay_cost = CostFamily::table(&[0, 3, 4]);
        let r = validate_instance(&inst);
        assert!(matches!(r.findings[0], Finding::DelayCost { .. }));
    }
}
