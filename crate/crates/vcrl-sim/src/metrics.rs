//! Per-vehicle acquisition metrics, the cognizant time series, and the
//! CSV/JSON writers. Column order and formatting are stable: identical runs
//! must serialize byte-identically.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Honest,
    Carrier,
    Selfish,
    Dos,
    DeltaFlood,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Honest => "honest",
            VehicleKind::Carrier => "carrier",
            VehicleKind::Selfish => "selfish",
            VehicleKind::Dos => "dos",
            VehicleKind::DeltaFlood => "delta_flood",
        }
    }

    /// Attackers do not acquire CRLs; they are excluded from acquisition
    /// statistics (selfish nodes do acquire and are included).
    pub fn measured(self) -> bool {
        !matches!(self, VehicleKind::Dos | VehicleKind::DeltaFlood)
    }
}

#[derive(Clone, Debug)]
pub struct VehicleMetrics {
    pub vehicle_id: u32,
    pub kind: VehicleKind,
    pub trip_start_us: u64,
    pub trip_end_us: u64,
    pub cognizant_at_us: Option<u64>,
    pub pieces_received: u64,
    pub pieces_duplicate: u64,
    pub pieces_rejected: u64,
    pub queue_dropped: u64,
    pub delta_buffered: u64,
    pub delta_accepted: u64,
    pub delta_forged: u64,
    pub delta_rate_limited: u64,
    pub keys_received: u64,
    pub requests_sent: u64,
    pub answers_sent: u64,
    /// (local interval, first validation time) for delta updates.
    pub delta_validated: Vec<(u32, u64)>,
}

impl VehicleMetrics {
    pub fn delay_us(&self) -> Option<u64> {
        self.cognizant_at_us.map(|t| t.saturating_sub(self.trip_start_us))
    }
}

#[derive(Clone, Debug)]
pub struct MetricsLog {
    pub mode: &'static str,
    pub seed: u64,
    pub signature_scheme: &'static str,
    pub vehicles: Vec<VehicleMetrics>,
    /// (sim second, vehicles cognizant by then, trips started by then).
    pub cognizant_series: Vec<(u64, u32, u32)>,
    pub total_pieces: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub mode: String,
    pub seed: u64,
    pub signature_scheme: String,
    pub total_pieces: u32,
    pub measured_vehicles: u32,
    pub cognizant: u32,
    pub cognizant_fraction: f64,
    pub failure_ratio: f64,
    pub mean_delay_s: Option<f64>,
    pub delay_quantiles_s: Quantiles,
    /// Histogram of distinct pieces received, bucket i = exactly i pieces,
    /// last bucket = all pieces.
    pub piece_histogram: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Quantiles {
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p95: Option<f64>,
    pub p99: Option<f64>,
}

fn us_to_s(us: u64) -> f64 {
    us as f64 / 1e6
}

/// Quantile by the nearest-rank method on a sorted slice.
fn quantile(sorted: &[u64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(us_to_s(sorted[rank - 1]))
}

impl MetricsLog {
    pub fn summary(&self) -> Summary {
        let measured: Vec<&VehicleMetrics> =
            self.vehicles.iter().filter(|v| v.kind.measured()).collect();
        let mut delays: Vec<u64> = measured.iter().filter_map(|v| v.delay_us()).collect();
        delays.sort_unstable();
        let cognizant = delays.len() as u32;
        let total = measured.len() as u32;
        let mut histogram = vec![0u32; self.total_pieces as usize + 1];
        for v in &measured {
            let got = (v.pieces_received as usize).min(self.total_pieces as usize);
            histogram[got] += 1;
        }
        Summary {
            mode: self.mode.to_string(),
            seed: self.seed,
            signature_scheme: self.signature_scheme.to_string(),
            total_pieces: self.total_pieces,
            measured_vehicles: total,
            cognizant,
            cognizant_fraction: if total == 0 { 0.0 } else { cognizant as f64 / total as f64 },
            failure_ratio: if total == 0 {
                0.0
            } else {
                (total - cognizant) as f64 / total as f64
            },
            mean_delay_s: if delays.is_empty() {
                None
            } else {
                Some(us_to_s(delays.iter().sum::<u64>() / delays.len() as u64))
            },
            delay_quantiles_s: Quantiles {
                p50: quantile(&delays, 0.50),
                p90: quantile(&delays, 0.90),
                p95: quantile(&delays, 0.95),
                p99: quantile(&delays, 0.99),
            },
            piece_histogram: histogram,
        }
    }

    pub const CSV_HEADER: &'static str = "vehicle_id,kind,trip_start_s,trip_end_s,cognizant_s,delay_s,pieces_received,pieces_duplicate,pieces_rejected,queue_dropped,delta_buffered,delta_accepted,delta_forged,delta_rate_limited,keys_received,requests_sent,answers_sent";

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for v in &self.vehicles {
            let cognizant = v
                .cognizant_at_us
                .map(|t| format!("{:.3}", us_to_s(t)))
                .unwrap_or_default();
            let delay = v
                .delay_us()
                .map(|d| format!("{:.3}", us_to_s(d)))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{:.3},{:.3},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                v.vehicle_id,
                v.kind.as_str(),
                us_to_s(v.trip_start_us),
                us_to_s(v.trip_end_us),
                cognizant,
                delay,
                v.pieces_received,
                v.pieces_duplicate,
                v.pieces_rejected,
                v.queue_dropped,
                v.delta_buffered,
                v.delta_accepted,
                v.delta_forged,
                v.delta_rate_limited,
                v.keys_received,
                v.requests_sent,
                v.answers_sent,
            )
            .expect("string write");
        }
        out
    }

    pub const SERIES_HEADER: &'static str = "time_s,cognizant,started";

    pub fn series_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::SERIES_HEADER);
        out.push('\n');
        for (t, cognizant, started) in &self.cognizant_series {
            writeln!(out, "{t},{cognizant},{started}").expect("string write");
        }
        out
    }

    pub const DELTA_HEADER: &'static str = "vehicle_id,interval,validated_s";

    pub fn delta_csv(&self) -> Option<String> {
        if self.vehicles.iter().all(|v| v.delta_validated.is_empty()) {
            return None;
        }
        let mut out = String::new();
        out.push_str(Self::DELTA_HEADER);
        out.push('\n');
        for v in &self.vehicles {
            for (interval, t) in &v.delta_validated {
                writeln!(out, "{},{},{:.3}", v.vehicle_id, interval, us_to_s(*t))
                    .expect("string write");
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(id: u32, kind: VehicleKind, delay_s: Option<u64>) -> VehicleMetrics {
        VehicleMetrics {
            vehicle_id: id,
            kind,
            trip_start_us: 1_000_000,
            trip_end_us: 600_000_000,
            cognizant_at_us: delay_s.map(|d| 1_000_000 + d * 1_000_000),
            pieces_received: 3,
            pieces_duplicate: 0,
            pieces_rejected: 0,
            queue_dropped: 0,
            delta_buffered: 0,
            delta_accepted: 0,
            delta_forged: 0,
            delta_rate_limited: 0,
            keys_received: 0,
            requests_sent: 2,
            answers_sent: 1,
            delta_validated: Vec::new(),
        }
    }

    #[test]
    fn summary_counts_and_quantiles() {
        let log = MetricsLog {
            mode: "vehicle_centric",
            seed: 9,
            signature_scheme: "mock",
            vehicles: vec![
                metrics(0, VehicleKind::Honest, Some(5)),
                metrics(1, VehicleKind::Honest, Some(10)),
                metrics(2, VehicleKind::Honest, Some(20)),
                metrics(3, VehicleKind::Selfish, None),
                metrics(4, VehicleKind::Dos, None), // excluded
            ],
            cognizant_series: vec![(0, 0, 1), (1, 1, 2)],
            total_pieces: 3,
        };
        let s = log.summary();
        assert_eq!(s.measured_vehicles, 4);
        assert_eq!(s.cognizant, 3);
        assert!((s.failure_ratio - 0.25).abs() < 1e-9);
        assert_eq!(s.delay_quantiles_s.p50, Some(10.0));
        assert_eq!(s.delay_quantiles_s.p95, Some(20.0));
        assert!((s.mean_delay_s.unwrap() - 11.666666).abs() < 1e-5);
        assert_eq!(s.piece_histogram, vec![0, 0, 0, 4]);
    }

    #[test]
    fn csv_is_stable() {
        let log = MetricsLog {
            mode: "baseline",
            seed: 1,
            signature_scheme: "mock",
            vehicles: vec![metrics(0, VehicleKind::Honest, Some(5))],
            cognizant_series: vec![(0, 0, 0)],
            total_pieces: 3,
        };
        let a = log.to_csv();
        let b = log.to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("vehicle_id,kind,"));
        assert!(a.contains("0,honest,1.000,600.000,6.000,5.000,3,"));
    }
}
