//! Analytical calculators behind the `analyze` subcommand: false-positive
//! sweeps, query-only forgery cost, fingerprint size against concatenated
//! hash digests, and the clock resynchronization period.

use std::fmt::Write as _;

use vcrl_core::bloom::{attack_time_secs, bf_params, false_positive_prob, sync_period_secs};

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let joined: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:>w$}", w = widths[i]))
                .collect();
            out.push_str(&joined.join("  "));
            out.push('\n');
        };
        line(&self.header);
        for row in &self.rows {
            line(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        out
    }
}

/// False-positive probability for fixed (m, k) as the item count grows.
pub fn fp_table(m: u64, k: u32, n_max: u64) -> Table {
    let rows = (0..=n_max)
        .map(|n| {
            vec![
                n.to_string(),
                m.to_string(),
                k.to_string(),
                format!("{:.6e}", false_positive_prob(m, k, n)),
            ]
        })
        .collect();
    Table {
        header: vec!["n".into(), "m_bits".into(), "k".into(), "false_positive".into()],
        rows,
    }
}

/// Expected forgery time for each (p, k) pair at the given hash rate.
pub fn attack_cost_table(pairs: &[(f64, u32)], hashrate: f64) -> Table {
    let rows = pairs
        .iter()
        .map(|&(p, k)| {
            let secs = attack_time_secs(p, k, hashrate);
            vec![
                format!("{p:.1e}"),
                k.to_string(),
                format!("{hashrate:.3e}"),
                format!("{secs:.1}"),
                format!("{:.2}", secs / 3600.0),
            ]
        })
        .collect();
    Table {
        header: vec![
            "p".into(),
            "k".into(),
            "hashrate_per_s".into(),
            "seconds".into(),
            "hours".into(),
        ],
        rows,
    }
}

const HASH_DIGEST_BYTES: &[(&str, u64)] = &[
    ("sha1", 20),
    ("sha224", 28),
    ("sha256", 32),
    ("sha384", 48),
    ("sha512", 64),
];

/// Fingerprint bytes for `n` pieces at each target rate, next to the cost of
/// concatenating one hash digest per piece.
pub fn fingerprint_size_table(n_max: u64, targets: &[f64]) -> Result<Table, String> {
    let mut header = vec!["pieces".into()];
    for p in targets {
        header.push(format!("bf_bytes_p{p:.0e}"));
    }
    for (name, _) in HASH_DIGEST_BYTES {
        header.push(format!("{name}_bytes"));
    }
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let mut row = vec![n.to_string()];
        for p in targets {
            let (m, _) = bf_params(n, *p).map_err(|e| e.to_string())?;
            row.push(m.div_ceil(8).to_string());
        }
        for (_, bytes) in HASH_DIGEST_BYTES {
            row.push((bytes * n).to_string());
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn sync_period_table(ppm_values: &[f64], max_error_s: f64) -> Table {
    let rows = ppm_values
        .iter()
        .map(|&ppm| {
            let secs = sync_period_secs(ppm, max_error_s);
            vec![
                format!("{ppm}"),
                format!("{max_error_s}"),
                format!("{secs:.0}"),
                format!("{:.2}", secs / 3600.0),
            ]
        })
        .collect();
    Table {
        header: vec![
            "clock_ppm".into(),
            "max_error_s".into(),
            "resync_every_s".into(),
            "resync_every_h".into(),
        ],
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_cost_reproduces_reference_points() {
        let t = attack_cost_table(&[(1e-20, 67), (1e-22, 73), (1e-23, 76)], 1.6e18);
        assert_eq!(t.rows[0][3], "4187.5");
        assert_eq!(t.rows[1][4], "126.74");
        assert_eq!(t.rows[2][4], "1319.44");
    }

    #[test]
    fn fingerprint_size_includes_hash_comparison() {
        let t = fingerprint_size_table(20, &[1e-25, 1e-30]).unwrap();
        let last = t.rows.last().unwrap();
        assert_eq!(last[0], "20");
        // 20 pieces: 300 B at p=1e-25, 360 B at 1e-30, vs 400 B of SHA-1.
        assert_eq!(last[1], "300");
        assert_eq!(last[2], "360");
        assert_eq!(last[3], "400");
    }

    #[test]
    fn table_rendering_aligns_and_csvs() {
        let t = sync_period_table(&[20.0], 1.0);
        assert!(t.render().contains("50000"));
        assert!(t.to_csv().starts_with("clock_ppm,max_error_s,"));
    }
}
