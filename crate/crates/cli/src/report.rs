//! The `solve` report and its JSON/CSV forms.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use teven_core::{CycleTrace, EigenResult, SolverConfig};

/// One reported eigenvalue. `residual` and `cycle` belong to the locked
/// Ritz block it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedValue {
    #[serde(with = "teven_core::complex_serde")]
    pub mu: Complex64,
    pub residual: f64,
    pub cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub n: usize,
    pub degree: usize,
    pub reverse: bool,
    pub config: SolverConfig,
    /// False when the cycle limit was hit; the values are then partial.
    pub converged: bool,
    /// Finite eigenvalues, `mu` and `-mu` for every locked pair, by
    /// descending modulus.
    pub eigenvalues: Vec<ReportedValue>,
    pub infinite_count: usize,
    pub cycles: usize,
    pub factorizations: usize,
    pub elapsed_seconds: f64,
    pub trace: Vec<CycleTrace>,
}

impl RunReport {
    pub fn new(problem: &Path, n: usize, degree: usize, reverse: bool, config: SolverConfig, res: &EigenResult) -> Self {
        let mut eigenvalues: Vec<ReportedValue> = res
            .finite_pairs
            .iter()
            .flat_map(|p| {
                [p.mu, -p.mu].map(|mu| ReportedValue {
                    mu,
                    residual: p.residual,
                    cycle: p.cycle,
                })
            })
            .collect();
        eigenvalues.sort_by(|a, b| {
            b.mu.norm()
                .total_cmp(&a.mu.norm())
                .then(b.mu.re.total_cmp(&a.mu.re))
                .then(b.mu.im.total_cmp(&a.mu.im))
        });
        RunReport {
            problem: problem.display().to_string(),
            n,
            degree,
            reverse,
            config,
            converged: true,
            eigenvalues,
            infinite_count: res.infinite_count,
            cycles: res.cycles,
            factorizations: res.factorizations,
            elapsed_seconds: 0.0,
            trace: res.trace.clone(),
        }
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|v| v.mu).collect()
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)
    }

    /// The eigenvalue table only: `re,im,residual,cycle`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["re", "im", "residual", "cycle"])?;
        for v in &self.eigenvalues {
            out.serialize((v.mu.re, v.mu.im, v.residual, v.cycle))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct CsvRow {
    re: f64,
    im: f64,
}

/// Eigenvalues from a report file, JSON or CSV (sniffed from content).
pub fn read_values(path: &Path) -> Result<Vec<Complex64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let rep: RunReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(rep.values());
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            row.map(|r| Complex64::new(r.re, r.im))
                .map_err(|e| format!("{}: {e}", path.display()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use teven_core::FinitePair;

    fn sample() -> RunReport {
        let res = EigenResult {
            finite_pairs: vec![
                FinitePair { mu: Complex64::new(0.1, 3.0), theta: Complex64::new(-8.99, 0.6), residual: 1e-12, cycle: 1 },
                FinitePair { mu: Complex64::new(7.0, 0.0), theta: Complex64::new(49.0, 0.0), residual: 3e-10, cycle: 2 },
                FinitePair { mu: Complex64::new(0.0, 1.0 / 3.0), theta: Complex64::new(-1.0 / 9.0, 0.0), residual: 0.0, cycle: 2 },
            ],
            infinite_count: 2,
            cycles: 2,
            factorizations: 2,
            ..Default::default()
        };
        RunReport::new(Path::new("p.json"), 4, 3, false, SolverConfig::new(3), &res)
    }

    #[test]
    fn values_sorted_and_paired() {
        let r = sample();
        let mods: Vec<f64> = r.values().iter().map(|z| z.norm()).collect();
        assert_eq!(mods.len(), 6);
        assert!(mods.windows(2).all(|w| w[0] >= w[1]));
        for z in r.values() {
            assert!(r.values().contains(&-z));
        }
    }

    #[test]
    fn json_and_csv_carry_identical_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        let (pj, pc) = (dir.path().join("r.json"), dir.path().join("r.csv"));
        r.write_json(std::fs::File::create(&pj).unwrap()).unwrap();
        r.write_csv(std::fs::File::create(&pc).unwrap()).unwrap();
        let (vj, vc) = (read_values(&pj).unwrap(), read_values(&pc).unwrap());
        assert_eq!(vj, r.values());
        let bits = |v: &[Complex64]| v.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&vj), bits(&vc));
        let back: RunReport = serde_json::from_str(&std::fs::read_to_string(&pj).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn complex_fields_use_re_im_objects() {
        let v = serde_json::to_value(sample()).unwrap();
        let first = &v["eigenvalues"][0]["mu"];
        assert!(first["re"].is_number() && first["im"].is_number());
    }

    #[test]
    fn malformed_report_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "re,im\n1.0,zz\n").unwrap();
        assert!(read_values(&p).is_err());
        std::fs::write(&p, "{\"problem\": 3}").unwrap();
        assert!(read_values(&p).is_err());
    }
}
