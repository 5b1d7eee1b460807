//! Speed-conditioned Markov chain over quantized power demand, estimated by
//! transition counting.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizerSpec {
    pub power_bins: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    pub speed_bins: usize,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self {
            power_bins: 20,
            p_lo: -30e3,
            p_hi: 60e3,
            speed_bins: 10,
            v_lo: 0.0,
            v_hi: 20.0,
        }
    }
}

fn uniform_bin(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let f = (x - lo) / (hi - lo) * bins as f64;
    if f <= 0.0 || f.is_nan() {
        0
    } else {
        (f as usize).min(bins - 1)
    }
}

impl QuantizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.power_bins >= 2 && self.speed_bins >= 1 && self.p_lo < self.p_hi && self.v_lo < self.v_hi {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("quantizer {self:?}")))
        }
    }

    pub fn power_bin(&self, p: f64) -> usize {
        uniform_bin(p, self.p_lo, self.p_hi, self.power_bins)
    }

    pub fn speed_bin(&self, v: f64) -> usize {
        uniform_bin(v, self.v_lo, self.v_hi, self.speed_bins)
    }

    pub fn power_center(&self, n: usize) -> f64 {
        self.p_lo + (n as f64 + 0.5) * (self.p_hi - self.p_lo) / self.power_bins as f64
    }

    pub fn speed_center(&self, k: usize) -> f64 {
        self.v_lo + (k as f64 + 0.5) * (self.v_hi - self.v_lo) / self.speed_bins as f64
    }
}

/// `(power bin, speed bin)`; out-of-range values land in the edge bins.
pub fn quantize(p_dem: f64, v: f64, spec: &QuantizerSpec) -> (usize, usize) {
    (spec.power_bin(p_dem), spec.speed_bin(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    spec: QuantizerSpec,
    /// [speed][from][to]
    counts: Vec<u64>,
    probs: Vec<f64>,
    /// mean observed demand per [speed][power] bin; the bin centre when
    /// the bin was never observed
    means: Vec<f64>,
}

impl TransitionModel {
    fn idx(&self, k: usize, n: usize) -> usize {
        (k * self.spec.power_bins + n) * self.spec.power_bins
    }

    pub fn spec(&self) -> &QuantizerSpec {
        &self.spec
    }

    pub fn row(&self, k: usize, n: usize) -> &[f64] {
        let i = self.idx(k, n);
        &self.probs[i..i + self.spec.power_bins]
    }

    pub fn counts_row(&self, k: usize, n: usize) -> &[u64] {
        let i = self.idx(k, n);
        &self.counts[i..i + self.spec.power_bins]
    }

    /// Representative demand (W) of power bin `n` at speed bin `k`.
    pub fn power_value(&self, k: usize, n: usize) -> f64 {
        self.means[k * self.spec.power_bins + n]
    }

    pub fn prob(&self, k: usize, n: usize, m: usize) -> f64 {
        self.row(k, n)[m]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Build from explicit probabilities laid out `[speed][from][to]`.
    pub fn from_probabilities(spec: QuantizerSpec, probs: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let m = spec.power_bins;
        if probs.len() != spec.speed_bins * m * m {
            return Err(Error::InvalidParam(format!(
                "expected {} probabilities, got {}",
                spec.speed_bins * m * m,
                probs.len()
            )));
        }
        let model = Self {
            counts: vec![0; probs.len()],
            probs,
            means: centres(&spec),
            spec,
        };
        model.check_stochastic(1e-9)?;
        Ok(model)
    }

    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for k in 0..self.spec.speed_bins {
            for n in 0..self.spec.power_bins {
                let row = self.row(k, n);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::NotStochastic {
                        speed_bin: k,
                        from_bin: n,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Distribution over the power bin one transition ahead, holding the
    /// speed bin fixed.
    pub fn propagate(&self, k: usize, dist: &[f64]) -> Vec<f64> {
        let m = self.spec.power_bins;
        let mut out = vec![0.0; m];
        for (n, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.row(k, n)) {
                *o += p * q;
            }
        }
        out
    }

    /// Expected demand (W) for each of the next `horizon` steps, starting
    /// from bin `n` at speed bin `k`.
    pub fn expected_demand(&self, n: usize, k: usize, horizon: usize) -> Vec<f64> {
        let m = self.spec.power_bins;
        let mut dist = vec![0.0; m];
        dist[n] = 1.0;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            dist = self.propagate(k, &dist);
            out.push(
                dist.iter()
                    .enumerate()
                    .map(|(i, p)| p * self.power_value(k, i))
                    .sum(),
            );
        }
        out
    }

    /// Dense text layout: a header line `M K p_lo p_hi v_lo v_hi`, then
    /// `K*M` rows of `M` probabilities ordered by speed bin, then from-bin,
    /// then a `means` line followed by `K` rows of bin mean demands.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = String::from("# greenwave transition model\n");
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            s.power_bins, s.speed_bins, s.p_lo, s.p_hi, s.v_lo, s.v_hi
        );
        for k in 0..s.speed_bins {
            for n in 0..s.power_bins {
                let row: Vec<String> = self.row(k, n).iter().map(|p| p.to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("means\n");
        for row in self.means.chunks(s.power_bins) {
            let row: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "transition model",
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 6 {
            return Err(bad(format!("header has {} fields", header.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
        let spec = QuantizerSpec {
            power_bins: int(header[0])?,
            speed_bins: int(header[1])?,
            p_lo: float(header[2])?,
            p_hi: float(header[3])?,
            v_lo: float(header[4])?,
            v_hi: float(header[5])?,
        };
        let mut probs = Vec::new();
        let mut means: Option<Vec<f64>> = None;
        for line in lines {
            if line.trim() == "means" {
                means = Some(Vec::new());
                continue;
            }
            let target = means.as_mut().unwrap_or(&mut probs);
            let row = line
                .split_whitespace()
                .map(float)
                .collect::<Result<Vec<_>>>()?;
            if row.len() != spec.power_bins {
                return Err(bad(format!("row has {} entries", row.len())));
            }
            target.extend(row);
        }
        let mut model = Self::from_probabilities(spec, probs)?;
        if let Some(means) = means {
            if means.len() != model.means.len() || means.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("{} bin means", means.len())));
            }
            model.means = means;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Maximum-likelihood estimate from a `(P_dem, v)` sequence. Transitions
/// are filed under the speed bin of their origin sample; unvisited rows
/// are uniform.
pub fn estimate_tpm(trace: &[(f64, f64)], spec: &QuantizerSpec) -> Result<TransitionModel> {
    estimate_tpm_multi(&[trace], spec)
}

/// Pools transition counts over several independent traces, without
/// linking the end of one to the start of the next.
pub fn estimate_tpm_multi(traces: &[&[(f64, f64)]], spec: &QuantizerSpec) -> Result<TransitionModel> {
    spec.validate()?;
    let longest = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    if longest < 2 {
        return Err(Error::TraceTooShort(longest));
    }
    let m = spec.power_bins;
    let mut counts = vec![0u64; spec.speed_bins * m * m];
    let mut sums = vec![(0.0, 0u64); spec.speed_bins * m];
    for trace in traces {
        for pair in trace.windows(2) {
            let (from, k) = quantize(pair[0].0, pair[0].1, spec);
            let to = spec.power_bin(pair[1].0);
            counts[(k * m + from) * m + to] += 1;
        }
        for &(p, v) in trace.iter() {
            let (n, k) = quantize(p, v, spec);
            let e = &mut sums[k * m + n];
            e.0 += p;
            e.1 += 1;
        }
    }
    let mut model = from_counts(*spec, counts);
    for (mean, (sum, n)) in model.means.iter_mut().zip(sums) {
        if n > 0 {
            *mean = sum / n as f64;
        }
    }
    Ok(model)
}

fn centres(spec: &QuantizerSpec) -> Vec<f64> {
    (0..spec.speed_bins)
        .flat_map(|_| (0..spec.power_bins).map(|n| spec.power_center(n)))
        .collect()
}

pub(crate) fn from_counts(spec: QuantizerSpec, counts: Vec<u64>) -> TransitionModel {
    let m = spec.power_bins;
    let mut probs = vec![0.0; counts.len()];
    for (row_c, row_p) in counts.chunks(m).zip(probs.chunks_mut(m)) {
        let total: u64 = row_c.iter().sum();
        if total == 0 {
            row_p.fill(1.0 / m as f64);
        } else {
            for (p, &c) in row_p.iter_mut().zip(row_c) {
                *p = c as f64 / total as f64;
            }
        }
    }
    TransitionModel {
        means: centres(&spec),
        spec,
        counts,
        probs,
    }
}

/// Draw the next power bin.
pub fn sample_next<R: Rng + ?Sized>(model: &TransitionModel, n: usize, k: usize, rng: &mut R) -> usize {
    let row = model.row(k, n);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (m, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = m;
            if u < acc {
                return m;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> QuantizerSpec {
        QuantizerSpec {
            power_bins: 3,
            p_lo: 0.0,
            p_hi: 3.0,
            speed_bins: 1,
            v_lo: 0.0,
            v_hi: 20.0,
        }
    }

    #[test]
    fn quantize_edges() {
        let s = QuantizerSpec::default();
        assert_eq!(s.power_bin(s.p_lo), 0);
        assert_eq!(s.power_bin(s.p_hi + 1000.0), s.power_bins - 1);
        assert_eq!(s.power_bin(s.power_center(7)), 7);
        assert_eq!(s.power_bin(-1e9), 0);
        assert_eq!(s.speed_bin(25.0), 9);
    }

    #[test]
    fn counts_to_probabilities() {
        // from bin 0: two to 0, one to 1, one to 2
        let trace = [0.5, 0.5, 0.5, 1.5, 0.5, 2.5, 0.5];
        let trace: Vec<(f64, f64)> = trace.iter().map(|&p| (p, 5.0)).collect();
        let tpm = estimate_tpm(&trace, &small()).unwrap();
        assert_eq!(tpm.row(0, 0), &[0.5, 0.25, 0.25]);
        assert_eq!(tpm.row(0, 1), &[1.0, 0.0, 0.0]);
        assert_eq!(tpm.total_count(), trace.len() as u64 - 1);
    }

    #[test]
    fn single_transition_and_unvisited() {
        let tpm = estimate_tpm(&[(0.5, 1.0), (2.5, 1.0)], &small()).unwrap();
        assert_eq!(tpm.row(0, 0), &[0.0, 0.0, 1.0]);
        let third = 1.0 / 3.0;
        assert_eq!(tpm.row(0, 1), &[third, third, third]);
    }

    #[test]
    fn short_trace_rejected() {
        assert!(matches!(
            estimate_tpm(&[(0.0, 0.0)], &small()),
            Err(Error::TraceTooShort(1))
        ));
    }

    #[test]
    fn one_hot_row_is_deterministic() {
        let tpm = estimate_tpm(&[(0.5, 1.0), (2.5, 1.0)], &small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_next(&tpm, 0, 0, &mut rng), 2);
        }
    }

    #[test]
    fn uniform_row_frequencies() {
        let spec = QuantizerSpec {
            power_bins: 4,
            ..small()
        };
        let tpm = TransitionModel::from_probabilities(spec, vec![0.25; 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hist = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            hist[sample_next(&tpm, 1, 0, &mut rng)] += 1;
        }
        for h in hist {
            assert!((h as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let spec = QuantizerSpec {
            power_bins: 4,
            ..small()
        };
        let tpm = TransitionModel::from_probabilities(spec, vec![0.25; 16]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..256).map(|_| sample_next(&tpm, 0, 0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
    }

    #[test]
    fn text_round_trip() {
        let trace: Vec<(f64, f64)> = (0..500)
            .map(|i| (((i * 37) % 90) as f64 * 1000.0 - 30e3, (i % 21) as f64))
            .collect();
        let tpm = estimate_tpm(&trace, &QuantizerSpec::default()).unwrap();
        let back = TransitionModel::from_text(&tpm.to_text()).unwrap();
        assert_eq!(back.probs, tpm.probs);
        assert_eq!(back.spec, tpm.spec);
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(TransitionModel::from_text("2 1 0 1 0 1\n0.5 0.5\n").is_err());
        assert!(TransitionModel::from_text("2 1 0 1 0 1\n0.5 0.5\n0.9 0.3\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn rows_are_stochastic(samples in proptest::collection::vec((-40e3f64..70e3, 0.0f64..22.0), 2..400)) {
            let spec = QuantizerSpec::default();
            let tpm = estimate_tpm(&samples, &spec).unwrap();
            tpm.check_stochastic(1e-12).unwrap();
            proptest::prop_assert_eq!(tpm.total_count(), samples.len() as u64 - 1);
        }
    }
}
