//! Envelope fitting, the convolution-rule oracle, envelope monitors and
//! blow-up detection.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DecayEnvelope, ModeField};
use crate::par::Exec;

/// Norm time series recorded during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    /// Sobolev orders `s` of the recorded `h^s` norms.
    pub tags: Vec<f64>,
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    /// `values[k][t]` is the `h^{tags[k]}` norm at `times[t]`.
    pub values: Vec<Vec<f64>>,
    pub sup_mode: Vec<f64>,
    /// Time at which a stepper reported a non-finite state, if any.
    pub nonfinite_at: Option<f64>,
}

impl NormSeries {
    pub fn new(tags: &[f64]) -> Self {
        NormSeries {
            tags: tags.to_vec(),
            times: vec![],
            l2: vec![],
            values: vec![vec![]; tags.len()],
            sup_mode: vec![],
            nonfinite_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn record(&mut self, t: f64, v: &ModeField) -> Result<()> {
        self.record_values(t, v.l2_norm(), self.tags.iter().map(|&s| v.hs_norm(s)).collect(), v.sup_norm())
    }

    pub fn record_values(&mut self, t: f64, l2: f64, hs: Vec<f64>, sup: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Config(format!("series times must increase: {t} after {last}")));
            }
        }
        if hs.len() != self.tags.len() {
            return Err(Error::Config("one value per norm tag expected".into()));
        }
        self.times.push(t);
        self.l2.push(l2);
        for (col, v) in self.values.iter_mut().zip(hs) {
            col.push(v);
        }
        self.sup_mode.push(sup);
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string(), "l2".to_string()];
        h.extend(self.tags.iter().map(|s| format!("h{s}")));
        h.push("sup".to_string());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for t in 0..self.len() {
            let mut row = vec![format!("{:e}", self.times[t]), format!("{:e}", self.l2[t])];
            row.extend(self.values.iter().map(|col| format!("{:e}", col[t])));
            row.push(format!("{:e}", self.sup_mode[t]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub envelope: DecayEnvelope,
    /// Fewer than two distinct `|α| ≥ 1` carried usable amplitudes.
    pub underdetermined: bool,
    /// Least-squares residual of the log fit at the chosen exponent.
    pub residual: f64,
}

const FIT_FLOOR: f64 = 1e-300;
const FIT_S_MAX: f64 = 60.0;

/// Fit `|v_{iα}| ≈ C/(1+|α|^s)` in log space, then raise `C` so the envelope
/// holds on every amplitude at the fitted exponent.
pub fn envelope_fit(v: &ModeField) -> Result<EnvelopeFit> {
    if v.is_zero() {
        return Err(Error::Degenerate("cannot fit an envelope to the zero field".into()));
    }
    let lat = v.lattice();
    // (log|α|, log|v|)
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for i in 0..v.components() {
        for (k, z) in v.component(i).iter().enumerate() {
            let a = z.norm();
            if a > FIT_FLOOR && lat.norm_sq(k) >= 1 {
                pts.push((lat.norm(k).ln(), a.ln()));
            }
        }
    }
    let mut radii: Vec<f64> = pts.iter().map(|p| p.0).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let underdetermined = radii.len() < 2;

    let residual = |s: f64| -> f64 {
        // log(1+r^s) = s·log r + log1p(r^{−s}) for r ≥ 1
        let d: Vec<f64> = pts.iter().map(|&(lr, lv)| lv + s * lr + (-s * lr).exp().ln_1p()).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|x| (x - mean) * (x - mean)).sum()
    };

    let s_hat = if underdetermined {
        0.0
    } else {
        let step = 0.05;
        let count = (FIT_S_MAX / step) as usize;
        let mut best = (0.0, residual(0.0));
        for k in 1..=count {
            let s = k as f64 * step;
            let r = residual(s);
            if r < best.1 {
                best = (s, r);
            }
        }
        golden_min(&residual, (best.0 - step).max(0.0), (best.0 + step).min(FIT_S_MAX))
    };
    if underdetermined {
        // s cannot be identified; report the largest amplitude as C
        return Ok(EnvelopeFit {
            envelope: DecayEnvelope { c: v.sup_norm(), s: 0.0 },
            underdetermined,
            residual: 0.0,
        });
    }
    let c = (0..v.components())
        .flat_map(|i| {
            v.component(i).iter().enumerate().map(move |(k, z)| {
                let r = lat.norm(k);
                if r == 0.0 {
                    z.norm()
                } else {
                    z.norm() * (1.0 + r.powf(s_hat))
                }
            })
        })
        .fold(0.0, f64::max);
    Ok(EnvelopeFit {
        envelope: DecayEnvelope { c, s: s_hat },
        underdetermined,
        residual: residual(s_hat),
    })
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleWeight {
    None,
    /// Extra factor `|γ|` in the summand.
    GammaNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSample {
    pub alpha: Vec<i64>,
    pub norm: f64,
    /// Raw sum `S(α)`, equal to `c(α)/(1+|α|^{s_out})`.
    pub sum: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOracleReport {
    pub n: usize,
    pub m: i64,
    pub s_a: f64,
    pub s_b: f64,
    pub s_out: f64,
    pub weight: RuleWeight,
    /// `max c(α)` over `|α| ≤ M/2`.
    pub c: f64,
    /// `max c_M(α) / max c_{M/2}(α)` over the common range `|α| ≤ M/4`.
    pub stability: f64,
    /// One representative per orbit of the box symmetry group.
    pub samples: Vec<RuleSample>,
    /// Slope of `−log S` against `log|α|` over `2 ≤ |α| ≤ M/2`.
    pub measured_exponent: f64,
}

/// Output exponent of the rule: `s_a+s_b−n−1`, capped at `n+3`.
pub fn rule_output_exponent(n: usize, s_a: f64, s_b: f64) -> f64 {
    (s_a + s_b - n as f64 - 1.0).min(n as f64 + 3.0)
}

pub fn convolution_rule_oracle(
    n: usize,
    s_a: f64,
    s_b: f64,
    m: i64,
    weight: RuleWeight,
) -> Result<RuleOracleReport> {
    convolution_rule_oracle_with(Exec::default(), n, s_a, s_b, m, weight)
}

pub fn convolution_rule_oracle_with(
    exec: Exec,
    n: usize,
    s_a: f64,
    s_b: f64,
    m: i64,
    weight: RuleWeight,
) -> Result<RuleOracleReport> {
    let nf = n as f64;
    if !(s_a > nf && s_b > nf) {
        return Err(Error::Config(format!("rule oracle needs s_a, s_b > n; got {s_a}, {s_b} with n = {n}")));
    }
    if m < 4 || m % 4 != 0 || n == 0 {
        return Err(Error::Config(format!("rule oracle needs n >= 1 and M a positive multiple of 4, got M = {m}")));
    }
    let s_out = rule_output_exponent(n, s_a, s_b);
    let fine = rule_sums(exec, n, s_a, s_b, m, weight, m / 2);
    let coarse = rule_sums(exec, n, s_a, s_b, m / 2, weight, m / 4);
    let c_of = |s: &RuleSample| s.sum * (1.0 + s.norm.powf(s_out));
    let samples: Vec<RuleSample> =
        fine.into_iter().map(|mut s| { s.c = c_of(&s); s }).collect();
    let within = |s: &&RuleSample| s.norm <= (m / 4) as f64;
    let fine_max = samples.iter().filter(within).map(|s| s.c).fold(0.0, f64::max);
    let coarse_max = coarse.iter().filter(within).map(c_of).fold(0.0, f64::max);
    let c = samples.iter().map(|s| s.c).fold(0.0, f64::max);

    let fit: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.norm >= 2.0)
        .map(|s| (s.norm.ln(), -s.sum.ln()))
        .collect();
    let measured_exponent = if fit.len() >= 2 {
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / fit.len() as f64;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / fit.len() as f64;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(RuleOracleReport {
        n,
        m,
        s_a,
        s_b,
        s_out,
        weight,
        c,
        stability: fine_max / coarse_max,
        samples,
        measured_exponent,
    })
}

/// Per-`|α|` maximum of the raw sums, sorted by `|α|`.
pub fn rule_sums_by_norm(report: &RuleOracleReport) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut sorted: Vec<&RuleSample> = report.samples.iter().collect();
    sorted.sort_by(|a, b| a.norm.total_cmp(&b.norm));
    for s in sorted {
        match out.last_mut() {
            Some(last) if (last.0 - s.norm).abs() < 1e-12 => last.1 = last.1.max(s.sum),
            _ => out.push((s.norm, s.sum)),
        }
    }
    out
}

/// `S(α) = Σ_{γ∈[−M,M]ⁿ} w(γ)/((1+|α−γ|^{s_a})(1+|γ|^{s_b}))` for one α per
/// symmetry orbit (`0 ≤ α_1 ≤ … ≤ α_n`) with `|α| ≤ radius`.
fn rule_sums(
    exec: Exec,
    n: usize,
    s_a: f64,
    s_b: f64,
    m: i64,
    weight: RuleWeight,
    radius: i64,
) -> Vec<RuleSample> {
    let side = (2 * m + 1) as usize;
    let total = side.pow(n as u32);
    let mut gammas: Vec<i64> = Vec::with_capacity(total * n);
    let mut gsq: Vec<usize> = Vec::with_capacity(total);
    let mut cur = vec![-m; n];
    for _ in 0..total {
        gammas.extend_from_slice(&cur);
        gsq.push(cur.iter().map(|c| (c * c) as usize).sum());
        for d in (0..n).rev() {
            if cur[d] < m {
                cur[d] += 1;
                break;
            }
            cur[d] = -m;
        }
    }
    let max_sq = n * ((m + radius) * (m + radius)) as usize;
    let tab_a: Vec<f64> = (0..=max_sq).map(|q| 1.0 / (1.0 + (q as f64).powf(s_a / 2.0))).collect();
    let tab_b: Vec<f64> = (0..=n * (m * m) as usize)
        .map(|q| {
            let w = match weight {
                RuleWeight::None => 1.0,
                RuleWeight::GammaNorm => (q as f64).sqrt(),
            };
            w / (1.0 + (q as f64).powf(s_b / 2.0))
        })
        .collect();

    let mut alphas: Vec<Vec<i64>> = Vec::new();
    let mut a = vec![0i64; n];
    canonical_alphas(&mut a, 0, 0, radius * radius, &mut alphas);

    exec.map(alphas.len(), |idx| {
        let alpha = &alphas[idx];
        let mut acc = 0.0;
        for (g, &q) in gsq.iter().enumerate() {
            let gc = &gammas[g * n..(g + 1) * n];
            let mut d2 = 0i64;
            for j in 0..n {
                let t = alpha[j] - gc[j];
                d2 += t * t;
            }
            acc += tab_a[d2 as usize] * tab_b[q];
        }
        let nsq: i64 = alpha.iter().map(|x| x * x).sum();
        RuleSample { alpha: alpha.clone(), norm: (nsq as f64).sqrt(), sum: acc, c: 0.0 }
    })
}

fn canonical_alphas(cur: &mut Vec<i64>, pos: usize, lo: i64, budget: i64, out: &mut Vec<Vec<i64>>) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    let mut v = lo;
    let used: i64 = cur[..pos].iter().map(|x| x * x).sum();
    while used + v * v * (cur.len() - pos) as i64 <= budget {
        cur[pos] = v;
        canonical_alphas(cur, pos + 1, v, budget, out);
        v += 1;
    }
    cur[pos] = 0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub preserved: bool,
    pub per_snapshot: Vec<bool>,
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub first_violation_time: Option<f64>,
}

pub fn envelope_preserved(snapshots: &[(f64, ModeField)], env: &DecayEnvelope) -> Result<PreservationReport> {
    if let Some((_, first)) = snapshots.first() {
        for (_, s) in snapshots {
            first.lattice().ensure_same(s.lattice())?;
        }
    }
    let margins: Vec<f64> = snapshots.iter().map(|(_, f)| env.margin(f)).collect();
    let per_snapshot: Vec<bool> = snapshots.iter().map(|(_, f)| env.satisfied(f)).collect();
    let first_violation_time = per_snapshot.iter().position(|ok| !ok).map(|k| snapshots[k].0);
    Ok(PreservationReport {
        preserved: first_violation_time.is_none(),
        worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        per_snapshot,
        margins,
        first_violation_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupReason {
    Threshold,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent {
    pub index: usize,
    pub time: f64,
    pub value: f64,
    pub initial: f64,
    pub reason: BlowupReason,
}

/// First time the ℓ² series exceeds `ratio × initial`, or the recorded
/// non-finite time. A zero initial value never triggers the threshold.
pub fn blowup_detect(series: &NormSeries, ratio: f64) -> Result<Option<BlowupEvent>> {
    if !(ratio > 1.0) {
        return Err(Error::Config(format!("blow-up ratio must exceed 1, got {ratio}")));
    }
    let Some(&initial) = series.l2.first() else {
        return Ok(None);
    };
    let hit = series.l2.iter().position(|&v| initial > 0.0 && v > ratio * initial);
    let threshold = hit.map(|k| BlowupEvent {
        index: k,
        time: series.times[k],
        value: series.l2[k],
        initial,
        reason: BlowupReason::Threshold,
    });
    let nonfinite = series.nonfinite_at.map(|t| BlowupEvent {
        index: series.times.partition_point(|&x| x < t),
        time: t,
        value: f64::INFINITY,
        initial,
        reason: BlowupReason::NonFinite,
    });
    Ok(match (threshold, nonfinite) {
        (Some(a), Some(b)) => Some(if a.time <= b.time { a } else { b }),
        (a, b) => a.or(b),
    })
}
