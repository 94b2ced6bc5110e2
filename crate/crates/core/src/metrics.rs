//! Evaluation metrics: Opt, Exp, Hmean, path-length optimality and success
//! rate, aggregated over instances with bootstrap confidence intervals.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Encoder, EncoderError};
use crate::grid::ProblemInstance;
use crate::search::{plan, SearchError, SearchPolicy, SearchTrace};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("vanilla exploration count is zero")]
    ZeroBaseline,
    #[error("predicted path length is zero")]
    ZeroPathLength,
    #[error("no samples to aggregate")]
    EmptySamples,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("nothing to evaluate: the split is empty")]
    EmptySplit,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// `max(100 (E* - E) / E*, 0)`.
pub fn exp_ratio(e: usize, e_star: usize) -> Result<f64, MetricError> {
    if e_star == 0 {
        return Err(MetricError::ZeroBaseline);
    }
    let r = 100.0 * (e_star as f64 - e as f64) / e_star as f64;
    Ok(r.clamp(0.0, 100.0))
}

/// 100 if the predicted path is as short as the optimal one, else 0.
pub fn opt_indicator(pred_length: usize, opt_length: usize) -> f64 {
    if pred_length == opt_length {
        100.0
    } else {
        0.0
    }
}

pub fn hmean_pair(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// `100 * opt / pred`.
pub fn path_len_ratio(opt_length: usize, pred_length: usize) -> Result<f64, MetricError> {
    if pred_length == 0 {
        return Err(MetricError::ZeroPathLength);
    }
    Ok(100.0 * opt_length as f64 / pred_length as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Percentile bootstrap. The reported mean is the mean of the resample
/// means; the bounds are clamped around it so that `low <= mean <= high`.
pub fn bootstrap_ci(
    samples: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Interval, MetricError> {
    if samples.is_empty() || resamples == 0 {
        return Err(MetricError::EmptySamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidLevel(level));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / resamples as f64;
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval {
        mean,
        ci_low: percentile(&means, alpha).min(mean),
        ci_high: percentile(&means, 1.0 - alpha).max(mean),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: String,
    /// Explorations of the evaluated planner.
    pub e: usize,
    /// Explorations of vanilla A*.
    pub e_star: usize,
    /// Zero when the planner failed.
    pub pred_length: usize,
    pub opt_length: usize,
    pub success: bool,
}

impl InstanceResult {
    pub fn opt(&self) -> f64 {
        if self.success {
            opt_indicator(self.pred_length, self.opt_length)
        } else {
            0.0
        }
    }

    pub fn exp(&self) -> Result<f64, MetricError> {
        if self.success {
            exp_ratio(self.e, self.e_star)
        } else {
            Ok(0.0)
        }
    }

    pub fn hmean(&self) -> Result<f64, MetricError> {
        Ok(hmean_pair(self.opt(), self.exp()?))
    }

    pub fn path_len_ratio(&self) -> Result<f64, MetricError> {
        if !self.success {
            return Ok(0.0);
        }
        if self.opt_length == 0 && self.pred_length == 0 {
            return Ok(100.0);
        }
        path_len_ratio(self.opt_length, self.pred_length)
    }

    pub fn suc(&self) -> f64 {
        if self.success {
            100.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub opt: Interval,
    pub exp: Interval,
    pub hmean: Interval,
    pub path_len_ratio: Interval,
    pub suc: Interval,
    pub mean_e: f64,
    pub mean_e_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

/// Per-instance metrics first, then a bootstrap over instances per metric.
pub fn summarize(
    results: &[InstanceResult],
    boot: &BootstrapConfig,
) -> Result<MetricSummary, MetricError> {
    if results.is_empty() {
        return Err(MetricError::EmptySplit);
    }
    let column =
        |f: &dyn Fn(&InstanceResult) -> Result<f64, MetricError>| -> Result<Interval, MetricError> {
            let v = results.iter().map(f).collect::<Result<Vec<_>, _>>()?;
            bootstrap_ci(&v, boot.resamples, boot.level, boot.seed)
        };
    let n = results.len() as f64;
    Ok(MetricSummary {
        count: results.len(),
        opt: column(&|r| Ok(r.opt()))?,
        exp: column(&|r| r.exp())?,
        hmean: column(&|r| r.hmean())?,
        path_len_ratio: column(&|r| r.path_len_ratio())?,
        suc: column(&|r| Ok(r.suc()))?,
        mean_e: results.iter().map(|r| r.e as f64).sum::<f64>() / n,
        mean_e_star: results.iter().map(|r| r.e_star as f64).sum::<f64>() / n,
    })
}

/// Anything that turns an instance into a search trace.
pub trait Planner: Sync {
    fn name(&self) -> String;
    fn plan(&self, instance: &ProblemInstance) -> Result<SearchTrace, MetricError>;
}

/// A classic planner without guidance.
#[derive(Debug, Clone)]
pub struct ClassicPlanner {
    pub policy: SearchPolicy,
}

impl ClassicPlanner {
    pub fn new(policy: SearchPolicy) -> Self {
        Self {
            policy: policy.with_guidance(false),
        }
    }

    pub fn vanilla() -> Self {
        Self::new(SearchPolicy::vanilla())
    }
}

impl Planner for ClassicPlanner {
    fn name(&self) -> String {
        self.policy.variant().to_string()
    }

    fn plan(&self, instance: &ProblemInstance) -> Result<SearchTrace, MetricError> {
        Ok(plan(instance, &self.policy, None)?)
    }
}

/// A classic planner whose guidance costs come from an encoder.
#[derive(Debug, Clone)]
pub struct NeuralPlanner {
    pub encoder: Encoder<f32>,
    pub policy: SearchPolicy,
}

impl NeuralPlanner {
    pub fn new(encoder: Encoder<f32>, policy: SearchPolicy) -> Self {
        Self {
            encoder,
            policy: policy.with_guidance(true),
        }
    }
}

impl Planner for NeuralPlanner {
    fn name(&self) -> String {
        format!("neural_{}", self.policy.variant())
    }

    fn plan(&self, instance: &ProblemInstance) -> Result<SearchTrace, MetricError> {
        let guidance = self.encoder.guidance(instance)?;
        Ok(plan(instance, &self.policy, Some(&guidance))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<InstanceResult>,
    pub summary: MetricSummary,
}

/// Runs `planner` and vanilla A* on every instance and aggregates.
pub fn evaluate<'a>(
    planner: &dyn Planner,
    instances: &[(&'a str, &'a ProblemInstance)],
    boot: &BootstrapConfig,
) -> Result<Evaluation, MetricError> {
    if instances.is_empty() {
        return Err(MetricError::EmptySplit);
    }
    let vanilla = ClassicPlanner::vanilla();
    let results = instances
        .par_iter()
        .map(|&(id, instance)| {
            let trace = planner.plan(instance)?;
            let baseline = vanilla.plan(instance)?;
            Ok(InstanceResult {
                instance_id: id.to_string(),
                e: trace.explorations,
                e_star: baseline.explorations,
                pred_length: if trace.success { trace.path_length } else { 0 },
                opt_length: instance.optimal_length,
                success: trace.success,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    let summary = summarize(&results, boot)?;
    Ok(Evaluation { results, summary })
}

pub fn write_instance_csv(results: &[InstanceResult], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "instance_id,E,E_star,pred_length,opt_length,success")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.instance_id, r.e, r.e_star, r.pred_length, r.opt_length, r.success
        )?;
    }
    w.flush()
}

/// One row per labelled summary: each metric as mean and interval bounds,
/// then the raw exploration counts.
pub fn summary_table_csv(label_header: &str, rows: &[(String, &MetricSummary)]) -> String {
    let mut out = format!("{label_header},count");
    for m in ["opt", "exp", "hmean", "path_len_ratio", "suc"] {
        out.push_str(&format!(",{m},{m}_lo,{m}_hi"));
    }
    out.push_str(",mean_E,mean_E_star\n");
    for (label, s) in rows {
        out.push_str(&format!("{label},{}", s.count));
        for iv in [&s.opt, &s.exp, &s.hmean, &s.path_len_ratio, &s.suc] {
            out.push_str(&format!(
                ",{:.2},{:.2},{:.2}",
                iv.mean, iv.ci_low, iv.ci_high
            ));
        }
        out.push_str(&format!(",{:.2},{:.2}\n", s.mean_e, s.mean_e_star));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridMap, GuidanceMap, Node};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_ratio(100, 100).unwrap(), 0.0);
        assert_eq!(exp_ratio(0, 100).unwrap(), 100.0);
        assert_eq!(exp_ratio(150, 100).unwrap(), 0.0);
        assert!(matches!(exp_ratio(3, 0), Err(MetricError::ZeroBaseline)));
    }

    #[test]
    fn opt_examples() {
        assert_eq!(opt_indicator(12, 12), 100.0);
        assert_eq!(opt_indicator(13, 12), 0.0);
        let mean = [
            opt_indicator(5, 5),
            opt_indicator(7, 7),
            opt_indicator(9, 8),
        ]
        .iter()
        .sum::<f64>()
            / 3.0;
        assert!((mean - 66.67).abs() < 0.01);
    }

    #[test]
    fn hmean_examples() {
        assert_eq!(hmean_pair(40.0, 40.0), 40.0);
        assert_eq!(hmean_pair(100.0, 0.0), 0.0);
        assert_eq!(hmean_pair(0.0, 0.0), 0.0);
        assert!((hmean_pair(100.0, 50.0) - 66.67).abs() < 0.01);
    }

    #[test]
    fn path_ratio_examples() {
        assert_eq!(path_len_ratio(10, 10).unwrap(), 100.0);
        assert_eq!(path_len_ratio(9, 10).unwrap(), 90.0);
        assert!(matches!(
            path_len_ratio(3, 0),
            Err(MetricError::ZeroPathLength)
        ));
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        assert_eq!(
            bootstrap_ci(&[42.0; 3], 1000, 0.95, 1).unwrap(),
            Interval {
                mean: 42.0,
                ci_low: 42.0,
                ci_high: 42.0
            }
        );
        let s: Vec<f64> = (0..30).map(|i| (i * 7 % 11) as f64).collect();
        let a = bootstrap_ci(&s, 500, 0.95, 9).unwrap();
        assert_eq!(a, bootstrap_ci(&s, 500, 0.95, 9).unwrap());
        assert!(a.ci_low <= a.mean && a.mean <= a.ci_high);
        assert!(matches!(
            bootstrap_ci(&[], 10, 0.95, 0),
            Err(MetricError::EmptySamples)
        ));
        assert!(matches!(
            bootstrap_ci(&[1.0], 10, 1.0, 0),
            Err(MetricError::InvalidLevel(_))
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0, 20.0, 30.0];
        assert!(close(percentile(&v, 0.5), 15.0));
        assert!(close(percentile(&v, 0.0), 0.0));
        assert!(close(percentile(&v, 1.0), 30.0));
    }

    #[test]
    fn failed_instances_score_zero() {
        let r = InstanceResult {
            instance_id: "x".into(),
            e: 10,
            e_star: 40,
            pred_length: 0,
            opt_length: 6,
            success: false,
        };
        assert_eq!(r.opt(), 0.0);
        assert_eq!(r.exp().unwrap(), 0.0);
        assert_eq!(r.hmean().unwrap(), 0.0);
        assert_eq!(r.path_len_ratio().unwrap(), 0.0);
        assert_eq!(r.suc(), 0.0);
    }

    #[test]
    fn vanilla_against_itself() {
        let map = GridMap::from_ascii(
            "..........
             ..######..
             .......#..
             .......#..
             ..........
             ..........
             ...####...
             ..........",
        )
        .unwrap();
        let inst = ProblemInstance::solve(map, Node::new(0, 0), Node::new(7, 9)).unwrap();
        let ev = evaluate(
            &ClassicPlanner::vanilla(),
            &[("a", &inst)],
            &BootstrapConfig::default(),
        )
        .unwrap();
        assert_eq!(ev.summary.exp.mean, 0.0);
        assert_eq!(ev.summary.opt.mean, 100.0);
        assert_eq!(ev.summary.suc.mean, 100.0);
        assert!(matches!(
            evaluate(&ClassicPlanner::vanilla(), &[], &BootstrapConfig::default()),
            Err(MetricError::EmptySplit)
        ));
    }

    struct CorridorGuided {
        guidance: GuidanceMap,
    }

    impl Planner for CorridorGuided {
        fn name(&self) -> String {
            "corridor".into()
        }
        fn plan(&self, instance: &ProblemInstance) -> Result<SearchTrace, MetricError> {
            let policy = SearchPolicy::vanilla().with_guidance(true);
            Ok(plan(instance, &policy, Some(&self.guidance))?)
        }
    }

    #[test]
    fn guidance_that_prunes_keeps_optimal_paths() {
        // a wall with its opening at the top: vanilla A* floods the pocket below
        let map = GridMap::from_ascii(
            "............
             ............
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......
             .....#......",
        )
        .unwrap();
        let inst = ProblemInstance::solve(map.clone(), Node::new(9, 0), Node::new(9, 11)).unwrap();
        let oracle = crate::search::dijkstra_oracle(&map, inst.start, inst.goal)
            .unwrap()
            .unwrap();
        let values = oracle
            .path_map
            .iter()
            .map(|&on| if on { 0.0 } else { 5.0 })
            .collect();
        let planner = CorridorGuided {
            guidance: GuidanceMap::new(12, 12, values).unwrap(),
        };
        let ev = evaluate(&planner, &[("c", &inst)], &BootstrapConfig::default()).unwrap();
        assert_eq!(ev.summary.opt.mean, 100.0);
        assert!(ev.summary.exp.mean > 0.0, "{:?}", ev.summary);
        assert!(ev.results[0].e < ev.results[0].e_star);
    }

    #[test]
    fn csv_layout() {
        let r = InstanceResult {
            instance_id: "00001".into(),
            e: 3,
            e_star: 5,
            pred_length: 2,
            opt_length: 2,
            success: true,
        };
        let mut buf = Vec::new();
        write_instance_csv(&[r], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "instance_id,E,E_star,pred_length,opt_length,success\n00001,3,5,2,2,true\n"
        );
    }
}
