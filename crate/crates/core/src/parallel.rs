//! Share-nothing parallel drivers: whole curves or individual elements are
//! distributed across workers in contiguous blocks and merged back in task
//! order, so any worker count produces bitwise-identical results.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Curve;
use crate::mesh::{
    arclength_partition, interpolate_meshes, uniform_partition, LayoutKind, ParametricMesh,
    PhysicalMesh,
};
use crate::optimizer::{optimize, optimize_element, preoptimize_linear, Config, OptimizeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    ByCurve,
    ByElement,
}

/// How the initial parameter breakpoints of a curve job are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    Uniform,
    ArcLength,
    /// Linear-mesh pre-optimization of the element distribution.
    Preoptimize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub curve_id: usize,
    pub elements: Range<usize>,
}

/// Static block distribution of tasks over workers (contiguous ranges, no
/// work stealing), which keeps merges deterministic and lets stragglers show
/// up in the per-worker timings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkPlan {
    pub mode: PlanMode,
    pub tasks: Vec<TaskSpec>,
    pub workers: usize,
}

impl WorkPlan {
    pub fn by_curves(curve_elems: &[(usize, usize)], workers: usize) -> WorkPlan {
        let tasks = curve_elems
            .iter()
            .map(|&(curve_id, elems)| TaskSpec { curve_id, elements: 0..elems })
            .collect();
        WorkPlan { mode: PlanMode::ByCurve, tasks, workers: workers.max(1) }
    }

    pub fn by_elements(curve_id: usize, elems: usize, workers: usize) -> WorkPlan {
        let tasks =
            (0..elems).map(|e| TaskSpec { curve_id, elements: e..e + 1 }).collect();
        WorkPlan { mode: PlanMode::ByElement, tasks, workers: workers.max(1) }
    }

    /// `min(workers, tasks)`, at least one.
    pub fn effective_workers(&self) -> usize {
        self.workers.min(self.tasks.len()).max(1)
    }

    /// Contiguous task-index ranges, one per effective worker.
    pub fn worker_ranges(&self) -> Vec<Range<usize>> {
        block_ranges(self.tasks.len(), self.effective_workers())
    }
}

fn block_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let base = n / k;
    let extra = n % k;
    let mut ranges = Vec::with_capacity(k);
    let mut start = 0;
    for w in 0..k {
        let len = base + usize::from(w < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

/// A full per-curve pipeline task: partition, interpolate, optimize.
#[derive(Debug, Clone)]
pub struct CurveJob {
    pub name: String,
    pub curve: Curve,
    pub params: MeshParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub elements: usize,
    pub degree_phys: usize,
    pub degree_param: usize,
    pub layout: LayoutKind,
    pub partition: PartitionStrategy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub curve_id: usize,
    pub elements: Range<usize>,
    pub report: Option<OptimizeReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParallelReport {
    pub mode: PlanMode,
    /// Effective worker count actually used.
    pub workers: usize,
    /// One entry per task, in task order.
    pub task_reports: Vec<TaskReport>,
    /// Names of straight-line curves filtered out before distribution.
    pub excluded: Vec<String>,
    /// Monotonic wall time around the task loop only.
    pub wall_time: f64,
    pub serial_baseline: Option<f64>,
    /// Newton iterations executed by each worker.
    pub worker_iterations: Vec<usize>,
}

impl ParallelReport {
    pub fn set_serial_baseline(&mut self, seconds: f64) {
        self.serial_baseline = Some(seconds);
    }

    pub fn speedup(&self) -> Option<f64> {
        self.serial_baseline.map(|t| t / self.wall_time)
    }

    /// Iterations per task, the straggler diagnostic.
    pub fn iteration_histogram(&self) -> Vec<usize> {
        self.task_reports
            .iter()
            .map(|t| t.report.as_ref().map_or(0, |r| r.iterations))
            .collect()
    }
}

/// Runs the full pipeline of one curve job.
pub fn run_pipeline(
    job: &CurveJob,
    cfg: &Config,
) -> Result<(PhysicalMesh, ParametricMesh, OptimizeReport)> {
    let partition = match job.params.partition {
        PartitionStrategy::Uniform => uniform_partition(&job.curve, job.params.elements),
        PartitionStrategy::ArcLength => arclength_partition(&job.curve, job.params.elements)?,
        PartitionStrategy::Preoptimize => {
            preoptimize_linear(&job.curve, job.params.elements, cfg)?
        }
    };
    let (x, s) = interpolate_meshes(
        &job.curve,
        job.params.elements,
        job.params.degree_phys,
        job.params.degree_param,
        &partition,
        cfg.node_family,
    )?;
    optimize(&job.curve, &x, &s, job.params.layout, cfg)
}

type CurveOutcome = Result<(PhysicalMesh, ParametricMesh, OptimizeReport)>;

/// Distributes whole curves over workers. Straight-line curves are excluded
/// before distribution (a linear mesh already represents them exactly).
/// A failing curve is reported and does not abort the others.
pub fn run_by_curves(
    jobs: &[CurveJob],
    cfg: &Config,
    workers: usize,
) -> (Vec<Option<(PhysicalMesh, ParametricMesh)>>, ParallelReport) {
    let mut excluded = Vec::new();
    let mut included = Vec::new();
    for (id, job) in jobs.iter().enumerate() {
        if job.curve.is_line() {
            excluded.push(job.name.clone());
        } else {
            included.push(id);
        }
    }
    let plan = WorkPlan::by_curves(
        &included.iter().map(|&id| (id, jobs[id].params.elements)).collect::<Vec<_>>(),
        workers,
    );
    let ranges = plan.worker_ranges();

    let start = Instant::now();
    let per_worker: Vec<Vec<(usize, CurveOutcome)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|range| {
                let range = range.clone();
                let plan = &plan;
                scope.spawn(move || {
                    range
                        .map(|t| {
                            let id = plan.tasks[t].curve_id;
                            (t, run_pipeline(&jobs[id], cfg))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let wall_time = start.elapsed().as_secs_f64();

    let mut meshes: Vec<Option<(PhysicalMesh, ParametricMesh)>> =
        (0..jobs.len()).map(|_| None).collect();
    let mut task_reports: Vec<Option<TaskReport>> = vec![None; plan.tasks.len()];
    let mut worker_iterations = vec![0usize; per_worker.len()];
    for (w, results) in per_worker.into_iter().enumerate() {
        for (t, outcome) in results {
            let id = plan.tasks[t].curve_id;
            let entry = match outcome {
                Ok((x, s, report)) => {
                    worker_iterations[w] += report.iterations;
                    meshes[id] = Some((x, s));
                    TaskReport {
                        curve_id: id,
                        elements: plan.tasks[t].elements.clone(),
                        report: Some(report),
                        error: None,
                    }
                }
                Err(err) => TaskReport {
                    curve_id: id,
                    elements: plan.tasks[t].elements.clone(),
                    report: None,
                    error: Some(err.to_string()),
                },
            };
            task_reports[t] = Some(entry);
        }
    }

    let report = ParallelReport {
        mode: PlanMode::ByCurve,
        workers: plan.effective_workers(),
        task_reports: task_reports.into_iter().map(|t| t.expect("every task ran")).collect(),
        excluded,
        wall_time,
        serial_baseline: None,
        worker_iterations,
    };
    (meshes, report)
}

type ElementOutcome = Result<(PhysicalMesh, ParametricMesh, OptimizeReport)>;

/// Distributes the elements of one constrained problem over
/// `min(workers, R)` workers; the merged mesh is bitwise identical to the
/// serial per-element result because each element task is self-contained.
pub fn run_by_elements(
    curve: &Curve,
    x: &PhysicalMesh,
    s: &ParametricMesh,
    cfg: &Config,
    workers: usize,
) -> Result<(PhysicalMesh, ParametricMesh, ParallelReport)> {
    let plan = WorkPlan::by_elements(0, x.elem_count(), workers);
    let ranges = plan.worker_ranges();

    let start = Instant::now();
    let per_worker: Vec<Vec<(usize, ElementOutcome)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|range| {
                let range = range.clone();
                scope.spawn(move || {
                    range.map(|e| (e, optimize_element(curve, x, s, e, cfg))).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let wall_time = start.elapsed().as_secs_f64();

    let mut x_out = x.clone();
    let mut s_out = s.clone();
    let mut task_reports: Vec<Option<TaskReport>> = vec![None; plan.tasks.len()];
    let mut worker_iterations = vec![0usize; per_worker.len()];
    for (w, results) in per_worker.into_iter().enumerate() {
        for (e, outcome) in results {
            let entry = match outcome {
                Ok((sub_x, sub_s, report)) => {
                    worker_iterations[w] += report.iterations;
                    x_out.write_element(e, &sub_x);
                    s_out.write_element(e, &sub_s);
                    TaskReport {
                        curve_id: 0,
                        elements: e..e + 1,
                        report: Some(report),
                        error: None,
                    }
                }
                Err(err) => TaskReport {
                    curve_id: 0,
                    elements: e..e + 1,
                    report: None,
                    error: Some(err.to_string()),
                },
            };
            task_reports[e] = Some(entry);
        }
    }

    let report = ParallelReport {
        mode: PlanMode::ByElement,
        workers: plan.effective_workers(),
        task_reports: task_reports.into_iter().map(|t| t.expect("every element ran")).collect(),
        excluded: Vec::new(),
        wall_time,
        serial_baseline: None,
        worker_iterations,
    };
    Ok((x_out, s_out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_distribution_is_contiguous_and_exact() {
        let ranges = block_ranges(10, 4);
        assert_eq!(ranges, vec![0..3, 3..6, 6..8, 8..10]);
        assert!(block_ranges(0, 4).is_empty());
    }

    #[test]
    fn more_workers_than_tasks_is_clamped() {
        let plan = WorkPlan::by_elements(0, 3, 16);
        assert_eq!(plan.effective_workers(), 3);
        assert_eq!(plan.worker_ranges().len(), 3);
    }

    proptest! {
        #[test]
        fn task_partition_is_exact(n in 0usize..200, k in 1usize..32) {
            let plan = WorkPlan::by_elements(0, n, k);
            let ranges = plan.worker_ranges();
            // no overlap, no omission
            let mut covered = vec![false; n];
            for range in &ranges {
                for t in range.clone() {
                    prop_assert!(!covered[t], "task {t} assigned twice");
                    covered[t] = true;
                }
            }
            prop_assert!(covered.into_iter().all(|c| c));
            if n > 0 {
                prop_assert_eq!(ranges.len(), k.min(n));
            }
        }
    }
}
