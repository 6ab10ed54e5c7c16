//! Trajectory datasets: truncation, time-delay embedding, equilibrium
//! shifting, finite differencing, and regression-data assembly.
//!
//! All transformations are pure and respect trajectory boundaries: derivative
//! stencils and shift pairs never straddle two source trajectories, and
//! truncation keeps original timestamps so alignment with control schedules
//! survives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum tolerated jitter between consecutive sampling gaps, in seconds.
const UNIFORMITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Decay,
    Controlled,
}

/// Uniformly sampled observed-state trajectory, optionally with aligned
/// controls. Observations are stored one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    observations: DMatrix<f64>,
    controls: Option<DMatrix<f64>>,
    kind: TrajectoryKind,
}

impl Trajectory {
    pub fn new(
        timestamps: Vec<f64>,
        observations: DMatrix<f64>,
        controls: Option<DMatrix<f64>>,
        kind: TrajectoryKind,
    ) -> Result<Self> {
        if timestamps.len() != observations.ncols() {
            return Err(Error::DimensionMismatch {
                context: "trajectory timestamps vs observations",
                expected: observations.ncols(),
                got: timestamps.len(),
            });
        }
        if let Some(u) = &controls {
            if u.ncols() != timestamps.len() {
                return Err(Error::DimensionMismatch {
                    context: "trajectory controls vs timestamps",
                    expected: timestamps.len(),
                    got: u.ncols(),
                });
            }
        }
        if timestamps.len() >= 2 {
            let h = timestamps[1] - timestamps[0];
            if h <= 0.0 {
                return Err(Error::InvalidInput(
                    "timestamps must be strictly increasing".into(),
                ));
            }
            for w in timestamps.windows(2) {
                if ((w[1] - w[0]) - h).abs() > UNIFORMITY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "non-uniform sampling: gap {} vs {}",
                        w[1] - w[0],
                        h
                    )));
                }
            }
        }
        Ok(Trajectory {
            timestamps,
            observations,
            controls,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn raw_dim(&self) -> usize {
        self.observations.nrows()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn controls(&self) -> Option<&DMatrix<f64>> {
        self.controls.as_ref()
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    /// Sampling period; single-sample trajectories have none.
    pub fn sample_period(&self) -> Option<f64> {
        (self.timestamps.len() >= 2).then(|| self.timestamps[1] - self.timestamps[0])
    }
}

/// Time-delay embedding layout: sample `k` of the embedded trajectory stacks
/// raw samples `k, k - stride, ..., k - delays*stride`, current first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub delays: usize,
    pub raw_dim: usize,
    pub stride: usize,
}

impl EmbeddingSpec {
    pub fn new(delays: usize, raw_dim: usize) -> Self {
        EmbeddingSpec {
            delays,
            raw_dim,
            stride: 1,
        }
    }

    pub fn embedded_dim(&self) -> usize {
        self.raw_dim * (self.delays + 1)
    }

    /// Leading samples consumed by the delay stack.
    pub fn warmup(&self) -> usize {
        self.delays * self.stride
    }
}

/// Whitney/Takens admissibility verdict for an embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingVerdict {
    pub admissible: bool,
    /// Smallest delay count that would make `raw_dim * (d + 1) >= 2n + 1`.
    pub min_delays: usize,
}

/// Accepts iff `p >= 2n + 1`. On failure the verdict suggests the minimal
/// number of delays for a raw dimension of `p`.
pub fn check_embedding_dimension(p: usize, n: usize) -> EmbeddingVerdict {
    let needed = 2 * n + 1;
    let min_delays = needed.div_ceil(p) - 1;
    EmbeddingVerdict {
        admissible: p >= needed,
        min_delays,
    }
}

/// Drops the leading `drop` samples; timestamps are preserved, not re-zeroed.
pub fn truncate_transient(traj: &Trajectory, drop: usize) -> Result<Trajectory> {
    if drop >= traj.len() {
        return Err(Error::EmptyResult);
    }
    let keep = traj.len() - drop;
    Trajectory::new(
        traj.timestamps[drop..].to_vec(),
        traj.observations.columns(drop, keep).into_owned(),
        traj.controls
            .as_ref()
            .map(|u| u.columns(drop, keep).into_owned()),
        traj.kind,
    )
}

/// Delay-embeds a trajectory; the first `delays*stride` samples are consumed
/// as history and controls are re-aligned to the current-time index.
pub fn embed(traj: &Trajectory, spec: &EmbeddingSpec) -> Result<Trajectory> {
    if traj.raw_dim() != spec.raw_dim {
        return Err(Error::DimensionMismatch {
            context: "embedding raw dimension",
            expected: spec.raw_dim,
            got: traj.raw_dim(),
        });
    }
    let warmup = spec.warmup();
    if traj.len() <= warmup {
        return Err(Error::TooShortTrajectory {
            needed: warmup + 1,
            got: traj.len(),
        });
    }
    if spec.delays == 0 {
        return Ok(traj.clone());
    }
    let out_len = traj.len() - warmup;
    let p = spec.embedded_dim();
    let mut observations = DMatrix::zeros(p, out_len);
    for k in 0..out_len {
        let current = warmup + k;
        for d in 0..=spec.delays {
            let src = traj.observations.column(current - d * spec.stride);
            observations
                .view_mut((d * spec.raw_dim, k), (spec.raw_dim, 1))
                .copy_from(&src);
        }
    }
    Trajectory::new(
        traj.timestamps[warmup..].to_vec(),
        observations,
        traj.controls
            .as_ref()
            .map(|u| u.columns(warmup, out_len).into_owned()),
        traj.kind,
    )
}

/// Central differences at interior points, second-order one-sided stencils at
/// both endpoints; output is aligned one-to-one with the input samples.
pub fn finite_difference(traj: &Trajectory) -> Result<DMatrix<f64>> {
    let len = traj.len();
    if len < 3 {
        return Err(Error::TooShortTrajectory { needed: 3, got: len });
    }
    let h = traj.sample_period().expect("len >= 3");
    let y = &traj.observations;
    let mut d = DMatrix::zeros(traj.raw_dim(), len);
    for k in 1..len - 1 {
        d.set_column(k, &((y.column(k + 1) - y.column(k - 1)) / (2.0 * h)));
    }
    d.set_column(
        0,
        &((y.column(0) * -3.0 + y.column(1) * 4.0 - y.column(2)) / (2.0 * h)),
    );
    d.set_column(
        len - 1,
        &((y.column(len - 1) * 3.0 - y.column(len - 2) * 4.0 + y.column(len - 3)) / (2.0 * h)),
    );
    Ok(d)
}

/// Assembled regression data: equilibrium-shifted, embedded observation
/// columns with aligned derivatives and controls.
#[derive(Debug, Clone)]
pub struct AssembledData {
    /// Embedded, shifted observations, one sample per column.
    pub y: DMatrix<f64>,
    /// Time derivatives aligned with `y` (finite differences per trajectory).
    pub ydot: DMatrix<f64>,
    /// Controls aligned with `y`, when every trajectory carries them.
    pub controls: Option<DMatrix<f64>>,
    /// Column count contributed by each source trajectory, in order.
    pub columns_per_trajectory: Vec<usize>,
    pub sample_period: f64,
}

impl AssembledData {
    pub fn embedded_dim(&self) -> usize {
        self.y.nrows()
    }

    /// Pairs `(y_k, y_{k+1})` that do not straddle trajectory boundaries,
    /// for discrete-time (shift) regressions.
    pub fn shift_pairs(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let total: usize = self
            .columns_per_trajectory
            .iter()
            .map(|&c| c.saturating_sub(1))
            .sum();
        let p = self.y.nrows();
        let mut current = DMatrix::zeros(p, total);
        let mut next = DMatrix::zeros(p, total);
        let mut out = 0;
        let mut offset = 0;
        for &cols in &self.columns_per_trajectory {
            for k in 0..cols.saturating_sub(1) {
                current.set_column(out, &self.y.column(offset + k));
                next.set_column(out, &self.y.column(offset + k + 1));
                out += 1;
            }
            offset += cols;
        }
        (current, next)
    }
}

/// Shifts every trajectory by `equilibrium`, embeds it, differentiates it,
/// and concatenates the results column-wise. Derivatives are taken per
/// trajectory, so no stencil crosses a boundary.
pub fn assemble_regression_data(
    trajectories: &[Trajectory],
    spec: &EmbeddingSpec,
    equilibrium: &DVector<f64>,
) -> Result<AssembledData> {
    if trajectories.is_empty() {
        return Err(Error::InvalidInput("no trajectories to assemble".into()));
    }
    let raw_dim = trajectories[0].raw_dim();
    let period = trajectories[0]
        .sample_period()
        .ok_or(Error::TooShortTrajectory { needed: 3, got: 1 })?;
    if equilibrium.len() != raw_dim {
        return Err(Error::DimensionMismatch {
            context: "equilibrium vs raw observations",
            expected: raw_dim,
            got: equilibrium.len(),
        });
    }
    let all_controlled = trajectories.iter().all(|t| t.controls().is_some());

    let mut blocks = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        if traj.raw_dim() != raw_dim {
            return Err(Error::InconsistentDims(format!(
                "raw dim {} vs {}",
                traj.raw_dim(),
                raw_dim
            )));
        }
        let this_period = traj.sample_period().ok_or(Error::TooShortTrajectory {
            needed: 3,
            got: traj.len(),
        })?;
        if (this_period - period).abs() > UNIFORMITY_TOL {
            return Err(Error::InconsistentSampling(this_period, period));
        }
        let mut shifted_obs = traj.observations.clone();
        for mut col in shifted_obs.column_iter_mut() {
            col -= equilibrium;
        }
        let shifted = Trajectory::new(
            traj.timestamps.clone(),
            shifted_obs,
            traj.controls.clone(),
            traj.kind,
        )?;
        let embedded = embed(&shifted, spec)?;
        let ydot = finite_difference(&embedded)?;
        blocks.push((embedded, ydot));
    }

    let total: usize = blocks.iter().map(|(t, _)| t.len()).sum();
    let p = spec.embedded_dim();
    let m = blocks[0].0.controls().map(|u| u.nrows()).unwrap_or(0);
    let mut y = DMatrix::zeros(p, total);
    let mut ydot = DMatrix::zeros(p, total);
    let mut controls = all_controlled.then(|| DMatrix::zeros(m, total));
    let mut columns_per_trajectory = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for (traj, d) in &blocks {
        let cols = traj.len();
        y.view_mut((0, offset), (p, cols))
            .copy_from(traj.observations());
        ydot.view_mut((0, offset), (p, cols)).copy_from(d);
        if let (Some(stacked), Some(u)) = (controls.as_mut(), traj.controls()) {
            stacked.view_mut((0, offset), (m, cols)).copy_from(u);
        }
        columns_per_trajectory.push(cols);
        offset += cols;
    }
    Ok(AssembledData {
        y,
        ydot,
        controls,
        columns_per_trajectory,
        sample_period: period,
    })
}

/// Equilibrium estimate: mean of the last `tail` samples of every decay
/// trajectory. Mirrors what an experimentalist has; averaging across
/// trajectories cancels residual ring-down (exactly so for opposite-sign
/// initial-condition pairs), so moderate record lengths suffice.
pub fn estimate_equilibrium(trajectories: &[Trajectory], tail: usize) -> Result<DVector<f64>> {
    let decays: Vec<&Trajectory> = trajectories
        .iter()
        .filter(|t| t.kind() == TrajectoryKind::Decay && !t.is_empty())
        .collect();
    if decays.is_empty() {
        return Err(Error::InvalidInput("no decay trajectories".into()));
    }
    let mut mean = DVector::zeros(decays[0].raw_dim());
    let mut count = 0usize;
    for traj in decays {
        let tail = tail.min(traj.len()).max(1);
        for k in traj.len() - tail..traj.len() {
            mean += traj.observations.column(k);
            count += 1;
        }
    }
    Ok(mean / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_trajectory(n: usize, slope: f64, h: f64) -> Trajectory {
        let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let observations = DMatrix::from_fn(1, n, |_, k| slope * k as f64 * h);
        Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).unwrap()
    }

    fn series(values: &[f64], h: f64) -> Trajectory {
        let timestamps: Vec<f64> = (0..values.len()).map(|k| k as f64 * h).collect();
        let observations = DMatrix::from_row_slice(1, values.len(), values);
        Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).unwrap()
    }

    #[test]
    fn rejects_non_uniform_sampling() {
        let timestamps = vec![0.0, 0.1, 0.25];
        let observations = DMatrix::zeros(2, 3);
        assert!(Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).is_err());
    }

    #[test]
    fn truncate_zero_is_identity() {
        let traj = ramp_trajectory(10, 2.0, 0.01);
        let out = truncate_transient(&traj, 0).unwrap();
        assert_eq!(out, traj);
    }

    #[test]
    fn truncate_keeps_original_timestamps() {
        let traj = ramp_trajectory(10, 2.0, 0.01);
        let out = truncate_transient(&traj, 4).unwrap();
        assert_eq!(out.len(), 6);
        assert!((out.timestamps()[0] - 0.04).abs() < 1e-15);
        assert!(matches!(
            truncate_transient(&traj, 10),
            Err(Error::EmptyResult)
        ));
    }

    #[test]
    fn embed_zero_delay_is_identity() {
        let traj = ramp_trajectory(5, 1.0, 0.1);
        let spec = EmbeddingSpec::new(0, 1);
        assert_eq!(embed(&traj, &spec).unwrap(), traj);
    }

    #[test]
    fn embed_scalar_hand_case() {
        let traj = series(&[1.0, 2.0, 3.0], 0.1);
        let spec = EmbeddingSpec::new(1, 1);
        let out = embed(&traj, &spec).unwrap();
        assert_eq!(out.len(), 2);
        // Current sample first.
        assert_eq!(out.observations().column(0).as_slice(), &[2.0, 1.0]);
        assert_eq!(out.observations().column(1).as_slice(), &[3.0, 2.0]);
        assert!((out.timestamps()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn embed_doubles_dimension_with_one_delay() {
        let n = 20;
        let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let observations = DMatrix::from_fn(33, n, |i, k| (i * 7 + k) as f64);
        let traj = Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).unwrap();
        let out = embed(&traj, &EmbeddingSpec::new(1, 33)).unwrap();
        assert_eq!(out.raw_dim(), 66);
        assert_eq!(out.len(), 19);
    }

    #[test]
    fn embedding_dimension_checks() {
        let v = check_embedding_dimension(13, 6);
        assert!(v.admissible);
        let v = check_embedding_dimension(12, 6);
        assert!(!v.admissible);
        assert_eq!(v.min_delays, 1);
        // Full-state observation accepted with no delays.
        let v = check_embedding_dimension(20, 6);
        assert!(v.admissible);
        assert_eq!(v.min_delays, 0);
    }

    #[test]
    fn finite_difference_exact_on_ramp() {
        let traj = ramp_trajectory(9, 3.5, 0.01);
        let d = finite_difference(&traj).unwrap();
        for k in 0..9 {
            assert!((d[(0, k)] - 3.5).abs() < 1e-10, "sample {k}: {}", d[(0, k)]);
        }
    }

    #[test]
    fn finite_difference_exact_on_quadratic() {
        let h = 0.05;
        let n = 12;
        let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let observations = DMatrix::from_fn(1, n, |_, k| {
            let t = k as f64 * h;
            t * t
        });
        let traj = Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).unwrap();
        let d = finite_difference(&traj).unwrap();
        for k in 0..n {
            let t = k as f64 * h;
            assert!(
                (d[(0, k)] - 2.0 * t).abs() < 1e-12,
                "sample {k}: {} vs {}",
                d[(0, k)],
                2.0 * t
            );
        }
    }

    #[test]
    fn finite_difference_accurate_on_sine() {
        let h = 1e-3;
        let n = 200;
        let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let observations = DMatrix::from_fn(1, n, |_, k| (k as f64 * h).sin());
        let traj = Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay).unwrap();
        let d = finite_difference(&traj).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..n {
            max_err = max_err.max((d[(0, k)] - (k as f64 * h).cos()).abs());
        }
        assert!(max_err < 1e-6, "max error {max_err:.3e}");
    }

    #[test]
    fn second_differences_converge_at_second_order() {
        // Differentiating twice: the O(h^2) error enters through the
        // one-sided endpoint columns of the first pass feeding the second
        // pass; a quartic exposes it near the boundary.
        let err_boundary = |h: f64| {
            let n = 32;
            let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
            let observations = DMatrix::from_fn(1, n, |_, k| (k as f64 * h).powi(4));
            let traj =
                Trajectory::new(timestamps.clone(), observations, None, TrajectoryKind::Decay)
                    .unwrap();
            let d1 = finite_difference(&traj).unwrap();
            let traj2 = Trajectory::new(timestamps, d1, None, TrajectoryKind::Decay).unwrap();
            let d2 = finite_difference(&traj2).unwrap();
            let mut max = 0.0f64;
            for k in 2..n - 2 {
                let t = k as f64 * h;
                max = max.max((d2[(0, k)] - 12.0 * t * t).abs());
            }
            max
        };
        // A cubic's second derivative is reproduced exactly away from the
        // endpoints.
        let cubic_interior = {
            let h = 0.1;
            let n = 32;
            let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
            let observations = DMatrix::from_fn(1, n, |_, k| (k as f64 * h).powi(3));
            let traj =
                Trajectory::new(timestamps.clone(), observations, None, TrajectoryKind::Decay)
                    .unwrap();
            let d1 = finite_difference(&traj).unwrap();
            let traj2 = Trajectory::new(timestamps, d1, None, TrajectoryKind::Decay).unwrap();
            let d2 = finite_difference(&traj2).unwrap();
            let mut max = 0.0f64;
            for k in 4..n - 4 {
                let t = k as f64 * h;
                max = max.max((d2[(0, k)] - 6.0 * t).abs());
            }
            max
        };
        assert!(cubic_interior < 1e-9, "cubic interior error {cubic_interior:.3e}");
        let ratio = err_boundary(0.1) / err_boundary(0.05);
        assert!(
            (2.5..6.0).contains(&ratio),
            "second-order convergence ratio {ratio}"
        );
    }

    #[test]
    fn assemble_single_trajectory_verbatim() {
        let traj = series(&[1.0, 2.0, 3.0, 4.0], 0.1);
        let spec = EmbeddingSpec::new(0, 1);
        let data = assemble_regression_data(&[traj.clone()], &spec, &DVector::zeros(1)).unwrap();
        assert_eq!(&data.y, traj.observations());
        assert_eq!(data.columns_per_trajectory, vec![4]);
    }

    #[test]
    fn assemble_respects_boundaries() {
        let a = series(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.1);
        let b = series(&[10.0, 20.0, 30.0, 40.0], 0.1);
        let spec = EmbeddingSpec::new(1, 1);
        let data = assemble_regression_data(&[a, b], &spec, &DVector::zeros(1)).unwrap();
        assert_eq!(data.columns_per_trajectory, vec![4, 3]);
        assert_eq!(data.y.ncols(), 7);
        let (current, next) = data.shift_pairs();
        assert_eq!(current.ncols(), 5);
        // Within-trajectory gaps are 1 (series a) or 10 (series b); a pair
        // straddling the boundary would jump from 5 to 20.
        for k in 0..current.ncols() {
            let gap = next[(0, k)] - current[(0, k)];
            assert!(
                (gap - 1.0).abs() < 1e-12 || (gap - 10.0).abs() < 1e-12,
                "cross-boundary pair detected at {k}: gap {gap}"
            );
        }
    }

    #[test]
    fn assemble_counts_match_formula() {
        let lengths = [23usize, 31, 17];
        let spec = EmbeddingSpec {
            delays: 2,
            raw_dim: 1,
            stride: 3,
        };
        let trajs: Vec<Trajectory> = lengths
            .iter()
            .map(|&n| series(&(0..n).map(|k| (k as f64).sin()).collect::<Vec<_>>(), 0.01))
            .collect();
        let data = assemble_regression_data(&trajs, &spec, &DVector::zeros(1)).unwrap();
        let expected: usize = lengths.iter().map(|&n| n - spec.warmup()).sum();
        assert_eq!(data.y.ncols(), expected);
    }

    #[test]
    fn assemble_rejects_mixed_dims_and_sampling() {
        let a = series(&[1.0, 2.0, 3.0], 0.1);
        let timestamps = vec![0.0, 0.2, 0.4];
        let b = Trajectory::new(
            timestamps,
            DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
            None,
            TrajectoryKind::Decay,
        )
        .unwrap();
        let spec = EmbeddingSpec::new(0, 1);
        assert!(matches!(
            assemble_regression_data(&[a.clone(), b], &spec, &DVector::zeros(1)),
            Err(Error::InconsistentSampling(..))
        ));
        let c = Trajectory::new(
            vec![0.0, 0.1, 0.2],
            DMatrix::zeros(2, 3),
            None,
            TrajectoryKind::Decay,
        )
        .unwrap();
        assert!(matches!(
            assemble_regression_data(&[a, c], &spec, &DVector::zeros(1)),
            Err(Error::InconsistentDims(..))
        ));
    }

    #[test]
    fn truncation_removes_off_manifold_transient() {
        use crate::plant::{build_benchmark_plant, simulate_decay};
        let plant = build_benchmark_plant(2, 6, 19).unwrap();
        let x = DVector::from_column_slice(&[0.35, -0.2]);
        let mut y0 = plant.lift_to_full(&x);
        // Perturb along the first transverse direction, in mixed coordinates.
        let mut aligned = DVector::zeros(6);
        aligned[2] = 0.1;
        aligned[4] = -0.08;
        y0 += plant.composed().rotation() * aligned;
        let initial_residual = plant.transverse_residual(&y0);
        assert!(initial_residual > 0.05);

        let sample_period = 1e-3;
        let traj = simulate_decay(plant.system(), &y0, 2.5, sample_period).unwrap();
        let tau = plant.fast_time_constant();
        let residual_after = |n_tau: f64| {
            let drop = (n_tau * tau / sample_period).round() as usize;
            let kept = truncate_transient(&traj, drop).unwrap();
            plant.transverse_residual(&kept.observations().column(0).into_owned())
        };
        // The slowest transverse component contracts like exp(-t/tau), so
        // three time constants leave ~e^-3 of the initial offset and five
        // push it below 1%.
        assert!(residual_after(3.0) < 0.06 * initial_residual);
        assert!(residual_after(5.0) < 0.01 * initial_residual);
    }

    #[test]
    fn equilibrium_averages_trajectory_tails() {
        let a = series(&[5.0, 4.0, 3.0], 0.1);
        let b = series(&[9.0, 7.0, 5.0, 3.0, 1.0], 0.1);
        // Tail of a: (4 + 3)/2 = 3.5; tail of b: (3 + 1)/2 = 2.0.
        let eq = estimate_equilibrium(&[a, b], 2).unwrap();
        assert!((eq[0] - 2.75).abs() < 1e-12);
        // Mirrored ring-down cancels to accumulation precision.
        let c = series(&[0.9, -0.5, 0.3], 0.1);
        let d = series(&[-0.9, 0.5, -0.3], 0.1);
        let eq = estimate_equilibrium(&[c, d], 3).unwrap();
        assert!(eq[0].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn embed_and_truncate_commute(
            len in 8usize..40,
            drop in 0usize..5,
            delays in 0usize..3,
            stride in 1usize..3,
        ) {
            prop_assume!(len > drop + delays * stride + 2);
            let traj = series(
                &(0..len).map(|k| (k as f64 * 0.37).sin()).collect::<Vec<_>>(),
                0.01,
            );
            let spec = EmbeddingSpec { delays, raw_dim: 1, stride };
            let a = embed(&truncate_transient(&traj, drop).unwrap(), &spec).unwrap();
            let b = truncate_transient(&embed(&traj, &spec).unwrap(), drop).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
