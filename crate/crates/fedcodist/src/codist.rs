//! Server-side codistillation between the two federated models.
//!
//! Two strategies are provided. `PeriodicCodist` pauses federated training
//! every `p` rounds, distills each model toward the other for `s` steps, and
//! resumes from the students after resetting the server optimizers' moments.
//! `MergedCodist` runs `s` distillation steps every round, turns the induced
//! model difference into a distillation gradient, rescales it to the norm of
//! the aggregated client gradient, and interpolates the two with a factor
//! `alpha` before the single server update. `alpha = 1` recovers plain
//! FedAvg exactly.
//!
//! The two students' distillation runs are independent (teachers are
//! immutable snapshots) and own separate rng streams; results are installed
//! in a fixed order (small then large), so scheduling cannot change outputs.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::{
    collect_round_gradient, fedavg_round, ClientPool, RoundConfig,
};
use crate::numerics::{
    backprop, forward_logits, mixup, softmax_temp, Batch, LossKind, MlpSpec, ParamVector, Tensor,
};
use crate::optim::{adam_step, reset_moments, schedule_lr, AdamState, LinearSchedule};
use crate::rng::{StreamFactory, StreamId};

/// Identifies one of the two concurrently trained models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Small,
    Large,
}

impl ModelKind {
    pub fn stream_tag(self) -> u64 {
        match self {
            ModelKind::Small => 0,
            ModelKind::Large => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Small => "small",
            ModelKind::Large => "large",
        }
    }
}

/// Distillation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Softmax temperature applied to the cross-model teacher (and, when
    /// `scale_student_logits` is set, to the student's own logits inside the
    /// KL, so a student matching its targets has exactly zero loss).
    pub temperature_cross: f64,
    /// Temperature for the student-initial self-teacher.
    pub temperature_self: f64,
    /// Interpolation weight of the self-teacher in the target distribution.
    pub self_reg_lambda: f64,
    /// Adam steps per distillation run.
    pub steps_s: u64,
    pub distill_batch_size: usize,
    /// Student learning rate, indexed by federated round.
    pub student_lr_schedule: LinearSchedule,
    /// When false, the student's logits enter the KL at temperature 1
    /// regardless of the teacher temperature.
    pub scale_student_logits: bool,
    /// When set, distillation minibatches are mixed with a shuffled copy of
    /// themselves using per-row `Beta(beta, beta)` coefficients.
    pub mixup_beta: Option<f64>,
}

/// When codistillation runs and how its result is consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CodistSchedule {
    pub mode: CodistMode,
    /// Codistillation period in rounds (periodic mode).
    pub period_p: u64,
    /// Distillation steps per codistillation round.
    pub steps_s: u64,
    /// Merge factor (merged mode); `alpha = 1` recovers FedAvg.
    pub alpha: f64,
    /// Skip the distillation computation entirely when `alpha == 1`. Off by
    /// default so rng streams stay comparable across configurations; the
    /// trajectory is identical either way.
    pub skip_distill_when_alpha_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodistMode {
    Periodic,
    Merged,
}

/// Target distribution for distillation: a convex combination of the
/// temperature-scaled cross-teacher and self-teacher predictive
/// distributions. Rows sum to one by construction.
pub fn build_targets(
    spec_cross: &MlpSpec,
    teacher_cross: &ParamVector,
    spec_self: &MlpSpec,
    teacher_self: &ParamVector,
    features: &Tensor,
    cfg: &DistillConfig,
) -> Result<Tensor> {
    if spec_cross.num_classes != spec_self.num_classes {
        return Err(Error::IncompatibleParams(format!(
            "teachers disagree on class count: {} vs {}",
            spec_cross.num_classes, spec_self.num_classes
        )));
    }
    let lambda = cfg.self_reg_lambda;
    let cross = softmax_temp(
        &forward_logits(spec_cross, teacher_cross, features)?,
        cfg.temperature_cross,
    )?;
    if lambda == 0.0 {
        return Ok(cross);
    }
    let own = softmax_temp(
        &forward_logits(spec_self, teacher_self, features)?,
        cfg.temperature_self,
    )?;
    if lambda == 1.0 {
        return Ok(own);
    }
    // Written as c + lambda*(o - c) so identical teacher distributions yield
    // exactly c: a student whose outputs already match its targets then sees
    // a bitwise-zero gradient instead of ulp noise amplified by Adam.
    let mut targets = cross;
    for r in 0..targets.rows() {
        let self_row = own.row(r).to_vec();
        for (t, s) in targets.row_mut(r).iter_mut().zip(self_row) {
            *t += lambda * (s - *t);
        }
    }
    Ok(targets)
}

/// Cycles through a seeded shuffle of the distillation set, reshuffling
/// whenever the pass is exhausted; minibatches may span a reshuffle.
struct CyclingBatcher {
    order: Vec<usize>,
    cursor: usize,
}

impl CyclingBatcher {
    fn new(len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        shuffle(&mut order, rng);
        Self { order, cursor: 0 }
    }

    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                shuffle(&mut self.order, rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Distills the cross-model teacher into a student for `cfg.steps_s` Adam
/// steps and returns the updated student. The frozen `student_init` acts as
/// the self-teacher; teacher parameters are never modified.
///
/// Student and teacher may have different architectures as long as they
/// agree on the number of classes.
#[allow(clippy::too_many_arguments)]
pub fn distill(
    spec_student: &MlpSpec,
    student_init: &ParamVector,
    spec_teacher: &MlpSpec,
    teacher_cross: &ParamVector,
    distill_data: &Batch,
    cfg: &DistillConfig,
    round: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector> {
    if distill_data.is_empty() {
        return Err(Error::NoDistillationData);
    }
    let lr = schedule_lr(&cfg.student_lr_schedule, round)?;
    let student_temperature = if cfg.scale_student_logits {
        cfg.temperature_cross
    } else {
        1.0
    };

    let mut student = student_init.clone();
    let mut opt = AdamState::new(student_init);
    let mut batcher = CyclingBatcher::new(distill_data.len(), rng);
    for _ in 0..cfg.steps_s {
        let indices = batcher.next_batch(cfg.distill_batch_size, rng);
        let mut batch = distill_data.select(&indices);
        if let Some(beta) = cfg.mixup_beta {
            let mut permuted: Vec<usize> = (0..indices.len()).collect();
            shuffle(&mut permuted, rng);
            let partner = batch.select(&permuted);
            batch = mixup(&batch, &partner, beta, rng)?;
        }
        let targets = build_targets(
            spec_teacher,
            teacher_cross,
            spec_student,
            student_init,
            &batch.features,
            cfg,
        )?;
        let (_, grad) = backprop(
            spec_student,
            &student,
            &batch,
            LossKind::KlToTarget,
            Some(&targets),
            student_temperature,
        )?;
        let stepped = adam_step(&student, &grad, &opt, lr)?;
        student = stepped.0;
        opt = stepped.1;
    }
    Ok(student)
}

/// Model difference induced by a distillation round: `theta_t - student`.
pub fn distillation_gradient(
    theta_round_start: &ParamVector,
    theta_student: &ParamVector,
) -> Result<ParamVector> {
    theta_round_start.sub(theta_student)
}

/// Merges the aggregated client gradient with the norm-rescaled distillation
/// gradient: `alpha*g + (1-alpha)*delta*(|g|/|delta|)`, norms over the full
/// flat vector.
///
/// `alpha = 1` returns `g` exactly. A zero distillation gradient carries no
/// information and yields `alpha*g`; a zero client gradient yields zero.
pub fn merge_gradients(g: &ParamVector, delta: &ParamVector, alpha: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    g.ensure_compatible(delta, "merge operands")?;
    if alpha == 1.0 {
        return Ok(g.clone());
    }
    let g_norm = g.l2_norm();
    if g_norm == 0.0 {
        return Ok(g.zeros_like());
    }
    let delta_norm = delta.l2_norm();
    if delta_norm == 0.0 {
        return Ok(g.scale(alpha));
    }
    g.scale(alpha)
        .add_scaled(delta, (1.0 - alpha) * g_norm / delta_norm)
}

/// Parameters plus server optimizer state for one model.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub params: ParamVector,
    pub server_state: AdamState,
}

/// Joint training state of the small and large models.
#[derive(Debug, Clone)]
pub struct DualModelState {
    pub small: ModelState,
    pub large: ModelState,
}

impl DualModelState {
    pub fn model(&self, kind: ModelKind) -> &ModelState {
        match kind {
            ModelKind::Small => &self.small,
            ModelKind::Large => &self.large,
        }
    }
}

/// Everything fixed over an experiment that the round drivers need.
pub struct TrainEnv<'a> {
    pub small_spec: &'a MlpSpec,
    pub large_spec: &'a MlpSpec,
    pub pool: &'a ClientPool,
    pub round_cfg: &'a RoundConfig,
    pub server_lr_small: &'a LinearSchedule,
    pub server_lr_large: &'a LinearSchedule,
    pub streams: StreamFactory,
}

impl<'a> TrainEnv<'a> {
    fn spec(&self, kind: ModelKind) -> &'a MlpSpec {
        match kind {
            ModelKind::Small => self.small_spec,
            ModelKind::Large => self.large_spec,
        }
    }

    fn pool_ids(&self, kind: ModelKind) -> Vec<u64> {
        match kind {
            ModelKind::Small => self.pool.small_model_pool(),
            ModelKind::Large => self.pool.large_model_pool(),
        }
    }

    fn server_schedule(&self, kind: ModelKind) -> &'a LinearSchedule {
        match kind {
            ModelKind::Small => self.server_lr_small,
            ModelKind::Large => self.server_lr_large,
        }
    }

    /// Learning rate for training round `round` (1-based): the schedule is
    /// queried at `round - 1`, so round 1 trains at the full initial rate and
    /// the zero value is reached only after the final round.
    fn server_lr(&self, kind: ModelKind, round: u64) -> Result<f64> {
        schedule_lr(self.server_schedule(kind), round - 1)
    }
}

/// Codistillation inputs shared by both strategies.
pub struct CodistArgs<'a> {
    pub distill_cfg: &'a DistillConfig,
    pub schedule: &'a CodistSchedule,
    pub distill_data: &'a Batch,
}

impl CodistArgs<'_> {
    /// Effective distillation config with the schedule's step count.
    fn effective_cfg(&self) -> DistillConfig {
        DistillConfig {
            steps_s: self.schedule.steps_s,
            ..self.distill_cfg.clone()
        }
    }
}

/// One plain FedAvg round for both models. The models share no state and
/// consume disjoint streams, so their order is immaterial.
pub fn fedavg_dual_round(env: &TrainEnv, state: &mut DualModelState, round: u64) -> Result<()> {
    for kind in [ModelKind::Small, ModelKind::Large] {
        let mut rng = env.streams.stream(StreamId::Round {
            model: kind.stream_tag(),
            round,
        });
        let model = match kind {
            ModelKind::Small => &mut state.small,
            ModelKind::Large => &mut state.large,
        };
        let lr = env.server_lr(kind, round)?;
        let (params, server_state) = fedavg_round(
            env.spec(kind),
            &model.params,
            &env.pool_ids(kind),
            env.pool,
            env.round_cfg,
            &model.server_state,
            lr,
            &mut rng,
        )?;
        model.params = params;
        model.server_state = server_state;
    }
    Ok(())
}

/// Distills both students from frozen teacher snapshots of the current
/// parameters. Returns `(student_small, student_large)`.
fn distill_both(
    env: &TrainEnv,
    args: &CodistArgs,
    state: &DualModelState,
    round: u64,
) -> Result<(ParamVector, ParamVector)> {
    let cfg = args.effective_cfg();
    let teacher_small = &state.small.params;
    let teacher_large = &state.large.params;
    let mut students = Vec::with_capacity(2);
    for kind in [ModelKind::Small, ModelKind::Large] {
        let (spec_student, student_init, spec_teacher, teacher) = match kind {
            ModelKind::Small => (env.small_spec, teacher_small, env.large_spec, teacher_large),
            ModelKind::Large => (env.large_spec, teacher_large, env.small_spec, teacher_small),
        };
        let mut rng = env.streams.stream(StreamId::Distill {
            model: kind.stream_tag(),
            round,
        });
        students.push(distill(
            spec_student,
            student_init,
            spec_teacher,
            teacher,
            args.distill_data,
            &cfg,
            round,
            &mut rng,
        )?);
    }
    let large = students.pop().unwrap();
    let small = students.pop().unwrap();
    Ok((small, large))
}

/// One `PeriodicCodist` round: a FedAvg round for both models, then, when
/// the round index is a multiple of the period, a mutual distillation phase
/// that replaces both models with their students and resets both server
/// optimizers' moments.
pub fn periodic_codist_round(
    env: &TrainEnv,
    args: &CodistArgs,
    state: &mut DualModelState,
    round: u64,
) -> Result<()> {
    fedavg_dual_round(env, state, round)?;
    if round.is_multiple_of(args.schedule.period_p) {
        let (student_small, student_large) = distill_both(env, args, state, round)?;
        state.small.params = student_small;
        state.large.params = student_large;
        state.small.server_state = reset_moments(&state.small.server_state);
        state.large.server_state = reset_moments(&state.large.server_state);
    }
    Ok(())
}

/// One `MergedCodist` round: aggregate client gradients for both models,
/// distill students from pre-update snapshots, merge the distillation
/// gradients with the client gradients, and apply a single server update per
/// model. Server moments are never reset in this mode.
pub fn merged_codist_round(
    env: &TrainEnv,
    args: &CodistArgs,
    state: &mut DualModelState,
    round: u64,
) -> Result<()> {
    let alpha = args.schedule.alpha;
    let mut gradients = Vec::with_capacity(2);
    for kind in [ModelKind::Small, ModelKind::Large] {
        let mut rng = env.streams.stream(StreamId::Round {
            model: kind.stream_tag(),
            round,
        });
        gradients.push(collect_round_gradient(
            env.spec(kind),
            &state.model(kind).params,
            &env.pool_ids(kind),
            env.pool,
            env.round_cfg,
            &mut rng,
        )?);
    }
    let g_large = gradients.pop().unwrap();
    let g_small = gradients.pop().unwrap();

    let skip = alpha == 1.0 && args.schedule.skip_distill_when_alpha_one;
    let (merged_small, merged_large) = if skip {
        (g_small.value.clone(), g_large.value.clone())
    } else {
        let (student_small, student_large) = distill_both(env, args, state, round)?;
        let delta_small = distillation_gradient(&state.small.params, &student_small)?;
        let delta_large = distillation_gradient(&state.large.params, &student_large)?;
        (
            merge_gradients(&g_small.value, &delta_small, alpha)?,
            merge_gradients(&g_large.value, &delta_large, alpha)?,
        )
    };

    for (kind, merged) in [
        (ModelKind::Small, merged_small),
        (ModelKind::Large, merged_large),
    ] {
        let model = match kind {
            ModelKind::Small => &mut state.small,
            ModelKind::Large => &mut state.large,
        };
        let lr = env.server_lr(kind, round)?;
        let (params, server_state) = adam_step(&model.params, &merged, &model.server_state, lr)?;
        model.params = params;
        model.server_state = server_state;
    }
    Ok(())
}

/// Runs plain dual-pool FedAvg for `total_rounds`, invoking the observer
/// after each round.
pub fn run_fedavg(
    env: &TrainEnv,
    state: &mut DualModelState,
    total_rounds: u64,
    mut observe: impl FnMut(u64, &DualModelState) -> Result<()>,
) -> Result<()> {
    for round in 1..=total_rounds {
        fedavg_dual_round(env, state, round)?;
        observe(round, state)?;
    }
    Ok(())
}

/// Runs `PeriodicCodist` for `total_rounds`.
pub fn run_periodic_codist(
    env: &TrainEnv,
    args: &CodistArgs,
    state: &mut DualModelState,
    total_rounds: u64,
    mut observe: impl FnMut(u64, &DualModelState) -> Result<()>,
) -> Result<()> {
    for round in 1..=total_rounds {
        periodic_codist_round(env, args, state, round)?;
        observe(round, state)?;
    }
    Ok(())
}

/// Runs `MergedCodist` for `total_rounds`.
pub fn run_merged_codist(
    env: &TrainEnv,
    args: &CodistArgs,
    state: &mut DualModelState,
    total_rounds: u64,
    mut observe: impl FnMut(u64, &DualModelState) -> Result<()>,
) -> Result<()> {
    for round in 1..=total_rounds {
        merged_codist_round(env, args, state, round)?;
        observe(round, state)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Activation;
    use crate::rng::StreamFactory;

    fn spec(hidden: &[usize]) -> MlpSpec {
        MlpSpec {
            input_dim: 3,
            hidden_dims: hidden.to_vec(),
            num_classes: 4,
            activation: Activation::Tanh,
        }
    }

    fn distill_cfg(steps: u64, lr: f64) -> DistillConfig {
        DistillConfig {
            temperature_cross: 2.0,
            temperature_self: 2.0,
            self_reg_lambda: 0.3,
            steps_s: steps,
            distill_batch_size: 4,
            student_lr_schedule: LinearSchedule {
                initial_lr: lr,
                total_rounds: 100,
            },
            scale_student_logits: true,
            mixup_beta: None,
        }
    }

    fn features(n: usize) -> Tensor {
        use rand::Rng;
        let mut rng = StreamFactory::new(55).stream(StreamId::DistillSet);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn build_targets_endpoints() {
        let s_cross = spec(&[5]);
        let s_self = spec(&[]);
        let f = StreamFactory::new(1);
        let t_cross = s_cross.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let t_self = s_self.init_params(&mut f.stream(StreamId::Init { model: 1 }));
        let x = features(6);

        let mut cfg = distill_cfg(1, 0.1);
        cfg.self_reg_lambda = 0.0;
        let pure_cross = build_targets(&s_cross, &t_cross, &s_self, &t_self, &x, &cfg).unwrap();
        let expected =
            softmax_temp(&forward_logits(&s_cross, &t_cross, &x).unwrap(), 2.0).unwrap();
        assert_eq!(pure_cross, expected);

        cfg.self_reg_lambda = 1.0;
        let pure_self = build_targets(&s_cross, &t_cross, &s_self, &t_self, &x, &cfg).unwrap();
        let expected = softmax_temp(&forward_logits(&s_self, &t_self, &x).unwrap(), 2.0).unwrap();
        assert_eq!(pure_self, expected);
    }

    #[test]
    fn build_targets_convex_combination_rowwise() {
        let s_cross = spec(&[5]);
        let s_self = spec(&[]);
        let f = StreamFactory::new(2);
        let t_cross = s_cross.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let t_self = s_self.init_params(&mut f.stream(StreamId::Init { model: 1 }));
        let x = features(5);
        let mut cfg = distill_cfg(1, 0.1);
        cfg.self_reg_lambda = 0.3;
        cfg.temperature_self = 0.7;

        let targets = build_targets(&s_cross, &t_cross, &s_self, &t_self, &x, &cfg).unwrap();
        let cross = softmax_temp(&forward_logits(&s_cross, &t_cross, &x).unwrap(), 2.0).unwrap();
        let own = softmax_temp(&forward_logits(&s_self, &t_self, &x).unwrap(), 0.7).unwrap();
        for r in 0..5 {
            let mut row_sum = 0.0;
            for j in 0..4 {
                let expected = 0.7 * cross.row(r)[j] + 0.3 * own.row(r)[j];
                assert!((targets.row(r)[j] - expected).abs() < 1e-15);
                row_sum += targets.row(r)[j];
            }
            assert!((row_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distill_zero_steps_is_identity() {
        let s = spec(&[4]);
        let teacher_spec = spec(&[6]);
        let f = StreamFactory::new(3);
        let student = s.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let teacher = teacher_spec.init_params(&mut f.stream(StreamId::Init { model: 1 }));
        let data = Batch::unlabeled(features(8));
        let cfg = distill_cfg(0, 0.1);
        let mut rng = f.stream(StreamId::Distill { model: 0, round: 1 });
        let out = distill(&s, &student, &teacher_spec, &teacher, &data, &cfg, 1, &mut rng).unwrap();
        assert_eq!(out, student);
    }

    #[test]
    fn distill_self_targets_leave_student_unchanged() {
        let s = spec(&[4]);
        let f = StreamFactory::new(4);
        let student = s.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let data = Batch::unlabeled(features(10));
        // Teacher is a copy of the student and temperatures are equal, so
        // targets coincide with the student's own scaled outputs.
        let cfg = distill_cfg(25, 0.05);
        let mut rng = f.stream(StreamId::Distill { model: 0, round: 1 });
        let out = distill(&s, &student, &s, &student.clone(), &data, &cfg, 1, &mut rng).unwrap();
        let max_move = out
            .values()
            .iter()
            .zip(student.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_move < 1e-10, "student moved by {max_move}");
    }

    #[test]
    fn distill_rejects_empty_data() {
        let s = spec(&[]);
        let f = StreamFactory::new(5);
        let student = s.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let data = Batch::unlabeled(Tensor::zeros(vec![0, 3]));
        let cfg = distill_cfg(1, 0.1);
        let mut rng = f.stream(StreamId::Distill { model: 0, round: 1 });
        assert!(matches!(
            distill(&s, &student, &s, &student, &data, &cfg, 1, &mut rng),
            Err(Error::NoDistillationData)
        ));
    }

    #[test]
    fn distill_does_not_touch_teacher() {
        let s_student = spec(&[4]);
        let s_teacher = spec(&[7]);
        let f = StreamFactory::new(6);
        let student = s_student.init_params(&mut f.stream(StreamId::Init { model: 0 }));
        let teacher = s_teacher.init_params(&mut f.stream(StreamId::Init { model: 1 }));
        let teacher_before = teacher.clone();
        let data = Batch::unlabeled(features(8));
        let cfg = distill_cfg(10, 0.1);
        let mut rng = f.stream(StreamId::Distill { model: 0, round: 2 });
        let out = distill(
            &s_student, &student, &s_teacher, &teacher, &data, &cfg, 2, &mut rng,
        )
        .unwrap();
        assert_eq!(teacher, teacher_before);
        assert_ne!(out, student, "distillation should move the student");
    }

    #[test]
    fn distillation_gradient_is_subtraction() {
        let layout = crate::numerics::ParamLayout::from_lengths([("p", 2)]);
        let theta = ParamVector::from_values(std::sync::Arc::clone(&layout), vec![1.0, 2.0]);
        let student = ParamVector::from_values(layout, vec![0.5, 2.5]);
        let delta = distillation_gradient(&theta, &student).unwrap();
        assert_eq!(delta.values(), &[0.5, -0.5]);
        let zero = distillation_gradient(&theta, &theta).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::from_values(
            crate::numerics::ParamLayout::from_lengths([("p", values.len())]),
            values.to_vec(),
        )
    }

    #[test]
    fn merge_alpha_one_is_exactly_g() {
        let g = pv(&[3.0, 4.0]);
        let delta = pv(&[100.0, -7.0]);
        let merged = merge_gradients(&g, &delta, 1.0).unwrap();
        assert_eq!(merged, g);
    }

    #[test]
    fn merge_alpha_zero_rescales_delta_to_g_norm() {
        let g = pv(&[3.0, 4.0]);
        let delta = pv(&[0.0, 2.0]);
        let merged = merge_gradients(&g, &delta, 0.0).unwrap();
        assert!((merged.values()[0]).abs() < 1e-15);
        assert!((merged.values()[1] - 5.0).abs() < 1e-12);
        assert!((merged.l2_norm() - g.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn merge_half_matches_hand_evaluation() {
        let g = pv(&[3.0, 4.0]);
        let delta = pv(&[0.0, 2.0]);
        let merged = merge_gradients(&g, &delta, 0.5).unwrap();
        assert!((merged.values()[0] - 1.5).abs() < 1e-12);
        assert!((merged.values()[1] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn merge_guards() {
        let g = pv(&[3.0, 4.0]);
        let zero = pv(&[0.0, 0.0]);
        // Zero distillation gradient: alpha * g.
        let merged = merge_gradients(&g, &zero, 0.25).unwrap();
        assert_eq!(merged.values(), &[0.75, 1.0]);
        // Zero client gradient: zero.
        let merged = merge_gradients(&zero, &g, 0.25).unwrap();
        assert!(merged.values().iter().all(|&v| v == 0.0));
        // Alpha outside [0, 1].
        assert!(matches!(
            merge_gradients(&g, &zero, 1.5),
            Err(Error::InvalidAlpha(_))
        ));
        assert!(matches!(
            merge_gradients(&g, &zero, -0.1),
            Err(Error::InvalidAlpha(_))
        ));
        assert!(matches!(
            merge_gradients(&g, &zero, f64::NAN),
            Err(Error::InvalidAlpha(_))
        ));
    }
}
