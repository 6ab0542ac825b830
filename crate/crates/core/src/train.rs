//! Mini-batch training with Adam, warmup/cosine schedule, and validation tracking.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::graph::{build_graph, MolecularGraph};
use crate::lkm::{batch_kd_loss, embedding_dispersion, kd_loss_with, total_loss, LossConfig};
use crate::metrics::mean_absolute_error;
use crate::model::Model;
use crate::optim::{adam_step, AdamConfig, AdamState, Schedule};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Peak learning rate. The desk default (5e-3) is ten times the usual
    /// long-schedule value 5e-4: with 2 500 steps instead of hundreds of
    /// thousands, 5e-4 leaves the model far from converged.
    pub base_lr: f64,
    pub adam: AdamConfig,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 5e-3,
            adam: AdamConfig::default(),
            warmup_steps: 300,
            epochs: 100,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `epochs * ceil(n_train / batch_size)`.
    pub fn total_steps(&self, n_train: usize) -> usize {
        self.epochs * n_train.div_ceil(self.batch_size.max(1))
    }

    pub fn schedule(&self, n_train: usize) -> Result<Schedule> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Schedule::new(self.base_lr, self.warmup_steps, self.total_steps(n_train))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub l_task: f64,
    pub l_kd: f64,
    pub l_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Validation MAE in physical units.
    pub val_mae: f64,
    /// Mean per-molecule mixing loss on the validation set.
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last step.
    pub model: Model,
    /// Parameters at the epoch with the lowest validation MAE.
    pub best_model: Model,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub history: TrainHistory,
}

/// Graphs and standardized targets built once per dataset.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub graphs: Vec<MolecularGraph>,
    /// Physical units.
    pub targets: Vec<f64>,
    pub standardizer: Standardizer,
}

impl PreparedSet {
    pub fn new(dataset: &Dataset, cutoff: f64, n_rbf: usize) -> Result<Self> {
        let graphs = dataset
            .molecules()
            .iter()
            .map(|m| build_graph(m, cutoff, n_rbf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graphs,
            targets: dataset.targets(),
            standardizer: dataset.standardizer().unwrap_or(Standardizer::IDENTITY),
        })
    }

    pub fn for_model(dataset: &Dataset, model: &Model) -> Result<Self> {
        let cfg = model.config();
        Self::new(dataset, cfg.cutoff, cfg.n_rbf)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Owns a model and its optimizer state; one call to [`Trainer::step`] is one update.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    state: AdamState,
    schedule: Schedule,
    adam: AdamConfig,
    loss: LossConfig,
    step: usize,
}

impl Trainer {
    pub fn new(
        model: Model,
        config: &TrainConfig,
        loss: LossConfig,
        n_train: usize,
    ) -> Result<Self> {
        loss.validate()?;
        let schedule = config.schedule(n_train)?;
        let state = AdamState::new(model.parameters());
        Ok(Self {
            model,
            state,
            schedule,
            adam: config.adam,
            loss,
            step: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Forward, loss, backward and Adam update on `batch` (indices into `set`).
    ///
    /// With `gamma == 0` the mixing term is not recorded on the tape; its value
    /// is still computed for logging.
    pub fn step(&mut self, set: &PreparedSet, batch: &[usize]) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let lkm_active = self.loss.gamma > 0.0;
        let mut tape = Tape::new();
        let params = self.model.bind(&mut tape, true);
        let mut predictions = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        let mut kd_terms = Vec::with_capacity(batch.len());
        let mut dispersions = Vec::with_capacity(batch.len());
        for &i in batch {
            let out = self.model.forward(&mut tape, &params, &set.graphs[i])?;
            predictions.push(out.prediction);
            targets.push(set.standardizer.standardize(set.targets[i]));
            if lkm_active {
                kd_terms.push(kd_loss_with(
                    &mut tape,
                    &out.layer_embeddings,
                    self.loss.detach_mean,
                )?);
            } else {
                dispersions.push(embedding_dispersion(
                    tape.value(out.layer_embeddings.embeddings),
                )?);
            }
        }
        let kd = if lkm_active {
            batch_kd_loss(&mut tape, &kd_terms)?
        } else {
            tape.constant(Tensor::scalar(mean_in_order(&dispersions)))
        };
        let breakdown = total_loss(&mut tape, &predictions, &targets, kd, &self.loss)?;
        if !breakdown.total_loss.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                value: breakdown.total_loss,
            });
        }
        let grads = tape.backward(breakdown.total)?;
        let param_grads: Vec<Option<&[f64]>> =
            params.vars().iter().map(|&v| grads.get(v)).collect();
        let lr = self.schedule.lr_at(self.step)?;
        adam_step(
            self.model.parameters_mut(),
            &param_grads,
            &mut self.state,
            lr,
            &self.adam,
        )?;
        let record = StepRecord {
            step: self.step,
            lr,
            l_task: breakdown.task_loss,
            l_kd: breakdown.kd_loss,
            l_total: breakdown.total_loss,
        };
        self.step += 1;
        Ok(record)
    }
}

/// Same summation order as the tape's batch mean.
fn mean_in_order(values: &[f64]) -> f64 {
    let mut acc = values[0];
    for v in &values[1..] {
        acc += v;
    }
    acc * (1.0 / values.len() as f64)
}

/// Called with the model whenever validation MAE improves.
pub type CheckpointHook<'a> =
    dyn FnMut(&Model, &EpochRecord) -> core::result::Result<(), String> + 'a;

/// Trains `model` on `train`, evaluating on `val` after every epoch.
pub fn train(
    model: Model,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    loss: &LossConfig,
    on_improve: &mut CheckpointHook<'_>,
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if train.standardizer() != val.standardizer() {
        return Err(Error::InvalidArgument(format!(
            "train and validation standardizers differ: {:?} vs {:?}",
            train.standardizer(),
            val.standardizer()
        )));
    }
    let train_set = PreparedSet::for_model(train, &model)?;
    let val_set = PreparedSet::for_model(val, &model)?;
    train_prepared(model, &train_set, &val_set, config, loss, on_improve)
}

pub fn train_prepared(
    model: Model,
    train_set: &PreparedSet,
    val_set: &PreparedSet,
    config: &TrainConfig,
    loss: &LossConfig,
    on_improve: &mut CheckpointHook<'_>,
) -> Result<TrainOutcome> {
    train_observed(
        model,
        train_set,
        val_set,
        config,
        loss,
        on_improve,
        &mut |_| {},
    )
}

/// [`train_prepared`] that also reports every step as it completes; the std
/// side uses this for wall-clock timing.
pub fn train_observed(
    model: Model,
    train_set: &PreparedSet,
    val_set: &PreparedSet,
    config: &TrainConfig,
    loss: &LossConfig,
    on_improve: &mut CheckpointHook<'_>,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, config, *loss, train_set.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(Model, usize, f64)> = None;

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let record = trainer.step(train_set, batch)?;
            on_step(&record);
            history.steps.push(record);
        }
        let (val_mae, dispersion) = evaluate_prepared(trainer.model(), val_set)?;
        if !val_mae.is_finite() {
            return Err(Error::Diverged {
                step: trainer.steps_taken(),
                value: val_mae,
            });
        }
        let record = EpochRecord {
            epoch,
            val_mae,
            dispersion,
        };
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(_, _, b)| val_mae < *b) {
            on_improve(trainer.model(), &record).map_err(Error::Hook)?;
            best = Some((trainer.model().clone(), epoch, val_mae));
        }
    }
    let model = trainer.into_model();
    let (best_model, best_epoch, best_val_mae) =
        best.unwrap_or_else(|| (model.clone(), 0, f64::INFINITY));
    Ok(TrainOutcome {
        model,
        best_model,
        best_epoch,
        best_val_mae,
        history,
    })
}

/// Physical-unit predictions for every molecule in the set.
pub fn predict_prepared(model: &Model, set: &PreparedSet) -> Result<Vec<f64>> {
    set.graphs
        .iter()
        .map(|g| Ok(set.standardizer.destandardize(model.predict(g)?)))
        .collect()
}

/// Validation MAE (physical units) and mean per-molecule dispersion.
pub fn evaluate_prepared(model: &Model, set: &PreparedSet) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut predictions = Vec::with_capacity(set.len());
    let mut dispersions = Vec::with_capacity(set.len());
    for g in &set.graphs {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, false);
        let out = model.forward(&mut tape, &params, g)?;
        predictions.push(set.standardizer.destandardize(tape.item(out.prediction)));
        dispersions.push(embedding_dispersion(
            tape.value(out.layer_embeddings.embeddings),
        )?);
    }
    let mae = mean_absolute_error(&predictions, &set.targets)?;
    Ok((mae, mean_in_order(&dispersions)))
}

/// Mean absolute error in physical units.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let set = PreparedSet::for_model(dataset, model)?;
    let predictions = predict_prepared(model, &set)?;
    mean_absolute_error(&predictions, &set.targets)
}
