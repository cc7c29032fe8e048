//! Masked value prediction training and evaluation for either
//! architecture. One run is single-threaded and fully determined BY
//! (model seed, train seed, dataset); mask choices derive from the
//! train seed only, so both architectures see identical masked batches.

use crate::layers::{
    backward_trace, forward_trace, rng_labels, ModelConfig, ParameterSet, Trace,
};
use crate::numerics::{adam_step, AdamState, RngState};
use crate::synthgen::{ConditionalMeanOracle, SynthConfig, SynthDataset, SynthSample};
use crate::{Error, Result};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub masks_per_sample: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Reference defaults: 200 epochs, batch 256, Adam lr 0.001,
    /// one random mask per sample.
    pub fn default_with_seed(seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 256,
            learning_rate: 0.001,
            masks_per_sample: 1,
            seed,
        }
    }

    pub fn validate(&self, seq_len: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.masks_per_sample == 0 || self.masks_per_sample >= seq_len {
            return Err(Error::Config(format!(
                "masks_per_sample {} must be in 1..{}",
                self.masks_per_sample, seq_len
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub test_losses: Vec<f64>,
    /// (epoch index, loss) of the best recorded test loss.
    pub best: Option<(usize, f64)>,
    pub wall_secs: f64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub data_config: SynthConfig,
}

impl TrainReport {
    pub fn best_test_loss(&self) -> Option<f64> {
        self.best.map(|(_, l)| l)
    }
}

/// Chooses `masks` distinct slots uniformly without replacement and
/// returns (input values, mask flags, targets). Inputs at masked slots
/// are zeroed; the mask flag routes them to the mask embedding.
pub fn mask_sample(
    sample: &SynthSample,
    rng: &mut RngState,
    masks: usize,
) -> (Vec<usize>, Vec<f64>, Vec<bool>, Vec<f64>) {
    let l = sample.tokens.len();
    let mut flags = vec![false; l];
    choose_mask_slots(rng, l, masks, &mut flags);
    let mut values = sample.values.clone();
    for (i, &f) in flags.iter().enumerate() {
        if f {
            values[i] = 0.0;
        }
    }
    (sample.tokens.clone(), values, flags, sample.values.clone())
}

fn choose_mask_slots(rng: &mut RngState, l: usize, masks: usize, flags: &mut [bool]) {
    flags.fill(false);
    // Partial Fisher-Yates over slot indices.
    let mut slots: Vec<usize> = (0..l).collect();
    for i in 0..masks {
        let j = i + rng.usize_below(l - i);
        slots.swap(i, j);
        flags[slots[i]] = true;
    }
}

/// Mean squared error over masked positions.
pub fn mvp_loss(predictions: &[f64], targets: &[f64], flags: &[bool]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, t), &f) in predictions.iter().zip(targets).zip(flags) {
        if f {
            let e = p - t;
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Usage("mvp_loss called with zero masked positions".into()));
    }
    Ok(sum / n as f64)
}

/// Anything that can fill in masked values: a trained model or the
/// closed-form conditional-mean oracle.
pub trait ValuePredictor {
    fn predict_values(
        &self,
        tokens: &[usize],
        values: &[f64],
        flags: &[bool],
    ) -> Result<Vec<f64>>;
}

impl ValuePredictor for ParameterSet {
    fn predict_values(
        &self,
        tokens: &[usize],
        values: &[f64],
        flags: &[bool],
    ) -> Result<Vec<f64>> {
        let mut trace = Trace::new(&self.config);
        forward_trace(self, tokens, values, flags, &mut trace)?;
        Ok(trace.preds)
    }
}

impl ValuePredictor for ConditionalMeanOracle {
    fn predict_values(
        &self,
        tokens: &[usize],
        values: &[f64],
        flags: &[bool],
    ) -> Result<Vec<f64>> {
        self.predict(tokens, values, flags)
    }
}

/// Deterministic per-sample mask plan for evaluation, a function of the
/// seed only so both architectures score on identical problems.
pub fn eval_mask_plan(seed: u64, n_samples: usize, l: usize, masks: usize) -> Vec<Vec<usize>> {
    let base = RngState::from_seed(seed).derive(rng_labels::EVAL_MASK);
    let mut flags = vec![false; l];
    (0..n_samples)
        .map(|i| {
            let mut rng = base.derive(i as u64);
            choose_mask_slots(&mut rng, l, masks, &mut flags);
            (0..l).filter(|&s| flags[s]).collect()
        })
        .collect()
}

/// Mean MVP loss of an arbitrary predictor over samples with a fixed
/// mask plan.
pub fn evaluate(
    predictor: &dyn ValuePredictor,
    samples: &[SynthSample],
    plan: &[Vec<usize>],
) -> Result<f64> {
    if samples.len() != plan.len() {
        return Err(Error::Usage("mask plan length does not match sample count".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (sample, slots) in samples.iter().zip(plan) {
        let l = sample.tokens.len();
        let mut flags = vec![false; l];
        let mut values = sample.values.clone();
        for &s in slots {
            flags[s] = true;
            values[s] = 0.0;
        }
        let preds = predictor.predict_values(&sample.tokens, &values, &flags)?;
        for &s in slots {
            let e = preds[s] - sample.values[s];
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Usage("evaluation saw zero masked positions".into()));
    }
    Ok(sum / n as f64)
}

/// Per-epoch shuffled visit order of the train split; pure function of
/// (train seed, epoch).
pub fn epoch_shuffle(train_seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = RngState::from_seed(train_seed)
        .derive(rng_labels::SHUFFLE)
        .derive(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx
}

fn schema_check(model_cfg: &ModelConfig, data_cfg: &SynthConfig) -> Result<()> {
    let mut diffs = Vec::new();
    if model_cfg.seq_len != data_cfg.token_count {
        diffs.push(format!(
            "sequence_length: model {} vs dataset {}",
            model_cfg.seq_len, data_cfg.token_count
        ));
    }
    if model_cfg.vocab_size < data_cfg.token_count {
        diffs.push(format!(
            "vocabulary_size: model {} < dataset token count {}",
            model_cfg.vocab_size, data_cfg.token_count
        ));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("model/dataset schema mismatch: {}", diffs.join("; "))))
    }
}

/// Full training run: shuffled mini-batches, analytic backward, Adam,
/// per-epoch test evaluation with a fixed seeded mask plan.
pub fn train(
    model_cfg: &ModelConfig,
    dataset: &SynthDataset,
    train_cfg: &TrainConfig,
) -> Result<(ParameterSet, TrainReport)> {
    model_cfg.validate()?;
    train_cfg.validate(model_cfg.seq_len)?;
    schema_check(model_cfg, &dataset.config)?;
    let start = Instant::now();
    let mut params = ParameterSet::init(model_cfg)?;
    let mut adam = AdamState::new(params.layout.total);
    let mut grads = vec![0.0; params.layout.total];
    let mut trace = Trace::new(model_cfg);
    let l = model_cfg.seq_len;
    let m = train_cfg.masks_per_sample;
    let eval_plan = eval_mask_plan(train_cfg.seed, dataset.test.len(), l, m);
    let mask_base = RngState::from_seed(train_cfg.seed).derive(rng_labels::TRAIN_MASK);

    let mut train_losses = Vec::with_capacity(train_cfg.epochs);
    let mut test_losses = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(usize, f64)> = None;

    let mut flags = vec![false; l];
    let mut values_in = vec![0.0; l];
    let mut dpreds = vec![0.0; l];

    for epoch in 0..train_cfg.epochs {
        let order = epoch_shuffle(train_cfg.seed, epoch, dataset.train.len());
        let mut mask_rng = mask_base.derive(epoch as u64);
        let mut epoch_sq = 0.0;
        let mut epoch_n = 0usize;
        for (batch_idx, batch) in order.chunks(train_cfg.batch_size).enumerate() {
            grads.fill(0.0);
            let n_masked = batch.len() * m;
            let inv = 1.0 / n_masked as f64;
            let mut batch_sq = 0.0;
            for &si in batch {
                let sample = &dataset.train[si];
                choose_mask_slots(&mut mask_rng, l, m, &mut flags);
                for i in 0..l {
                    values_in[i] = if flags[i] { 0.0 } else { sample.values[i] };
                }
                forward_trace(&params, &sample.tokens, &values_in, &flags, &mut trace)?;
                for i in 0..l {
                    dpreds[i] = if flags[i] {
                        let e = trace.preds[i] - sample.values[i];
                        batch_sq += e * e;
                        2.0 * e * inv
                    } else {
                        0.0
                    };
                }
                backward_trace(
                    &params,
                    &sample.tokens,
                    &values_in,
                    &flags,
                    &mut trace,
                    &dpreds,
                    &mut grads,
                )?;
            }
            let batch_loss = batch_sq * inv;
            if !batch_loss.is_finite() {
                let pnorm: f64 = params.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {batch_idx} (parameter norm {pnorm:.3e})"
                )));
            }
            adam_step(&mut params.data, &grads, &mut adam, train_cfg.learning_rate)?;
            epoch_sq += batch_sq;
            epoch_n += n_masked;
        }
        params.check_finite()?;
        train_losses.push(epoch_sq / epoch_n as f64);

        // Test evaluation on the fixed mask plan, via the same kernels.
        let mut sq = 0.0;
        let mut n = 0usize;
        for (sample, slots) in dataset.test.iter().zip(&eval_plan) {
            flags.fill(false);
            for &s in slots {
                flags[s] = true;
            }
            for i in 0..l {
                values_in[i] = if flags[i] { 0.0 } else { sample.values[i] };
            }
            forward_trace(&params, &sample.tokens, &values_in, &flags, &mut trace)?;
            for &s in slots {
                let e = trace.preds[s] - sample.values[s];
                sq += e * e;
                n += 1;
            }
        }
        let test_loss = sq / n as f64;
        test_losses.push(test_loss);
        if best.map(|(_, b)| test_loss < b).unwrap_or(true) {
            best = Some((epoch, test_loss));
        }
    }

    let report = TrainReport {
        train_losses,
        test_losses,
        best,
        wall_secs: start.elapsed().as_secs_f64(),
        model_config: model_cfg.clone(),
        train_config: train_cfg.clone(),
        data_config: dataset.config.clone(),
    };
    Ok((params, report))
}

/// Writes the per-epoch loss curves as CSV plus a sidecar text header
/// with every config field.
pub fn write_report(report: &TrainReport, csv_path: &std::path::Path, sidecar_path: &std::path::Path) -> Result<()> {
    let mut csv = String::from("epoch,train_loss,test_loss\n");
    for (e, (tr, te)) in report
        .train_losses
        .iter()
        .zip(&report.test_losses)
        .enumerate()
    {
        csv.push_str(&format!("{e},{tr},{te}\n"));
    }
    std::fs::write(csv_path, csv)?;
    let mut side = String::new();
    side.push_str(&crate::config::render_model_section(&report.model_config));
    side.push_str(&crate::config::render_train_section(&report.train_config));
    side.push_str(&crate::config::render_synth_section(&report.data_config));
    if let Some((epoch, loss)) = report.best {
        side.push_str(&format!("\nbest_test_loss = {loss}\nbest_epoch = {epoch}\n"));
    }
    side.push_str(&format!("wall_secs = {:.3}\n", report.wall_secs));
    side.push_str(&format!("tool_version = {}\n", crate::VERSION));
    std::fs::write(sidecar_path, side)?;
    Ok(())
}
