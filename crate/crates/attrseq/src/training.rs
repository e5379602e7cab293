//! Two-phase training, gradient checking, and model persistence.
//!
//! Phase 1 pretrains the attribute autoencoder on the reconstruction loss.
//! Phase 2 trains the sequence network on next-item cross-entropy; the only
//! coupling between the networks is the conditioning term, so phase 2
//! fine-tunes the encoder through that path (decoder layers stay frozen, the
//! sequence loss does not depend on them). A summed joint objective is
//! available behind `joint_loss` for comparison.
//!
//! Labels are never read anywhere in this module; training is unsupervised.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attrnet::{reconstruction_loss, AttributeNetGrads, AttributeNetParams};
use crate::data::{AttributeSchema, AttributedSequence, Dataset, ItemVocabulary};
use crate::error::{Error, Result};
use crate::numeric::{RandomSource, Vector};
use crate::seqnet::{GateActivation, SequenceNetGrads, SequenceNetParams};

/// Version tag written into model files; bump on any layout change.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Salt for the shuffle stream so batch order is independent of the
/// initialization draws while still being fixed by the seed.
pub(crate) const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Sequence-phase epochs (or joint epochs under `joint_loss`).
    pub epochs: usize,
    /// Attribute-pretraining epochs; skipped when conditioning is off.
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    /// d: sequence hidden width and attribute code width (they must match for
    /// the additive conditioning to typecheck).
    pub hidden_dim: usize,
    /// M: attribute encoder depth; the autoencoder has 2M layers.
    pub encoder_depth: usize,
    /// Off gives the unconditioned sequence-only variant.
    pub conditioning: bool,
    /// Whether phase 2 fine-tunes the encoder through the conditioning path.
    pub joint_encoder_update: bool,
    /// Train both objectives summed in a single phase instead of sequentially.
    pub joint_loss: bool,
    pub g_gate: GateActivation,
    /// Optional global L2 clipping norm per batch.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.01,
            epochs: 10,
            pretrain_epochs: 10,
            batch_size: 32,
            hidden_dim: 15,
            encoder_depth: 1,
            conditioning: true,
            joint_encoder_update: true,
            joint_loss: false,
            g_gate: GateActivation::Sigmoid,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is allowed (useful as a null-update control);
        // negative or non-finite rates are not.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.hidden_dim < 1 {
            return Err(Error::config("hidden dimension must be at least 1"));
        }
        if self.encoder_depth < 1 {
            return Err(Error::config("encoder depth must be at least 1"));
        }
        if let Some(clip) = self.grad_clip {
            if !clip.is_finite() || clip <= 0.0 {
                return Err(Error::config("gradient clip norm must be finite and positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Attribute,
    Sequence,
    Joint,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Attribute => "attribute",
            Phase::Sequence => "sequence",
            Phase::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based epoch number within its phase.
    pub epoch: usize,
    pub phase: Phase,
    /// Mean per-instance loss over the epoch.
    pub mean_loss: f64,
}

/// The trained model: both networks plus everything needed to apply them to
/// new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub attribute: AttributeNetParams,
    pub sequence: SequenceNetParams,
    pub vocabulary: ItemVocabulary,
    pub schema: AttributeSchema,
    pub config: TrainingConfig,
    pub loss_history: Vec<EpochLoss>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.attribute.validate()?;
        self.sequence.validate()?;
        if self.attribute.code_dim() != self.sequence.hidden_dim() {
            return Err(Error::corrupt(format!(
                "attribute code width {} differs from sequence hidden width {}",
                self.attribute.code_dim(),
                self.sequence.hidden_dim()
            )));
        }
        if self.sequence.hidden_dim() != self.config.hidden_dim {
            return Err(Error::corrupt("stored hidden width differs from config"));
        }
        if self.sequence.vocab_size() != self.vocabulary.size() {
            return Err(Error::corrupt(format!(
                "output layer covers {} items, vocabulary has {}",
                self.sequence.vocab_size(),
                self.vocabulary.size()
            )));
        }
        if self.attribute.input_dim() != self.schema.encoded_width() {
            return Err(Error::corrupt(format!(
                "attribute network expects width {}, schema encodes width {}",
                self.attribute.input_dim(),
                self.schema.encoded_width()
            )));
        }
        self.schema.validate().map_err(|e| Error::corrupt(e.to_string()))?;
        self.config.validate().map_err(|e| Error::corrupt(e.to_string()))?;
        Ok(())
    }

    /// The attribute code V^(M) of one instance.
    pub fn attribute_code(&self, instance: &AttributedSequence) -> Result<Vector> {
        Ok(self.attribute.forward(&instance.attributes)?.0)
    }

    /// The embedding of one instance: final cell state of a read-only forward
    /// pass, conditioned on the attribute code when the model was trained
    /// with conditioning.
    pub fn embed_instance(&self, instance: &AttributedSequence) -> Result<Vector> {
        let condition = if self.config.conditioning {
            Some(self.attribute.forward(&instance.attributes)?.0)
        } else {
            None
        };
        self.sequence.extract_embedding(condition.as_ref(), &instance.items)
    }

    pub fn embed_dataset(&self, dataset: &Dataset) -> Result<Vec<Vector>> {
        self.check_compatible(dataset)?;
        dataset.instances.iter().map(|inst| self.embed_instance(inst)).collect()
    }

    /// A dataset can only be embedded when it was encoded against the same
    /// schema and vocabulary the model was trained on.
    pub fn check_compatible(&self, dataset: &Dataset) -> Result<()> {
        if self.vocabulary != dataset.vocabulary {
            return Err(Error::input(
                "dataset vocabulary differs from the one the model was trained on",
            ));
        }
        for (mine, theirs) in self.schema.columns.iter().zip(&dataset.schema.columns) {
            if mine != theirs {
                return Err(Error::input(format!(
                    "schema mismatch at column {:?}",
                    mine.name
                )));
            }
        }
        if self.schema.columns.len() != dataset.schema.columns.len() {
            return Err(Error::input("schema column counts differ"));
        }
        Ok(())
    }
}

/// Fresh untrained model for a dataset: uniform input weights, orthogonal
/// recurrent weights, zero biases, in a fixed draw order so the same seed
/// always yields bitwise-identical parameters.
pub fn init_model(dataset: &Dataset, config: &TrainingConfig) -> Result<ModelParams> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::input("cannot initialize a model on an empty dataset"));
    }
    let mut rng = RandomSource::new(config.seed);
    let attribute = AttributeNetParams::init(
        dataset.attribute_width(),
        config.hidden_dim,
        config.encoder_depth,
        &mut rng,
    )?;
    let sequence = SequenceNetParams::init(
        dataset.vocabulary.size(),
        config.hidden_dim,
        config.g_gate,
        &mut rng,
    )?;
    Ok(ModelParams {
        attribute,
        sequence,
        vocabulary: dataset.vocabulary.clone(),
        schema: dataset.schema.clone(),
        config: config.clone(),
        loss_history: Vec::new(),
    })
}

/// Shuffled index batches for one epoch; the final batch may be partial.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut RandomSource) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    indices.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn clip_scale(norm_sq: f64, clip: Option<f64>) -> f64 {
    match clip {
        Some(limit) => {
            let norm = norm_sq.sqrt();
            if norm > limit {
                limit / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    }
}

pub(crate) fn run_attribute_phase(
    model: &mut ModelParams,
    dataset: &Dataset,
    epochs: usize,
    config: &TrainingConfig,
    rng: &mut RandomSource,
) -> Result<()> {
    let n = dataset.len();
    for epoch in 1..=epochs {
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in epoch_batches(n, config.batch_size, rng).iter().enumerate() {
            let mut grads = AttributeNetGrads::zeros_like(&model.attribute);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let inst = &dataset.instances[idx];
                let (_, recon, trace) = model.attribute.forward(&inst.attributes)?;
                batch_loss += reconstruction_loss(&inst.attributes, &recon)?;
                grads.add(&model.attribute.backward(&trace));
            }
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "attribute phase loss became non-finite at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            grads.scale(1.0 / batch.len() as f64);
            let scale = clip_scale(grads.norm_sq(), config.grad_clip);
            model.attribute.apply_gradients(&grads, -config.learning_rate * scale);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / n as f64;
        log::debug!("attribute epoch {epoch}/{epochs}: mean loss {mean:.6}");
        model.loss_history.push(EpochLoss { epoch, phase: Phase::Attribute, mean_loss: mean });
    }
    Ok(())
}

pub(crate) fn run_sequence_phase(
    model: &mut ModelParams,
    dataset: &Dataset,
    epochs: usize,
    config: &TrainingConfig,
    rng: &mut RandomSource,
) -> Result<()> {
    let n = dataset.len();
    let tune_encoder = config.conditioning && config.joint_encoder_update;
    for epoch in 1..=epochs {
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in epoch_batches(n, config.batch_size, rng).iter().enumerate() {
            let mut seq_grads = SequenceNetGrads::zeros_like(&model.sequence);
            let mut enc_grads = AttributeNetGrads::zeros_like(&model.attribute);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let inst = &dataset.instances[idx];
                if config.conditioning {
                    let (code, _, attr_trace) = model.attribute.forward(&inst.attributes)?;
                    let (seq_trace, loss) = model.sequence.forward(Some(&code), &inst.items)?;
                    let (sg, code_grad) = model.sequence.backward(&seq_trace);
                    seq_grads.add(&sg);
                    if tune_encoder {
                        enc_grads.add(&model.attribute.encoder_backward(&attr_trace, &code_grad));
                    }
                    batch_loss += loss;
                } else {
                    let (seq_trace, loss) = model.sequence.forward(None, &inst.items)?;
                    let (sg, _) = model.sequence.backward(&seq_trace);
                    seq_grads.add(&sg);
                    batch_loss += loss;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "sequence phase loss became non-finite at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            let inv = 1.0 / batch.len() as f64;
            seq_grads.scale(inv);
            enc_grads.scale(inv);
            let scale =
                clip_scale(seq_grads.norm_sq() + enc_grads.norm_sq(), config.grad_clip);
            model.sequence.apply_gradients(&seq_grads, -config.learning_rate * scale);
            if tune_encoder {
                model.attribute.apply_gradients(&enc_grads, -config.learning_rate * scale);
            }
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / n as f64;
        log::debug!("sequence epoch {epoch}/{epochs}: mean loss {mean:.6}");
        model.loss_history.push(EpochLoss { epoch, phase: Phase::Sequence, mean_loss: mean });
    }
    Ok(())
}

fn run_joint_phase(
    model: &mut ModelParams,
    dataset: &Dataset,
    epochs: usize,
    config: &TrainingConfig,
    rng: &mut RandomSource,
) -> Result<()> {
    let n = dataset.len();
    for epoch in 1..=epochs {
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in epoch_batches(n, config.batch_size, rng).iter().enumerate() {
            let mut seq_grads = SequenceNetGrads::zeros_like(&model.sequence);
            let mut attr_grads = AttributeNetGrads::zeros_like(&model.attribute);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let inst = &dataset.instances[idx];
                let (code, recon, attr_trace) = model.attribute.forward(&inst.attributes)?;
                batch_loss += reconstruction_loss(&inst.attributes, &recon)?;
                attr_grads.add(&model.attribute.backward(&attr_trace));
                let condition = if config.conditioning { Some(&code) } else { None };
                let (seq_trace, loss) = model.sequence.forward(condition, &inst.items)?;
                let (sg, code_grad) = model.sequence.backward(&seq_trace);
                seq_grads.add(&sg);
                if config.conditioning {
                    attr_grads.add(&model.attribute.encoder_backward(&attr_trace, &code_grad));
                }
                batch_loss += loss;
            }
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "joint phase loss became non-finite at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            let inv = 1.0 / batch.len() as f64;
            seq_grads.scale(inv);
            attr_grads.scale(inv);
            let scale =
                clip_scale(seq_grads.norm_sq() + attr_grads.norm_sq(), config.grad_clip);
            model.sequence.apply_gradients(&seq_grads, -config.learning_rate * scale);
            model.attribute.apply_gradients(&attr_grads, -config.learning_rate * scale);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / n as f64;
        log::debug!("joint epoch {epoch}/{epochs}: mean loss {mean:.6}");
        model.loss_history.push(EpochLoss { epoch, phase: Phase::Joint, mean_loss: mean });
    }
    Ok(())
}

/// Train a model from scratch on a dataset. Bit-reproducible for a fixed
/// config: the parameter draws and the batch order are both derived from the
/// seed.
pub fn train(dataset: &Dataset, config: &TrainingConfig) -> Result<ModelParams> {
    let mut model = init_model(dataset, config)?;
    let mut rng = RandomSource::new(config.seed ^ SHUFFLE_SALT);
    if config.joint_loss {
        run_joint_phase(&mut model, dataset, config.epochs, config, &mut rng)?;
    } else {
        if config.conditioning {
            run_attribute_phase(&mut model, dataset, config.pretrain_epochs, config, &mut rng)?;
        } else if config.pretrain_epochs > 0 {
            log::info!("conditioning is off; skipping attribute pretraining");
        }
        run_sequence_phase(&mut model, dataset, config.epochs, config, &mut rng)?;
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub parameters_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Copy)]
enum LossKind {
    Reconstruction,
    Sequence,
}

fn param_entry<'a>(model: &'a mut ModelParams, slot: usize, k: usize) -> &'a mut f64 {
    let attr_slots = 2 * model.attribute.layers.len();
    if slot < attr_slots {
        let mut slots = model.attribute.named_params_mut();
        let slice = slots.swap_remove(slot).1;
        &mut slice[k]
    } else {
        let mut slots = model.sequence.named_params_mut();
        let slice = slots.swap_remove(slot - attr_slots).1;
        &mut slice[k]
    }
}

/// Compare every analytic gradient of both losses against central finite
/// differences on one instance. The conditioning path (sequence loss reaching
/// encoder parameters through the code) is included when the model uses
/// conditioning.
pub fn gradient_check(
    model: &ModelParams,
    instance: &AttributedSequence,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut model = model.clone();
    let conditioning = model.config.conditioning;
    let x = instance.attributes.clone();
    let items = instance.items.clone();

    let (code, _, attr_trace) = model.attribute.forward(&x)?;
    let attr_grads_recon = model.attribute.backward(&attr_trace);
    let condition = if conditioning { Some(code) } else { None };
    let (seq_trace, _) = model.sequence.forward(condition.as_ref(), &items)?;
    let (seq_grads, code_grad) = model.sequence.backward(&seq_trace);
    let attr_grads_seq = if conditioning {
        model.attribute.encoder_backward(&attr_trace, &code_grad)
    } else {
        AttributeNetGrads::zeros_like(&model.attribute)
    };

    let recon_named: Vec<(String, Vec<f64>)> = attr_grads_recon
        .named_grads()
        .into_iter()
        .map(|(n, g)| (n, g.to_vec()))
        .collect();
    let attr_seq_named: Vec<(String, Vec<f64>)> = attr_grads_seq
        .named_grads()
        .into_iter()
        .map(|(n, g)| (n, g.to_vec()))
        .collect();
    let seq_named: Vec<(String, Vec<f64>)> =
        seq_grads.named_grads().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
    let attr_slots = recon_named.len();

    let eval_loss = |model: &ModelParams, kind: LossKind| -> Result<f64> {
        match kind {
            LossKind::Reconstruction => {
                let (_, recon, _) = model.attribute.forward(&x)?;
                reconstruction_loss(&x, &recon)
            }
            LossKind::Sequence => {
                let condition = if conditioning {
                    Some(model.attribute.forward(&x)?.0)
                } else {
                    None
                };
                Ok(model.sequence.forward(condition.as_ref(), &items)?.1)
            }
        }
    };

    let step = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut worst = String::from("none");
    let mut checked = 0usize;

    // Central differences only resolve a gradient component down to the
    // roundoff of the loss itself, about eps * |loss| / step. Components
    // smaller than that floor (scaled so surviving noise stays well under
    // the tolerance) are pure noise in the quotient and are not compared.
    let recon_scale = reconstruction_loss(&x, &model.attribute.forward(&x)?.1)?.abs().max(1.0);
    let seq_scale = eval_loss(&model, LossKind::Sequence)?.abs().max(1.0);
    let floor = |scale: f64| 8.0 * f64::EPSILON * scale / (step * tolerance);

    let fd = |model: &mut ModelParams, slot: usize, k: usize, kind: LossKind| -> Result<f64> {
        let orig = *param_entry(model, slot, k);
        *param_entry(model, slot, k) = orig + step;
        let plus = eval_loss(model, kind)?;
        *param_entry(model, slot, k) = orig - step;
        let minus = eval_loss(model, kind)?;
        *param_entry(model, slot, k) = orig;
        Ok((plus - minus) / (2.0 * step))
    };

    let record = |max_rel: &mut f64,
                  worst: &mut String,
                  name: String,
                  analytic: f64,
                  numeric: f64,
                  floor: f64| {
        let denom = analytic.abs().max(numeric.abs());
        if denom < floor {
            return;
        }
        let rel = (analytic - numeric).abs() / denom;
        if rel > *max_rel {
            *max_rel = rel;
            *worst = name;
        }
    };

    for slot in 0..attr_slots {
        let (name, recon_grad) = &recon_named[slot];
        let (_, seq_grad) = &attr_seq_named[slot];
        for k in 0..recon_grad.len() {
            checked += 1;
            let numeric = fd(&mut model, slot, k, LossKind::Reconstruction)?;
            record(
                &mut max_rel,
                &mut worst,
                format!("{name}[{k}] (reconstruction loss)"),
                recon_grad[k],
                numeric,
                floor(recon_scale),
            );
            if conditioning {
                let numeric = fd(&mut model, slot, k, LossKind::Sequence)?;
                record(
                    &mut max_rel,
                    &mut worst,
                    format!("{name}[{k}] (sequence loss)"),
                    seq_grad[k],
                    numeric,
                    floor(seq_scale),
                );
            }
        }
    }
    for (rel_slot, (name, grad)) in seq_named.iter().enumerate() {
        let slot = attr_slots + rel_slot;
        for k in 0..grad.len() {
            checked += 1;
            let numeric = fd(&mut model, slot, k, LossKind::Sequence)?;
            record(
                &mut max_rel,
                &mut worst,
                format!("{name}[{k}] (sequence loss)"),
                grad[k],
                numeric,
                floor(seq_scale),
            );
        }
    }

    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_parameter: worst,
        parameters_checked: checked,
        tolerance,
        passed: max_rel < tolerance,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: ModelParams,
}

/// Write the model as a versioned JSON document. JSON keeps every f64 exact
/// (shortest round-trip decimal), so save→load reproduces embeddings bit for
/// bit.
pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    let file = ModelFile { format_version: MODEL_FORMAT_VERSION, model: model.clone() };
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, &file)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::corrupt(format!("not a valid model document: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::corrupt("missing format_version tag"))?;
    if version > u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::Version {
            found: version.min(u64::from(u32::MAX)) as u32,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|e| Error::corrupt(format!("model fields do not parse: {e}")))?;
    file.model.validate()?;
    Ok(file.model)
}

/// Loss history as CSV with an `epoch,phase,mean_loss` header.
pub fn write_loss_csv<W: Write>(history: &[EpochLoss], writer: &mut W) -> Result<()> {
    writeln!(writer, "epoch,phase,mean_loss")?;
    for record in history {
        writeln!(writer, "{},{},{}", record.epoch, record.phase.as_str(), record.mean_loss)?;
    }
    writer.flush()?;
    Ok(())
}
