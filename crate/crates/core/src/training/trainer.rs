use std::io::Write;

use rand::seq::SliceRandom;

use super::config::{AuxLabelMode, Regularizer, TrainConfig};
use super::objectives::{
    aux_ce_term, coteach_keep_fraction, coteach_select, forward_correction_term, oe_aux_loss,
    sample_dynamic_labels, sln_target, standard_term,
};
use crate::error::{LabError, Result};
use crate::netcore::{
    self, argmax, backward_logits_into, ce_logit_gradient, sgd_step, ForwardTrace, GradientVector,
    NetworkParams, SgdState, TargetDistribution,
};
use crate::noisegen::{AuxiliaryPool, LabeledDataset, TransitionMatrix};
use crate::rng::{self, StreamRng};

/// Everything a run consumes besides the config.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a LabeledDataset,
    pub aux: Option<&'a AuxiliaryPool>,
    pub test: Option<&'a LabeledDataset>,
    pub validation: Option<&'a LabeledDataset>,
    /// Required by forward correction.
    pub transition: Option<&'a TransitionMatrix>,
}

impl<'a> TrainData<'a> {
    pub fn new(train: &'a LabeledDataset) -> Self {
        Self {
            train,
            aux: None,
            test: None,
            validation: None,
            transition: None,
        }
    }

    pub fn with_aux(mut self, aux: &'a AuxiliaryPool) -> Self {
        self.aux = Some(aux);
        self
    }

    pub fn with_test(mut self, test: &'a LabeledDataset) -> Self {
        self.test = Some(test);
        self
    }

    pub fn with_validation(mut self, validation: &'a LabeledDataset) -> Self {
        self.validation = Some(validation);
        self
    }

    pub fn with_transition(mut self, transition: &'a TransitionMatrix) -> Self {
        self.transition = Some(transition);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean objective over the epoch's iterations.
    pub train_loss: f64,
    /// End-of-epoch CE on rows whose observed label is correct.
    pub clean_loss: Option<f64>,
    /// End-of-epoch CE (against observed labels) on mislabeled and open-set rows.
    pub noisy_loss: Option<f64>,
    /// Mean auxiliary loss L2 seen during the epoch.
    pub aux_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("at least one epoch")
    }

    /// Mean test accuracy over the last `window` epochs.
    pub fn tail_test_accuracy(&self, window: usize) -> Option<f64> {
        tail_mean(self.metrics.iter().map(|m| m.test_acc), window)
    }

    /// Best-epoch minus final-epoch test accuracy.
    pub fn test_accuracy_drop(&self) -> Option<f64> {
        let accs: Option<Vec<f64>> = self.metrics.iter().map(|m| m.test_acc).collect();
        let accs = accs?;
        let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(best - accs.last()?)
    }
}

pub(crate) fn tail_mean(values: impl Iterator<Item = Option<f64>>, window: usize) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    let v = v?;
    let w = window.min(v.len());
    if w == 0 {
        return None;
    }
    Some(v[v.len() - w..].iter().sum::<f64>() / w as f64)
}

/// Index lists and auxiliary labels for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub train_indices: Vec<usize>,
    pub aux_indices: Vec<usize>,
    pub aux_labels: Vec<usize>,
    /// Independent labels for the co-teaching peer.
    pub peer_aux_labels: Vec<usize>,
}

/// Cycles through shuffled passes over the pool.
struct AuxCursor {
    order: Vec<usize>,
    position: usize,
    rng: StreamRng,
}

impl AuxCursor {
    fn new(size: usize, rng: StreamRng) -> Self {
        Self {
            order: (0..size).collect(),
            position: size,
            rng,
        }
    }

    fn next_batch(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.position == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.position = 0;
            }
            let take = (count - out.len()).min(self.order.len() - self.position);
            out.extend_from_slice(&self.order[self.position..self.position + take]);
            self.position += take;
        }
        out
    }
}

/// Source of auxiliary labels under the configured mode.
struct AuxLabeler {
    mode: AuxLabelMode,
    k: usize,
    rng: StreamRng,
    table: Vec<usize>,
}

impl AuxLabeler {
    fn new(mode: AuxLabelMode, k: usize, pool: &AuxiliaryPool, rng: StreamRng) -> Self {
        let mut labeler = Self {
            mode,
            k,
            rng,
            table: Vec::new(),
        };
        if mode == AuxLabelMode::Fixed {
            labeler.table = match pool.fixed_labels() {
                Some(l) => l.to_vec(),
                None => sample_dynamic_labels(pool.len(), k, &mut labeler.rng),
            };
        }
        labeler
    }

    fn start_epoch(&mut self, pool_size: usize) {
        if self.mode == AuxLabelMode::DynamicPerEpoch {
            self.table = sample_dynamic_labels(pool_size, self.k, &mut self.rng);
        }
    }

    fn labels(&mut self, indices: &[usize]) -> Vec<usize> {
        match self.mode {
            AuxLabelMode::DynamicPerIteration => {
                sample_dynamic_labels(indices.len(), self.k, &mut self.rng)
            }
            AuxLabelMode::DynamicPerEpoch | AuxLabelMode::Fixed => {
                indices.iter().map(|&i| self.table[i]).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetEval {
    pub mean_loss: f64,
    pub clean_loss: Option<f64>,
    pub noisy_loss: Option<f64>,
    /// Agreement with observed labels.
    pub accuracy: f64,
}

/// CE and accuracy against observed labels, split by clean/noisy rows.
pub fn evaluate_dataset(params: &NetworkParams, data: &LabeledDataset) -> Result<DatasetEval> {
    let k = params.num_classes();
    let (mut clean, mut noisy) = ((0.0, 0usize), (0.0, 0usize));
    let mut correct = 0usize;
    for i in 0..data.len() {
        let trace = netcore::forward(params, data.row(i))?;
        let y = data.observed_labels()[i];
        let loss = netcore::ce_loss(&trace, &TargetDistribution::one_hot(k, y));
        let bucket = if data.is_noisy(i) {
            &mut noisy
        } else {
            &mut clean
        };
        bucket.0 += loss;
        bucket.1 += 1;
        if argmax(trace.probs()) == y {
            correct += 1;
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    let n = data.len().max(1) as f64;
    Ok(DatasetEval {
        mean_loss: (clean.0 + noisy.0) / n,
        clean_loss: mean(clean),
        noisy_loss: mean(noisy),
        accuracy: correct as f64 / n,
    })
}

struct Peer {
    params: NetworkParams,
    state: SgdState,
}

impl Peer {
    fn new(sizes: &[usize], rng: &mut StreamRng) -> Result<Self> {
        let params = NetworkParams::init(sizes, rng)?;
        let state = SgdState::new(params.len());
        Ok(Self { params, state })
    }
}

fn rows_of<'a>(data: &'a LabeledDataset, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| data.row(i)).collect()
}

/// Runs the configured objective. Deterministic given `config.seed`: batch
/// order, auxiliary batches, auxiliary labels, SLN draws and initialisation
/// each come from their own named stream.
pub fn train(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    let train_set = data.train;
    config.validate(train_set.len(), data.aux.map(AuxiliaryPool::len))?;
    let k = train_set.num_classes();
    let mut sizes = vec![train_set.dim()];
    sizes.extend(&config.hidden);
    sizes.push(k);
    if let Some(aux) = data.aux {
        if aux.dim() != train_set.dim() {
            return Err(LabError::config(
                "auxiliary pool dimension differs from training data",
            ));
        }
    }
    if config.regularizer == Regularizer::ForwardCorrection && data.transition.is_none() {
        return Err(LabError::config(
            "forward correction needs a transition matrix",
        ));
    }

    let seed = config.seed;
    let coteaching = config.regularizer == Regularizer::Coteaching;
    let mut net = Peer::new(&sizes, &mut rng::stream(seed, "init"))?;
    let mut peer = if coteaching {
        Some(Peer::new(&sizes, &mut rng::stream(seed, "init_peer"))?)
    } else {
        None
    };

    let mut shuffle_rng = rng::stream(seed, "shuffle");
    let mut sln_rng = rng::stream(seed, "sln");
    let uses_aux = config.uses_aux_pool();
    let mut aux_state = match (uses_aux, data.aux) {
        (true, Some(pool)) => Some((
            pool,
            AuxCursor::new(pool.len(), rng::stream(seed, "aux_batches")),
            AuxLabeler::new(
                config.aux_label_mode,
                k,
                pool,
                rng::stream(seed, "aux_labels"),
            ),
            AuxLabeler::new(
                config.aux_label_mode,
                k,
                pool,
                rng::stream(seed, "aux_labels_peer"),
            ),
        )),
        _ => None,
    };

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr.rate(epoch);
        order.shuffle(&mut shuffle_rng);
        if let Some((pool, _, labeler, peer_labeler)) = aux_state.as_mut() {
            labeler.start_epoch(pool.len());
            peer_labeler.start_epoch(pool.len());
        }
        let keep = coteach_keep_fraction(epoch, config.coteach_forget_rate, config.coteach_warmup);

        let (mut loss_sum, mut aux_sum, mut iterations) = (0.0, 0.0, 0usize);
        for (iteration, chunk) in order.chunks(config.train_batch).enumerate() {
            let mut plan = BatchPlan {
                train_indices: chunk.to_vec(),
                aux_indices: Vec::new(),
                aux_labels: Vec::new(),
                peer_aux_labels: Vec::new(),
            };
            if let Some((_, cursor, labeler, peer_labeler)) = aux_state.as_mut() {
                plan.aux_indices = cursor.next_batch(config.aux_batch);
                plan.aux_labels = labeler.labels(&plan.aux_indices);
                if coteaching {
                    plan.peer_aux_labels = peer_labeler.labels(&plan.aux_indices);
                }
            }
            let aux_rows: Vec<&[f64]> = match data.aux {
                Some(pool) => plan.aux_indices.iter().map(|&i| pool.row(i)).collect(),
                None => Vec::new(),
            };

            let (loss, aux_loss) = match peer.as_mut() {
                None => {
                    let (loss, aux_loss, grad) = single_objective(
                        config,
                        &net.params,
                        &data,
                        &plan,
                        &aux_rows,
                        &mut sln_rng,
                    )?;
                    check_finite(loss, epoch, iteration)?;
                    step(&mut net, &grad, lr, config, epoch, iteration)?;
                    (loss, aux_loss)
                }
                Some(peer) => {
                    let (loss, aux_loss, grad_a, grad_b) = coteaching_objective(
                        config,
                        &net.params,
                        &peer.params,
                        train_set,
                        &plan,
                        &aux_rows,
                        keep,
                    )?;
                    check_finite(loss, epoch, iteration)?;
                    step(&mut net, &grad_a, lr, config, epoch, iteration)?;
                    step(peer, &grad_b, lr, config, epoch, iteration)?;
                    (loss, aux_loss)
                }
            };
            loss_sum += loss;
            aux_sum += aux_loss.unwrap_or(0.0);
            iterations += 1;
        }

        let eval = evaluate_dataset(&net.params, train_set)?;
        let test_acc = data
            .test
            .map(|t| evaluate_dataset(&net.params, t).map(|e| e.accuracy))
            .transpose()?;
        let val_acc = data
            .validation
            .map(|v| evaluate_dataset(&net.params, v).map(|e| e.accuracy))
            .transpose()?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / iterations as f64,
            clean_loss: eval.clean_loss,
            noisy_loss: eval.noisy_loss,
            aux_loss: uses_aux.then(|| aux_sum / iterations as f64),
            val_acc,
            test_acc,
        };
        log::debug!("epoch {epoch}: {m:?}");
        metrics.push(m);
    }

    Ok(TrainOutcome {
        params: net.params,
        metrics,
    })
}

fn check_finite(loss: f64, epoch: usize, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(LabError::numeric(
            format!("epoch {epoch} iteration {iteration}"),
            format!("non-finite loss {loss}"),
        ))
    }
}

fn step(
    peer: &mut Peer,
    grad: &GradientVector,
    lr: f64,
    config: &TrainConfig,
    epoch: usize,
    iteration: usize,
) -> Result<()> {
    sgd_step(
        &mut peer.params,
        grad,
        lr,
        config.momentum,
        config.weight_decay,
        &mut peer.state,
    )
    .map_err(|e| match e {
        LabError::Numeric { context, message } => LabError::numeric(
            format!("epoch {epoch} iteration {iteration} ({context})"),
            message,
        ),
        other => other,
    })
}

/// Objective for the single-network regularizers: base term plus the
/// optional η·L2. Returns (total loss, L2 or OE term, gradient).
fn single_objective(
    config: &TrainConfig,
    params: &NetworkParams,
    data: &TrainData<'_>,
    plan: &BatchPlan,
    aux_rows: &[&[f64]],
    sln_rng: &mut StreamRng,
) -> Result<(f64, Option<f64>, GradientVector)> {
    let train_set = data.train;
    let k = train_set.num_classes();
    let rows = rows_of(train_set, &plan.train_indices);
    let labels: Vec<usize> = plan
        .train_indices
        .iter()
        .map(|&i| train_set.observed_labels()[i])
        .collect();
    let mut grad = GradientVector::zeros(params.len());
    let mut aux_report = None;

    let mut loss = match config.regularizer {
        Regularizer::Standard | Regularizer::Odnl => {
            standard_term(params, &rows, &labels, config.label_smoothing, &mut grad)?
        }
        Regularizer::Sln => {
            let targets: Vec<TargetDistribution> = labels
                .iter()
                .map(|&y| sln_target(y, k, config.sigma_sln, sln_rng))
                .collect();
            sln_term(params, &rows, &targets, &mut grad)?
        }
        Regularizer::Oe => {
            let l1 = standard_term(params, &rows, &labels, config.label_smoothing, &mut grad)?;
            if config.lambda_oe > 0.0 {
                let (oe, oe_grad) = oe_aux_loss(params, aux_rows, config.lambda_oe)?;
                grad.add_scaled(&oe_grad, 1.0);
                aux_report = Some(oe / config.lambda_oe);
                l1 + oe
            } else {
                l1
            }
        }
        Regularizer::ForwardCorrection => {
            let t = data.transition.expect("checked before the loop");
            forward_correction_term(params, &rows, &labels, t, &mut grad)?
        }
        Regularizer::Coteaching => unreachable!("co-teaching runs two networks"),
    };
    if config.odnl_active() {
        let l2 = aux_ce_term(params, aux_rows, &plan.aux_labels, config.eta, &mut grad)?;
        loss += config.eta * l2;
        aux_report = Some(l2);
    }
    Ok((loss, aux_report, grad))
}

fn sln_term(
    params: &NetworkParams,
    rows: &[&[f64]],
    targets: &[TargetDistribution],
    grad: &mut GradientVector,
) -> Result<f64> {
    let scale = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for (x, t) in rows.iter().zip(targets) {
        let trace = netcore::forward(params, x)?;
        total += netcore::ce_loss(&trace, t);
        backward_logits_into(
            params,
            &trace,
            &ce_logit_gradient(trace.probs(), t),
            scale,
            &mut grad.0,
        );
    }
    Ok(total * scale)
}

fn per_sample(
    params: &NetworkParams,
    rows: &[&[f64]],
    labels: &[usize],
) -> Result<(Vec<ForwardTrace>, Vec<f64>)> {
    let k = params.num_classes();
    let traces: Vec<ForwardTrace> = rows
        .iter()
        .map(|x| netcore::forward(params, x))
        .collect::<Result<_>>()?;
    let losses = traces
        .iter()
        .zip(labels)
        .map(|(t, &y)| netcore::ce_loss(t, &TargetDistribution::one_hot(k, y)))
        .collect();
    Ok((traces, losses))
}

fn selected_gradient(
    params: &NetworkParams,
    traces: &[ForwardTrace],
    losses: &[f64],
    labels: &[usize],
    chosen: &[usize],
) -> (f64, GradientVector) {
    let k = params.num_classes();
    let mut grad = GradientVector::zeros(params.len());
    let scale = 1.0 / chosen.len() as f64;
    let mut total = 0.0;
    for &i in chosen {
        let t = TargetDistribution::one_hot(k, labels[i]);
        backward_logits_into(
            params,
            &traces[i],
            &ce_logit_gradient(traces[i].probs(), &t),
            scale,
            &mut grad.0,
        );
        total += losses[i];
    }
    (total * scale, grad)
}

/// Co-teaching step: each network learns from the small-loss samples its
/// peer selected. With ODNL composed, both add η·L2 with independent labels.
fn coteaching_objective(
    config: &TrainConfig,
    net_a: &NetworkParams,
    net_b: &NetworkParams,
    train_set: &LabeledDataset,
    plan: &BatchPlan,
    aux_rows: &[&[f64]],
    keep: f64,
) -> Result<(f64, Option<f64>, GradientVector, GradientVector)> {
    let rows = rows_of(train_set, &plan.train_indices);
    let labels: Vec<usize> = plan
        .train_indices
        .iter()
        .map(|&i| train_set.observed_labels()[i])
        .collect();
    let (traces_a, losses_a) = per_sample(net_a, &rows, &labels)?;
    let (traces_b, losses_b) = per_sample(net_b, &rows, &labels)?;
    let (for_a, for_b) = coteach_select(&losses_a, &losses_b, keep);
    let (mut loss_a, mut grad_a) = selected_gradient(net_a, &traces_a, &losses_a, &labels, &for_a);
    let (_, mut grad_b) = selected_gradient(net_b, &traces_b, &losses_b, &labels, &for_b);
    let mut aux_report = None;
    if config.odnl_active() {
        let l2 = aux_ce_term(net_a, aux_rows, &plan.aux_labels, config.eta, &mut grad_a)?;
        aux_ce_term(
            net_b,
            aux_rows,
            &plan.peer_aux_labels,
            config.eta,
            &mut grad_b,
        )?;
        loss_a += config.eta * l2;
        aux_report = Some(l2);
    }
    Ok((loss_a, aux_report, grad_a, grad_b))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `epoch,train_loss,clean_loss,noisy_loss,aux_loss,val_acc,test_acc`, preceded
/// by `# key = value` header lines.
pub fn write_metrics_csv<W: Write>(
    mut writer: W,
    header: &[(String, String)],
    metrics: &[EpochMetrics],
) -> Result<()> {
    for (key, value) in header {
        writeln!(writer, "# {key} = {value}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "epoch",
        "train_loss",
        "clean_loss",
        "noisy_loss",
        "aux_loss",
        "val_acc",
        "test_acc",
    ])?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.train_loss.to_string(),
            opt(m.clean_loss),
            opt(m.noisy_loss),
            opt(m.aux_loss),
            opt(m.val_acc),
            opt(m.test_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}
