//! Minibatch training of a fusion model.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::agents::stats::WindowMeta;
use crate::datamodel::windows::EventWindow;
use crate::error::{Error, Result};
use crate::fusion::model::{ForwardOptions, SampleInput, TstModel};
use crate::numerics::rng::{child_seed, seeded};
use crate::numerics::{AdamHyper, AdamState, Graph, Tensor};
use crate::textctx::{encode_categories, EncoderSpec, TextContext};

#[derive(Clone, Debug)]
pub struct TrainSample {
    pub input: SampleInput,
    pub target: Tensor,
    pub meta: WindowMeta,
}

/// Pair windows with their event's encoded text rows.
pub fn prepare_samples(
    windows: &[EventWindow],
    contexts: &BTreeMap<String, TextContext>,
    encoder: &EncoderSpec,
) -> Result<Vec<TrainSample>> {
    let mut c_cache: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut samples = Vec::with_capacity(windows.len());
    for w in windows {
        let c_raw = match c_cache.get(&w.event_id) {
            Some(c) => c.clone(),
            None => {
                let ctx = contexts.get(&w.event_id).ok_or_else(|| {
                    Error::Data(format!("no text context for event {}", w.event_id))
                })?;
                let c = encode_categories(ctx, encoder)?;
                c_cache.insert(w.event_id.clone(), c.clone());
                c
            }
        };
        samples.push(TrainSample {
            input: SampleInput {
                history: w.history.clone(),
                a_sub: w.affected.sub_adjacency.clone(),
                d_feat: w.affected.features.clone(),
                c_raw,
                future_timestamps: w.future_timestamps.clone(),
            },
            target: w.target.clone(),
            meta: WindowMeta {
                event_id: w.event_id.clone(),
                venue_id: w.venue_id.clone(),
                categories: w.categories.clone(),
                first_target: w.future_timestamps[0],
            },
        });
    }
    Ok(samples)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Cumulative absolute gradient routed into each parameter
    /// (frozen parameters stay at exactly 0).
    pub grad_mass: BTreeMap<String, f64>,
}

/// Smooth L1 on shuffled minibatches with Adam. Deterministic for a
/// fixed config seed.
pub fn train(model: &mut TstModel, samples: &[TrainSample]) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Validation("train: empty dataset".into()));
    }
    let config = model.config.clone();
    let trainable: Vec<usize> = model
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, _)| i)
        .collect();
    let mut grad_mass: BTreeMap<String, f64> =
        model.params.iter().map(|p| (p.name.clone(), 0.0)).collect();
    let mut adam = AdamState::new(
        &trainable
            .iter()
            .map(|&i| model.params.iter().nth(i).unwrap().value.clone())
            .collect::<Vec<_>>(),
        AdamHyper {
            lr: config.lr,
            ..Default::default()
        },
    );

    let mut rng = seeded(child_seed(config.seed, "train"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let opts = ForwardOptions::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_id, chunk) in order.chunks(config.batch).enumerate() {
            let step = (|| -> Result<f64> {
                let mut graph = Graph::new();
                let leafs = model.params.leaf_into(&mut graph);
                let mut total = None;
                for &idx in chunk {
                    let s = &samples[idx];
                    let out = model.forward(&mut graph, &leafs, &s.input, &opts)?;
                    let loss = graph.smooth_l1(out.prediction, &s.target, 1.0)?;
                    total = Some(match total {
                        None => loss,
                        Some(t) => graph.add(t, loss)?,
                    });
                }
                let total = total.expect("nonempty batch");
                let mean = graph.scale(total, 1.0 / chunk.len() as f64)?;
                let loss_value = graph.value(mean).item();
                graph.backward(mean)?;

                let mut grads = Vec::with_capacity(trainable.len());
                for &i in &trainable {
                    let name = model.params.iter().nth(i).unwrap().name.clone();
                    let g = graph.grad(leafs.ids()[i]);
                    *grad_mass.get_mut(&name).unwrap() +=
                        g.data().iter().map(|v| v.abs()).sum::<f64>();
                    grads.push(g);
                }
                let mut values: Vec<Tensor> = trainable
                    .iter()
                    .map(|&i| model.params.iter().nth(i).unwrap().value.clone())
                    .collect();
                adam.step(&mut values, &grads)?;
                for (&i, v) in trainable.iter().zip(values) {
                    model.params.iter_mut().nth(i).unwrap().value = v;
                }
                Ok(loss_value)
            })()
            .map_err(|e| {
                Error::Data(format!(
                    "training aborted at epoch {epoch} batch {batch_id}: {e}"
                ))
            })?;
            loss_sum += step * chunk.len() as f64;
        }
        epoch_losses.push(loss_sum / samples.len() as f64);
    }
    Ok(TrainOutcome {
        epoch_losses,
        grad_mass,
    })
}
