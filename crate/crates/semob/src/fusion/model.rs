//! The progressive fusion model.
//!
//! Stage one distills per-step event signatures from the category
//! embedding matrix under each future step's time embedding. Stage two
//! couples the signatures to per-sensor local context through
//! softmax-normalized influence weights and injects a gated value
//! projection back into the sensor embeddings. A shared linear head
//! maps each (sensor, step) representation to a flow value.

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::params::{
    init_params, InfluenceAxis, ParamLeafs, ParamSet, TstConfig, VariantKind,
};
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::Tensor;
use crate::textctx::adapter_forward;

/// Everything one window contributes to a forward pass.
#[derive(Clone, Debug)]
pub struct SampleInput {
    /// M×T history in affected-set sensor order.
    pub history: Tensor,
    /// M×M row-normalized adjacency restricted to the affected set.
    pub a_sub: Tensor,
    /// M×K_D spatial features.
    pub d_feat: Tensor,
    /// Raw K×d_h category embedding rows (adapter not yet applied).
    pub c_raw: Tensor,
    pub future_timestamps: Vec<DateTime<Utc>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Materialize attention/influence tensors for inspection.
    pub capture: bool,
    /// Force I = 0: the prediction must collapse to the text-free path.
    pub force_zero_influence: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Introspection {
    /// T'×K attention over text categories, when the variant has it.
    pub attention: Option<Tensor>,
    /// M×T' influence weights, when the variant has them.
    pub influence: Option<Tensor>,
}

pub struct ForwardOutput {
    pub prediction: NodeId,
    pub introspection: Introspection,
}

/// One introspection dump line (per window).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntrospectionRow {
    pub event_id: String,
    pub first_target_step: usize,
    pub attention: Option<Vec<Vec<f64>>>,
    pub influence: Option<Vec<Vec<f64>>>,
}

pub fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

#[derive(Clone, Debug)]
pub struct TstModel {
    pub kind: VariantKind,
    pub config: TstConfig,
    pub params: ParamSet,
}

/// Day-of-week index (Monday = 0) and 5-minute time-of-day bin.
pub fn time_indices(ts: DateTime<Utc>) -> (usize, usize) {
    let dow = ts.weekday().num_days_from_monday() as usize;
    let tod = (ts.num_seconds_from_midnight() as usize) / 300;
    (dow, tod.min(crate::fusion::params::TOD_BINS - 1))
}

impl TstModel {
    pub fn new(kind: VariantKind, config: TstConfig) -> Result<Self> {
        let params = init_params(kind, &config)?;
        Ok(TstModel {
            kind,
            config,
            params,
        })
    }

    /// Same parameters, different forward wiring. Only meaningful when
    /// the target kind uses a subset of this model's tensors.
    pub fn with_kind(&self, kind: VariantKind) -> TstModel {
        TstModel {
            kind,
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }

    /// T'×d_t matrix of per-step time embeddings.
    fn time_embedding(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        timestamps: &[DateTime<Utc>],
    ) -> Result<NodeId> {
        let (dows, tods): (Vec<usize>, Vec<usize>) =
            timestamps.iter().map(|&ts| time_indices(ts)).unzip();
        let dow_rows = graph.gather_rows(leafs.id("dow_table"), &dows)?;
        let tod_rows = graph.gather_rows(leafs.id("tod_table"), &tods)?;
        graph.concat_cols(dow_rows, tod_rows)
    }

    /// M×d_st sensor embeddings: one temporal projection plus one
    /// graph-diffusion hop, or the variant's replacement.
    fn st_encode(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        history: NodeId,
        a_sub: NodeId,
        c_node: Option<NodeId>,
    ) -> Result<NodeId> {
        if self.kind == VariantKind::NoSte {
            return graph.matmul(history, leafs.id("st_lin"));
        }
        let input = if self.kind == VariantKind::EarlyFusion {
            let c = c_node.expect("early fusion needs the text matrix");
            let pooled = graph.mean_rows(c)?;
            let m = graph.value(history).rows();
            let tiled = graph.repeat_rows(pooled, m)?;
            graph.concat_cols(history, tiled)?
        } else {
            history
        };
        let projected = graph.matmul(input, leafs.id("st_w1"))?;
        let hidden = graph.add_row_bias(projected, leafs.id("st_b1"))?;
        let hidden = graph.relu(hidden)?;
        let diffused = graph.matmul(a_sub, hidden)?;
        let hop = graph.matmul(diffused, leafs.id("st_w2"))?;
        graph.add(hidden, hop)
    }

    /// T'×d_g event signatures; also returns the T'×K attention when
    /// the variant computes it.
    fn dynamic_context(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        c_node: NodeId,
        e_time: NodeId,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let t_out = graph.value(e_time).rows();
        if self.kind == VariantKind::EarlyFusion {
            let projected = graph.matmul(e_time, leafs.id("fusion_w"))?;
            let signature = graph.add_row_bias(projected, leafs.id("fusion_b"))?;
            return Ok((signature, None));
        }
        let values = graph.matmul(c_node, leafs.id("attn_wv"))?;
        let (summary, attention) = if self.kind == VariantKind::NoTemporalText {
            let pooled = graph.mean_rows(values)?;
            (graph.repeat_rows(pooled, t_out)?, None)
        } else {
            let queries = graph.matmul(e_time, leafs.id("attn_wq"))?;
            let keys = graph.matmul(c_node, leafs.id("attn_wk"))?;
            let keys_t = graph.transpose(keys)?;
            let logits = graph.matmul(queries, keys_t)?;
            let scaled = graph.scale(logits, 1.0 / (self.config.d_k as f64).sqrt())?;
            let attention = graph.softmax_rows(scaled)?;
            (graph.matmul(attention, values)?, Some(attention))
        };
        let joined = graph.concat_cols(summary, e_time)?;
        let projected = graph.matmul(joined, leafs.id("fusion_w"))?;
        let signature = graph.add_row_bias(projected, leafs.id("fusion_b"))?;
        Ok((signature, attention))
    }

    /// M×T' influence weights. Sensor-axis normalization makes each
    /// column a distribution over sensors; the time-axis alternative
    /// normalizes rows instead.
    fn influence(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        signature: NodeId,
        s_loc: NodeId,
    ) -> Result<NodeId> {
        let q = graph.matmul(signature, leafs.id("infl_q"))?;
        let k = graph.matmul(s_loc, leafs.id("infl_k"))?;
        let scale = 1.0 / (self.config.d_k as f64).sqrt();
        match self.config.influence_axis {
            InfluenceAxis::Sensors => {
                let k_t = graph.transpose(k)?;
                let logits = graph.matmul(q, k_t)?;
                let scaled = graph.scale(logits, scale)?;
                let it = graph.softmax_rows(scaled)?;
                graph.transpose(it)
            }
            InfluenceAxis::Time => {
                let q_t = graph.transpose(q)?;
                let logits = graph.matmul(k, q_t)?;
                let scaled = graph.scale(logits, scale)?;
                graph.softmax_rows(scaled)
            }
        }
    }

    /// Head over the event-infused representation, folded analytically:
    /// `head(E_st_i + I[i,t] * act(V_i)) = head(E_st)_i + I[i,t] *
    /// head(act(V))_i + b`.
    fn infuse_and_head(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        e_st: NodeId,
        influence: NodeId,
    ) -> Result<NodeId> {
        let v = graph.matmul(e_st, leafs.id("value_w"))?;
        let v = graph.add_row_bias(v, leafs.id("value_b"))?;
        let gate = graph.activation(v, self.config.activation)?;
        let base = graph.matmul(e_st, leafs.id("head_w"))?;
        let gain = graph.matmul(gate, leafs.id("head_w"))?;
        let scaled = graph.mul_col_broadcast(influence, gain)?;
        let combined = graph.add_col_broadcast(scaled, base)?;
        graph.add_scalar(combined, leafs.id("head_b"))
    }

    pub fn forward(
        &self,
        graph: &mut Graph,
        leafs: &ParamLeafs,
        input: &SampleInput,
        opts: &ForwardOptions,
    ) -> Result<ForwardOutput> {
        if input.future_timestamps.len() != self.config.t_out {
            return Err(Error::Validation(format!(
                "window has {} future steps, config wants {}",
                input.future_timestamps.len(),
                self.config.t_out
            )));
        }
        let m = input.history.rows();
        let history = graph.leaf(input.history.clone());
        let a_sub = graph.leaf(input.a_sub.clone());
        let d_feat = graph.leaf(input.d_feat.clone());
        let c_raw = graph.leaf(input.c_raw.clone());

        let c_node = if self.config.adapter_enabled {
            adapter_forward(graph, c_raw, leafs.id("adapter_w"), leafs.id("adapter_b"))?
        } else {
            c_raw
        };
        let e_time = self.time_embedding(graph, leafs, &input.future_timestamps)?;
        let e_st = self.st_encode(graph, leafs, history, a_sub, Some(c_node))?;
        let (signature, attention) = self.dynamic_context(graph, leafs, c_node, e_time)?;

        let mut introspection = Introspection::default();
        if opts.capture {
            introspection.attention = attention.map(|id| graph.value(id).clone());
        }

        let prediction = match self.kind {
            VariantKind::LateFusion => {
                let sensor_part = graph.matmul(e_st, leafs.id("head_st"))?;
                let text_part = graph.matmul(signature, leafs.id("head_tx"))?;
                let sensor_tiled = graph.repeat_cols(sensor_part, self.config.t_out)?;
                let text_tiled = graph.repeat_cols(text_part, m)?;
                let text_tiled = graph.transpose(text_tiled)?;
                let sum = graph.add(sensor_tiled, text_tiled)?;
                graph.add_scalar(sum, leafs.id("head_b"))?
            }
            VariantKind::NoTextSpatial => {
                let pooled = graph.mean_rows(signature)?;
                let tiled = graph.repeat_rows(pooled, m)?;
                let joined = graph.concat_cols(e_st, tiled)?;
                let z = graph.matmul(joined, leafs.id("cat_w"))?;
                let head = graph.matmul(z, leafs.id("head_w"))?;
                let tiled_out = graph.repeat_cols(head, self.config.t_out)?;
                graph.add_scalar(tiled_out, leafs.id("head_b"))?
            }
            _ => {
                let s_loc = graph.concat_cols(e_st, d_feat)?;
                let influence = if opts.force_zero_influence {
                    graph.leaf(Tensor::zeros(vec![m, self.config.t_out]))
                } else {
                    self.influence(graph, leafs, signature, s_loc)?
                };
                if opts.capture {
                    introspection.influence = Some(graph.value(influence).clone());
                }
                self.infuse_and_head(graph, leafs, e_st, influence)?
            }
        };

        Ok(ForwardOutput {
            prediction,
            introspection,
        })
    }

    /// Plain (tape-discarding) forward for evaluation.
    pub fn predict(
        &self,
        input: &SampleInput,
        opts: &ForwardOptions,
    ) -> Result<(Tensor, Introspection)> {
        let mut graph = Graph::new();
        let leafs = self.params.leaf_into(&mut graph);
        let out = self.forward(&mut graph, &leafs, input, opts)?;
        Ok((graph.value(out.prediction).clone(), out.introspection))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;
    use chrono::TimeZone;
    use rand::Rng;

    pub(crate) fn tiny_config() -> TstConfig {
        TstConfig {
            t_in: 4,
            t_out: 3,
            d_h: 6,
            d_dow: 2,
            d_tod: 3,
            d_g: 5,
            d_k: 4,
            d_st: 6,
            seed: 11,
            ..Default::default()
        }
    }

    pub(crate) fn tiny_input(m: usize, config: &TstConfig, seed: u64) -> SampleInput {
        let mut rng = seeded(seed);
        let mut rand_t = |r: usize, c: usize, lo: f64, hi: f64| {
            Tensor::new(
                vec![r, c],
                (0..r * c).map(|_| rng.random_range(lo..hi)).collect(),
            )
            .unwrap()
        };
        let history = rand_t(m, config.t_in, 0.0, 10.0);
        let mut a = rand_t(m, m, 0.0, 1.0);
        for i in 0..m {
            a.set(i, i, 1.0);
            let sum: f64 = a.row(i).iter().sum();
            for j in 0..m {
                let v = a.at(i, j) / sum;
                a.set(i, j, v);
            }
        }
        let mut d = rand_t(m, config.k_d, 0.0, 2.0);
        for i in 0..m {
            let theta = d.at(i, 1) * 3.0;
            d.set(i, 1, theta.sin());
            d.set(i, 2, theta.cos());
        }
        let c_raw = rand_t(crate::textctx::K_CATEGORIES, config.d_h, -0.5, 0.5);
        let t0 = Utc.with_ymd_and_hms(2019, 3, 4, 18, 0, 0).unwrap();
        let future_timestamps = (0..config.t_out)
            .map(|k| t0 + chrono::Duration::seconds(300 * k as i64))
            .collect();
        SampleInput {
            history,
            a_sub: a,
            d_feat: d,
            c_raw,
            future_timestamps,
        }
    }

    #[test]
    fn time_indices_day_boundaries() {
        // 2019-03-04 is a Monday.
        let monday_midnight = Utc.with_ymd_and_hms(2019, 3, 4, 0, 0, 0).unwrap();
        assert_eq!(time_indices(monday_midnight), (0, 0));
        let noon = Utc.with_ymd_and_hms(2019, 3, 6, 12, 0, 0).unwrap();
        assert_eq!(time_indices(noon), (2, 144));
        // same weekday and clock in a different week: identical indices
        let next_week = Utc.with_ymd_and_hms(2019, 3, 11, 0, 0, 0).unwrap();
        assert_eq!(time_indices(next_week), time_indices(monday_midnight));
    }

    #[test]
    fn forward_is_deterministic() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(4, &config, 3);
        let (a, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
        let (b, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[4, 3]);
    }

    #[test]
    fn influence_columns_sum_to_one() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(5, &config, 9);
        let opts = ForwardOptions {
            capture: true,
            ..Default::default()
        };
        let (_, intro) = model.predict(&input, &opts).unwrap();
        let influence = intro.influence.expect("full model captures I");
        assert_eq!(influence.shape(), &[5, config.t_out]);
        for t in 0..config.t_out {
            let col: f64 = (0..5).map(|i| influence.at(i, t)).sum();
            assert!((col - 1.0).abs() < 1e-9);
        }
        let attention = intro.attention.expect("full model captures attention");
        for row in 0..attention.rows() {
            let s: f64 = attention.row(row).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn time_axis_normalizes_rows() {
        let mut config = tiny_config();
        config.influence_axis = InfluenceAxis::Time;
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(5, &config, 10);
        let opts = ForwardOptions {
            capture: true,
            ..Default::default()
        };
        let (_, intro) = model.predict(&input, &opts).unwrap();
        let influence = intro.influence.unwrap();
        for i in 0..5 {
            let s: f64 = influence.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_sensor_gets_unit_influence() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(1, &config, 4);
        let opts = ForwardOptions {
            capture: true,
            ..Default::default()
        };
        let (_, intro) = model.predict(&input, &opts).unwrap();
        let influence = intro.influence.unwrap();
        assert!(influence.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_influence_is_the_text_free_path() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(4, &config, 5);
        let (gated, _) = model
            .predict(
                &input,
                &ForwardOptions {
                    force_zero_influence: true,
                    ..Default::default()
                },
            )
            .unwrap();
        // text-free path computed by hand: head(E_st) tiled over steps
        let mut graph = Graph::new();
        let leafs = model.params.leaf_into(&mut graph);
        let history = graph.leaf(input.history.clone());
        let a_sub = graph.leaf(input.a_sub.clone());
        let e_st = model
            .st_encode(&mut graph, &leafs, history, a_sub, None)
            .unwrap();
        let base = graph.matmul(e_st, leafs.id("head_w")).unwrap();
        let tiled = graph.repeat_cols(base, config.t_out).unwrap();
        let plain = graph.add_scalar(tiled, leafs.id("head_b")).unwrap();
        assert_eq!(gated, *graph.value(plain));
    }

    #[test]
    fn identical_category_rows_collapse_attention() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let mut input = tiny_input(4, &config, 6);
        let row: Vec<f64> = input.c_raw.row(0).to_vec();
        input.c_raw = Tensor::from_rows(&[row.clone(), row.clone(), row]).unwrap();
        let (full_out, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
        let no_tt = model.with_kind(VariantKind::NoTemporalText);
        let (pooled_out, _) = no_tt.predict(&input, &ForwardOptions::default()).unwrap();
        for (a, b) in full_out.data().iter().zip(pooled_out.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn text_reaches_the_output() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(4, &config, 7);
        let (base, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
        let mut doubled = input.clone();
        doubled.c_raw = doubled.c_raw.map(|v| v * 2.0);
        let (changed, _) = model.predict(&doubled, &ForwardOptions::default()).unwrap();
        assert_ne!(base, changed);
    }

    #[test]
    fn no_ts_has_no_influence_and_is_step_constant() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::NoTextSpatial, config.clone()).unwrap();
        let input = tiny_input(4, &config, 8);
        let opts = ForwardOptions {
            capture: true,
            ..Default::default()
        };
        let (out, intro) = model.predict(&input, &opts).unwrap();
        assert!(intro.influence.is_none());
        for i in 0..4 {
            for t in 1..config.t_out {
                assert_eq!(out.at(i, t), out.at(i, 0));
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let config = tiny_config();
        let model = TstModel::new(VariantKind::Full, config.clone()).unwrap();
        let input = tiny_input(5, &config, 12);
        let perm = [3usize, 0, 4, 1, 2];
        let permute_rows = |t: &Tensor| {
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let mut a_perm = Tensor::zeros(vec![5, 5]);
        for (r, &pr) in perm.iter().enumerate() {
            for (c, &pc) in perm.iter().enumerate() {
                a_perm.set(r, c, input.a_sub.at(pr, pc));
            }
        }
        let permuted = SampleInput {
            history: permute_rows(&input.history),
            a_sub: a_perm,
            d_feat: permute_rows(&input.d_feat),
            c_raw: input.c_raw.clone(),
            future_timestamps: input.future_timestamps.clone(),
        };
        let (base, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
        let (perm_out, _) = model.predict(&permuted, &ForwardOptions::default()).unwrap();
        for (r, &pr) in perm.iter().enumerate() {
            for t in 0..config.t_out {
                assert!(
                    (perm_out.at(r, t) - base.at(pr, t)).abs() < 1e-9,
                    "row {r} step {t}"
                );
            }
        }
    }

    #[test]
    fn every_variant_runs_forward() {
        let config = tiny_config();
        let input = tiny_input(4, &config, 13);
        for kind in VariantKind::ALL {
            let model = TstModel::new(kind, config.clone()).unwrap();
            let (out, _) = model.predict(&input, &ForwardOptions::default()).unwrap();
            assert_eq!(out.shape(), &[4, config.t_out], "{kind}");
        }
    }
}
