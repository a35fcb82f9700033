//! Model configuration, the variant taxonomy, and parameter storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::graph::{Activation, Graph, NodeId};
use crate::numerics::rng::{child_seed, seeded};
use crate::numerics::{embedding_init, linear_init, Tensor};

pub const TOD_BINS: usize = 288;
pub const DOW_BINS: usize = 7;

/// The full model and its six ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantKind {
    #[serde(rename = "full")]
    Full,
    /// Early fusion: pooled text concatenated onto each sensor's
    /// history before the spatiotemporal encoder; the signature branch
    /// runs on time embeddings alone.
    #[serde(rename = "EF")]
    EarlyFusion,
    /// Late fusion: text/time branch and sensor branch meet only at
    /// the head, additively.
    #[serde(rename = "LF")]
    LateFusion,
    /// Temporal-text attention replaced by mean pooling of the
    /// projected category rows.
    #[serde(rename = "no_TT")]
    NoTemporalText,
    /// Signature/sensor interaction replaced by concatenation of the
    /// time-pooled signature; no influence weights.
    #[serde(rename = "no_TS")]
    NoTextSpatial,
    /// Text adapter frozen.
    #[serde(rename = "no_finetune")]
    NoFinetune,
    /// Plain linear sensor embedding instead of the graph encoder.
    #[serde(rename = "no_STE")]
    NoSte,
}

impl VariantKind {
    pub const ALL: [VariantKind; 7] = [
        VariantKind::Full,
        VariantKind::EarlyFusion,
        VariantKind::LateFusion,
        VariantKind::NoTemporalText,
        VariantKind::NoTextSpatial,
        VariantKind::NoFinetune,
        VariantKind::NoSte,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            VariantKind::Full => "full",
            VariantKind::EarlyFusion => "EF",
            VariantKind::LateFusion => "LF",
            VariantKind::NoTemporalText => "no_TT",
            VariantKind::NoTextSpatial => "no_TS",
            VariantKind::NoFinetune => "no_finetune",
            VariantKind::NoSte => "no_STE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant kind {s:?}")))
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which axis the influence softmax normalizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceAxis {
    /// Columns of I sum to 1: each step distributes over sensors.
    Sensors,
    /// Rows of I sum to 1: each sensor distributes over steps.
    Time,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TstConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub d_h: usize,
    pub d_dow: usize,
    pub d_tod: usize,
    pub d_g: usize,
    pub d_k: usize,
    pub d_st: usize,
    /// Spatial feature count (distance, sin/cos bearing).
    pub k_d: usize,
    pub activation: Activation,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub influence_axis: InfluenceAxis,
    pub adapter_enabled: bool,
}

impl Default for TstConfig {
    fn default() -> Self {
        TstConfig {
            t_in: 12,
            t_out: 12,
            d_h: 32,
            d_dow: 4,
            d_tod: 8,
            d_g: 16,
            d_k: 16,
            d_st: 16,
            k_d: 3,
            activation: Activation::Sigmoid,
            lr: 1e-3,
            batch: 64,
            epochs: 5,
            seed: 7,
            influence_axis: InfluenceAxis::Sensors,
            adapter_enabled: true,
        }
    }
}

impl TstConfig {
    pub fn d_t(&self) -> usize {
        self.d_dow + self.d_tod
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_h", self.d_h),
            ("d_dow", self.d_dow),
            ("d_tod", self.d_tod),
            ("d_g", self.d_g),
            ("d_k", self.d_k),
            ("d_st", self.d_st),
        ] {
            if v < 2 {
                return Err(Error::Validation(format!("{name} must be >= 2, got {v}")));
            }
        }
        if self.t_in < 1 || self.t_out < 1 {
            return Err(Error::Validation("t_in and t_out must be >= 1".into()));
        }
        if self.batch < 1 {
            return Err(Error::Validation("batch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameter tensors in creation order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn from_params(params: Vec<Param>) -> Self {
        ParamSet { params }
    }

    fn push(&mut self, name: &str, value: Tensor, trainable: bool) {
        debug_assert!(!self.params.iter().any(|p| p.name == name));
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainable,
        });
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .params
            .iter()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("parameter {name} not in this variant"))
            .value
    }

    pub fn has(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Leaf every parameter into the graph; returns ids in set order.
    pub fn leaf_into(&self, graph: &mut Graph) -> ParamLeafs {
        ParamLeafs {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            ids: self
                .params
                .iter()
                .map(|p| graph.leaf(p.value.clone()))
                .collect(),
        }
    }
}

/// Node ids for one graph's view of the parameters.
pub struct ParamLeafs {
    names: Vec<String>,
    ids: Vec<NodeId>,
}

impl ParamLeafs {
    pub fn id(&self, name: &str) -> NodeId {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter {name} not leafed"));
        self.ids[idx]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Build the parameter set for one variant.
pub fn init_params(kind: VariantKind, config: &TstConfig) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = seeded(child_seed(config.seed, "params"));
    let mut set = ParamSet::default();
    let d_t = config.d_t();

    set.push(
        "dow_table",
        embedding_init(&mut rng, DOW_BINS, config.d_dow),
        true,
    );
    set.push(
        "tod_table",
        embedding_init(&mut rng, TOD_BINS, config.d_tod),
        true,
    );

    // sensor embedding branch
    match kind {
        VariantKind::NoSte => {
            set.push(
                "st_lin",
                linear_init(&mut rng, config.t_in, config.d_st),
                true,
            );
        }
        VariantKind::EarlyFusion => {
            set.push(
                "st_w1",
                linear_init(&mut rng, config.t_in + config.d_h, config.d_st),
                true,
            );
            set.push("st_b1", Tensor::zeros(vec![config.d_st]), true);
            set.push("st_w2", linear_init(&mut rng, config.d_st, config.d_st), true);
        }
        _ => {
            set.push("st_w1", linear_init(&mut rng, config.t_in, config.d_st), true);
            set.push("st_b1", Tensor::zeros(vec![config.d_st]), true);
            set.push("st_w2", linear_init(&mut rng, config.d_st, config.d_st), true);
        }
    }

    // dynamic contextual encoding
    let has_attention = !matches!(
        kind,
        VariantKind::NoTemporalText | VariantKind::EarlyFusion
    );
    if has_attention {
        set.push("attn_wq", linear_init(&mut rng, d_t, config.d_k), true);
        set.push("attn_wk", linear_init(&mut rng, config.d_h, config.d_k), true);
    }
    if kind != VariantKind::EarlyFusion {
        set.push("attn_wv", linear_init(&mut rng, config.d_h, config.d_g), true);
    }
    let fusion_in = if kind == VariantKind::EarlyFusion {
        d_t
    } else {
        config.d_g + d_t
    };
    set.push("fusion_w", linear_init(&mut rng, fusion_in, config.d_g), true);
    set.push("fusion_b", Tensor::zeros(vec![config.d_g]), true);

    // contextual mobility projection
    let has_influence = !matches!(kind, VariantKind::LateFusion | VariantKind::NoTextSpatial);
    if has_influence {
        set.push(
            "infl_q",
            linear_init(&mut rng, config.d_g, config.d_k),
            true,
        );
        set.push(
            "infl_k",
            linear_init(&mut rng, config.d_st + config.k_d, config.d_k),
            true,
        );
        set.push(
            "value_w",
            linear_init(&mut rng, config.d_st, config.d_st),
            true,
        );
        set.push("value_b", Tensor::zeros(vec![config.d_st]), true);
    }
    if kind == VariantKind::NoTextSpatial {
        set.push(
            "cat_w",
            linear_init(&mut rng, config.d_st + config.d_g, config.d_st),
            true,
        );
    }

    // output head
    if kind == VariantKind::LateFusion {
        set.push("head_st", linear_init(&mut rng, config.d_st, 1), true);
        set.push("head_tx", linear_init(&mut rng, config.d_g, 1), true);
        set.push("head_b", Tensor::zeros(vec![1]), true);
    } else {
        set.push("head_w", linear_init(&mut rng, config.d_st, 1), true);
        set.push("head_b", Tensor::zeros(vec![1]), true);
    }

    if config.adapter_enabled {
        let trainable = kind != VariantKind::NoFinetune;
        set.push("adapter_w", Tensor::identity(config.d_h), trainable);
        set.push("adapter_b", Tensor::zeros(vec![config.d_h]), trainable);
    }

    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_labels_round_trip() {
        for kind in VariantKind::ALL {
            assert_eq!(VariantKind::parse(kind.label()).unwrap(), kind);
        }
        assert!(VariantKind::parse("bogus").is_err());
    }

    #[test]
    fn param_inventory_per_variant() {
        let config = TstConfig::default();
        let full = init_params(VariantKind::Full, &config).unwrap();
        assert!(full.has("attn_wq") && full.has("infl_q") && full.has("head_w"));
        let ef = init_params(VariantKind::EarlyFusion, &config).unwrap();
        assert!(!ef.has("attn_wq") && !ef.has("attn_wv"));
        assert_eq!(ef.get("st_w1").shape(), &[config.t_in + config.d_h, config.d_st]);
        assert_eq!(ef.get("fusion_w").shape(), &[config.d_t(), config.d_g]);
        let lf = init_params(VariantKind::LateFusion, &config).unwrap();
        assert!(!lf.has("infl_q") && lf.has("head_st") && lf.has("head_tx"));
        let nots = init_params(VariantKind::NoTextSpatial, &config).unwrap();
        assert!(!nots.has("infl_q") && nots.has("cat_w"));
        let noft = init_params(VariantKind::NoFinetune, &config).unwrap();
        let adapter = noft.iter().find(|p| p.name == "adapter_w").unwrap();
        assert!(!adapter.trainable);
        let noste = init_params(VariantKind::NoSte, &config).unwrap();
        assert!(noste.has("st_lin") && !noste.has("st_w1"));
    }

    #[test]
    fn init_is_seeded() {
        let config = TstConfig::default();
        let a = init_params(VariantKind::Full, &config).unwrap();
        let b = init_params(VariantKind::Full, &config).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.value, y.value);
        }
    }
}
