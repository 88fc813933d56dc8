use serde::{Deserialize, Serialize};

use crate::autodiff::{init_segment, InitScheme, LstmSpec, MlpSpec, ParamVector};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::mech::{uva_graphs, MechKind};
use crate::rng::SeededRng;

/// Hard cap on trainable parameters.
pub const PARAM_CAP: usize = 25_000;

const CLOSURE_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[serde(rename = "uva", alias = "mechanistic")]
    Mechanistic,
    Lp,
    Lpsc,
    Mnode,
    Bnode,
    Lstm,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Mechanistic, Variant::Lp, Variant::Lpsc, Variant::Mnode, Variant::Bnode, Variant::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mechanistic => "uva",
            Variant::Lp => "lp",
            Variant::Lpsc => "lpsc",
            Variant::Mnode => "mnode",
            Variant::Bnode => "bnode",
            Variant::Lstm => "lstm",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "uva" | "mechanistic" => Ok(Variant::Mechanistic),
            "lp" => Ok(Variant::Lp),
            "lpsc" => Ok(Variant::Lpsc),
            "mnode" => Ok(Variant::Mnode),
            "bnode" => Ok(Variant::Bnode),
            "lstm" => Ok(Variant::Lstm),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }

    /// `(c1, c2, c3, c4)`: mechanistic term, neural term, latent input to the
    /// neural term, latent parameter drift. `None` for the LSTM baseline.
    pub fn switches(self) -> Option<[bool; 4]> {
        match self {
            Variant::Mechanistic => Some([true, false, false, false]),
            Variant::Lp => Some([true, false, false, true]),
            Variant::Lpsc => Some([true, true, false, true]),
            Variant::Mnode | Variant::Bnode => Some([false, true, false, false]),
            Variant::Lstm => None,
        }
    }

    /// Inverse of [`Variant::switches`]; a neural-only field over a fully
    /// dense graph is the blackbox variant.
    pub fn from_switches(c: [bool; 4], dense_graph: bool) -> Result<Self> {
        match c {
            [true, false, false, false] => Ok(Variant::Mechanistic),
            [true, false, false, true] => Ok(Variant::Lp),
            [true, true, false, true] => Ok(Variant::Lpsc),
            [false, true, false, false] if dense_graph => Ok(Variant::Bnode),
            [false, true, false, false] => Ok(Variant::Mnode),
            other => Err(Error::Config(format!("switches {other:?} do not define a model variant"))),
        }
    }

    pub fn uses_mech(self) -> bool {
        matches!(self, Variant::Mechanistic | Variant::Lp | Variant::Lpsc)
    }

    pub fn uses_latent(self) -> bool {
        matches!(self, Variant::Lp | Variant::Lpsc)
    }
}

/// How the initial state is obtained from the context window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `s0 = y0`; only valid for one-state models.
    Direct,
    /// LSTM encoder over the context.
    Encoded,
}

/// Hidden-layer shape shared by every MLP in a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpTemplate {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl MlpTemplate {
    pub fn spec(&self, in_dim: usize, out_dim: usize) -> MlpSpec {
        MlpSpec::new(in_dim, self.hidden_layers, self.hidden_units, out_dim).with_dropout(self.dropout)
    }
}

/// One point of a hyperparameter grid: layers `n`, units `m`, latent or
/// state size `d`, dropout `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub variant: Variant,
    #[serde(default)]
    pub mech: Option<MechKind>,
    /// Masks for MNODE and the LPSC closure.
    #[serde(default)]
    pub graph: Option<CausalGraph>,
    pub input_names: Vec<String>,
    /// Data columns fed to the mechanistic model as its two inputs.
    #[serde(default)]
    pub mech_inputs: [usize; 2],
    /// Data columns driving the latent dynamics.
    #[serde(default)]
    pub latent_inputs: Vec<usize>,
    /// Latent size for LP/LPSC, state size for BNODE, hidden size for LSTM.
    pub latent_dim: usize,
    pub mlp: MlpTemplate,
    pub encoder_layers: usize,
    /// Closure gate for LPSC.
    #[serde(default)]
    pub closure_w: f64,
    pub init: InitMode,
    pub horizon: usize,
    pub dt: f64,
    #[serde(default)]
    pub output_state: usize,
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

impl HybridConfig {
    fn base(variant: Variant, input_names: Vec<String>, horizon: usize) -> Self {
        Self {
            variant,
            mech: None,
            graph: None,
            input_names,
            mech_inputs: [0, 1],
            latent_inputs: vec![],
            latent_dim: 8,
            mlp: MlpTemplate { hidden_layers: 2, hidden_units: 16, dropout: 0.0 },
            encoder_layers: 2,
            closure_w: 0.0,
            init: InitMode::Encoded,
            horizon,
            dt: 1.0,
            output_state: 0,
        }
    }

    /// Defaults for the one-state synthetic system with inputs `x1, x2`.
    pub fn synthetic(variant: Variant) -> Self {
        let mut c = Self::base(variant, default_names(2), 10);
        match variant {
            Variant::Mechanistic => {
                c.mech = Some(MechKind::Synthetic);
                c.init = InitMode::Direct;
            }
            Variant::Lp | Variant::Lpsc => {
                c.mech = Some(MechKind::Synthetic);
                c.init = InitMode::Direct;
                c.latent_dim = 4;
                if variant == Variant::Lpsc {
                    c.graph = Some(CausalGraph::synthetic());
                }
            }
            Variant::Mnode => {
                c.graph = Some(CausalGraph::synthetic());
                c.init = InitMode::Direct;
            }
            Variant::Bnode => {
                c.latent_dim = 2;
                c.mlp.hidden_units = 32;
            }
            Variant::Lstm => {}
        }
        c
    }

    /// Defaults for glucose data with inputs `insulin, carbs, hr, steps`.
    pub fn glucose(variant: Variant) -> Self {
        let names = crate::mech::UVA_INPUTS.iter().map(|s| s.to_string()).collect();
        let mut c = Self::base(variant, names, 6);
        c.mech_inputs = [1, 0];
        match variant {
            Variant::Mechanistic => c.mech = Some(MechKind::Full),
            Variant::Lp | Variant::Lpsc => {
                c.mech = Some(MechKind::Reduced);
                c.latent_inputs = vec![2, 3];
                if variant == Variant::Lpsc {
                    c.graph = Some(uva_graphs().reduced);
                }
            }
            Variant::Mnode => c.graph = Some(uva_graphs().reduced),
            Variant::Bnode => c.latent_dim = 4,
            Variant::Lstm => {}
        }
        c
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_states(&self) -> usize {
        match self.variant {
            Variant::Mechanistic | Variant::Lp | Variant::Lpsc => self.mech.map_or(0, MechKind::n_states),
            Variant::Mnode => self.graph.as_ref().map_or(0, CausalGraph::n_states),
            Variant::Bnode | Variant::Lstm => self.latent_dim,
        }
    }

    /// Size of the encoder's hidden state.
    pub fn encoder_hidden(&self) -> usize {
        match self.variant {
            Variant::Lp | Variant::Lpsc | Variant::Lstm => self.latent_dim,
            _ => self.n_states(),
        }
    }

    pub fn uses_encoder(&self) -> bool {
        self.init == InitMode::Encoded || self.variant.uses_latent() || self.variant == Variant::Lstm
    }

    pub fn encoder_spec(&self) -> LstmSpec {
        LstmSpec::new(self.encoder_layers, 1 + self.n_inputs(), self.encoder_hidden())
    }

    pub fn mlp1_spec(&self) -> MlpSpec {
        self.mlp.spec(self.latent_dim, self.n_states().saturating_sub(1).max(1))
    }

    pub fn f3_spec(&self) -> MlpSpec {
        self.mlp.spec(self.latent_dim, self.mech.map_or(1, MechKind::n_params))
    }

    pub fn joint_spec(&self) -> MlpSpec {
        self.mlp.spec(self.latent_dim + self.n_inputs(), self.latent_dim)
    }

    /// Parents of state `i` under the mask graph.
    pub fn parents(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        self.graph.as_ref().map(|g| g.parents(i)).unwrap_or_default()
    }

    pub fn masked_spec(&self, i: usize) -> MlpSpec {
        let (ps, px) = self.parents(i);
        self.mlp.spec(ps.len() + px.len(), 1)
    }

    /// Closure MLPs always have two hidden layers.
    pub fn closure_spec(&self, i: usize) -> MlpSpec {
        MlpSpec { hidden_layers: CLOSURE_LAYERS, ..self.masked_spec(i) }
    }

    pub fn with_hyper(&self, h: &HyperParams) -> Self {
        let mut c = self.clone();
        c.mlp = MlpTemplate { hidden_layers: h.n, hidden_units: h.m, dropout: h.a };
        match c.variant {
            Variant::Lp | Variant::Lpsc | Variant::Bnode if h.d > 0 => c.latent_dim = h.d,
            Variant::Lstm => {
                // the LSTM grid names its hidden size m
                c.encoder_layers = h.n.max(1);
                c.latent_dim = if h.d > 0 { h.d } else { h.m };
            }
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_inputs() == 0 {
            return bad("model needs at least one input".into());
        }
        if self.variant.uses_mech() {
            if self.mech.is_none() {
                return bad(format!("{} needs a mechanistic model", self.variant.name()));
            }
            if self.mech_inputs.iter().any(|&k| k >= self.n_inputs()) {
                return bad(format!("mech_inputs {:?} out of range", self.mech_inputs));
            }
        }
        if self.latent_inputs.iter().any(|&k| k >= self.n_inputs()) {
            return bad(format!("latent_inputs {:?} out of range", self.latent_inputs));
        }
        if matches!(self.variant, Variant::Mnode | Variant::Lpsc) {
            let Some(g) = &self.graph else {
                return bad(format!("{} needs a graph", self.variant.name()));
            };
            g.validate()?;
            if g.n_states() != self.n_states() || g.n_inputs() != self.n_inputs() {
                return bad(format!(
                    "graph is {}x{} but model has {} states and {} inputs",
                    g.n_states(),
                    g.n_inputs(),
                    self.n_states(),
                    self.n_inputs()
                ));
            }
            for i in 0..g.n_states() {
                let (ps, px) = g.parents(i);
                if ps.is_empty() && px.is_empty() {
                    return bad(format!("state {} has no parents", g.state_names[i]));
                }
            }
        }
        if self.n_states() == 0 {
            return bad("model has no states".into());
        }
        if self.output_state >= self.n_states() {
            return bad(format!("output state {} out of range", self.output_state));
        }
        if self.variant.uses_latent() && self.latent_dim == 0 {
            return bad("latent dimension must be positive".into());
        }
        if self.variant.uses_latent() && self.init == InitMode::Encoded && self.n_states() < 2 {
            return bad("encoded LP initial state needs at least two states".into());
        }
        if self.init == InitMode::Direct && !self.variant.uses_latent() && self.n_states() != 1 {
            return bad(format!("direct initialization needs one state, model has {}", self.n_states()));
        }
        if self.uses_encoder() && self.encoder_layers == 0 {
            return bad("encoder needs at least one layer".into());
        }
        if !(0.0..1.0).contains(&self.mlp.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.mlp.dropout));
        }
        Ok(())
    }

    /// Registers every segment the variant uses, zero-filled.
    pub fn layout(&self) -> Result<ParamVector> {
        self.validate()?;
        let mut p = ParamVector::new();
        if self.uses_encoder() {
            self.encoder_spec().register(&mut p, "encoder.lstm")?;
        }
        if self.variant.uses_latent() && self.init == InitMode::Encoded {
            self.mlp1_spec().register(&mut p, "encoder.mlp1")?;
        }
        if let (true, Some(m)) = (self.variant.uses_mech(), self.mech) {
            p.register("mech.beta", m.n_params())?;
        }
        match self.variant {
            Variant::Lp | Variant::Lpsc => {
                self.f3_spec().register(&mut p, "nn.f3")?;
                if self.variant == Variant::Lpsc {
                    for i in 0..self.n_states() {
                        self.closure_spec(i).register(&mut p, &format!("nn.closure.s{i}"))?;
                    }
                }
                let d = self.latent_dim;
                p.register("latent.A", d * d)?;
                p.register("latent.B", self.latent_inputs.len() * d)?;
            }
            Variant::Mnode => {
                for i in 0..self.n_states() {
                    self.masked_spec(i).register(&mut p, &format!("nn.f1.s{i}"))?;
                }
            }
            Variant::Bnode => self.joint_spec().register(&mut p, "nn.f1.joint")?,
            Variant::Lstm => {
                LstmSpec::new(self.encoder_layers, self.n_inputs(), self.latent_dim).register(&mut p, "nn.decoder")?;
                MlpSpec::linear(self.latent_dim, 1).register(&mut p, "nn.head")?;
            }
            Variant::Mechanistic => {}
        }
        Ok(p)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layout()?.len())
    }

    /// Rejects models above [`PARAM_CAP`].
    pub fn check_cap(&self) -> Result<usize> {
        let n = self.param_count()?;
        if n >= PARAM_CAP {
            return Err(Error::Config(format!("model has {n} parameters, cap is {PARAM_CAP}")));
        }
        Ok(n)
    }

    /// Draws initial values for every segment.
    pub fn init_params(&self, rng: &mut SeededRng) -> Result<ParamVector> {
        let mut p = self.layout()?;
        let names: Vec<(String, usize)> = p.segments().map(|(n, s)| (n.to_string(), s.len)).collect();
        for (name, _) in names {
            let scheme = if name == "mech.beta" {
                InitScheme::Mechanistic
            } else if name.starts_with("latent.") {
                InitScheme::FanInUniform { fan_in: self.latent_dim }
            } else if name.starts_with("encoder.lstm") || name.starts_with("nn.decoder") {
                InitScheme::FanInUniform { fan_in: self.encoder_hidden() }
            } else {
                // MLP layer `{stem}.w` / `{stem}.b`; fan-in = |w| / |b|
                let stem = &name[..name.rfind('.').unwrap_or(name.len())];
                let fan_in = p.segment(&format!("{stem}.w"))?.len / p.segment(&format!("{stem}.b"))?.len.max(1);
                if name.starts_with("nn.closure") && self.is_last_layer(&name) {
                    InitScheme::Zeros
                } else {
                    InitScheme::FanInUniform { fan_in }
                }
            };
            init_segment(&mut p, &name, scheme, rng)?;
        }
        Ok(p)
    }

    fn is_last_layer(&self, segment: &str) -> bool {
        let last = CLOSURE_LAYERS;
        segment.ends_with(&format!(".l{last}.w")) || segment.ends_with(&format!(".l{last}.b"))
    }
}
