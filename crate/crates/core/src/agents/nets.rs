use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{Activation, Graph, NetError, ParamSet, Real};
use crate::harness::config::NetworkSection;
use crate::harness::seeding;

use super::algorithm::{Algorithm, Topology};

/// Independently initialized and optimized network pieces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Encoder,
    PolicyHead,
    /// Value head on the shared encoder (the auxiliary head in PPG).
    ValueHead,
    Discriminator,
    InverseDiscriminator,
    ValueEncoder,
    /// Value head on the separate value encoder.
    SeparateValueHead,
}

/// Optimizer groups: the policy network and the separate value network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Policy,
    Value,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Encoder,
        Component::PolicyHead,
        Component::ValueHead,
        Component::Discriminator,
        Component::InverseDiscriminator,
        Component::ValueEncoder,
        Component::SeparateValueHead,
    ];

    /// Graph name, also the prefix of every parameter name.
    pub fn name(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::PolicyHead => "policy",
            Component::ValueHead => "value",
            Component::Discriminator => "disc",
            Component::InverseDiscriminator => "disc_inv",
            Component::ValueEncoder => "value_encoder",
            Component::SeparateValueHead => "value_sep",
        }
    }

    pub fn group(self) -> Group {
        match self {
            Component::ValueEncoder | Component::SeparateValueHead => Group::Value,
            _ => Group::Policy,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn gains(self) -> (f64, f64) {
        let sqrt2 = std::f64::consts::SQRT_2;
        match self {
            Component::Encoder | Component::ValueEncoder => (sqrt2, sqrt2),
            Component::PolicyHead => (sqrt2, 0.01),
            _ => (sqrt2, 1.0),
        }
    }
}

/// One value per component, `None` where the topology lacks it (or, for
/// gradients, where the component received none).
#[derive(Clone, Debug, PartialEq)]
pub struct PerComponent<X> {
    slots: [Option<X>; 7],
}

impl<X> Default for PerComponent<X> {
    fn default() -> Self {
        Self {
            slots: Default::default(),
        }
    }
}

impl<X> PerComponent<X> {
    pub fn get(&self, c: Component) -> Option<&X> {
        self.slots[c.index()].as_ref()
    }

    pub fn get_mut(&mut self, c: Component) -> Option<&mut X> {
        self.slots[c.index()].as_mut()
    }

    pub fn insert(&mut self, c: Component, x: X) {
        self.slots[c.index()] = Some(x);
    }

    pub fn contains(&self, c: Component) -> bool {
        self.slots[c.index()].is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Component, &X)> {
        Component::ALL
            .into_iter()
            .filter_map(move |c| self.get(c).map(|x| (c, x)))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (Component, &mut X)> {
        Component::ALL.into_iter().zip(self.slots.iter_mut()).filter_map(|(c, x)| x.as_mut().map(|x| (c, x)))
    }
}

/// Parameters of every component present in a topology.
pub type NetParams<T = f32> = PerComponent<ParamSet<T>>;

impl<T: Real> PerComponent<ParamSet<T>> {
    pub fn cast<U: Real>(&self) -> NetParams<U> {
        let mut out = PerComponent::default();
        for (c, p) in self.iter() {
            out.insert(c, p.cast());
        }
        out
    }

    /// All components in one set (names are globally unique).
    pub fn merged(&self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (_, p) in self.iter() {
            out = out.merged(p).expect("component names are disjoint");
        }
        out
    }

    /// Inverse of [`merged`](Self::merged) for the components of `layout`.
    pub fn split_like(merged: &ParamSet<T>, layout: &NetParams<T>) -> Self {
        let mut out = PerComponent::default();
        for (c, _) in layout.iter() {
            out.insert(c, merged.filtered(&format!("{}.", c.name())));
        }
        out
    }

    /// Gradient accumulator for `c`, created on first use.
    pub fn grad_slot(&mut self, c: Component, params: &NetParams<T>) -> &mut ParamSet<T> {
        let i = c.index();
        if self.slots[i].is_none() {
            self.slots[i] = Some(params.get(c).expect("component exists").zeros_like());
        }
        self.slots[i].as_mut().unwrap()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, p)| p.all_finite())
    }
}

/// Graphs of one agent, fixed by algorithm and network settings.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGraphs {
    graphs: PerComponent<Graph>,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub embed_dim: usize,
}

impl NetGraphs {
    pub fn build(
        algorithm: Algorithm,
        obs_dim: usize,
        num_actions: usize,
        network: &NetworkSection,
    ) -> Self {
        let act = network.activation;
        let hidden = &network.encoder_hidden;
        let embed = *hidden.last().expect("validated: encoder has layers");
        let mut graphs = PerComponent::default();
        graphs.insert(Component::Encoder, Graph::feature_mlp("encoder", obs_dim, hidden, act));
        graphs.insert(Component::PolicyHead, Graph::mlp("policy", embed, &[], num_actions, act));
        graphs.insert(Component::ValueHead, Graph::mlp("value", embed, &[], 1, act));
        if let Some(kind) = algorithm.dynamics() {
            let disc_in = 2 * embed + num_actions;
            let dh = &network.discriminator_hidden;
            graphs.insert(
                Component::Discriminator,
                Graph::mlp("disc", disc_in, dh, 1, Activation::Relu),
            );
            if kind.needs_second_discriminator() {
                graphs.insert(
                    Component::InverseDiscriminator,
                    Graph::mlp("disc_inv", disc_in, dh, 1, Activation::Relu),
                );
            }
        }
        if algorithm.topology() == Topology::Dual {
            graphs.insert(
                Component::ValueEncoder,
                Graph::feature_mlp("value_encoder", obs_dim, hidden, act),
            );
            graphs.insert(
                Component::SeparateValueHead,
                Graph::mlp("value_sep", embed, &[], 1, act),
            );
        }
        Self {
            graphs,
            obs_dim,
            num_actions,
            embed_dim: embed,
        }
    }

    pub fn get(&self, c: Component) -> Option<&Graph> {
        self.graphs.get(c)
    }

    pub fn graph(&self, c: Component) -> &Graph {
        self.graphs.get(c).unwrap_or_else(|| panic!("topology has no {c:?}"))
    }

    pub fn has(&self, c: Component) -> bool {
        self.graphs.contains(c)
    }

    pub fn components(&self) -> Vec<Component> {
        self.graphs.iter().map(|(c, _)| c).collect()
    }

    /// Orthogonal initialization, each component from its own stream so the
    /// presence of one component never changes another's weights.
    pub fn init_params<T: Real>(&self, seed: u64) -> NetParams<T> {
        let mut out = PerComponent::default();
        for (c, g) in self.graphs.iter() {
            let mut rng: ChaCha8Rng = seeding::stream(seed, &format!("{}/{}", seeding::INIT, c.name()));
            let (hidden, output) = c.gains();
            out.insert(c, g.init_params(&mut rng, hidden, output));
        }
        out
    }

    /// Whole value network as a single graph: shared encoder and value head,
    /// or the separate encoder and head.
    pub fn value_network(&self, separate: bool) -> Result<(Graph, [Component; 2]), NetError> {
        let parts = if separate {
            [Component::ValueEncoder, Component::SeparateValueHead]
        } else {
            [Component::Encoder, Component::ValueHead]
        };
        let g = self.graph(parts[0]).chain(self.graph(parts[1]), "value_network")?;
        Ok((g, parts))
    }
}
