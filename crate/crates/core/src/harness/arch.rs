use serde::{Deserialize, Serialize};

use crate::model::{ArchSpec, LayerSpec};
use crate::numerics::Initializer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArchName {
    /// 128 -> 32 -> 32 -> 8 MLP, each dense layer its own block, K = 3.
    MlpSynth,
    /// Two conv blocks (8 and 16 filters) on 3x16x16 inputs, a dense 64
    /// block and the head, K = 2.
    ScnnMini,
}

impl ArchName {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchName::MlpSynth => "MLP_SYNTH",
            ArchName::ScnnMini => "SCNN_MINI",
        }
    }

    pub fn parse(s: &str) -> Option<ArchName> {
        match s.to_ascii_uppercase().as_str() {
            "MLP_SYNTH" => Some(ArchName::MlpSynth),
            "SCNN_MINI" => Some(ArchName::ScnnMini),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchPreset {
    pub name: ArchName,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub initializer: Initializer,
}

impl ArchPreset {
    pub fn new(name: ArchName) -> Self {
        ArchPreset {
            name,
            dropout: 0.0,
            initializer: Initializer::HeNormal,
        }
    }

    pub fn spec(&self) -> ArchSpec {
        match self.name {
            ArchName::MlpSynth => mlp_synth(self.initializer),
            ArchName::ScnnMini => scnn_mini(self.dropout, self.initializer),
        }
    }
}

pub fn mlp_synth(initializer: Initializer) -> ArchSpec {
    let dense = |units| LayerSpec::Dense { units, bias: true };
    ArchSpec {
        name: ArchName::MlpSynth.as_str().into(),
        input_shape: vec![128],
        blocks: vec![
            vec![dense(32), LayerSpec::ReLU],
            vec![dense(32), LayerSpec::ReLU],
            vec![dense(8)],
        ],
        k_blocks: 3,
        // The head is the only "final" dense layer of the MLP.
        fc_start: Some(2),
        initializer,
        n_classes: 8,
    }
}

pub fn scnn_mini(dropout: f64, initializer: Initializer) -> ArchSpec {
    let conv = |filters| LayerSpec::Conv2D {
        filters,
        kernel: 3,
        bias: true,
    };
    let mut dense_block = vec![
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 64, bias: true },
        LayerSpec::FeatureNorm,
        LayerSpec::ReLU,
    ];
    if dropout > 0.0 {
        dense_block.push(LayerSpec::Dropout { rate: dropout });
    }
    ArchSpec {
        name: ArchName::ScnnMini.as_str().into(),
        input_shape: vec![3, 16, 16],
        blocks: vec![
            vec![conv(8), LayerSpec::FeatureNorm, LayerSpec::ReLU, LayerSpec::MaxPool2D { size: 2 }],
            vec![conv(16), LayerSpec::FeatureNorm, LayerSpec::ReLU, LayerSpec::MaxPool2D { size: 2 }],
            dense_block,
            vec![LayerSpec::Dense { units: 8, bias: true }],
        ],
        k_blocks: 2,
        fc_start: Some(2),
        initializer,
        n_classes: 8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Network;
    use crate::numerics::RngStream;

    #[test]
    fn mlp_layout() {
        let net = Network::build(&mlp_synth(Initializer::HeNormal), &RngStream::root(0)).unwrap();
        assert_eq!(net.params().dim(), 128 * 32 + 32 + 32 * 32 + 32 + 32 * 8 + 8);
        assert_eq!(net.k_blocks(), 3);
        assert_eq!(net.num_blocks(), 3);
    }

    #[test]
    fn scnn_layout() {
        let net = Network::build(&scnn_mini(0.25, Initializer::XavierUniform), &RngStream::root(0)).unwrap();
        assert_eq!(net.k_blocks(), 2);
        // conv fan-in is kernel_h * kernel_w * in_channels
        assert_eq!(net.params().segment(0).fan_in, 27);
        assert_eq!(net.params().segment(2).fan_in, 72);
        let x = crate::numerics::Tensor::zeros(&[2, 3, 16, 16]);
        assert_eq!(net.predict(&x).unwrap().shape(), &[2, 8]);
    }

    #[test]
    fn names_roundtrip() {
        for n in [ArchName::MlpSynth, ArchName::ScnnMini] {
            assert_eq!(ArchName::parse(n.as_str()), Some(n));
        }
        assert_eq!(ArchName::parse("vgg16"), None);
    }
}
