//! A fitted map of any supported class, stored as one JSON record.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvxgrad::ConvexGradientMap;
use crate::kernelmap::KernelModel;
use crate::measure::PointMap;
use crate::nnmap::NeuralMap;
use crate::quantile1d::OneDMap;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "camelCase")]
pub enum MapModel {
    Identity { dim: usize },
    OneD(OneDMap),
    ConvexGradient(ConvexGradientMap),
    Kernel(KernelModel),
    Neural(NeuralMap),
}

impl MapModel {
    pub fn name(&self) -> &'static str {
        match self {
            MapModel::Identity { .. } => "identity",
            MapModel::OneD(_) => "oneD",
            MapModel::ConvexGradient(_) => "convexGradient",
            MapModel::Kernel(_) => "kernel",
            MapModel::Neural(_) => "neural",
        }
    }

    /// Input dimension, when the model fixes one.
    pub fn in_dim(&self) -> Option<usize> {
        match self {
            MapModel::Identity { dim } => Some(*dim),
            MapModel::OneD(_) => Some(1),
            MapModel::ConvexGradient(m) => Some(m.witness.dim()),
            MapModel::Kernel(m) => m.centers().first().map(|c| c.len()),
            MapModel::Neural(m) => Some(m.in_dim()),
        }
    }

    /// Evaluates every point, in parallel, keeping input order.
    pub fn eval_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter()
            .enumerate()
            .map(|(index, x)| {
                self.eval(x).map_err(|e| Error::MapEvaluation {
                    index,
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

impl PointMap for MapModel {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.in_dim() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "model input",
                    expected: d,
                    found: x.len(),
                });
            }
        }
        match self {
            MapModel::Identity { .. } => Ok(x.to_vec()),
            MapModel::OneD(m) => m.eval(x),
            MapModel::ConvexGradient(m) => m.eval(x),
            MapModel::Kernel(m) => m.eval(x),
            MapModel::Neural(m) => m.eval(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvxgrad::{Partition, SmoothnessParams, TaylorWitness};
    use crate::kernelmap::KernelSpec;
    use crate::nnmap::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_trip(m: &MapModel) -> MapModel {
        let mut buf = Vec::new();
        m.to_json_writer(&mut buf).unwrap();
        MapModel::from_json_reader(&buf[..]).unwrap()
    }

    #[test]
    fn every_variant_survives_json() {
        let prm = SmoothnessParams::new(0.5, 2.0).unwrap();
        let witness = TaylorWitness::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![0.0, 0.5],
            prm,
            Partition::single(2),
        )
        .unwrap();
        let mut nn = NeuralMap::mlp(2, &[3], 2, Activation::Tanh, Some(0.5), true).unwrap();
        nn.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        let kernel = KernelModel::new(KernelSpec::GaussianScalar { sigma2: 0.5 }, 0.01, None, vec![vec![0.0, 1.0]], 2).unwrap();
        let models = [
            MapModel::Identity { dim: 3 },
            MapModel::OneD(OneDMap::new(&[0.0, 1.0], &[0.0, 2.0], 0.0, 2.0).unwrap()),
            MapModel::ConvexGradient(ConvexGradientMap::new(witness)),
            MapModel::Kernel(kernel),
            MapModel::Neural(nn),
        ];
        let probe = [vec![0.3, -0.2, 0.9], vec![0.4], vec![0.2, 0.1], vec![0.2, 0.1], vec![0.2, 0.1]];
        for (m, x) in models.iter().zip(&probe) {
            let back = round_trip(m);
            assert_eq!(&back, m, "{}", m.name());
            assert_eq!(back.eval(x).unwrap(), m.eval(x).unwrap());
        }
    }

    #[test]
    fn identity_returns_its_input_and_checks_width() {
        let m = MapModel::Identity { dim: 3 };
        let xs = vec![vec![0.1, 0.2, 0.3], vec![1.0, 0.0, 0.5]];
        assert_eq!(m.eval_many(&xs).unwrap(), xs);
        assert!(m.eval(&[0.1]).is_err());
        let err = m.eval_many(&[vec![0.0; 3], vec![0.0; 2]]).unwrap_err();
        assert!(matches!(err, Error::MapEvaluation { index: 1, .. }));
    }
}
