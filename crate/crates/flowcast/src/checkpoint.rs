//! Versioned model container: network configuration, all weight matrices
//! (row-major), the normalization constants, and the activity alphabet in
//! index order. JSON keeps the file inspectable; f64 values survive the
//! round trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::NormConstants;
use crate::error::{Error, Result};
use crate::eventlog::ActivityIndex;
use crate::network::{NetworkConfig, NetworkParams};
use crate::prediction::Model;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: NetworkConfig,
    pub norm: NormConstants,
    /// Activity labels in index order; position i is one-hot feature i.
    pub alphabet: Vec<String>,
    pub params: NetworkParams,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            norm: model.norm.clone(),
            alphabet: model.index.labels().to_vec(),
            params: model.params.clone(),
        }
    }

    /// Validates dimensions and rebuilds the runnable model.
    pub fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion(self.format_version));
        }
        Model::new(
            self.config,
            self.params,
            self.norm,
            ActivityIndex::from_labels(self.alphabet),
        )
    }
}

pub fn save(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let json = serde_json::to_string(checkpoint)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|source| Error::ReadInput {
        path: path.display().to_string(),
        source,
    })?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::MalformedInput {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(checkpoint)
}

pub fn load_model(path: &Path) -> Result<Model> {
    load(path)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::CellKind;
    use proptest::prelude::*;

    fn checkpoint_for(seed: u64, cell_kind: CellKind) -> Checkpoint {
        let config = NetworkConfig {
            total_layers: 2,
            shared_layers: 1,
            neurons: 5,
            input_dim: 6,
            activity_out_dim: 4,
            cell_kind,
            seed,
        };
        let params = NetworkParams::init(&config).unwrap();
        Checkpoint {
            format_version: FORMAT_VERSION,
            config,
            norm: NormConstants::new(1234.5),
            alphabet: vec!["a".into(), "b".into(), "c".into()],
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        for kind in [CellKind::Lstm, CellKind::PlainRnn] {
            let original = checkpoint_for(9, kind);
            save(&original, &path).unwrap();
            let reloaded = load(&path).unwrap();
            assert_eq!(original, reloaded);
            for (a, b) in original
                .params
                .tensors()
                .iter()
                .zip(reloaded.params.tensors())
            {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut ckpt = checkpoint_for(1, CellKind::Lstm);
        ckpt.format_version = 99;
        assert!(matches!(
            ckpt.into_model(),
            Err(Error::CheckpointVersion(99))
        ));
    }

    #[test]
    fn alphabet_must_fit_dimensions() {
        let mut ckpt = checkpoint_for(2, CellKind::Lstm);
        ckpt.alphabet.push("extra".into());
        assert!(ckpt.into_model().is_err());
    }

    #[test]
    fn malformed_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{not json").unwrap();
        match load(&path) {
            Err(Error::MalformedInput { path: p, .. }) => assert!(p.contains("broken.json")),
            other => panic!("unexpected result {other:?}"),
        }
    }

    proptest! {
        // a modest number of cases keeps the suite quick; values include
        // extreme magnitudes to stress the float formatting
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn json_preserves_arbitrary_f64_weights(values in proptest::collection::vec(
            prop_oneof![
                any::<f64>().prop_filter("finite", |v| v.is_finite()),
                Just(1e-300), Just(-1e300), Just(f64::MIN_POSITIVE), Just(0.0),
            ], 1..8)) {
            let mut ckpt = checkpoint_for(3, CellKind::Lstm);
            for (slot, v) in ckpt.params.tensors_mut()[0].iter_mut().zip(values.iter()) {
                *slot = *v;
            }
            let json = serde_json::to_string(&ckpt).unwrap();
            let back: Checkpoint = serde_json::from_str(&json).unwrap();
            for (a, b) in ckpt.params.tensors()[0].iter().zip(back.params.tensors()[0].iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
