//! Dataset and checkpoint files on disk.

use std::fs;

use gola::pdedata;
use gola::persist::{self, Checkpoint, PersistError};
use gola_core::data::PdeKind;
use gola_core::model::{Model, ModelConfig, ModelKind};
use gola_core::data::{Dataset, DatasetMeta, FieldPair};
use gola_core::train::Normalizer;
use proptest::prelude::*;

fn dataset() -> gola_core::data::Dataset {
    pdedata::generate(PdeKind::Darcy, 17, 2, 5, 1).unwrap()
}

#[test]
fn dataset_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.gola");
    let ds = dataset();
    persist::save_dataset(&path, &ds).unwrap();
    let back = persist::load_dataset(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in ds.pairs.iter().zip(&back.pairs) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.f_grid), bits(&b.f_grid));
        assert_eq!(bits(&a.u_grid), bits(&b.u_grid));
    }
    assert_eq!(back, ds);
    // saving the reloaded dataset reproduces the file byte for byte
    let again = dir.path().join("e.gola");
    persist::save_dataset(&again, &back).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn payload_is_little_endian_f32_after_the_metadata() {
    let bytes = persist::encode_dataset(&dataset()).unwrap();
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[16..16 + json_len]).unwrap();
    assert_eq!(meta["meta"]["pde_tag"], "darcy");
    assert_eq!(meta["meta"]["count"], 2);
    assert_eq!(meta["dtype"], "f32");
    assert_eq!(bytes.len() - 16 - json_len, 2 * 2 * 17 * 17 * 4);
    let first = f32::from_le_bytes(bytes[16 + json_len..20 + json_len].try_into().unwrap());
    assert_eq!(first as f64, dataset().pairs[0].f_grid[0]);
}

/// Rewrites the metadata block through `edit`.
fn with_meta(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut meta: serde_json::Value = serde_json::from_slice(&bytes[16..16 + json_len]).unwrap();
    edit(&mut meta);
    let json = serde_json::to_vec(&meta).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[16 + json_len..]);
    out
}

#[test]
fn corrupted_files_fail_with_distinct_codes() {
    let good = persist::encode_dataset(&dataset()).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"GOLB");
    let e1 = persist::decode_dataset(&bad_magic).unwrap_err();
    assert!(matches!(e1, PersistError::BadMagic(_)));
    assert!(e1.to_string().contains("bad magic"));

    let mut bad_version = good.clone();
    bad_version[4..8].copy_from_slice(&7u32.to_le_bytes());
    let e2 = persist::decode_dataset(&bad_version).unwrap_err();
    assert!(matches!(e2, PersistError::VersionMismatch { found: 7, expected: 1 }));

    let count_mismatch = with_meta(&good, |m| m["meta"]["count"] = 3.into());
    let e3 = persist::decode_dataset(&count_mismatch).unwrap_err();
    assert!(matches!(e3, PersistError::Truncated(_)), "{e3}");

    let cut = persist::decode_dataset(&good[..good.len() - 1]).unwrap_err();
    assert!(matches!(cut, PersistError::Truncated(_)));

    let codes = [e1.code(), e2.code(), e3.code()];
    assert!(codes[0] != codes[1] && codes[1] != codes[2] && codes[0] != codes[2]);
}

#[test]
fn checkpoint_file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ModelConfig::default();
    cfg.gkn.channels = 4;
    cfg.gkn.kernel_width = 5;
    for kind in ModelKind::ALL {
        let ck = Checkpoint {
            model: Model::new(kind, &cfg, 1, 8).unwrap(),
            normalizer: Normalizer {
                f_mean: 0.1,
                f_std: 1.0 / 3.0,
                u_std: 2.5,
            },
            seed: 8,
        };
        let path = dir.path().join(format!("{kind}.ckpt"));
        persist::save_checkpoint(&path, &ck).unwrap();
        let back = persist::load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        for ((_, a), (_, b)) in ck.model.params.iter().zip(back.model.params.iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn checkpoint_with_wrong_parameter_set_is_rejected() {
    let model = Model::new(ModelKind::Gcn, &ModelConfig::default(), 1, 1).unwrap();
    let ck = Checkpoint {
        model,
        normalizer: Normalizer::identity(),
        seed: 1,
    };
    let bytes = persist::encode_checkpoint(&ck).unwrap();
    let edited = with_meta(&bytes, |m| m["meta"]["model_config"]["gcn"]["channels"] = 8.into());
    assert!(matches!(persist::decode_checkpoint(&edited), Err(PersistError::Metadata(_))));
}

/// A dataset of `count` pairs on a `res²` grid holding arbitrary finite
/// `f32` values.
fn arbitrary_dataset() -> impl Strategy<Value = Dataset> {
    (2usize..6, 1usize..4, any::<u64>()).prop_flat_map(|(res, count, seed)| {
        let field = prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), res * res);
        prop::collection::vec((field.clone(), field), count).prop_map(move |grids| Dataset {
            pde: PdeKind::ALL[(seed % 4) as usize],
            grid_res: res,
            pairs: grids
                .into_iter()
                .map(|(f, u)| FieldPair {
                    f_grid: f.into_iter().map(f64::from).collect(),
                    u_grid: u.into_iter().map(f64::from).collect(),
                })
                .collect(),
            meta: DatasetMeta {
                seed,
                pair_seeds: (0..count as u64).collect(),
                generator: Default::default(),
                target_std: seed as f64 / 7.0,
            },
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_f32_dataset_round_trips_bit_identically(ds in arbitrary_dataset()) {
        let back = persist::decode_dataset(&persist::encode_dataset(&ds).unwrap()).unwrap();
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            for (x, y) in a.f_grid.iter().chain(&a.u_grid).zip(b.f_grid.iter().chain(&b.u_grid)) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn every_truncation_is_an_error(ds in arbitrary_dataset(), cut in 0.0f64..1.0) {
        let bytes = persist::encode_dataset(&ds).unwrap();
        let len = (cut * bytes.len() as f64) as usize;
        let err = persist::decode_dataset(&bytes[..len]).unwrap_err();
        prop_assert!(err.code() >= 2, "{}", err);
    }
}
