use deco_tensor::{Checkpoint, Parameter, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn bytes_round_trip_bitwise(
        entries in prop::collection::vec(
            ("[a-z.]{1,12}", prop::collection::vec(1usize..4, 1..4), any::<u64>()),
            0..5,
        )
    ) {
        let mut ck = Checkpoint::new();
        for (name, shape, seed) in &entries {
            let n: usize = shape.iter().product();
            let vals: Vec<f64> = (0..n).map(|i| f64::from_bits(seed.wrapping_add(i as u64 * 0x9e37_79b9) >> 2)).collect();
            ck.insert(name.clone(), shape, vals);
        }
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn file_round_trip_restores_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let a = Parameter::new("layer.weight", Tensor::from_vec(vec![0.1, -0.2, 0.3, 1e-300], &[2, 2]).unwrap());
    let b = Parameter::new("layer.bias", Tensor::from_vec(vec![f64::MIN_POSITIVE, -0.0], &[2]).unwrap());
    Checkpoint::from_params(&[a.clone(), b.clone()]).save(&path).unwrap();

    let a2 = Parameter::new("layer.weight", Tensor::zeros(&[2, 2]));
    let b2 = Parameter::new("layer.bias", Tensor::zeros(&[2]));
    Checkpoint::load(&path).unwrap().load_into(&[a2.clone(), b2.clone()]).unwrap();
    assert_eq!(
        deco_tensor::fingerprint(&[a, b]),
        deco_tensor::fingerprint(&[a2, b2])
    );
}
