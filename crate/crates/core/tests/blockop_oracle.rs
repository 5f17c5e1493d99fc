mod common;

use bornwalk_core::blockop::{
    evolve, evolve_dense, random_hermitian, random_unit_vector, simplex_map, BlockHamiltonian, CVector, Dims,
    JointState,
};
use common::{expm_taylor, max_abs_diff};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_operator(dims: &Dims, seed: u64) -> BlockHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = (0..dims.n()).map(|_| random_hermitian(dims.m(), &mut rng)).collect();
    BlockHamiltonian::assemble(dims.clone(), blocks).unwrap()
}

#[test]
fn block_evolution_matches_taylor_exponential() {
    let dims = Dims::new(4, vec![1, 2, 1]).unwrap();
    let h = random_operator(&dims, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = random_unit_vector(dims.size(), &mut rng);
    let s = JointState::new(dims.clone(), v.clone()).unwrap();
    let t = 0.7;
    let ours = evolve(&h, &s, t).unwrap();
    let reference: CVector = expm_taylor(&h.to_dense(), t) * &v;
    let err = (ours.vector() - &reference).camax();
    assert!(err < 1e-9, "{err}");

    let dense = evolve_dense(&h.to_dense(), &v, t).unwrap();
    assert!((dense - reference).camax() < 1e-9);
}

#[test]
fn sector_weights_follow_the_dense_reference() {
    let dims = Dims::new(3, vec![2, 1, 1, 2]).unwrap();
    let h = random_operator(&dims, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = JointState::new(dims.clone(), random_unit_vector(dims.size(), &mut rng)).unwrap();
    let a0 = simplex_map(&s);
    for t in [0.3, 2.0, 9.0] {
        let v = expm_taylor(&h.to_dense(), t) * s.vector();
        let at = simplex_map(&JointState::normalized(dims.clone(), v).unwrap());
        assert!(max_abs_diff(a0.coords(), at.coords()) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evolution_preserves_norm_and_sector_weights(seed in any::<u64>(), t in -20.0..20.0f64) {
        let dims = Dims::new(3, vec![1, 3, 2]).unwrap();
        let h = random_operator(&dims, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let s = JointState::new(dims.clone(), random_unit_vector(dims.size(), &mut rng)).unwrap();
        let out = evolve(&h, &s, t).unwrap();
        prop_assert!((out.vector().norm() - 1.0).abs() < 1e-12);
        prop_assert!(max_abs_diff(simplex_map(&s).coords(), simplex_map(&out).coords()) < 1e-10);
    }
}
