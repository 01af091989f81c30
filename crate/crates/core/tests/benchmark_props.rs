use std::f64::consts::PI;

use evoagent::benchmarks::{
    make_instance, make_instance_with, Genome, ProblemInstance, ProblemKind,
};
use proptest::prelude::*;

// Straight transcriptions of the three objective functions, written against
// the public accessors only.
fn oracle(inst: &ProblemInstance, x: &[f64]) -> f64 {
    let d = inst.dim();
    let raw = match inst.kind() {
        ProblemKind::ShiftedSphere => {
            let o = inst.shift().unwrap();
            let mut s = 0.0;
            for i in 0..d {
                s += (x[i] - o[i]).powi(2);
            }
            s
        }
        ProblemKind::ShiftedRotatedRastrigin => {
            let o = inst.shift().unwrap();
            let m = inst.rotation().unwrap();
            let mut s = 0.0;
            for i in 0..d {
                let mut z = 0.0;
                for j in 0..d {
                    z += m.get(i, j) * (x[j] - o[j]);
                }
                s += z * z - 10.0 * (2.0 * PI * z).cos() + 10.0;
            }
            s
        }
        ProblemKind::Schwefel213 => {
            let (a, b) = inst.coefficients().unwrap();
            let alpha = inst.alpha().unwrap();
            let mut s = 0.0;
            for i in 0..d {
                let mut big_a = 0.0;
                let mut big_b = 0.0;
                for j in 0..d {
                    let (aij, bij) = (a.get(i, j) as f64, b.get(i, j) as f64);
                    big_a += aij * alpha[j].sin() + bij * alpha[j].cos();
                    big_b += aij * x[j].sin() + bij * x[j].cos();
                }
                s += (big_a - big_b).powi(2);
            }
            s
        }
    };
    raw + inst.f_bias()
}

fn kind() -> impl Strategy<Value = ProblemKind> {
    prop::sample::select(ProblemKind::ALL.to_vec())
}

fn point(kind: ProblemKind, dim: usize) -> impl Strategy<Value = Vec<f64>> {
    let b = kind.bound();
    prop::collection::vec(-b..=b, dim)
}

fn instance_and_point() -> impl Strategy<Value = (ProblemInstance, Vec<f64>)> {
    (kind(), 1usize..=3, any::<u64>()).prop_flat_map(|(k, d, seed)| {
        let inst = make_instance(k, d, seed).unwrap();
        (Just(inst), point(k, d))
    })
}

proptest! {
    #[test]
    fn matches_transcribed_formula((inst, x) in instance_and_point()) {
        let got = inst.evaluate(&Genome(x.clone())).unwrap();
        let want = oracle(&inst, &x);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn never_below_bias((inst, x) in instance_and_point()) {
        let f = inst.evaluate(&Genome(x)).unwrap();
        prop_assert!(f >= inst.f_bias() - 1e-9);
    }

    #[test]
    fn optimum_is_bias(k in kind(), d in 1usize..=12, seed in any::<u64>()) {
        let inst = make_instance(k, d, seed).unwrap();
        let opt = inst.optimum();
        prop_assert!(inst.contains(&opt));
        prop_assert!((inst.evaluate(&opt).unwrap() - inst.f_bias()).abs() < 1e-9);
    }

    #[test]
    fn sphere_depends_only_on_offset(d in 1usize..=6, seed in any::<u64>(), off in prop::collection::vec(-10.0f64..10.0, 6)) {
        let inst = make_instance(ProblemKind::ShiftedSphere, d, seed).unwrap();
        let o = inst.shift().unwrap();
        let x: Vec<f64> = o.iter().zip(&off).map(|(a, b)| a + b).collect();
        let expect: f64 = off[..d].iter().map(|v| v * v).sum::<f64>() - 450.0;
        prop_assert!((inst.evaluate(&Genome(x)).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn rotation_is_orthogonal(d in 1usize..=30, seed in any::<u64>()) {
        let inst = make_instance(ProblemKind::ShiftedRotatedRastrigin, d, seed).unwrap();
        prop_assert!(inst.rotation().unwrap().orthogonality_error() < 1e-12);
    }

    #[test]
    fn text_round_trip(k in kind(), d in 1usize..=8, seed in any::<u64>()) {
        let inst = make_instance(k, d, seed).unwrap();
        let back = ProblemInstance::import_text(&inst.export_text()).unwrap();
        prop_assert_eq!(back, inst);
    }
}

#[test]
fn unrotated_rastrigin_is_separable() {
    let inst = make_instance_with(ProblemKind::ShiftedRotatedRastrigin, 2, 9, Some(false)).unwrap();
    let o = inst.shift().unwrap().to_vec();
    // one unit off in the first coordinate: 1 - 10 cos(2 pi) + 10 = 1
    let x = Genome(vec![o[0] + 1.0, o[1]]);
    assert!((inst.evaluate(&x).unwrap() - (-329.0)).abs() < 1e-9);
}

#[test]
fn same_seed_same_instance() {
    for k in ProblemKind::ALL {
        assert_eq!(
            make_instance(k, 5, 77).unwrap(),
            make_instance(k, 5, 77).unwrap()
        );
        assert_ne!(
            make_instance(k, 5, 77).unwrap(),
            make_instance(k, 5, 78).unwrap()
        );
    }
}
