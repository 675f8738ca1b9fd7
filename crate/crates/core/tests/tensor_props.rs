use hgt_core::tensor::{Axis, Matrix, Tape, Var};
use hgt_core::testkit::random_matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-3;
const TOL: f64 = 1e-6;

type Build = dyn Fn(&mut Tape<'static>, &[Var]) -> Var;

/// Scalar probe `sum(f(inputs) * R)` with a fixed random `R`.
fn probe(inputs: &[Matrix], f: &Build) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars);
    let (r, c) = tape.shape(out);
    let weights = tape.constant(random_matrix(&mut ChaCha8Rng::seed_from_u64(7), r, c, 1.0));
    let prod = tape.mul(out, weights).unwrap();
    let loss = tape.sum(prod);
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss).unwrap();
    let g = vars.iter().zip(inputs).map(|(v, m)| grads.wrt(*v).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))).collect();
    (value, g)
}

fn max_rel_err(inputs: &[Matrix], f: &Build) -> f64 {
    let (_, analytic) = probe(inputs, f);
    let mut worst: f64 = 0.0;
    for i in 0..inputs.len() {
        for j in 0..inputs[i].data().len() {
            let mut up = inputs.to_vec();
            up[i].data_mut()[j] += H;
            let mut down = inputs.to_vec();
            down[i].data_mut()[j] -= H;
            let n = (probe(&up, f).0 - probe(&down, f).0) / (2.0 * H);
            let a = analytic[i].data()[j];
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(FLOOR));
        }
    }
    worst
}

fn mats(seed: u64, shapes: &[(usize, usize)]) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes.iter().map(|&(r, c)| random_matrix(&mut rng, r, c, 2.0)).collect()
}

fn check(seed: u64, shapes: &[(usize, usize)], f: &Build) -> Result<(), TestCaseError> {
    let err = max_rel_err(&mats(seed, shapes), f);
    prop_assert!(err < TOL, "relative error {err}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grad_matmul(seed in any::<u64>(), n in 1usize..4, k in 1usize..4, m in 1usize..4) {
        check(seed, &[(n, k), (k, m)], &|t, v| t.matmul(v[0], v[1]).unwrap())?;
        check(seed, &[(n, k), (m, k)], &|t, v| t.matmul_nt(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn grad_elementwise(seed in any::<u64>(), n in 1usize..4, m in 1usize..4, c in -3.0f64..3.0) {
        check(seed, &[(n, m), (n, m)], &|t, v| t.add(v[0], v[1]).unwrap())?;
        check(seed, &[(n, m), (n, m)], &|t, v| t.mul(v[0], v[1]).unwrap())?;
        check(seed, &[(n, m), (1, m)], &|t, v| t.add_row(v[0], v[1]).unwrap())?;
        check(seed, &[(n, m)], &move |t, v| t.scale(v[0], c))?;
        check(seed, &[(n, m)], &|t, v| t.transpose(v[0]))?;
    }

    #[test]
    fn grad_relu(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let x = mats(seed, &[(n, m)]);
        prop_assume!(x[0].data().iter().all(|v| v.abs() > 10.0 * H));
        prop_assert!(max_rel_err(&x, &|t, v| t.relu(v[0])) < TOL);
    }

    #[test]
    fn grad_reductions(seed in any::<u64>(), n in 1usize..5, m in 1usize..4, mask in proptest::collection::vec(any::<bool>(), 5)) {
        let mut mask = mask[..n].to_vec();
        mask[0] = true;
        check(seed, &[(n, m)], &|t, v| t.sum(v[0]))?;
        check(seed, &[(n, m)], &|t, v| t.mean(v[0], Axis::Rows))?;
        check(seed, &[(n, m)], &|t, v| t.mean(v[0], Axis::Cols))?;
        check(seed, &[(n, m)], &move |t, v| t.masked_mean_rows(v[0], &mask).unwrap())?;
    }

    #[test]
    fn grad_shape_ops(seed in any::<u64>(), n in 1usize..4, m in 2usize..5) {
        check(seed, &[(n, m), (n, 2)], &|t, v| t.concat(&[v[0], v[1]], Axis::Cols).unwrap())?;
        check(seed, &[(n, m), (2, m)], &|t, v| t.concat(&[v[0], v[1]], Axis::Rows).unwrap())?;
        check(seed, &[(n, m)], &move |t, v| t.slice_cols(v[0], 1, m - 1).unwrap())?;
        check(seed, &[(n, m)], &move |t, v| t.reshape(v[0], 1, n * m).unwrap())?;
    }

    #[test]
    fn grad_embedding_lookup(seed in any::<u64>(), ids in proptest::collection::vec(proptest::option::of(0usize..4), 1..6)) {
        check(seed, &[(4, 3)], &move |t, v| t.embedding_lookup(v[0], &ids).unwrap())?;
    }

    #[test]
    fn grad_layer_norm(seed in any::<u64>(), n in 1usize..4, m in 2usize..6) {
        check(seed, &[(n, m), (1, m), (1, m)], &|t, v| t.layer_norm(v[0], v[1], v[2]).unwrap())?;
    }

    #[test]
    fn grad_masked_softmax(seed in any::<u64>(), n in 1usize..4, mask in proptest::collection::vec(any::<bool>(), 5)) {
        let mut mask = mask;
        mask[seed as usize % 5] = true;
        check(seed, &[(n, 5)], &move |t, v| t.masked_softmax(v[0], &mask).unwrap())?;
    }

    #[test]
    fn grad_dropout_with_fixed_mask(seed in any::<u64>(), n in 1usize..4, m in 1usize..4, rate in 0.0f64..0.9) {
        check(seed, &[(n, m)], &move |t, v| t.dropout(v[0], rate, true, seed).unwrap())?;
    }

    #[test]
    fn grad_cross_entropy(seed in any::<u64>(), m in 1usize..6, target in 0usize..6) {
        let target = target % m;
        check(seed, &[(1, m)], &move |t, v| t.cross_entropy_logits(v[0], target).unwrap())?;
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), n in 1usize..5, mask in proptest::collection::vec(any::<bool>(), 6)) {
        let mut mask = mask;
        mask[0] = true;
        let mut tape = Tape::new();
        let x = tape.leaf(mats(seed, &[(n, 6)]).remove(0));
        let p = tape.masked_softmax(x, &mask).unwrap();
        for i in 0..n {
            let row = tape.value(p).row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &keep) in mask.iter().enumerate() {
                prop_assert!(row[j] >= 0.0);
                if !keep {
                    prop_assert_eq!(row[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn layer_norm_rows_standardized(seed in any::<u64>(), n in 1usize..4, m in 4usize..10) {
        let mut tape = Tape::new();
        let x = tape.leaf(mats(seed, &[(n, m)]).remove(0));
        let g = tape.constant(Matrix::filled(1, m, 1.0));
        let b = tape.constant(Matrix::zeros(1, m));
        let y = tape.layer_norm(x, g, b).unwrap();
        for i in 0..n {
            let row = tape.value(y).row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            prop_assert!(mean.abs() < 1e-12);
            // eps in the denominator keeps the variance slightly below 1.
            prop_assert!((var - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn dropout_keeps_expectation() {
    let n = 20_000;
    let mut tape = Tape::new();
    let x = tape.leaf(Matrix::filled(1, n, 1.0));
    let y = tape.dropout(x, 0.2, true, 11).unwrap();
    let v = tape.value(y).data();
    let zeros = v.iter().filter(|&&a| a == 0.0).count() as f64 / n as f64;
    let mean = v.iter().sum::<f64>() / n as f64;
    // Binomial standard error at n = 20000 is about 0.003.
    assert!((zeros - 0.2).abs() < 0.015, "drop fraction {zeros}");
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    assert!(v.iter().all(|&a| a == 0.0 || (a - 1.25).abs() < 1e-12));
}
