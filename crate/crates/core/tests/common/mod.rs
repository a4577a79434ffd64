#![allow(dead_code)]

use otassign::assign::RealSet;
use otassign::{Activation, CostSpec, DenseNet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// A random net with 1–3 layers of random widths.
pub fn random_net(rng: &mut ChaCha8Rng, din: usize, dout: usize, hidden: Activation, head: Activation) -> DenseNet {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![din];
    for _ in 1..depth {
        sizes.push(rng.random_range(2..7));
    }
    sizes.push(dout);
    let mut net = DenseNet::glorot(&sizes, hidden, head, rng).unwrap();
    // nonzero biases so the activations are exercised away from the origin
    let mut p = net.flat_params();
    for v in p.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    net.set_flat_params(&p).unwrap();
    net
}

/// Smallest |pre-activation| over every layer that has a kink at zero.
pub fn min_kink_distance(net: &DenseNet, x: &Tensor) -> f64 {
    let trace = net.forward_trace(x).unwrap();
    net.layers()
        .iter()
        .zip(&trace.pre_activations)
        .filter(|(l, _)| matches!(l.activation(), Activation::Relu | Activation::LeakyRelu))
        .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min)
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor).
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Central differences of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `mean_i min_j (c(x_i, y_j) + ψ(y_j)) − mean_j ψ(y_j)`, evaluated from
/// scratch, plus the argmin of every row.
pub fn empirical_dual(net: &DenseNet, xs: &Tensor, ys: &Tensor, spec: &CostSpec) -> (f64, Vec<usize>) {
    let psi = net.forward(ys).unwrap().into_data();
    let mut total = 0.0;
    let mut idx = Vec::new();
    for x in xs.row_iter() {
        let (mut best, mut arg) = (f64::INFINITY, 0);
        for (j, y) in ys.row_iter().enumerate() {
            let v = spec.cost(x, y).unwrap() + psi[j];
            if v < best {
                best = v;
                arg = j;
            }
        }
        total += best;
        idx.push(arg);
    }
    let mean_psi = psi.iter().sum::<f64>() / psi.len() as f64;
    (total / xs.rows() as f64 - mean_psi, idx)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum over all bijections of the mean matched cost.
pub fn brute_force(cost: &[f64], n: usize) -> f64 {
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Samples `k` points from each cell of the power diagram of `(ys, ψ)`, each
/// with a clear margin, so the induced assignment is balanced and unique.
pub fn points_in_cells(r: &mut ChaCha8Rng, reals: &RealSet, spec: &CostSpec, k: usize) -> Option<Tensor> {
    let m = reals.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut need = vec![k; m];
    for _ in 0..200_000 {
        let x = [r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)];
        let vals: Vec<f64> = reals
            .points()
            .row_iter()
            .zip(reals.psi())
            .map(|(y, p)| spec.cost(&x, y).unwrap() + p)
            .collect();
        let (j, best) = vals.iter().enumerate().fold((0, f64::INFINITY), |a, (j, &v)| if v < a.1 { (j, v) } else { a });
        let second = vals.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
        if need[j] > 0 && second - best > 1e-3 {
            need[j] -= 1;
            rows.push(x.to_vec());
        }
        if need.iter().all(|&c| c == 0) {
            return Some(Tensor::from_rows(&rows).unwrap());
        }
    }
    None
}
