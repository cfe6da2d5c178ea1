use rand::Rng;

use super::matrix::{dot, elu, elu_grad_from_output, leaky_relu, softmax, Matrix};

/// Single-head graph attention layer over a complete graph with self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    /// `d_in × d_out`
    pub weight: Matrix,
    /// `1 × 2·d_out`: source half then neighbour half.
    pub attention: Matrix,
    pub slope: f64,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatCache {
    pub input: Matrix,
    pub projected: Matrix,
    /// Pre-activation attention logits `e_ij`, row-major `n × n`.
    pub logits: Matrix,
    /// Attention coefficients `α_ij`, rows sum to one.
    pub alpha: Matrix,
    pub output: Matrix,
}

impl GatLayer {
    pub fn new(d_in: usize, d_out: usize, slope: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: Matrix::xavier(d_in, d_out, rng),
            attention: Matrix::xavier(1, 2 * d_out, rng),
            slope,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, input: &Matrix) -> GatCache {
        assert_eq!(input.cols(), self.d_in(), "GAT input dimension");
        let n = input.rows();
        let d = self.d_out();
        let projected = input.matmul(&self.weight);
        let (a_src, a_dst) = self.attention.data().split_at(d);
        let src: Vec<f64> = (0..n).map(|i| dot(projected.row(i), a_src)).collect();
        let dst: Vec<f64> = (0..n).map(|j| dot(projected.row(j), a_dst)).collect();

        let mut logits = Matrix::zeros(n, n);
        let mut alpha = Matrix::zeros(n, n);
        for i in 0..n {
            let row: Vec<f64> = dst.iter().map(|s2| src[i] + s2).collect();
            logits.row_mut(i).copy_from_slice(&row);
            let activated: Vec<f64> = row.iter().map(|&e| leaky_relu(e, self.slope)).collect();
            alpha.row_mut(i).copy_from_slice(&softmax(&activated));
        }
        let mut output = alpha.matmul(&projected);
        output.data_mut().iter_mut().for_each(|x| *x = elu(*x));
        GatCache {
            input: input.clone(),
            projected,
            logits,
            alpha,
            output,
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: &GatCache, d_output: &Matrix, grad: &mut GatLayer) -> Matrix {
        let n = cache.input.rows();
        let d = self.d_out();
        let mut d_mix = d_output.clone();
        for (g, &y) in d_mix.data_mut().iter_mut().zip(cache.output.data()) {
            *g *= elu_grad_from_output(y);
        }
        // output = alpha · Z
        let d_alpha = d_mix.matmul_t(&cache.projected);
        let mut d_projected = Matrix::zeros(n, d);
        cache.alpha.t_matmul_into(&d_mix, &mut d_projected);

        let mut d_src = vec![0.0; n];
        let mut d_dst = vec![0.0; n];
        for i in 0..n {
            let a = cache.alpha.row(i);
            let da = d_alpha.row(i);
            let inner = dot(a, da);
            for j in 0..n {
                let d_act = a[j] * (da[j] - inner);
                let d_e = if cache.logits.get(i, j) > 0.0 {
                    d_act
                } else {
                    d_act * self.slope
                };
                d_src[i] += d_e;
                d_dst[j] += d_e;
            }
        }

        let (a_src, a_dst) = self.attention.data().split_at(d);
        let g_att = grad.attention.data_mut();
        for k in 0..n {
            let z = cache.projected.row(k);
            for c in 0..d {
                g_att[c] += d_src[k] * z[c];
                g_att[d + c] += d_dst[k] * z[c];
            }
            let dz = d_projected.row_mut(k);
            for c in 0..d {
                dz[c] += d_src[k] * a_src[c] + d_dst[k] * a_dst[c];
            }
        }
        cache.input.t_matmul_into(&d_projected, &mut grad.weight);
        d_projected.matmul_t(&self.weight)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.d_in(), self.d_out()),
            attention: Matrix::zeros(1, 2 * self.d_out()),
            slope: self.slope,
        }
    }
}

/// Global attention readout `o = Σ softmax(gate(x_n)) · transform(x_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAttentionPool {
    /// `d × 1`
    pub gate_weight: Matrix,
    /// `1 × 1`
    pub gate_bias: Matrix,
    /// `d × d`
    pub feature_weight: Matrix,
    /// `1 × d`
    pub feature_bias: Matrix,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub input: Matrix,
    pub gate: Vec<f64>,
    pub transformed: Matrix,
    pub output: Vec<f64>,
}

impl GlobalAttentionPool {
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            gate_weight: Matrix::xavier(d, 1, rng),
            gate_bias: Matrix::zeros(1, 1),
            feature_weight: Matrix::xavier(d, d, rng),
            feature_bias: Matrix::zeros(1, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_weight.rows()
    }

    pub fn forward(&self, input: &Matrix) -> PoolCache {
        assert!(input.rows() > 0, "pooling an empty graph");
        let mut logits = input.matmul(&self.gate_weight);
        logits.add_row(&self.gate_bias);
        let gate = softmax(logits.data());
        let mut transformed = input.matmul(&self.feature_weight);
        transformed.add_row(&self.feature_bias);
        let mut output = vec![0.0; self.dim()];
        for (n, &w) in gate.iter().enumerate() {
            for (o, &t) in output.iter_mut().zip(transformed.row(n)) {
                *o += w * t;
            }
        }
        PoolCache {
            input: input.clone(),
            gate,
            transformed,
            output,
        }
    }

    pub fn backward(&self, cache: &PoolCache, d_output: &[f64], grad: &mut GlobalAttentionPool) -> Matrix {
        let n = cache.input.rows();
        let d = self.dim();
        let d_gate: Vec<f64> = (0..n).map(|k| dot(d_output, cache.transformed.row(k))).collect();
        let inner = dot(&cache.gate, &d_gate);
        let d_logit = Matrix::from_vec(
            n,
            1,
            cache.gate.iter().zip(&d_gate).map(|(w, g)| w * (g - inner)).collect(),
        );
        let mut d_transformed = Matrix::zeros(n, d);
        for (k, &w) in cache.gate.iter().enumerate() {
            for (t, &g) in d_transformed.row_mut(k).iter_mut().zip(d_output) {
                *t = w * g;
            }
        }
        cache.input.t_matmul_into(&d_logit, &mut grad.gate_weight);
        d_logit.sum_rows_into(&mut grad.gate_bias);
        cache.input.t_matmul_into(&d_transformed, &mut grad.feature_weight);
        d_transformed.sum_rows_into(&mut grad.feature_bias);

        let mut d_input = d_transformed.matmul_t(&self.feature_weight);
        let gw = self.gate_weight.data();
        for k in 0..n {
            let dl = d_logit.get(k, 0);
            for (x, &w) in d_input.row_mut(k).iter_mut().zip(gw) {
                *x += dl * w;
            }
        }
        d_input
    }

    pub fn zeros_like(&self) -> Self {
        let d = self.dim();
        Self {
            gate_weight: Matrix::zeros(d, 1),
            gate_bias: Matrix::zeros(1, 1),
            feature_weight: Matrix::zeros(d, d),
            feature_bias: Matrix::zeros(1, d),
        }
    }
}

/// Affine map followed by optional ELU, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub elu: bool,
}

impl Dense {
    pub fn new(d_in: usize, d_out: usize, elu: bool, rng: &mut impl Rng) -> Self {
        Self {
            weight: Matrix::xavier(d_in, d_out, rng),
            bias: Matrix::zeros(1, d_out),
            elu,
        }
    }

    pub fn forward(&self, input: &Matrix) -> Matrix {
        let mut out = input.matmul(&self.weight);
        out.add_row(&self.bias);
        if self.elu {
            out.data_mut().iter_mut().for_each(|x| *x = elu(*x));
        }
        out
    }

    pub fn backward(&self, input: &Matrix, output: &Matrix, d_output: &Matrix, grad: &mut Dense) -> Matrix {
        let mut d_pre = d_output.clone();
        if self.elu {
            for (g, &y) in d_pre.data_mut().iter_mut().zip(output.data()) {
                *g *= elu_grad_from_output(y);
            }
        }
        input.t_matmul_into(&d_pre, &mut grad.weight);
        d_pre.sum_rows_into(&mut grad.bias);
        d_pre.matmul_t(&self.weight)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Matrix::zeros(1, self.bias.cols()),
            elu: self.elu,
        }
    }
}

/// `p = softmax(MLP(W o + b))` with a one-hidden-layer ELU MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct VeracityHead {
    pub projection: Dense,
    pub hidden: Dense,
    pub output: Dense,
}

impl VeracityHead {
    pub fn new(d: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            projection: Dense::new(d, hidden, false, rng),
            hidden: Dense::new(hidden, hidden, true, rng),
            output: Dense::new(hidden, classes, false, rng),
        }
    }

    /// Zero the final layer so every input maps to uniform logits.
    pub fn zero_output(&mut self) {
        self.output.weight.fill(0.0);
        self.output.bias.fill(0.0);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projection: self.projection.zeros_like(),
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }
}

/// Per-node evidence logit: affine + ELU, then affine to one output.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceHead {
    pub hidden: Dense,
    pub output: Dense,
}

impl EvidenceHead {
    pub fn new(d: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Dense::new(d, hidden, true, rng),
            output: Dense::new(hidden, 1, false, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Naive per-pair loops, kept apart from the matrix code path.
    fn gat_oracle(layer: &GatLayer, x: &Matrix) -> Vec<Vec<f64>> {
        let n = x.rows();
        let (din, dout) = (layer.d_in(), layer.d_out());
        let mut wx = vec![vec![0.0; dout]; n];
        for i in 0..n {
            for o in 0..dout {
                for k in 0..din {
                    wx[i][o] += x.get(i, k) * layer.weight.get(k, o);
                }
            }
        }
        let a = layer.attention.data();
        let mut out = vec![vec![0.0; dout]; n];
        for i in 0..n {
            let mut e = vec![0.0; n];
            for j in 0..n {
                let mut s = 0.0;
                for o in 0..dout {
                    s += a[o] * wx[i][o] + a[dout + o] * wx[j][o];
                }
                e[j] = if s > 0.0 { s } else { layer.slope * s };
            }
            let m = e.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = e.iter().map(|v| (v - m).exp()).sum();
            for j in 0..n {
                let alpha = (e[j] - m).exp() / z;
                for o in 0..dout {
                    out[i][o] += alpha * wx[j][o];
                }
            }
            for v in out[i].iter_mut() {
                *v = if *v > 0.0 { *v } else { v.exp() - 1.0 };
            }
        }
        out
    }

    #[test]
    fn gat_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 3, 7] {
            let layer = GatLayer::new(6, 4, 0.2, &mut rng);
            let x = random(n, 6, &mut rng);
            let cache = layer.forward(&x);
            let expect = gat_oracle(&layer, &x);
            for i in 0..n {
                for o in 0..4 {
                    assert!((cache.output.get(i, o) - expect[i][o]).abs() < 1e-12);
                }
                assert!((cache.alpha.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GatLayer::new(3, 2, 0.2, &mut rng);
        let x = random(1, 3, &mut rng);
        let cache = layer.forward(&x);
        assert_eq!(cache.alpha.get(0, 0), 1.0);
        let wx = x.matmul(&layer.weight);
        for o in 0..2 {
            assert_eq!(cache.output.get(0, o), elu(wx.get(0, o)));
        }
    }

    #[test]
    fn identical_nodes_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = GatLayer::new(3, 5, 0.2, &mut rng);
        let row = [0.3, -0.7, 1.1];
        let x = Matrix::from_rows(&[&row, &row, &row]);
        let out = layer.forward(&x).output;
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(1), out.row(2));
    }

    #[test]
    fn pool_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool = GlobalAttentionPool::new(3, &mut rng);
        let x = random(1, 3, &mut rng);
        let c = pool.forward(&x);
        assert_eq!(c.gate, vec![1.0]);
        assert_eq!(c.output, c.transformed.row(0));

        let mut zero_gate = pool.clone();
        zero_gate.gate_weight.fill(0.0);
        let c = zero_gate.forward(&random(2, 3, &mut rng));
        assert_eq!(c.gate, vec![0.5, 0.5]);

        let x = random(4, 3, &mut rng);
        let c = pool.forward(&x);
        let g: Vec<f64> = (0..4)
            .map(|n| (0..3).map(|k| x.get(n, k) * pool.gate_weight.get(k, 0)).sum::<f64>())
            .collect();
        let z: f64 = g.iter().map(|v| v.exp()).sum();
        for o in 0..3 {
            let mut expect = 0.0;
            for n in 0..4 {
                let t: f64 = (0..3).map(|k| x.get(n, k) * pool.feature_weight.get(k, o)).sum();
                expect += g[n].exp() / z * t;
            }
            assert!((c.output[o] - expect).abs() < 1e-12);
        }
    }
}
