//! Point-wise classifier: a scan-global squeeze-excitation gate over the
//! input channels followed by a tanh MLP with `K` or `K + 1` outputs.
//!
//! Parameters live in one flat vector. Dense layers are stored in order
//! (gate squeeze, gate excite, hidden layers, output), each as a row-major
//! `out x in` weight block followed by its bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::PointFeatures;
use crate::cloud::LabelSet;
use crate::energy::{self, EnergyLossConfig, LogitField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input: usize,
    pub gate_hidden: usize,
    pub hidden: Vec<usize>,
    pub inlier_classes: usize,
    /// `inlier_classes`, or one more once the abstention column is added.
    pub outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Dense {
    fn weights(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    fn bias(self) -> std::ops::Range<usize> {
        let b = self.offset + self.rows * self.cols;
        b..b + self.rows
    }

    fn len(self) -> usize {
        self.rows * (self.cols + 1)
    }
}

impl Layout {
    pub fn new(input: usize, hidden: Vec<usize>, inlier_classes: usize) -> Result<Self> {
        if input == 0 || inlier_classes == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(Layout {
            input,
            gate_hidden: (input / 2).max(1),
            hidden,
            inlier_classes,
            outputs: inlier_classes,
        })
    }

    pub fn has_abstention(&self) -> bool {
        self.outputs == self.inlier_classes + 1
    }

    fn dense_layers(&self) -> Vec<Dense> {
        let mut shapes = vec![
            (self.gate_hidden, self.input),
            (self.input, self.gate_hidden),
        ];
        let mut prev = self.input;
        for &h in &self.hidden {
            shapes.push((h, prev));
            prev = h;
        }
        shapes.push((self.outputs, prev));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(rows, cols)| {
                let d = Dense { rows, cols, offset };
                offset += d.len();
                d
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.dense_layers().iter().map(|d| d.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.outputs != self.inlier_classes && !self.has_abstention() {
            return Err(Error::invalid(format!(
                "{} outputs for {} inlier classes",
                self.outputs, self.inlier_classes
            )));
        }
        if self.gate_hidden == 0 || self.input == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

/// Flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layout: Layout,
    pub theta: Vec<f64>,
    pub seed: u64,
}

impl ModelParams {
    /// Uniform initialization in `[-s, s]`, `s = 1 / sqrt(fan_in)`, for both
    /// weights and biases.
    pub fn init(layout: Layout, seed: u64) -> Result<Self> {
        layout.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(layout.param_count());
        for d in layout.dense_layers() {
            let s = 1.0 / (d.cols as f64).sqrt();
            for _ in 0..d.len() {
                theta.push(rng.random_range(-s..=s));
            }
        }
        Ok(ModelParams {
            layout,
            theta,
            seed,
        })
    }

    pub fn zeros(layout: Layout) -> Result<Self> {
        layout.validate()?;
        let n = layout.param_count();
        Ok(ModelParams {
            layout,
            theta: vec![0.0; n],
            seed: 0,
        })
    }

    pub fn from_theta(layout: Layout, theta: Vec<f64>, seed: u64) -> Result<Self> {
        layout.validate()?;
        if theta.len() != layout.param_count() {
            return Err(Error::invalid(format!(
                "{} parameters for a layout of {}",
                theta.len(),
                layout.param_count()
            )));
        }
        Ok(ModelParams {
            layout,
            theta,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    /// Appends a zero-initialized abstention column to the output layer. A
    /// model that already has one is returned unchanged.
    pub fn widen_abstention(&self) -> ModelParams {
        if self.layout.has_abstention() {
            return self.clone();
        }
        let old_out = *self.layout.dense_layers().last().unwrap();
        let mut layout = self.layout.clone();
        layout.outputs += 1;
        let mut theta = self.theta[..old_out.offset].to_vec();
        theta.extend_from_slice(&self.theta[old_out.weights()]);
        theta.extend(std::iter::repeat_n(0.0, old_out.cols));
        theta.extend_from_slice(&self.theta[old_out.bias()]);
        theta.push(0.0);
        ModelParams {
            layout,
            theta,
            seed: self.seed,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + b` for a dense block.
#[inline]
fn affine(theta: &[f64], d: Dense, x: &[f64], out: &mut [f64]) {
    let w = &theta[d.weights()];
    let b = &theta[d.bias()];
    for r in 0..d.rows {
        let row = &w[r * d.cols..(r + 1) * d.cols];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out[r] = acc;
    }
}

/// Accumulates `dW += delta x^T`, `db += delta` and, when requested, writes
/// `dx = W^T delta`.
#[inline]
fn affine_back(
    theta: &[f64],
    grad: &mut [f64],
    d: Dense,
    x: &[f64],
    delta: &[f64],
    dx: Option<&mut [f64]>,
) {
    {
        let gw = &mut grad[d.weights()];
        for r in 0..d.rows {
            let dr = delta[r];
            if dr == 0.0 {
                continue;
            }
            for (g, xi) in gw[r * d.cols..(r + 1) * d.cols].iter_mut().zip(x) {
                *g += dr * xi;
            }
        }
    }
    for (g, dr) in grad[d.bias()].iter_mut().zip(delta) {
        *g += dr;
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        let w = &theta[d.weights()];
        for r in 0..d.rows {
            let dr = delta[r];
            if dr == 0.0 {
                continue;
            }
            for (o, wi) in dx.iter_mut().zip(&w[r * d.cols..(r + 1) * d.cols]) {
                *o += dr * wi;
            }
        }
    }
}

/// Intermediate values of the channel gate for one scan.
#[derive(Debug, Clone)]
pub struct GateState {
    pub squeeze: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    pub gate: Vec<f64>,
}

fn check_features(features: &PointFeatures, params: &ModelParams) -> Result<()> {
    if features.width() != params.layout.input {
        return Err(Error::invalid(format!(
            "model expects {} input channels, features have {}",
            params.layout.input,
            features.width()
        )));
    }
    if params.theta.len() != params.layout.param_count() {
        return Err(Error::invalid("parameter vector does not match layout"));
    }
    Ok(())
}

fn gate_state(features: &PointFeatures, params: &ModelParams) -> GateState {
    let layers = params.layout.dense_layers();
    let f = params.layout.input;
    let mut squeeze = vec![0.0; f];
    for i in 0..features.rows() {
        for (s, v) in squeeze.iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    if features.rows() > 0 {
        squeeze
            .iter_mut()
            .for_each(|s| *s /= features.rows() as f64);
    }
    let mut pre_hidden = vec![0.0; layers[0].rows];
    affine(&params.theta, layers[0], &squeeze, &mut pre_hidden);
    let hidden: Vec<f64> = pre_hidden.iter().map(|&a| a.max(0.0)).collect();
    let mut gate = vec![0.0; f];
    affine(&params.theta, layers[1], &hidden, &mut gate);
    gate.iter_mut().for_each(|g| *g = sigmoid(*g));
    GateState {
        squeeze,
        pre_hidden,
        hidden,
        gate,
    }
}

/// Squeeze-excitation gating: per-channel scan mean, a rectified dense layer
/// to half width, a sigmoid dense layer back to full width, and the result
/// multiplied into every point's channels.
pub fn channel_gate(features: &PointFeatures, params: &ModelParams) -> Result<PointFeatures> {
    check_features(features, params)?;
    let g = gate_state(features, params);
    let mut values = Vec::with_capacity(features.values().len());
    for i in 0..features.rows() {
        values.extend(features.row(i).iter().zip(&g.gate).map(|(x, w)| x * w));
    }
    PointFeatures::from_rows(values, features.rows())
}

/// Reusable per-point activation buffers.
struct Workspace {
    gated: Vec<f64>,
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl Workspace {
    fn new(layout: &Layout) -> Self {
        Workspace {
            gated: vec![0.0; layout.input],
            acts: layout.hidden.iter().map(|&h| vec![0.0; h]).collect(),
            logits: vec![0.0; layout.outputs],
        }
    }
}

fn forward_point(theta: &[f64], layers: &[Dense], gate: &[f64], x: &[f64], ws: &mut Workspace) {
    for ((g, xi), w) in ws.gated.iter_mut().zip(x).zip(gate) {
        *g = xi * w;
    }
    let mlp = &layers[2..];
    let n_hidden = ws.acts.len();
    for l in 0..n_hidden {
        let (before, after) = ws.acts.split_at_mut(l);
        let input: &[f64] = if l == 0 { &ws.gated } else { &before[l - 1] };
        let out = &mut after[0];
        affine(theta, mlp[l], input, out);
        out.iter_mut().for_each(|v| *v = v.tanh());
    }
    let input: &[f64] = if n_hidden == 0 {
        &ws.gated
    } else {
        &ws.acts[n_hidden - 1]
    };
    affine(theta, mlp[n_hidden], input, &mut ws.logits);
}

/// Logits for every point of a scan.
pub fn forward(features: &PointFeatures, params: &ModelParams) -> Result<LogitField> {
    check_features(features, params)?;
    let layout = &params.layout;
    let layers = layout.dense_layers();
    let g = gate_state(features, params);
    let mut ws = Workspace::new(layout);
    let mut values = Vec::with_capacity(features.rows() * layout.outputs);
    for i in 0..features.rows() {
        forward_point(&params.theta, &layers, &g.gate, features.row(i), &mut ws);
        values.extend_from_slice(&ws.logits);
    }
    LogitField::new(
        values,
        features.rows(),
        layout.outputs,
        layout.inlier_classes,
    )
}

/// Total loss of one scan and its gradient with respect to every parameter.
///
/// The loss is the inlier NLL over all output columns plus `lambda` times
/// the hinge energy loss, matching [`energy::total_loss`] on the logits from
/// [`forward`].
pub fn loss_and_grad(
    features: &PointFeatures,
    params: &ModelParams,
    labels: &LabelSet,
    cfg: &EnergyLossConfig,
) -> Result<(f64, Vec<f64>)> {
    check_features(features, params)?;
    labels.check_len(features.rows())?;
    let layout = &params.layout;
    if labels.inlier_classes() as usize != layout.inlier_classes {
        return Err(Error::invalid(format!(
            "labels have {} inlier classes, model has {}",
            labels.inlier_classes(),
            layout.inlier_classes
        )));
    }
    let theta = &params.theta;
    let layers = layout.dense_layers();
    let mlp = &layers[2..];
    let n_hidden = layout.hidden.len();
    let gs = gate_state(features, params);

    let n_in = labels.inlier_count();
    let (w_in, w_out) = if cfg.use_count_weights {
        energy::count_weights(labels)
    } else {
        (1.0, 1.0)
    };
    let use_energy = cfg.lambda != 0.0;
    let k_energy = if cfg.include_abstention {
        layout.outputs
    } else {
        layout.inlier_classes
    };

    let mut grad = vec![0.0; theta.len()];
    let mut d_gate = vec![0.0; layout.input];
    let mut ws = Workspace::new(layout);
    let mut deltas: Vec<Vec<f64>> = layout.hidden.iter().map(|&h| vec![0.0; h]).collect();
    let mut d_logits = vec![0.0; layout.outputs];
    let mut probs = vec![0.0; layout.outputs];
    let mut d_gated = vec![0.0; layout.input];
    let (mut nll_sum, mut e_in, mut e_out) = (0.0, 0.0, 0.0);

    for i in 0..features.rows() {
        let x = features.row(i);
        forward_point(theta, &layers, &gs.gate, x, &mut ws);
        let z = &ws.logits;
        let outlier = labels.is_outlier(i);
        d_logits.iter_mut().for_each(|v| *v = 0.0);

        if !outlier {
            let y = labels.labels()[i] as usize - 1;
            nll_sum += energy::log_sum_exp(z) - z[y];
            energy::softmax_into(z, &mut probs);
            let scale = 1.0 / n_in as f64;
            for (d, p) in d_logits.iter_mut().zip(&probs) {
                *d += p * scale;
            }
            d_logits[y] -= scale;
        }
        if use_energy {
            let e = -energy::log_sum_exp(&z[..k_energy]);
            let de = if outlier {
                let h = (cfg.m_out - e).max(0.0);
                e_out += h * h;
                -2.0 * h / w_out
            } else {
                let h = (e - cfg.m_in).max(0.0);
                e_in += h * h;
                2.0 * h / w_in
            };
            if de != 0.0 {
                energy::softmax_into(&z[..k_energy], &mut probs[..k_energy]);
                for (d, p) in d_logits[..k_energy].iter_mut().zip(&probs[..k_energy]) {
                    *d -= cfg.lambda * de * p;
                }
            }
        }

        // Output layer, then hidden layers in reverse.
        {
            let input: &[f64] = if n_hidden == 0 {
                &ws.gated
            } else {
                &ws.acts[n_hidden - 1]
            };
            let dx = if n_hidden == 0 {
                Some(&mut d_gated[..])
            } else {
                Some(&mut deltas[n_hidden - 1][..])
            };
            affine_back(theta, &mut grad, mlp[n_hidden], input, &d_logits, dx);
        }
        for l in (0..n_hidden).rev() {
            for (d, a) in deltas[l].iter_mut().zip(&ws.acts[l]) {
                *d *= 1.0 - a * a;
            }
            let (lower, upper) = deltas.split_at_mut(l);
            let delta = &upper[0];
            if l == 0 {
                affine_back(
                    theta,
                    &mut grad,
                    mlp[0],
                    &ws.gated,
                    delta,
                    Some(&mut d_gated),
                );
            } else {
                affine_back(
                    theta,
                    &mut grad,
                    mlp[l],
                    &ws.acts[l - 1],
                    delta,
                    Some(&mut lower[l - 1]),
                );
            }
        }
        for ((dg, dxg), xi) in d_gate.iter_mut().zip(&d_gated).zip(x) {
            *dg += dxg * xi;
        }
    }

    // Gate: sigmoid excitation, rectified squeeze layer.
    let d_pre_gate: Vec<f64> = d_gate
        .iter()
        .zip(&gs.gate)
        .map(|(d, g)| d * g * (1.0 - g))
        .collect();
    let mut d_hidden = vec![0.0; layout.gate_hidden];
    affine_back(
        theta,
        &mut grad,
        layers[1],
        &gs.hidden,
        &d_pre_gate,
        Some(&mut d_hidden),
    );
    let d_pre_hidden: Vec<f64> = d_hidden
        .iter()
        .zip(&gs.pre_hidden)
        .map(|(d, a)| if *a > 0.0 { *d } else { 0.0 })
        .collect();
    affine_back(
        theta,
        &mut grad,
        layers[0],
        &gs.squeeze,
        &d_pre_hidden,
        None,
    );

    let nll = if n_in == 0 {
        0.0
    } else {
        nll_sum / n_in as f64
    };
    let loss = if use_energy {
        nll + cfg.lambda * (e_in / w_in + e_out / w_out)
    } else {
        nll
    };
    Ok((loss, grad))
}

/// Loss only, for finite-difference checks and monitoring.
pub fn loss(
    features: &PointFeatures,
    params: &ModelParams,
    labels: &LabelSet,
    cfg: &EnergyLossConfig,
) -> Result<f64> {
    let logits = forward(features, params)?;
    energy::total_loss(&logits, labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::features::FEATURE_WIDTH;

    fn random_features(n: usize, seed: u64) -> PointFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointFeatures::from_rows(
            (0..n * FEATURE_WIDTH)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn param_count_matches_layout() {
        let l = Layout::new(7, vec![64, 64], 2).unwrap();
        let expected = 3 * 8 + 7 * 4 + 64 * 8 + 64 * 65 + 2 * 65;
        assert_eq!(l.param_count(), expected);
        assert_eq!(ModelParams::init(l, 1).unwrap().len(), expected);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = ModelParams::zeros(Layout::new(7, vec![5, 4], 2).unwrap()).unwrap();
        let f = forward(&random_features(9, 1), &p).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gate_weights_halve_features() {
        let mut p = ModelParams::init(Layout::new(7, vec![4], 2).unwrap(), 5).unwrap();
        let excite = p.layout.dense_layers()[1];
        for i in excite.weights().chain(excite.bias()) {
            p.theta[i] = 0.0;
        }
        let f = random_features(6, 2);
        let g = channel_gate(&f, &p).unwrap();
        for (a, b) in g.values().iter().zip(f.values()) {
            assert_eq!(*a, b * 0.5);
        }
    }

    #[test]
    fn zero_features_gate_to_zero() {
        let p = ModelParams::init(Layout::new(7, vec![4], 2).unwrap(), 5).unwrap();
        let f = PointFeatures::from_rows(vec![0.0; 21], 3).unwrap();
        assert!(channel_gate(&f, &p)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn gate_matches_direct_formula() {
        let p = ModelParams::init(Layout::new(7, vec![4], 2).unwrap(), 9).unwrap();
        let f = random_features(11, 4);
        let gated = channel_gate(&f, &p).unwrap();
        // Re-derive from the flat layout: W1 (3x7), b1, W2 (7x3), b2.
        let t = &p.theta;
        let s: Vec<f64> = (0..7)
            .map(|c| (0..11).map(|i| f.row(i)[c]).sum::<f64>() / 11.0)
            .collect();
        let h: Vec<f64> = (0..3)
            .map(|r| (t[21 + r] + (0..7).map(|c| t[r * 7 + c] * s[c]).sum::<f64>()).max(0.0))
            .collect();
        let base = 24;
        let g: Vec<f64> = (0..7)
            .map(|r| {
                let a = t[base + 21 + r] + (0..3).map(|c| t[base + r * 3 + c] * h[c]).sum::<f64>();
                1.0 / (1.0 + (-a).exp())
            })
            .collect();
        for i in 0..11 {
            for c in 0..7 {
                assert!((gated.row(i)[c] - f.row(i)[c] * g[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identical_points_identical_logits() {
        let p = ModelParams::init(Layout::new(7, vec![6], 2).unwrap(), 3).unwrap();
        let row: Vec<f64> = (0..7).map(|v| v as f64 * 0.3).collect();
        let f = PointFeatures::from_rows(row.repeat(4), 4).unwrap();
        let l = forward(&f, &p).unwrap();
        for i in 1..4 {
            assert_eq!(l.row(i), l.row(0));
        }
    }

    #[test]
    fn widening_appends_zero_column() {
        let p = ModelParams::init(Layout::new(7, vec![5], 2).unwrap(), 3).unwrap();
        let w = p.widen_abstention();
        assert_eq!(w.layout.outputs, 3);
        assert_eq!(w.len(), p.len() + 6);
        let f = random_features(8, 6);
        let a = forward(&f, &p).unwrap();
        let b = forward(&f, &w).unwrap();
        for i in 0..8 {
            assert_eq!(&b.row(i)[..2], a.row(i));
            assert_eq!(b.row(i)[2], 0.0);
        }
        assert_eq!(w.widen_abstention(), w);
    }

    #[test]
    fn no_inliers_without_energy_is_flat() {
        let p = ModelParams::init(Layout::new(7, vec![5], 2).unwrap(), 3)
            .unwrap()
            .widen_abstention();
        let f = random_features(5, 1);
        let labels = LabelSet::new(vec![3; 5], 2).unwrap();
        let cfg = EnergyLossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let (l, g) = loss_and_grad(&f, &p, &labels, &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_agrees_with_energy_module() {
        let p = ModelParams::init(Layout::new(7, vec![5, 3], 2).unwrap(), 8)
            .unwrap()
            .widen_abstention();
        let f = random_features(20, 12);
        let labels = LabelSet::new((0..20).map(|i| [1, 2, 3][i % 3]).collect(), 2).unwrap();
        for weights in [true, false] {
            let cfg = EnergyLossConfig {
                use_count_weights: weights,
                m_in: -0.5,
                m_out: 0.5,
                ..Default::default()
            };
            let (l, _) = loss_and_grad(&f, &p, &labels, &cfg).unwrap();
            let r = loss(&f, &p, &labels, &cfg).unwrap();
            assert!((l - r).abs() < 1e-12 * r.abs().max(1.0), "{l} vs {r}");
        }
    }

    #[test]
    fn shape_errors() {
        let p = ModelParams::init(Layout::new(5, vec![3], 2).unwrap(), 1).unwrap();
        assert!(forward(&random_features(3, 1), &p).is_err());
        assert!(
            ModelParams::from_theta(Layout::new(5, vec![3], 2).unwrap(), vec![0.0; 3], 0).is_err()
        );
    }
}
