//! Plain supervised trainer for an encoder network feeding a complementary
//! log-log output, written with hand-derived gradients and its own Adam.
//! It shares only the initial parameters, batch order and noise draws with
//! the library trainer, so a matching loss trajectory checks that zero
//! penalty weights leave nothing but supervised training.

use rand::seq::SliceRandom;
use vie::autodiff::Tensor;
use vie::dataset::LabeledDataset;
use vie::flow::EncoderNoise;
use vie::nn::{rng_from_seed, split_seed};
use vie::trainer::{step_seed, Decoder, Encoder, TrainConfig, TrainedModel, STREAM_SHUFFLE};

const CLAMP: f64 = 30.0;
const FLOOR: f64 = 1e-6;

/// Fully connected ReLU stack; weights row-major `in × out`.
#[derive(Clone)]
struct Net {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Net {
    fn from_params(p: &[Tensor]) -> Net {
        let mut sizes = vec![p[0].shape()[0]];
        sizes.extend(p.iter().step_by(2).map(|w| w.shape()[1]));
        Net {
            w: p.iter().step_by(2).map(|t| t.data().to_vec()).collect(),
            b: p.iter().skip(1).step_by(2).map(|t| t.data().to_vec()).collect(),
            sizes,
        }
    }

    fn zero_grads(&self) -> Grads {
        Grads { w: self.w.iter().map(|w| vec![0.0; w.len()]).collect(), b: self.b.iter().map(|b| vec![0.0; b.len()]).collect() }
    }

    /// Activations of every layer for one input row, input first.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.w.len() - 1;
        for k in 0..self.w.len() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let a = &acts[k];
            let mut out = self.b[k].clone();
            for i in 0..n_in {
                for o in 0..n_out {
                    out[o] += a[i] * self.w[k][i * n_out + o];
                }
            }
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulates parameter gradients for one row; returns the input gradient.
    fn backward(&self, acts: &[Vec<f64>], grad_out: &[f64], g: &mut Grads) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        for k in (0..self.w.len()).rev() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            for o in 0..n_out {
                g.b[k][o] += delta[o];
            }
            let mut prev = vec![0.0; n_in];
            for i in 0..n_in {
                for o in 0..n_out {
                    g.w[k][i * n_out + o] += acts[k][i] * delta[o];
                    prev[i] += self.w[k][i * n_out + o] * delta[o];
                }
            }
            if k > 0 {
                for i in 0..n_in {
                    if acts[k][i] <= 0.0 {
                        prev[i] = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Log-likelihood of label `y` and its derivative in `h`.
fn cll(y: usize, h: f64) -> (f64, f64) {
    let inside = (-CLAMP..=CLAMP).contains(&h);
    let e = h.clamp(-CLAMP, CLAMP).exp();
    let (ll, d) = if y == 1 { ((-(-e).exp_m1()).ln(), e / e.exp_m1()) } else { (-e, -e) };
    (ll, if inside { d } else { 0.0 })
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(lr: f64, shapes: &[usize]) -> Adam {
        Adam { lr, t: 0, m: shapes.iter().map(|&n| vec![0.0; n]).collect(), v: shapes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[&Vec<f64>]) {
        self.t += 1;
        let (c1, c2) = (1.0 - 0.9f64.powi(self.t), 1.0 - 0.999f64.powi(self.t));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for i in 0..p.len() {
                self.m[k][i] = 0.9 * self.m[k][i] + 0.1 * g[i];
                self.v[k][i] = 0.999 * self.v[k][i] + 0.001 * g[i] * g[i];
                p[i] -= self.lr * (self.m[k][i] / c1) / ((self.v[k][i] / c2).sqrt() + 1e-8);
            }
        }
    }
}

fn flat(g: &mut Grads) -> Vec<&mut Vec<f64>> {
    let mut v = Vec::new();
    for (w, b) in g.w.iter_mut().zip(g.b.iter_mut()) {
        v.push(w);
        v.push(b);
    }
    v
}

fn params(n: &mut Net) -> Vec<&mut Vec<f64>> {
    let mut v = Vec::new();
    for (w, b) in n.w.iter_mut().zip(n.b.iter_mut()) {
        v.push(w);
        v.push(b);
    }
    v
}

fn clip(groups: &mut [&mut Grads], max_norm: Option<f64>) {
    let Some(c) = max_norm else { return };
    let sq: f64 = groups.iter_mut().flat_map(|g| flat(g)).flat_map(|v| v.iter().map(|x| x * x).collect::<Vec<_>>()).sum();
    let norm = sq.sqrt();
    if norm > c {
        let s = c / norm;
        for g in groups.iter_mut() {
            for v in flat(g) {
                v.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
}

/// Mean log-likelihood on a batch and gradients of its negative.
fn pass(enc: &Net, dec: &Net, x: &[Vec<f64>], y: &[usize], noise: &EncoderNoise, p: usize) -> (f64, Grads, Grads) {
    let n = x.len();
    let (mut ge, mut gd) = (enc.zero_grads(), dec.zero_grads());
    let mut total = 0.0;
    for i in 0..n {
        let mut input = x[i].clone();
        input.extend_from_slice(noise.eps.row_slice(i));
        let ea = enc.forward(&input);
        let out = ea.last().unwrap();
        let eta = noise.eta.row_slice(i);
        let z: Vec<f64> = (0..p).map(|j| out[j] + (softplus(out[p + j]) + FLOOR) * eta[j]).collect();
        let da = dec.forward(&z);
        let (ll, d) = cll(y[i], da.last().unwrap()[0]);
        total += ll;
        let gz = dec.backward(&da, &[-d / n as f64], &mut gd);
        let mut gout = vec![0.0; 2 * p];
        for j in 0..p {
            gout[j] = gz[j];
            gout[p + j] = gz[j] * eta[j] * sigmoid(out[p + j]);
        }
        enc.backward(&ea, &gout, &mut ge);
    }
    (total / n as f64, ge, gd)
}

/// Mean batch log-likelihood before each iteration's joint update, for
/// `iterations` iterations of the library's epoch and batch schedule.
pub fn trajectory(model: &TrainedModel, train: &LabeledDataset, config: &TrainConfig, iterations: usize) -> Vec<f64> {
    let (Encoder::Flow(e), Decoder::Mlp(d)) = (&model.encoder, &model.decoder) else {
        panic!("oracle covers the Gaussian encoder with an MLP decoder");
    };
    assert!(e.steps.is_empty(), "oracle has no flow steps");
    let p = model.latent_dim();
    let mut enc = Net::from_params(&e.init.params);
    let mut dec = Net::from_params(&d.params);
    let shapes = |n: &Net| n.w.iter().zip(&n.b).flat_map(|(w, b)| [w.len(), b.len()]).collect::<Vec<_>>();
    let mut enc_opt = Adam::new(config.adam_lr, &shapes(&enc));
    let mut dec_opt = Adam::new(config.adam_lr, &shapes(&dec));
    let x = model.standardizer.apply(&train.features).unwrap();
    let mut shuffle = rng_from_seed(split_seed(config.seed, STREAM_SHUFFLE));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut out = Vec::new();
    while out.len() < iterations {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(config.batch_size) {
            if out.len() == iterations {
                break;
            }
            let xb: Vec<Vec<f64>> = chunk.iter().map(|&i| x.row_slice(i).to_vec()).collect();
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let mut noise_rng = rng_from_seed(split_seed(step_seed(config.seed, out.len()), 1));
            let noise = EncoderNoise::draw(xb.len(), p, &mut noise_rng);
            let (ll, mut ge, mut gd) = pass(&enc, &dec, &xb, &yb, &noise, p);
            out.push(ll);
            clip(&mut [&mut ge, &mut gd], config.grad_clip_norm);
            enc_opt.update(&mut params(&mut enc), &flat(&mut ge).iter().map(|v| &**v).collect::<Vec<_>>());
            dec_opt.update(&mut params(&mut dec), &flat(&mut gd).iter().map(|v| &**v).collect::<Vec<_>>());
            for _ in 0..config.encoder_extra_updates {
                let noise = EncoderNoise::draw(xb.len(), p, &mut noise_rng);
                let (_, mut ge, _) = pass(&enc, &dec, &xb, &yb, &noise, p);
                clip(&mut [&mut ge], config.grad_clip_norm);
                enc_opt.update(&mut params(&mut enc), &flat(&mut ge).iter().map(|v| &**v).collect::<Vec<_>>());
            }
        }
    }
    out
}
