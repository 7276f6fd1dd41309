//! Distributional denoising autoencoder.
//!
//! A multilayer perceptron autoencoder (tanh hidden layers, linear output)
//! is fitted to document embeddings from the period before events begin.
//! Documents in later windows whose squared reconstruction error falls in
//! the top `100 - theta` percent are treated as off-distribution noise.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights and biases of the autoencoder.
///
/// `weights[l]` has shape `(layer_dims[l], layer_dims[l + 1])`, so a batch of
/// row vectors propagates as `x.dot(W) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            // lr = 0 is accepted by `train` directly for tests; configs need a positive rate
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub error: f64,
}

/// Result of [`train`]: fitted parameters and mean loss over the full data
/// before training and after each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Parameter gradients, shaped like [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::config("autoencoder needs at least an input and an output layer"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::config("layer widths must be positive"));
    }
    if layer_dims.first() != layer_dims.last() {
        return Err(Error::config(format!(
            "autoencoder input and output widths differ: {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_params(layer_dims: &[usize], seed: u64) -> Result<MlpParams> {
    check_dims(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-s, s).expect("finite positive bound");
        weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpParams {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
    })
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Checks that shapes chain and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        check_dims(&self.layer_dims)?;
        let n = self.layer_dims.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::config("layer count does not match layer_dims"));
        }
        for l in 0..n {
            let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if self.weights[l].dim() != (i, o) || self.biases[l].len() != o {
                return Err(Error::config(format!("layer {l} has the wrong shape")));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::config("parameters contain non-finite values"));
        }
        Ok(())
    }

    fn is_hidden(&self, layer: usize) -> bool {
        layer + 1 < self.weights.len()
    }

    /// Layer outputs for a batch of row vectors; element 0 is the input.
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if self.is_hidden(l) {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(self.activations(x).pop().expect("at least one layer"))
    }
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
    Ok(params.forward_batch(view)?.into_raw_vec_and_offset().0)
}

/// Sum of squared differences between an input and its reconstruction.
pub fn reconstruction_error(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: xhat.len(),
        });
    }
    Ok(x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn row_errors(x: ArrayView2<f64>, xhat: &Array2<f64>) -> Vec<f64> {
    x.outer_iter()
        .zip(xhat.outer_iter())
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
        .collect()
}

/// Mean reconstruction error over a batch and its gradient.
pub fn loss_and_gradients(params: &MlpParams, x: ArrayView2<f64>) -> Result<(f64, Gradients)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: x.ncols(),
        });
    }
    let n = x.nrows() as f64;
    let acts = params.activations(x);
    let out = acts.last().expect("output layer");
    let diff = out - &x;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;

    let layers = params.num_layers();
    let mut gw = Vec::with_capacity(layers);
    let mut gb = Vec::with_capacity(layers);
    let mut delta = diff * (2.0 / n);
    for l in (0..layers).rev() {
        gw.push(acts[l].t().dot(&delta));
        gb.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut next = delta.dot(&params.weights[l].t());
            // acts[l] is the tanh output feeding layer l
            next.zip_mut_with(&acts[l], |d, a| *d *= 1.0 - a * a);
            delta = next;
        }
    }
    gw.reverse();
    gb.reverse();
    Ok((
        loss,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

fn to_matrix(data: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(data.len() * dim);
    for row in data {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(Array2::from_shape_vec((data.len(), dim), flat).expect("shape checked"))
}

/// Mean reconstruction error of `data` under `params`.
pub fn mean_loss(params: &MlpParams, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let x = to_matrix(data, params.input_dim())?;
    let xhat = params.forward_batch(x.view())?;
    Ok(row_errors(x.view(), &xhat).iter().sum::<f64>() / data.len() as f64)
}

/// Mini-batch SGD on mean reconstruction error. Sample order is reshuffled
/// every epoch from a generator seeded with `cfg.seed`.
pub fn train(params: MlpParams, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::config("no training data for the autoencoder"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::config("epochs and batch_size must be at least 1"));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 {
        return Err(Error::config("learning_rate must be non-negative"));
    }
    params.validate()?;
    let x = to_matrix(data, params.input_dim())?;
    let mut params = params;
    let eval = |p: &MlpParams| -> Result<f64> {
        let xhat = p.forward_batch(x.view())?;
        Ok(row_errors(x.view(), &xhat).iter().sum::<f64>() / x.nrows() as f64)
    };
    let initial_loss = eval(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = x.select(Axis(0), idx);
            let (loss, grads) = loss_and_gradients(&params, batch.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            for (w, g) in params.weights.iter_mut().zip(&grads.weights) {
                w.scaled_add(-cfg.learning_rate, g);
            }
            for (bias, g) in params.biases.iter_mut().zip(&grads.biases) {
                bias.scaled_add(-cfg.learning_rate, g);
            }
        }
        let loss = eval(&params)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss,
            });
        }
        log::debug!("epoch {epoch}: mean loss {loss:.6}");
        epoch_losses.push(loss);
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        epoch_losses,
    })
}

/// Reconstruction error for each `(doc_id, embedding)` pair.
pub fn score_docs<'a, I>(params: &MlpParams, docs: I) -> Result<Vec<ScoredDoc>>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let (ids, rows): (Vec<&str>, Vec<Vec<f64>>) =
        docs.into_iter().map(|(id, v)| (id, v.to_vec())).unzip();
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let x = to_matrix(&rows, params.input_dim())?;
    let xhat = params.forward_batch(x.view())?;
    Ok(ids
        .into_iter()
        .zip(row_errors(x.view(), &xhat))
        .map(|(id, error)| ScoredDoc {
            doc_id: id.to_string(),
            error,
        })
        .collect())
}

/// Number of documents kept out of `n` at percentile `theta`.
pub fn keep_count(n: usize, theta: f64) -> usize {
    // multiply first so integer percentages stay exact
    (((theta * n as f64) / 100.0).floor() as usize).min(n)
}

/// Keeps the `floor(theta/100 * N)` lowest-error documents. Ties on error
/// are broken by ascending doc id.
pub fn dda_filter(scored: &[ScoredDoc], theta: f64) -> Result<BTreeSet<String>> {
    if !(theta > 0.0 && theta <= 100.0) {
        return Err(Error::config(format!("theta_dda must be in (0, 100], got {theta}")));
    }
    let mut order: Vec<&ScoredDoc> = scored.iter().collect();
    order.sort_by(|a, b| a.error.total_cmp(&b.error).then_with(|| a.doc_id.cmp(&b.doc_id)));
    let keep = keep_count(scored.len(), theta);
    Ok(order[..keep].iter().map(|s| s.doc_id.clone()).collect())
}

const CHECKPOINT_MAGIC: &str = "SMMAE";

/// Writes `SMMAE 1 <dims>` followed by one block per layer: `fan_in` rows of
/// weights, then the bias row, blocks separated by a blank line.
pub fn write_checkpoint<W: Write>(params: &MlpParams, mut w: W) -> Result<()> {
    params.validate()?;
    let dims: Vec<String> = params.layer_dims.iter().map(usize::to_string).collect();
    writeln!(w, "{CHECKPOINT_MAGIC} 1 {}", dims.join(","))?;
    let mut line = String::new();
    let mut write_row = |w: &mut W, row: &mut dyn Iterator<Item = &f64>| -> Result<()> {
        line.clear();
        for (i, x) in row.enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{x}").expect("writing to a String");
        }
        writeln!(w, "{line}")?;
        Ok(())
    };
    for (l, (wt, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        if l > 0 {
            writeln!(w)?;
        }
        for row in wt.outer_iter() {
            write_row(&mut w, &mut row.iter())?;
        }
        write_row(&mut w, &mut b.iter())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<MlpParams> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)));
    let (_, header) = lines.next().transpose()?.ok_or_else(|| Error::format(1, "missing header"))?;
    let layer_dims: Vec<usize> = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [CHECKPOINT_MAGIC, "1", dims] => dims
            .split(',')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(1, format!("bad layer dims {dims:?}")))?,
        _ => return Err(Error::format(1, format!("bad header {header:?}"))),
    };
    check_dims(&layer_dims).map_err(|e| Error::format(1, e.to_string()))?;

    let mut rows = lines.filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()));
    let mut next_row = |width: usize| -> Result<Vec<f64>> {
        let (lineno, line) = rows
            .next()
            .transpose()?
            .ok_or_else(|| Error::format(0, "checkpoint ends early"))?;
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::format(lineno, "bad value"))?;
        if vals.len() != width {
            return Err(Error::format(
                lineno,
                format!("expected {width} values, found {}", vals.len()),
            ));
        }
        Ok(vals)
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut flat = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            flat.extend(next_row(fan_out)?);
        }
        weights.push(Array2::from_shape_vec((fan_in, fan_out), flat).expect("shape checked"));
        biases.push(Array1::from(next_row(fan_out)?));
    }
    Ok(MlpParams {
        layer_dims,
        weights,
        biases,
    })
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::at_path(path))?;
    write_checkpoint(params, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let file = std::fs::File::open(path).map_err(Error::at_path(path))?;
    read_checkpoint(std::io::BufReader::new(file))
}
