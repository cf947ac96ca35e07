//! Latent-factor hedging with a modified variational autoencoder.
//!
//! A nonlinear tanh encoder maps the instrument returns to N diagonal
//! Gaussian latents; a single strictly linear, bias-free decoder maps a
//! latent draw back to the N instruments plus the target. The loss is the
//! squared reconstruction error of every output column plus a weighted KL
//! divergence pulling each latent toward N(0, 1). Because the decoder is
//! linear, its weight matrix plays the role of factor loadings: the first N
//! output columns are `gamma`, the target column is `alpha`, and the hedge
//! ratios solve `gamma·beta = alpha` exactly as in the linear factor route.
//!
//! Inputs are standardized per column before training (mean-squared error
//! across columns of wildly different variance would distort the
//! reconstruction balance) and the hedge ratios are un-standardized
//! afterwards, which is exact for a linear decoder. Training is plain
//! momentum SGD (momentum 0.9) with the gradient norm clipped at 10,
//! single-threaded and bit-reproducible for a fixed seed; gradients come
//! from exact backpropagation through the reparameterization
//! `z = mu + sigma ⊙ eta`.

use std::io::Write as IoWrite;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HedgeError, Result};
use crate::factors;
use crate::marketdata::ReturnPanel;

const MOMENTUM: f64 = 0.9;
const GRAD_CLIP: f64 = 10.0;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct VaeConfig {
    /// Encoder hidden widths.
    pub hidden_layers: Vec<usize>,
    /// KL weight.
    pub beta_hat: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs over which the KL weight ramps linearly from 0 to `beta_hat`;
    /// 0 disables annealing.
    pub kl_anneal_epochs: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![16, 8],
            beta_hat: 0.05,
            learning_rate: 1e-3,
            epochs: 5_000,
            batch_size: 128,
            seed: 42,
            kl_anneal_epochs: 500,
        }
    }
}

/// Loss components logged once per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub beta_effective: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
struct Dense {
    /// in x out
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Dense {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = DMatrix::from_fn(fan_in, fan_out, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale);
        Dense {
            w,
            b: DVector::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Dense {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: DVector::zeros(self.b.len()),
        }
    }

    fn forward(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = a * &self.w;
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] += self.b[j];
            }
        }
        out
    }
}

/// Trained model: encoder stack, latent heads, the linear bias-free decoder
/// and the standardization constants needed to express hedge ratios in
/// return units.
#[derive(Debug, Clone)]
pub struct VaeModel {
    hidden: Vec<Dense>,
    mu_head: Dense,
    logvar_head: Dense,
    /// n_latent x (n_instruments + 1); columns 0..n reconstruct the
    /// instruments, the last column the target. No bias by construction.
    decoder: DMatrix<f64>,
    pub input_means: DVector<f64>,
    pub input_sds: DVector<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub training_history: Vec<TrainingRecord>,
}

struct ForwardPass {
    /// input plus each hidden activation
    activations: Vec<DMatrix<f64>>,
    mu: DMatrix<f64>,
    logvar: DMatrix<f64>,
    sigma: DMatrix<f64>,
    z: DMatrix<f64>,
    out: DMatrix<f64>,
}

struct Grads {
    hidden: Vec<Dense>,
    mu_head: Dense,
    logvar_head: Dense,
    decoder: DMatrix<f64>,
}

/// KL(N(mu, sigma^2) || N(0, 1)) = 0.5 (mu^2 + sigma^2 - 1 - ln sigma^2).
pub fn kl_std_normal(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(HedgeError::NonPositiveSigma { sigma });
    }
    Ok(0.5 * (mu * mu + sigma * sigma - 1.0 - (sigma * sigma).ln()))
}

impl VaeModel {
    /// Standardization constants plus seeded parameter initialization,
    /// without any training steps.
    pub fn init(panel: &ReturnPanel, config: &VaeConfig) -> Result<VaeModel> {
        let n = panel.n_instruments();
        if n == 0 {
            return Err(HedgeError::ZeroInstruments);
        }
        let k = panel.n_rows() as f64;

        let input_means =
            DVector::from_iterator(n, panel.x.column_iter().map(|c| c.sum() / k));
        let mut input_sds = DVector::zeros(n);
        for j in 0..n {
            let var = panel
                .x
                .column(j)
                .iter()
                .map(|v| (v - input_means[j]).powi(2))
                .sum::<f64>()
                / (k - 1.0);
            input_sds[j] = var.sqrt();
            if !(input_sds[j] > 0.0) {
                return Err(HedgeError::SingularDesign {
                    columns: vec![panel.instrument_names[j].clone()],
                });
            }
        }
        let target_mean = panel.y.sum() / k;
        let target_var = panel
            .y
            .iter()
            .map(|v| (v - target_mean).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        let target_sd = target_var.sqrt();
        if !(target_sd > 0.0) {
            return Err(HedgeError::SingularDesign {
                columns: vec![panel.target_name.clone()],
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut hidden = Vec::new();
        let mut prev = n;
        for &width in &config.hidden_layers {
            hidden.push(Dense::init(&mut rng, prev, width));
            prev = width;
        }
        let mu_head = Dense::init(&mut rng, prev, n);
        let logvar_head = Dense::init(&mut rng, prev, n);
        let decoder_scale = (6.0 / (n + n + 1) as f64).sqrt();
        let decoder = DMatrix::from_fn(n, n + 1, |_, _| {
            (rng.random::<f64>() * 2.0 - 1.0) * decoder_scale
        });

        Ok(VaeModel {
            hidden,
            mu_head,
            logvar_head,
            decoder,
            input_means,
            input_sds,
            target_mean,
            target_sd,
            training_history: Vec::new(),
        })
    }

    /// Instruments standardized with the model's constants.
    pub fn standardize(&self, panel: &ReturnPanel) -> (DMatrix<f64>, DVector<f64>) {
        let k = panel.n_rows();
        let n = panel.n_instruments();
        let mut h = DMatrix::zeros(k, n);
        for j in 0..n {
            for i in 0..k {
                h[(i, j)] = (panel.x[(i, j)] - self.input_means[j]) / self.input_sds[j];
            }
        }
        let y = panel.y.map(|v| (v - self.target_mean) / self.target_sd);
        (h, y)
    }

    fn forward(&self, h_std: &DMatrix<f64>, eta: &DMatrix<f64>) -> ForwardPass {
        let mut activations = vec![h_std.clone()];
        let mut a = h_std.clone();
        for layer in &self.hidden {
            a = layer.forward(&a).map(f64::tanh);
            activations.push(a.clone());
        }
        let mu = self.mu_head.forward(&a);
        let logvar = self.logvar_head.forward(&a);
        let sigma = logvar.map(|v| (0.5 * v).exp());
        let z = &mu + sigma.component_mul(eta);
        let out = &z * &self.decoder;
        ForwardPass {
            activations,
            mu,
            logvar,
            sigma,
            z,
            out,
        }
    }

    /// Mean reconstruction and KL components of the loss for a fixed noise
    /// draw `eta`; total loss is `recon + beta_eff * kl`.
    pub fn loss_with_noise(
        &self,
        h_std: &DMatrix<f64>,
        y_std: &DVector<f64>,
        eta: &DMatrix<f64>,
    ) -> (f64, f64) {
        let pass = self.forward(h_std, eta);
        self.loss_of_pass(&pass, h_std, y_std)
    }

    fn loss_of_pass(
        &self,
        pass: &ForwardPass,
        h_std: &DMatrix<f64>,
        y_std: &DVector<f64>,
    ) -> (f64, f64) {
        let bsz = h_std.nrows();
        let n = h_std.ncols();
        let mut recon = 0.0;
        for i in 0..bsz {
            for j in 0..n {
                let e = h_std[(i, j)] - pass.out[(i, j)];
                recon += e * e;
            }
            let e = y_std[i] - pass.out[(i, n)];
            recon += e * e;
        }
        let mut kl = 0.0;
        for i in 0..bsz {
            for j in 0..n {
                let mu = pass.mu[(i, j)];
                let lv = pass.logvar[(i, j)];
                kl += 0.5 * (mu * mu + lv.exp() - 1.0 - lv);
            }
        }
        (recon / bsz as f64, kl / bsz as f64)
    }

    fn backward(
        &self,
        pass: &ForwardPass,
        h_std: &DMatrix<f64>,
        y_std: &DVector<f64>,
        beta_eff: f64,
    ) -> Grads {
        let bsz = h_std.nrows() as f64;
        let n = h_std.ncols();

        // d(mean squared recon)/d out
        let mut d_out = DMatrix::zeros(pass.out.nrows(), pass.out.ncols());
        for i in 0..pass.out.nrows() {
            for j in 0..n {
                d_out[(i, j)] = 2.0 * (pass.out[(i, j)] - h_std[(i, j)]) / bsz;
            }
            d_out[(i, n)] = 2.0 * (pass.out[(i, n)] - y_std[i]) / bsz;
        }

        let d_decoder = pass.z.transpose() * &d_out;
        let d_z = &d_out * self.decoder.transpose();

        // z = mu + sigma.eta with sigma = exp(logvar/2)
        let mut d_mu = d_z.clone();
        let mut d_logvar = d_z.component_mul(&pass.eta_sigma_half());
        for i in 0..d_mu.nrows() {
            for j in 0..d_mu.ncols() {
                d_mu[(i, j)] += beta_eff * pass.mu[(i, j)] / bsz;
                d_logvar[(i, j)] += beta_eff * 0.5 * (pass.logvar[(i, j)].exp() - 1.0) / bsz;
            }
        }

        let a_last = &pass.activations[pass.activations.len() - 1];
        let g_mu_head = Dense {
            w: a_last.transpose() * &d_mu,
            b: column_sums(&d_mu),
        };
        let g_logvar_head = Dense {
            w: a_last.transpose() * &d_logvar,
            b: column_sums(&d_logvar),
        };

        let mut d_a = &d_mu * self.mu_head.w.transpose() + &d_logvar * self.logvar_head.w.transpose();
        let mut g_hidden: Vec<Dense> = self.hidden.iter().map(Dense::zeros_like).collect();
        for l in (0..self.hidden.len()).rev() {
            let act = &pass.activations[l + 1];
            let d_pre = DMatrix::from_fn(d_a.nrows(), d_a.ncols(), |i, j| {
                d_a[(i, j)] * (1.0 - act[(i, j)] * act[(i, j)])
            });
            g_hidden[l] = Dense {
                w: pass.activations[l].transpose() * &d_pre,
                b: column_sums(&d_pre),
            };
            d_a = &d_pre * self.hidden[l].w.transpose();
        }

        Grads {
            hidden: g_hidden,
            mu_head: g_mu_head,
            logvar_head: g_logvar_head,
            decoder: d_decoder,
        }
    }

    /// Flattened gradient of the total loss at the current parameters for a
    /// fixed noise draw, in [`flatten_params`](Self::flatten_params) order.
    pub fn grad_with_noise(
        &self,
        h_std: &DMatrix<f64>,
        y_std: &DVector<f64>,
        eta: &DMatrix<f64>,
        beta_eff: f64,
    ) -> Vec<f64> {
        let pass = self.forward(h_std, eta);
        let grads = self.backward(&pass, h_std, y_std, beta_eff);
        flatten(
            grads.hidden.iter(),
            &grads.mu_head,
            &grads.logvar_head,
            &grads.decoder,
        )
    }

    /// All parameters as one vector: hidden layers, mu head, logvar head,
    /// decoder; each dense block as column-major weights then bias.
    pub fn flatten_params(&self) -> Vec<f64> {
        flatten(
            self.hidden.iter(),
            &self.mu_head,
            &self.logvar_head,
            &self.decoder,
        )
    }

    /// Writes a flat vector back into the parameter tensors.
    pub fn set_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        let read_dense = |d: &mut Dense, offset: &mut usize| {
            for v in d.w.iter_mut() {
                *v = flat[*offset];
                *offset += 1;
            }
            for v in d.b.iter_mut() {
                *v = flat[*offset];
                *offset += 1;
            }
        };
        for layer in &mut self.hidden {
            read_dense(layer, &mut offset);
        }
        read_dense(&mut self.mu_head, &mut offset);
        read_dense(&mut self.logvar_head, &mut offset);
        for v in self.decoder.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        assert_eq!(offset, flat.len());
    }

    /// Latent distribution parameters for one standardized input row.
    pub fn encode_std(&self, h_std: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let row = DMatrix::from_fn(1, h_std.len(), |_, j| h_std[j]);
        let zero_eta = DMatrix::zeros(1, self.decoder.nrows());
        let pass = self.forward(&row, &zero_eta);
        let mu = DVector::from_fn(self.decoder.nrows(), |j, _| pass.mu[(0, j)]);
        let sigma = DVector::from_fn(self.decoder.nrows(), |j, _| pass.sigma[(0, j)]);
        (mu, sigma)
    }

    /// Decoder output (standardized units) for a latent vector; exactly
    /// `z · W` with no bias, so superposition holds to machine precision.
    pub fn decode_latent(&self, z: &DVector<f64>) -> DVector<f64> {
        self.decoder.transpose() * z
    }

    /// Deterministic forward pass with sigma forced to zero (`z = mu`).
    pub fn reconstruct_deterministic(&self, h: &DVector<f64>) -> DVector<f64> {
        let h_std = DVector::from_fn(h.len(), |j, _| {
            (h[j] - self.input_means[j]) / self.input_sds[j]
        });
        let (mu, _sigma) = self.encode_std(&h_std);
        self.decode_latent(&mu)
    }

    /// Instrument block of the decoder (`gamma`, N x N).
    pub fn gamma(&self) -> DMatrix<f64> {
        let n = self.decoder.nrows();
        self.decoder.view((0, 0), (n, n)).into_owned()
    }

    /// Target column of the decoder (`alpha`).
    pub fn alpha(&self) -> DVector<f64> {
        let n = self.decoder.nrows();
        DVector::from_fn(n, |j, _| self.decoder[(j, n)])
    }

    /// Plain-text dump of layer shapes and row-major weights, for
    /// reproducibility audits.
    pub fn write_text<W: IoWrite>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.decoder.nrows();
        writeln!(out, "hedgekit-vae v1")?;
        writeln!(out, "inputs {n}")?;
        write!(out, "hidden")?;
        for layer in &self.hidden {
            write!(out, " {}", layer.w.ncols())?;
        }
        writeln!(out)?;
        writeln!(out, "input_means {}", join_floats(self.input_means.iter()))?;
        writeln!(out, "input_sds {}", join_floats(self.input_sds.iter()))?;
        writeln!(out, "target_mean {}", self.target_mean)?;
        writeln!(out, "target_sd {}", self.target_sd)?;
        for (i, layer) in self.hidden.iter().enumerate() {
            write_dense(out, &format!("hidden{i}"), layer)?;
        }
        write_dense(out, "mu", &self.mu_head)?;
        write_dense(out, "logvar", &self.logvar_head)?;
        writeln!(out, "layer decoder {} {}", n, n + 1)?;
        writeln!(out, "w {}", join_floats(row_major(&self.decoder).iter()))?;
        Ok(())
    }

    /// Parses the text produced by [`write_text`](Self::write_text).
    pub fn parse_text(s: &str) -> Result<VaeModel> {
        let mut lines = s.lines();
        let bad = |message: &str| HedgeError::MalformedCsv {
            line: 0,
            message: format!("model dump: {message}"),
        };
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        if header.trim() != "hedgekit-vae v1" {
            return Err(bad("unknown header"));
        }
        let n: usize = field_after(lines.next(), "inputs").ok_or_else(|| bad("inputs"))?;
        let hidden_widths: Vec<usize> = tail_fields(lines.next(), "hidden")
            .ok_or_else(|| bad("hidden"))?;
        let input_means = parse_floats_line(lines.next(), "input_means").ok_or_else(|| bad("means"))?;
        let input_sds = parse_floats_line(lines.next(), "input_sds").ok_or_else(|| bad("sds"))?;
        let target_mean: f64 = field_after(lines.next(), "target_mean").ok_or_else(|| bad("target_mean"))?;
        let target_sd: f64 = field_after(lines.next(), "target_sd").ok_or_else(|| bad("target_sd"))?;

        let read_dense = |lines: &mut std::str::Lines| -> Option<Dense> {
            let shape = lines.next()?;
            let parts: Vec<&str> = shape.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "layer" {
                return None;
            }
            let rows: usize = parts[2].parse().ok()?;
            let cols: usize = parts[3].parse().ok()?;
            let w_vals = parse_floats_line(lines.next(), "w")?;
            let b_vals = parse_floats_line(lines.next(), "b")?;
            if w_vals.len() != rows * cols || b_vals.len() != cols {
                return None;
            }
            Some(Dense {
                w: DMatrix::from_fn(rows, cols, |r, c| w_vals[r * cols + c]),
                b: DVector::from_vec(b_vals),
            })
        };

        let mut hidden = Vec::new();
        for _ in 0..hidden_widths.len() {
            hidden.push(read_dense(&mut lines).ok_or_else(|| bad("hidden layer"))?);
        }
        let mu_head = read_dense(&mut lines).ok_or_else(|| bad("mu head"))?;
        let logvar_head = read_dense(&mut lines).ok_or_else(|| bad("logvar head"))?;

        let shape = lines.next().ok_or_else(|| bad("decoder shape"))?;
        let parts: Vec<&str> = shape.split_whitespace().collect();
        if parts.len() != 4 || parts[1] != "decoder" {
            return Err(bad("decoder shape"));
        }
        let rows: usize = parts[2].parse().map_err(|_| bad("decoder rows"))?;
        let cols: usize = parts[3].parse().map_err(|_| bad("decoder cols"))?;
        let w_vals = parse_floats_line(lines.next(), "w").ok_or_else(|| bad("decoder weights"))?;
        if rows != n || cols != n + 1 || w_vals.len() != rows * cols {
            return Err(bad("decoder dimensions"));
        }
        let decoder = DMatrix::from_fn(rows, cols, |r, c| w_vals[r * cols + c]);

        Ok(VaeModel {
            hidden,
            mu_head,
            logvar_head,
            decoder,
            input_means: DVector::from_vec(input_means),
            input_sds: DVector::from_vec(input_sds),
            target_mean,
            target_sd,
            training_history: Vec::new(),
        })
    }
}

impl ForwardPass {
    fn eta_sigma_half(&self) -> DMatrix<f64> {
        // d z / d logvar = eta * sigma / 2
        DMatrix::from_fn(self.sigma.nrows(), self.sigma.ncols(), |i, j| {
            (self.z[(i, j)] - self.mu[(i, j)]) * 0.5
        })
    }
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn join_floats<'a, I: Iterator<Item = &'a f64>>(iter: I) -> String {
    iter.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_dense<W: IoWrite>(out: &mut W, name: &str, d: &Dense) -> std::io::Result<()> {
    writeln!(out, "layer {name} {} {}", d.w.nrows(), d.w.ncols())?;
    writeln!(out, "w {}", join_floats(row_major(&d.w).iter()))?;
    writeln!(out, "b {}", join_floats(d.b.iter()))?;
    Ok(())
}

fn field_after<T: std::str::FromStr>(line: Option<&str>, key: &str) -> Option<T> {
    let line = line?;
    let rest = line.strip_prefix(key)?.trim();
    rest.parse().ok()
}

fn tail_fields<T: std::str::FromStr>(line: Option<&str>, key: &str) -> Option<Vec<T>> {
    let line = line?;
    let rest = line.strip_prefix(key)?.trim();
    if rest.is_empty() {
        return Some(Vec::new());
    }
    rest.split_whitespace().map(|s| s.parse().ok()).collect()
}

fn parse_floats_line(line: Option<&str>, key: &str) -> Option<Vec<f64>> {
    tail_fields(line, key)
}

fn flatten<'a, I: Iterator<Item = &'a Dense>>(
    hidden: I,
    mu: &Dense,
    logvar: &Dense,
    decoder: &DMatrix<f64>,
) -> Vec<f64> {
    let mut out = Vec::new();
    let mut push_dense = |d: &Dense| {
        out.extend(d.w.iter());
        out.extend(d.b.iter());
    };
    for layer in hidden {
        push_dense(layer);
    }
    push_dense(mu);
    push_dense(logvar);
    out.extend(decoder.iter());
    out
}

fn effective_beta(config: &VaeConfig, epoch: usize) -> f64 {
    if config.kl_anneal_epochs == 0 {
        config.beta_hat
    } else {
        config.beta_hat * ((epoch + 1) as f64 / config.kl_anneal_epochs as f64).min(1.0)
    }
}

/// Trains the autoencoder on a panel. Deterministic for a fixed seed: two
/// runs produce bitwise-identical parameters and training history.
pub fn train(panel: &ReturnPanel, config: &VaeConfig) -> Result<VaeModel> {
    let mut model = VaeModel::init(panel, config)?;
    let (h_std, y_std) = model.standardize(panel);
    let k = panel.n_rows();
    let n = panel.n_instruments();
    let batch = config.batch_size.max(1).min(k);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut velocity = vec![0.0; model.flatten_params().len()];
    let mut indices: Vec<usize> = (0..k).collect();

    for epoch in 0..config.epochs {
        let beta_eff = effective_beta(config, epoch);
        // Fisher-Yates with the run RNG keeps epochs reproducible
        for i in (1..k).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }

        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for chunk in indices.chunks(batch) {
            let bsz = chunk.len();
            let h_b = DMatrix::from_fn(bsz, n, |r, c| h_std[(chunk[r], c)]);
            let y_b = DVector::from_fn(bsz, |r, _| y_std[chunk[r]]);
            let eta = DMatrix::from_fn(bsz, n, |_, _| StandardNormal.sample(&mut rng));

            let pass = model.forward(&h_b, &eta);
            let (recon, kl) = model.loss_of_pass(&pass, &h_b, &y_b);
            recon_sum += recon * bsz as f64;
            kl_sum += kl * bsz as f64;
            if !(recon + kl).is_finite() {
                return Err(HedgeError::NonFiniteLoss {
                    epoch,
                    recon,
                    kl,
                });
            }

            let grads = model.backward(&pass, &h_b, &y_b, beta_eff);
            let mut flat = flatten(
                grads.hidden.iter(),
                &grads.mu_head,
                &grads.logvar_head,
                &grads.decoder,
            );
            let norm: f64 = flat.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > GRAD_CLIP {
                let scale = GRAD_CLIP / norm;
                for g in &mut flat {
                    *g *= scale;
                }
            }
            let mut params = model.flatten_params();
            for i in 0..params.len() {
                velocity[i] = MOMENTUM * velocity[i] + flat[i];
                params[i] -= config.learning_rate * velocity[i];
            }
            model.set_params(&params);
        }

        let reconstruction = recon_sum / k as f64;
        let kl = kl_sum / k as f64;
        let total = reconstruction + beta_eff * kl;
        model.training_history.push(TrainingRecord {
            epoch,
            reconstruction,
            kl,
            beta_effective: beta_eff,
            total,
        });
        if !total.is_finite() {
            return Err(HedgeError::NonFiniteLoss {
                epoch,
                recon: reconstruction,
                kl,
            });
        }
    }
    Ok(model)
}

/// Hedge ratios from the decoder weights: solves `gamma·beta = alpha` in
/// standardized units, then rescales by `target_sd / input_sd_j` — exact for
/// a linear decoder.
pub fn extract_hedge_vae(model: &VaeModel) -> Result<DVector<f64>> {
    let gamma = model.gamma();
    let alpha = model.alpha();
    let beta_std = factors::solve_gamma(&gamma, &alpha)?;
    Ok(DVector::from_fn(beta_std.len(), |j, _| {
        beta_std[j] * model.target_sd / model.input_sds[j]
    }))
}
