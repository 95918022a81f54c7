use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::UNetConfig;
use super::graph::{batch_adjacency, gnn_layer, knn_nodes, Graph, NodeFeatures};
use crate::autodiff::{checkpoint, Adam, ParamStore, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::seed::{derive_seed, hash_str};

/// Per-pixel foreground probabilities of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// Foreground iff probability ≥ `threshold`.
pub fn predict_mask(prob: &ProbMap, threshold: f64) -> Mask {
    let t = threshold as f32;
    Mask::new(prob.width, prob.height, prob.values.iter().map(|&p| p >= t).collect())
        .expect("probability map has consistent shape")
}

/// Outputs of one recorded forward pass.
#[derive(Debug)]
pub struct Forward {
    pub prob: Var,
    /// `F_L`, the bottleneck map before any graph layer.
    pub bottleneck: Var,
    /// Graph of each image, built from `h^0`; empty without a graph stack.
    pub graphs: Vec<Graph>,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    std: f64,
}

fn param_specs(cfg: &UNetConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut conv = |name: String, cout: usize, cin: usize, k: usize, std: f64| {
        specs.push(ParamSpec {
            name: format!("{name}.w"),
            shape: vec![cout, cin, k, k],
            std,
        });
        specs.push(ParamSpec {
            name: format!("{name}.b"),
            shape: vec![cout],
            std: 0.0,
        });
    };
    let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
    let mut cin = 1;
    for l in 1..=cfg.levels {
        let c = cfg.level_channels(l);
        conv(format!("enc{l}.conv1"), c, cin, 3, he(9 * cin));
        conv(format!("enc{l}.conv2"), c, c, 3, he(9 * c));
        cin = c;
    }
    let cb = cfg.bottleneck_channels();
    conv("bottleneck.conv1".into(), cb, cin, 3, he(9 * cin));
    conv("bottleneck.conv2".into(), cb, cb, 3, he(9 * cb));
    for l in (1..=cfg.levels).rev() {
        let c = cfg.level_channels(l);
        conv(format!("dec{l}.conv1"), c, 2 * c, 3, he(9 * 2 * c));
        conv(format!("dec{l}.conv2"), c, c, 3, he(9 * c));
    }
    conv("head".into(), 1, cfg.base_channels, 1, (1.0 / cfg.base_channels as f64).sqrt());

    // transposed convolutions: weight [cin, cout, 2, 2]
    let mut prev = cb;
    for l in (1..=cfg.levels).rev() {
        let c = cfg.level_channels(l);
        specs.push(ParamSpec {
            name: format!("up{l}.w"),
            shape: vec![prev, c, 2, 2],
            std: he(prev),
        });
        specs.push(ParamSpec {
            name: format!("up{l}.b"),
            shape: vec![c],
            std: 0.0,
        });
        prev = c;
    }
    if cfg.gnn_enabled {
        // neighbour sums add k similar vectors, so shrink by k
        let std = he(cb) / cfg.k_neighbors as f64;
        for t in 1..=cfg.gnn_layers {
            specs.push(ParamSpec {
                name: format!("gnn{t}.w"),
                shape: vec![cb, cb],
                std,
            });
            specs.push(ParamSpec {
                name: format!("gnn{t}.b"),
                shape: vec![cb],
                std: 0.0,
            });
        }
    }
    specs
}

/// Fresh parameters. Each tensor draws from its own stream keyed by the seed
/// and its name, so a backbone is initialised identically with or without a
/// graph stack.
pub fn init_params(cfg: &UNetConfig, seed: u64) -> Result<ParamStore<f32>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for s in param_specs(cfg) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, hash_str(&s.name)]));
        let tensor = if s.std == 0.0 {
            Tensor::zeros(&s.shape)
        } else {
            let normal = Normal::new(0.0, s.std).map_err(|e| Error::validation(e.to_string()))?;
            Tensor::from_fn(&s.shape, |_| normal.sample(&mut rng) as f32)
        };
        store.add(s.name, tensor, true)?;
    }
    Ok(store)
}

fn pv<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, name: &str) -> Result<Var> {
    let id = store
        .id(name)
        .ok_or_else(|| Error::State(format!("parameter {name:?} missing from store")))?;
    Ok(tape.param(store, id))
}

fn conv_relu<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, name: &str, x: Var, pad: usize) -> Result<Var> {
    let w = pv(tape, store, &format!("{name}.w"))?;
    let b = pv(tape, store, &format!("{name}.b"))?;
    let y = tape.conv2d(x, w, b, pad)?;
    Ok(tape.relu(y))
}

fn double_conv<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let y = conv_relu(tape, store, &format!("{prefix}.conv1"), x, 1)?;
    conv_relu(tape, store, &format!("{prefix}.conv2"), y, 1)
}

fn graphs_from_rows<T: Scalar>(values: &[T], n: usize, nodes: usize, c: usize, k: usize) -> Result<Vec<Graph>> {
    (0..n)
        .map(|i| {
            let h = NodeFeatures {
                dim: c,
                values: values[i * nodes * c..(i + 1) * nodes * c].to_vec(),
            };
            knn_nodes(&h, k)
        })
        .collect()
}

/// Records a forward pass of `x: [N, 1, H, W]`. `fixed_graphs` replaces the
/// k-NN selection (one graph per image), which holds the adjacency constant
/// for finite-difference checks.
pub fn forward<T: Scalar>(
    cfg: &UNetConfig,
    store: &ParamStore<T>,
    tape: &mut Tape<T>,
    x: Var,
    fixed_graphs: Option<&[Graph]>,
) -> Result<Forward> {
    let (n, c, h, w) = tape.value(x).dims4()?;
    if c != 1 || h != cfg.input_height || w != cfg.input_width {
        return Err(Error::shape(format!(
            "input [{n}, {c}, {h}, {w}] does not match configured [N, 1, {}, {}]",
            cfg.input_height, cfg.input_width
        )));
    }
    let mut skips = Vec::with_capacity(cfg.levels);
    let mut cur = x;
    for l in 1..=cfg.levels {
        let s = double_conv(tape, store, &format!("enc{l}"), cur)?;
        skips.push(s);
        cur = tape.maxpool2(s)?;
    }
    let bottleneck = double_conv(tape, store, "bottleneck", cur)?;
    cur = bottleneck;

    let mut graphs = Vec::new();
    if cfg.gnn_enabled && cfg.gnn_layers > 0 {
        let (hl, wl) = cfg.bottleneck_size();
        let nodes = hl * wl;
        let cb = cfg.bottleneck_channels();
        let k = cfg.k_neighbors;
        let mut hv = tape.to_nodes(bottleneck)?;
        graphs = match fixed_graphs {
            Some(g) if g.len() == n && g.iter().all(|g| g.node_count == nodes && g.k == k) => g.to_vec(),
            Some(g) => {
                return Err(Error::shape(format!(
                    "{} fixed graphs do not fit {n} images of {nodes} nodes with k = {k}",
                    g.len()
                )))
            }
            None => graphs_from_rows(tape.value(hv).data(), n, nodes, cb, k)?,
        };
        let mut adjacency = batch_adjacency(&graphs);
        for t in 1..=cfg.gnn_layers {
            if t > 1 && cfg.rebuild_graph_per_layer && fixed_graphs.is_none() {
                let g = graphs_from_rows(tape.value(hv).data(), n, nodes, cb, k)?;
                adjacency = batch_adjacency(&g);
            }
            let wv = pv(tape, store, &format!("gnn{t}.w"))?;
            let bv = pv(tape, store, &format!("gnn{t}.b"))?;
            hv = gnn_layer(tape, hv, adjacency.clone(), k, wv, bv)?;
        }
        cur = tape.from_nodes(hv, n, hl, wl)?;
    }

    for l in (1..=cfg.levels).rev() {
        let uw = pv(tape, store, &format!("up{l}.w"))?;
        let ub = pv(tape, store, &format!("up{l}.b"))?;
        let up = tape.tconv2(cur, uw, ub)?;
        let cat = tape.concat_channels(up, skips[l - 1])?;
        cur = double_conv(tape, store, &format!("dec{l}"), cat)?;
    }
    let hw = pv(tape, store, "head.w")?;
    let hb = pv(tape, store, "head.b")?;
    let logits = tape.conv2d(cur, hw, hb, 0)?;
    let prob = tape.sigmoid(logits);
    Ok(Forward {
        prob,
        bottleneck,
        graphs,
    })
}

/// Stacks images into `[N, 1, H, W]` with intensities scaled to `[0, 1]`.
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::validation("no images to stack"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::shape(format!(
                "image {}x{} in a batch of {w}x{h}",
                img.width(),
                img.height()
            )));
        }
        data.extend(img.data().iter().map(|&v| v as f32 / 255.0));
    }
    Tensor::new(&[images.len(), 1, h, w], data)
}

/// A U-Net, or a UNet-GNN when `config.gnn_enabled`.
#[derive(Debug, Clone)]
pub struct SegNet {
    pub config: UNetConfig,
    pub params: ParamStore<f32>,
}

impl SegNet {
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(SegNet { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn predict_proba(&self, image: &Image) -> Result<ProbMap> {
        let mut tape = Tape::new();
        let x = tape.input(images_to_tensor(&[image])?, false);
        let fwd = forward(&self.config, &self.params, &mut tape, x, None)?;
        let values = tape.value(fwd.prob).data().to_vec();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                iteration: 0,
                message: "non-finite probability in forward pass".into(),
            });
        }
        Ok(ProbMap {
            width: image.width(),
            height: image.height(),
            values,
        })
    }

    pub fn predict(&self, image: &Image) -> Result<Mask> {
        Ok(predict_mask(&self.predict_proba(image)?, self.config.threshold))
    }

    pub fn save(&self, path: &Path, adam: Option<&Adam<f32>>) -> Result<()> {
        checkpoint::save(path, &self.params, adam)
    }

    /// Loads a checkpoint and checks it against the architecture of `config`.
    pub fn load(path: &Path, config: UNetConfig) -> Result<(Self, Option<Adam<f32>>)> {
        let (params, adam) = checkpoint::load::<f32>(path)?;
        let expected = init_params(&config, 0)?;
        let layout = |s: &ParamStore<f32>| -> Vec<(String, Vec<usize>)> {
            s.iter().map(|p| (p.name.clone(), p.tensor.shape().to_vec())).collect()
        };
        if layout(&params) != layout(&expected) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("parameters do not match a {} with this config", config.method_name()),
            });
        }
        Ok((SegNet { config, params }, adam))
    }
}
