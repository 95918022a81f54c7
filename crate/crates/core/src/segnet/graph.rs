//! Feature-space k-NN graph over the bottleneck and the graph convolution
//! `h_i^t = relu(Σ_{j ∈ kNN(i)} W·h_j^{t−1} + b)`.

use std::sync::Arc;

use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Channel-major feature map `[C, H, W]` of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T = f32> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn node_count(&self) -> usize {
        self.height * self.width
    }

    /// `h^0`: the channel vector at every location, node `y·W + x`.
    pub fn to_node_features(&self) -> NodeFeatures<T> {
        let plane = self.node_count();
        let mut values = vec![T::zero(); plane * self.channels];
        for c in 0..self.channels {
            for p in 0..plane {
                values[p * self.channels + c] = self.values[c * plane + p];
            }
        }
        NodeFeatures {
            dim: self.channels,
            values,
        }
    }
}

/// Per-node feature vectors, row-major `[nodes, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures<T = f32> {
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> NodeFeatures<T> {
    pub fn node_count(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Directed k-NN graph: node `i` has out-neighbours
/// `adjacency[i·k .. (i+1)·k]`, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub node_count: usize,
    pub k: usize,
    pub adjacency: Arc<Vec<usize>>,
}

impl Graph {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i * self.k..(i + 1) * self.k]
    }

    /// Grid location `(x, y)` of a node on a map of width `w`.
    pub fn location(node: usize, w: usize) -> (usize, usize) {
        (node % w, node / w)
    }
}

/// k nearest neighbours of every node by Euclidean distance between node
/// vectors, self excluded, ties broken by ascending node index.
pub fn knn_nodes<T: Scalar>(h: &NodeFeatures<T>, k: usize) -> Result<Graph> {
    let n = h.node_count();
    if k == 0 || k >= n {
        return Err(Error::validation(format!("k = {k} must be in [1, {n}) for {n} nodes")));
    }
    let mut adjacency = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let hi = h.node(i);
        cand.clear();
        for j in (0..n).filter(|&j| j != i) {
            let d2: f64 = hi
                .iter()
                .zip(h.node(j))
                .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum();
            cand.push((d2, j));
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        cand.select_nth_unstable_by(k - 1, order);
        cand[..k].sort_unstable_by(order);
        adjacency.extend(cand[..k].iter().map(|&(_, j)| j));
    }
    Ok(Graph {
        node_count: n,
        k,
        adjacency: Arc::new(adjacency),
    })
}

pub fn build_knn_graph<T: Scalar>(f: &FeatureMap<T>, k: usize) -> Result<Graph> {
    knn_nodes(&f.to_node_features(), k)
}

/// One graph-convolution layer on a tape. `x: [M, C]`, `w: [C, C]`, `b: [C]`.
/// Summing neighbours first and transforming once is the same linear map as
/// transforming each neighbour.
pub(crate) fn gnn_layer<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    adjacency: Arc<Vec<usize>>,
    k: usize,
    w: Var,
    b: Var,
) -> Result<Var> {
    let agg = tape.neighbor_sum(x, adjacency, k)?;
    let z = tape.linear(agg, w, b)?;
    Ok(tape.relu(z))
}

/// Applies one graph convolution to `h_prev` over `g`.
pub fn graph_conv<T: Scalar>(
    g: &Graph,
    h_prev: &NodeFeatures<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<NodeFeatures<T>> {
    let c = h_prev.dim;
    if weight.shape() != [c, c] || bias.shape() != [c] {
        return Err(Error::shape(format!(
            "graph conv on dim {c}: weight {:?}, bias {:?}",
            weight.shape(),
            bias.shape()
        )));
    }
    if h_prev.node_count() != g.node_count {
        return Err(Error::shape(format!(
            "{} node features for a {}-node graph",
            h_prev.node_count(),
            g.node_count
        )));
    }
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new(&[g.node_count, c], h_prev.values.clone())?, false);
    let w = tape.input(weight.clone(), false);
    let b = tape.input(bias.clone(), false);
    let y = gnn_layer(&mut tape, x, g.adjacency.clone(), g.k, w, b)?;
    Ok(NodeFeatures {
        dim: c,
        values: tape.value(y).data().to_vec(),
    })
}

/// Concatenates per-image graphs into one block-diagonal adjacency over the
/// batch's node rows.
pub(crate) fn batch_adjacency(graphs: &[Graph]) -> Arc<Vec<usize>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for g in graphs {
        out.extend(g.adjacency.iter().map(|&j| j + offset));
        offset += g.node_count;
    }
    Arc::new(out)
}
