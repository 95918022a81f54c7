use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the U-Net backbone and the optional graph bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub gnn_enabled: bool,
    pub gnn_layers: usize,
    pub k_neighbors: usize,
    /// Rebuild the k-NN graph from `h^t` before every graph layer instead of
    /// reusing the graph built from `h^0`.
    pub rebuild_graph_per_layer: bool,
    pub threshold: f64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            levels: 3,
            base_channels: 8,
            input_height: 128,
            input_width: 128,
            gnn_enabled: false,
            gnn_layers: 2,
            k_neighbors: 8,
            rebuild_graph_per_layer: false,
            threshold: 0.5,
        }
    }
}

impl UNetConfig {
    pub fn unet() -> Self {
        Self::default()
    }

    pub fn unet_gnn() -> Self {
        UNetConfig {
            gnn_enabled: true,
            ..Self::default()
        }
    }

    /// Small configuration used for gradient checks.
    pub fn tiny(gnn_enabled: bool) -> Self {
        UNetConfig {
            levels: 2,
            base_channels: 4,
            input_height: 16,
            input_width: 16,
            gnn_enabled,
            gnn_layers: 2,
            k_neighbors: 3,
            rebuild_graph_per_layer: false,
            threshold: 0.5,
        }
    }

    pub fn method_name(&self) -> &'static str {
        if self.gnn_enabled {
            "unet_gnn"
        } else {
            "unet"
        }
    }

    /// Channels of encoder level `l` (1-based).
    pub fn level_channels(&self, l: usize) -> usize {
        self.base_channels << (l - 1)
    }

    /// Channel count `C` of the bottleneck map `F_L`.
    pub fn bottleneck_channels(&self) -> usize {
        self.base_channels << self.levels
    }

    /// `(H_L, W_L)`.
    pub fn bottleneck_size(&self) -> (usize, usize) {
        (self.input_height >> self.levels, self.input_width >> self.levels)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.levels == 0 || self.base_channels == 0 {
            return fail("levels and base_channels must be >= 1".into());
        }
        let div = 1usize << self.levels;
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % div != 0
            || self.input_width % div != 0
        {
            return Err(Error::shape(format!(
                "input {}x{} not divisible by 2^{} = {div}",
                self.input_height, self.input_width, self.levels
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.gnn_enabled {
            let (h, w) = self.bottleneck_size();
            if self.k_neighbors == 0 || self.k_neighbors >= h * w {
                return fail(format!(
                    "k_neighbors {} must be in [1, {}) for a {h}x{w} bottleneck",
                    self.k_neighbors,
                    h * w
                ));
            }
        }
        Ok(())
    }
}
