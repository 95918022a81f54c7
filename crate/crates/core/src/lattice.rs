//! Parametric rhombic lattice specimens and their per-layer ground-truth slices.
//!
//! A unit cell has a node at the bottom-face center, one at the top-face
//! center and four at the mid-height centers of the vertical faces. Eight
//! capsule struts join the bottom node to every mid node and every mid node to
//! the top node. Nodes carry a sphere (`node_diameter_mm`) so that node layers
//! are visibly larger than strut layers. Cells tile the `cells_x × cells_y`
//! footprint and repeat along the build direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::seed::derive_seed;

/// Random as-built deviations applied per cell instance. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    /// Maximum node displacement along each axis, mm.
    pub node_shift_mm: f64,
    /// Relative strut radius jitter, e.g. 0.1 for ±10 %.
    pub radius_jitter: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecimenSpec {
    pub specimen_id: String,
    pub cell_size_mm: f64,
    pub strut_diameter_mm: f64,
    pub node_diameter_mm: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub cells_z: usize,
    pub layers_per_cell: usize,
    pub pixels_per_mm: f64,
    /// Offset of the specimen in build-area coordinates, mm.
    pub build_location: [f64; 2],
    pub deviation: Option<Deviation>,
}

impl Default for SpecimenSpec {
    fn default() -> Self {
        SpecimenSpec {
            specimen_id: "A".to_string(),
            cell_size_mm: 10.0,
            strut_diameter_mm: 1.5,
            node_diameter_mm: 4.0,
            cells_x: 2,
            cells_y: 2,
            cells_z: 4,
            layers_per_cell: 200,
            pixels_per_mm: 6.4,
            build_location: [0.0, 0.0],
            deviation: None,
        }
    }
}

impl SpecimenSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::validation(format!("specimen {}: {m}", self.specimen_id)));
        if !(self.cell_size_mm > 0.0) {
            return fail("cell_size_mm must be > 0");
        }
        if !(self.strut_diameter_mm > 0.0) {
            return fail("strut_diameter_mm must be > 0");
        }
        if self.strut_diameter_mm >= self.cell_size_mm {
            return fail("strut_diameter_mm must be < cell_size_mm");
        }
        if !(self.node_diameter_mm >= 0.0) || self.node_diameter_mm >= self.cell_size_mm {
            return fail("node_diameter_mm must be in [0, cell_size_mm)");
        }
        if self.layers_per_cell < 4 || self.layers_per_cell % 2 != 0 {
            return fail("layers_per_cell must be even and >= 4");
        }
        if !(self.pixels_per_mm > 0.0) {
            return fail("pixels_per_mm must be > 0");
        }
        if self.cells_x == 0 || self.cells_y == 0 || self.cells_z == 0 {
            return fail("cell counts must be >= 1");
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.cells_z * self.layers_per_cell
    }

    pub fn layer_thickness_mm(&self) -> f64 {
        self.cell_size_mm / self.layers_per_cell as f64
    }

    /// Height of the slicing plane of a 1-based layer.
    pub fn z_mm(&self, layer_index: usize) -> f64 {
        (layer_index as f64 - 0.5) * self.layer_thickness_mm()
    }

    pub fn width_px(&self) -> usize {
        (self.cells_x as f64 * self.cell_size_mm * self.pixels_per_mm).round() as usize
    }

    pub fn height_px(&self) -> usize {
        (self.cells_y as f64 * self.cell_size_mm * self.pixels_per_mm).round() as usize
    }

    fn check_layer(&self, layer_index: usize) -> Result<()> {
        if layer_index < 1 || layer_index > self.layer_count() {
            return Err(Error::Range {
                index: layer_index,
                min: 1,
                max: self.layer_count(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strut {
    pub from: usize,
    pub to: usize,
    pub radius: f64,
}

/// Geometry of one unit cell in local coordinates `[0, l]³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellModel {
    pub cell_size: f64,
    pub nodes: Vec<[f64; 3]>,
    pub struts: Vec<Strut>,
    pub node_radius: f64,
}

pub const BOTTOM_NODE: usize = 0;
pub const TOP_NODE: usize = 1;

pub fn build_cell_model(spec: &SpecimenSpec) -> Result<CellModel> {
    spec.validate()?;
    let l = spec.cell_size_mm;
    let h = l / 2.0;
    let nodes = vec![
        [h, h, 0.0],
        [h, h, l],
        [0.0, h, h],
        [l, h, h],
        [h, 0.0, h],
        [h, l, h],
    ];
    let radius = spec.strut_diameter_mm / 2.0;
    let mut struts = Vec::with_capacity(8);
    for mid in 2..6 {
        struts.push(Strut { from: BOTTOM_NODE, to: mid, radius });
    }
    for mid in 2..6 {
        struts.push(Strut { from: mid, to: TOP_NODE, radius });
    }
    Ok(CellModel {
        cell_size: l,
        nodes,
        struts,
        node_radius: spec.node_diameter_mm / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLabel {
    Node,
    Strut,
    Other,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::Node => "node",
            RegionLabel::Strut => "strut",
            RegionLabel::Other => "other",
        }
    }
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegionLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(RegionLabel::Node),
            "strut" => Ok(RegionLabel::Strut),
            "other" => Ok(RegionLabel::Other),
            _ => Err(Error::validation(format!("unknown region {s:?}"))),
        }
    }
}

/// Windows of half-width 5 % of a cell, centered on node offsets
/// `{0, 1/2, 1}` and strut offsets `{1/8, 3/8, 5/8, 7/8}` of the cell height.
pub fn region_label(layer_index: usize, spec: &SpecimenSpec) -> Result<RegionLabel> {
    spec.check_layer(layer_index)?;
    let period = spec.layers_per_cell as f64;
    let offset = (layer_index % spec.layers_per_cell) as f64;
    let half_width = 0.05 * period;
    let near = |fractions: &[f64]| {
        fractions
            .iter()
            .any(|f| (offset - f * period).abs() <= half_width)
    };
    Ok(if near(&[0.0, 0.5, 1.0]) {
        RegionLabel::Node
    } else if near(&[0.125, 0.375, 0.625, 0.875]) {
        RegionLabel::Strut
    } else {
        RegionLabel::Other
    })
}

#[derive(Clone, Copy)]
struct Capsule {
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
}

impl Capsule {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d = sub(self.b, self.a);
        let ap = sub(p, self.a);
        let len2 = dot(d, d);
        let t = if len2 > 0.0 {
            (dot(ap, d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [self.a[0] + t * d[0], self.a[1] + t * d[1], self.a[2] + t * d[2]];
        let e = sub(p, q);
        dot(e, e) <= self.radius * self.radius
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Capsules (struts and node spheres) of a cell instance in specimen
/// coordinates.
fn cell_capsules(model: &CellModel, spec: &SpecimenSpec, ix: i64, iy: i64, iz: i64) -> Vec<Capsule> {
    let l = model.cell_size;
    let origin = [ix as f64 * l, iy as f64 * l, iz as f64 * l];
    let mut nodes: Vec<[f64; 3]> = model
        .nodes
        .iter()
        .map(|n| [n[0] + origin[0], n[1] + origin[1], n[2] + origin[2]])
        .collect();
    let mut radii: Vec<f64> = model.struts.iter().map(|s| s.radius).collect();
    if let Some(dev) = spec.deviation {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
            dev.seed,
            ix as u64,
            iy as u64,
            iz as u64,
        ]));
        for n in nodes.iter_mut() {
            for c in n.iter_mut() {
                *c += rng.random_range(-1.0..=1.0) * dev.node_shift_mm;
            }
        }
        for r in radii.iter_mut() {
            *r *= 1.0 + rng.random_range(-1.0..=1.0) * dev.radius_jitter;
        }
    }
    let mut caps: Vec<Capsule> = model
        .struts
        .iter()
        .zip(&radii)
        .map(|(s, &radius)| Capsule {
            a: nodes[s.from],
            b: nodes[s.to],
            radius,
        })
        .collect();
    if model.node_radius > 0.0 {
        caps.extend(nodes.iter().map(|&n| Capsule {
            a: n,
            b: n,
            radius: model.node_radius,
        }));
    }
    caps
}

/// Rasterizes layer `layer_index` (1-based). A pixel is foreground iff its
/// center lies inside any strut or node of the cell stack. The stack is
/// treated as vertically periodic, so every layer sees its neighbours above
/// and below.
pub fn slice_specimen(spec: &SpecimenSpec, layer_index: usize) -> Result<Mask> {
    let model = build_cell_model(spec)?;
    spec.check_layer(layer_index)?;
    let l = spec.cell_size_mm;
    let z = spec.z_mm(layer_index);
    let iz = (z / l).floor() as i64;
    let (w, h) = (spec.width_px(), spec.height_px());

    // All capsules from the cell rows touching the plane, grouped by (ix, iy)
    // so each pixel only tests its 3×3 neighbourhood.
    let nx = spec.cells_x as i64;
    let ny = spec.cells_y as i64;
    let mut per_cell: Vec<Vec<Capsule>> = Vec::with_capacity((nx * ny) as usize);
    for iy in 0..ny {
        for ix in 0..nx {
            let mut caps = Vec::new();
            for dz in -1..=1 {
                caps.extend(cell_capsules(&model, spec, ix, iy, iz + dz));
            }
            per_cell.push(caps);
        }
    }

    let ppmm = spec.pixels_per_mm;
    Ok(Mask::from_fn(w, h, |px, py| {
        let p = [(px as f64 + 0.5) / ppmm, (py as f64 + 0.5) / ppmm, z];
        let cx = ((p[0] / l).floor() as i64).clamp(0, nx - 1);
        let cy = ((p[1] / l).floor() as i64).clamp(0, ny - 1);
        for iy in (cy - 1).max(0)..=(cy + 1).min(ny - 1) {
            for ix in (cx - 1).max(0)..=(cx + 1).min(nx - 1) {
                if per_cell[(iy * nx + ix) as usize].iter().any(|c| c.contains(p)) {
                    return true;
                }
            }
        }
        false
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cell_has_six_nodes_eight_struts() {
        let m = build_cell_model(&SpecimenSpec::default()).unwrap();
        assert_eq!(m.nodes.len(), 6);
        assert_eq!(m.struts.len(), 8);
        assert!(m.struts.iter().all(|s| s.radius == 0.75));
    }

    #[test]
    fn cell_is_mirror_symmetric_and_bounded() {
        let m = build_cell_model(&SpecimenSpec::default()).unwrap();
        let l = m.cell_size;
        let mirror = |p: [f64; 3]| [p[0], p[1], l - p[2]];
        for s in &m.struts {
            let (a, b) = (mirror(m.nodes[s.from]), mirror(m.nodes[s.to]));
            assert!(m.struts.iter().any(|t| {
                let (c, d) = (m.nodes[t.from], m.nodes[t.to]);
                (c == a && d == b) || (c == b && d == a)
            }));
        }
        for n in &m.nodes {
            assert!(n.iter().all(|&c| (0.0..=l).contains(&c)));
        }
    }

    #[test]
    fn invalid_specs_name_the_invariant() {
        let mut s = SpecimenSpec::default();
        s.layers_per_cell = 7;
        let e = build_cell_model(&s).unwrap_err().to_string();
        assert!(e.contains("layers_per_cell"), "{e}");

        let mut s = SpecimenSpec::default();
        s.strut_diameter_mm = 12.0;
        let e = build_cell_model(&s).unwrap_err().to_string();
        assert!(e.contains("strut_diameter_mm"), "{e}");
    }

    #[test]
    fn region_labels_match_window_layout() {
        let spec = SpecimenSpec::default();
        assert_eq!(region_label(400, &spec).unwrap(), RegionLabel::Node);
        assert_eq!(region_label(625, &spec).unwrap(), RegionLabel::Strut);
        assert_eq!(region_label(450, &spec).unwrap(), RegionLabel::Other);
        assert_eq!(region_label(410, &spec).unwrap(), RegionLabel::Node);
        assert_eq!(region_label(411, &spec).unwrap(), RegionLabel::Other);
        assert!(matches!(region_label(0, &spec), Err(Error::Range { .. })));
        assert!(matches!(region_label(801, &spec), Err(Error::Range { .. })));
    }

    #[test]
    fn layer_out_of_range() {
        let spec = SpecimenSpec::default();
        assert!(matches!(slice_specimen(&spec, 0), Err(Error::Range { .. })));
        assert!(matches!(
            slice_specimen(&spec, spec.layer_count() + 1),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn footprint_matches_resolution() {
        let spec = SpecimenSpec::default();
        let m = slice_specimen(&spec, 1).unwrap();
        assert_eq!((m.width(), m.height()), (128, 128));
    }

    #[test]
    fn deviation_changes_geometry_deterministically() {
        let mut spec = SpecimenSpec::default();
        spec.layers_per_cell = 20;
        let nominal = slice_specimen(&spec, 3).unwrap();
        spec.deviation = Some(Deviation {
            node_shift_mm: 0.3,
            radius_jitter: 0.2,
            seed: 9,
        });
        let a = slice_specimen(&spec, 3).unwrap();
        let b = slice_specimen(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, nominal);
    }
}
