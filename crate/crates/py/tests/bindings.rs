use std::ffi::CString;

use pyo3::prelude::*;

fn run(code: &str) -> PyResult<()> {
    Python::with_gil(|py| {
        let code = CString::new(code).unwrap();
        py.run(&code, None, None)
    })
}

fn init() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        pyo3::append_to_inittab!(lsg);
        pyo3::prepare_freethreaded_python();
    });
}

use lsg::lsg;

#[test]
fn module_round_trip() {
    init();
    run(r#"
import lsg
spec = lsg.SpecimenSpec(cells_x=1, cells_y=1, cells_z=4, layers_per_cell=8, pixels_per_mm=3.2)
m = spec.slice(3)
assert m == spec.slice(11)
img = lsg.render(m, preset="A", seed=1, layer_index=3)
assert lsg.gamma(img, 1.0) == img
assert lsg.gamma(lsg.Image.filled(1, 1, 128), 1.5).data() == bytes([91])
pred = lsg.Mask(2, 5, bytes([1, 1, 1, 0, 0, 0, 0, 0, 1, 0]))
truth = lsg.Mask(2, 5, bytes([1, 1, 1, 1, 0, 0, 0, 0, 0, 0]))
assert lsg.confusion(pred, truth) == (3, 5, 1, 1)
assert lsg.knn_graph([1.0, 2.0, 10.0, 30.0], 1, 2, 2, 1) == [[1], [0], [1], [2]]
net = lsg.SegNet(gnn=True, size=32, levels=2, base_channels=4, k=3)
assert len(net.predict_proba(img)) == 32 * 32
"#)
    .unwrap();
}

#[test]
fn core_errors_map_to_python_exceptions() {
    init();
    run(r#"
import lsg
for call, exc in [
    (lambda: lsg.pixelate(lsg.Image.filled(4, 4, 0), 0.0), ValueError),
    (lambda: lsg.Image(2, 2, bytes(3)), ValueError),
    (lambda: lsg.SpecimenSpec().slice(0), IndexError),
    (lambda: lsg.render(lsg.Mask(1, 1, bytes(1)), preset="C"), ValueError),
    (lambda: lsg.SegNet(size=32, levels=2, base_channels=4).load("/nonexistent/net.json"), OSError),
]:
    try:
        call()
    except exc:
        pass
    else:
        raise AssertionError(f"expected {exc.__name__}")
"#)
    .unwrap();
}
