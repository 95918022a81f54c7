"""Smoke test for the lsg extension module.

Build first, e.g. `pip install --no-build-isolation -e crates/py`, then run
`python crates/py/python/smoke_test.py`.
"""

import math
import os
import tempfile

import lsg


def main():
    spec = lsg.SpecimenSpec(cells_x=1, cells_y=1, cells_z=4, layers_per_cell=8, pixels_per_mm=3.2)
    assert spec.layer_count == 32 and spec.width_px == 32
    nominal = spec.slice(1)
    assert 0 < nominal.foreground_count() < 32 * 32
    assert spec.slice(1) == spec.slice(9)
    assert spec.region(1) in ("node", "strut", "other")

    image = lsg.render(nominal, preset="B", seed=3, specimen_id="A", layer_index=1)
    assert (image.width, image.height) == (32, 32)
    assert len(image.data()) == 32 * 32

    assert lsg.gamma(image, 1.0) == image
    assert lsg.pixelate(image, 1.0) == image
    assert lsg.gaussian_noise(image, 0.0, 5) == image
    assert lsg.gamma(lsg.Image.filled(1, 1, 128), 1.5).data() == bytes([91])
    noisy = lsg.perturb_preset(image, "gaussian_noise", "high", seed=1, salt=2)
    assert noisy != image

    assert lsg.accuracy(nominal, nominal) == 1.0
    assert lsg.accuracy(nominal, nominal.complement()) == 0.0
    pred = lsg.Mask(2, 5, bytes([1, 1, 1, 0, 0, 0, 0, 0, 1, 0]))
    truth = lsg.Mask(2, 5, bytes([1, 1, 1, 1, 0, 0, 0, 0, 0, 0]))
    assert lsg.confusion(pred, truth) == (3, 5, 1, 1)
    assert math.isclose(lsg.accuracy(pred, truth), 0.8)

    adjacency = lsg.knn_graph([1.0, 2.0, 10.0, 30.0], 1, 2, 2, 1)
    assert adjacency == [[1], [0], [1], [2]]

    contour = lsg.active_contour(image, nominal, w=0.5, r_kernel=3, max_iters=50)
    print("active contour accuracy", lsg.accuracy(contour, nominal))

    net = lsg.SegNet(gnn=True, size=32, levels=2, base_channels=4, k=3, seed=0)
    images = [lsg.render(spec.slice(n), seed=0, layer_index=n) for n in range(1, 9)]
    masks = [spec.slice(n) for n in range(1, 9)]
    losses = net.train(images, masks, epochs=2, batch_size=4, learning_rate=1e-2)
    assert len(losses) == 2 and all(math.isfinite(l) for l in losses)
    prob = net.predict_proba(images[0])
    assert len(prob) == 32 * 32 and all(0.0 <= p <= 1.0 for p in prob)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "net.json")
        net.save(path)
        other = lsg.SegNet(gnn=True, size=32, levels=2, base_channels=4, k=3, seed=9)
        other.load(path)
        assert other.predict(images[0]) == net.predict(images[0])

    try:
        lsg.pixelate(image, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("pixelate(0) should raise ValueError")

    print("lsg smoke test passed:", net.method, net.parameter_count, "parameters, losses", losses)


if __name__ == "__main__":
    main()
