"""Smoke test for the poleloc_py extension module."""

import math
import os
import tempfile

import poleloc_py as pl


def main():
    pose = pl.Pose2(3.0, -2.0, 0.5)
    back = pose.compose(pose.inverse())
    assert abs(back.tx) < 1e-12 and abs(back.ty) < 1e-12 and abs(back.theta) < 1e-12

    world = pl.generate_world(120.0, 120.0, 150, seed=4)
    assert len(world) == 150

    labels, centroids, sse, converged = pl.kmeans_fit(world.descriptors(), 4, seed=1)
    assert converged and len(centroids) == 4
    assert all(b <= a + 1e-9 for a, b in zip(sse, sse[1:]))
    world.set_classes(labels)

    truth = pl.Pose2(60.0, 60.0, 1.2)
    local = pl.observe(world, truth, sensor_range=30.0)
    est, score = pl.localize(local, world, mode="baseline")
    assert math.hypot(est.tx - truth.tx, est.ty - truth.ty) < 1e-6, est
    assert score == len(local)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "world.csv")
        world.save(path)
        again = pl.PoleMap.load(path)
        assert again.ids() == world.ids()
        assert again.classes() == world.classes()

    assert pl.accuracy([(0.0, 0.0), None, (3.0, 0.0)], [(0.5, 0.0)] * 3, 1.0) == 100.0 / 3.0

    points = [
        [5.05 + 0.05 * (i % 3), 5.05 + 0.05 * (i % 5), 0.1 + 0.2 * (i // 6)]
        for i in range(6 * 15)
    ]
    poles = pl.extract_poles(points)
    assert len(poles) == 1, poles

    try:
        pl.localize(local, world, mode="fancy")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown mode accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
