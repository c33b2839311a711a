"""Time the compiled and pure-numpy paths of the hot kernels.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called once per backend to warm up (numba compiles or loads its cache),
then timed ``N`` times; the best time is reported.
"""

import argparse
import time

import numpy as np

from imrkpm import _accel, rk, svm, verify
from imrkpm import discretization as disc
from imrkpm import material as mat
from imrkpm import solver as S
from imrkpm.imaging import ImageGrid


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def shapes_case(n=40, n_points=20000):
    rng = np.random.default_rng(0)
    f = svm.CircleScore((0.5, 0.5), 0.27)
    nodes = verify.perturbed_cloud(n, field_=f, rng=rng)
    pts = rng.uniform(0, 1, (n_points, 2))
    return lambda backend: rk.shape_functions_at(pts, nodes, f, use_im=True, backend=backend)


def smo_case(n=600):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, (n, 2))
    y = np.where(np.hypot(pts[:, 0], pts[:, 1]) < 0.6, 1.0, -1.0)
    return lambda backend: svm.train_svm(pts, y, 0.3, 100.0, backend=backend)


def assembly_case(n=60):
    img = ImageGrid(np.zeros((n, n)), pixel_size=1.0 / n)
    f = svm.ConstantScore(1.0)
    nodes = disc.generate_nodes(img, f)
    quad = disc.build_quadrature(img.extent, img.pixel_size, 2)
    lengths = mat.RegularizationLengths(0.1, 0.006, img.pixel_size)
    phase = mat.PhaseProperties.from_gpa(3.66, 0.358, 0.536)
    models = {b: S.build_model(nodes, quad, f, phase, lengths=lengths, backend=b) for b in ("numba", "numpy")}
    rng = np.random.default_rng(2)
    u = 1e-3 * rng.standard_normal(models["numpy"].n_dof)
    d = rng.uniform(0, 0.5, models["numpy"].n_points)
    return lambda backend: S.assemble(models[backend], u, d)


CASES = {
    "IM-RK shape functions (1.6k nodes, 20k points)": shapes_case,
    "SMO training (600 points)": smo_case,
    "stiffness assembly (3.6k nodes)": assembly_case,
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    print(f"{'kernel':48s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, make in CASES.items():
        run = make()
        t = {b: best_of(lambda: run(b), args.repeat) for b in ("numba", "numpy")}
        print(f"{name:48s} {t['numba']:10.4f} {t['numpy']:10.4f} {t['numpy'] / t['numba']:9.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
