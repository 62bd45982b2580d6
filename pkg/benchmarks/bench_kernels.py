"""Compare the compiled and pure-Python kernels on the default acquisition.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, and checks
that both backends return identical arrays.
"""

import argparse
import time

import numpy as np

from drus import kernels
from drus.config import RunConfig
from drus.geometry import apodization_matrix, delay_matrix


def best_of(fn, repeat):
    out, times = None, []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(np.asarray(u), np.asarray(v)) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    setup = RunConfig.preset().acquisition()
    tau = delay_matrix(setup)
    w = apodization_matrix(setup.apodization, setup)
    k = setup.geometry.sample_count
    p = setup.pulse
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled extension not built; timing the Python backend only")

    indptr, indices, data = impls["python"].assemble_echo_columns(tau, w, p.samples, p.center, k)
    n_rows = k * setup.geometry.element_count
    x = np.random.default_rng(0).standard_normal(tau.shape[0])
    cases = {
        "assemble H": lambda m: m.assemble_echo_columns(tau, w, p.samples, p.center, k),
        "assemble DAS": lambda m: m.assemble_das_rows(tau, w, k, True),
        "H @ x (csc)": lambda m: m.csc_matvec(indptr, indices, data, x, n_rows),
    }
    print(f"grid {setup.grid.shape}, {setup.geometry.element_count} receivers, "
          f"H {n_rows}x{tau.shape[0]} with {data.size} nonzeros")
    print(f"{'kernel':<14} " + " ".join(f"{name:>10}" for name in impls) + "   speedup  identical")
    for label, fn in cases.items():
        res = {name: best_of(lambda: fn(m), args.repeat) for name, m in impls.items()}
        cols = " ".join(f"{res[name][0] * 1e3:8.2f}ms" for name in impls)
        if "cython" in res:
            sp = res["python"][0] / res["cython"][0]
            ok = same(res["python"][1], res["cython"][1])
            print(f"{label:<14} {cols}   {sp:6.1f}x  {ok}")
        else:
            print(f"{label:<14} {cols}")


if __name__ == "__main__":
    main()
