"""Smoke test for the `knudsen` extension module.

Build it first:
    cargo build --release -p knudsen-py --features extension-module
then run `python3 python/smoke_test.py`; the script looks for the shared
library under target/release unless KNUDSEN_LIB points at it.
"""

import importlib.machinery
import importlib.util
import json
import math
import os
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    default = ROOT / "target" / "release" / ("knudsen.dll" if os.name == "nt" else "libknudsen.so")
    if sys.platform == "darwin":
        default = default.with_name("libknudsen.dylib")
    path = pathlib.Path(os.environ.get("KNUDSEN_LIB", default))
    loader = importlib.machinery.ExtensionFileLoader("knudsen", str(path))
    spec = importlib.util.spec_from_loader("knudsen", loader)
    mod = importlib.util.module_from_spec(spec)
    loader.exec_module(mod)
    return mod


def main():
    k = load()
    print("knudsen", k.__version__)

    ann = k.TubeProfile.annulus(0.1)
    assert ann.is_annulus and ann.epsilon == 0.1
    assert abs(ann.curvature(0.3, 1) - 1 / 0.9) < 1e-12

    # radial launch from the inner circle crosses the width straight out
    da, length, hit = k.annulus_chord(0.1, 0.0, 1)
    assert da == 0.0 and abs(length - 0.1) < 1e-15 and hit == 0

    ex = k.TubeProfile.example(0.01)
    assert abs(ex.h(0.0) - 2.5) < 1e-15 and abs(ex.h_prime(0.0) - 0.5) < 1e-15
    assert json.loads(ex.validate())["passed"]

    events = k.simulate(ex, 200, seed=7)
    assert len(events) == 201
    assert all(b[0] > a[0] for a, b in zip(events, events[1:]))
    assert events == k.simulate(ex, 200, seed=7)

    rep = json.loads(k.verify_lemma("remain", epsilons=[0.05], n=200_000))
    assert rep["lemma_id"] == "remain" and rep["pass"], rep
    assert "t_equals_r" in k.lemma_ids()

    ratio = k.quadrature_ex2(1e-6) / k.variance_scale(1e-6)
    assert abs(ratio - 1) < 0.1, ratio

    samples = k.sde_ensemble([1.0], 2000, seed=3, dt=1e-2)[0]
    mean = sum(samples) / len(samples)
    var = sum((x - mean) ** 2 for x in samples) / (len(samples) - 1)
    assert abs(var - 1) < 4 * math.sqrt(2 / len(samples)), var

    d, p = k.ks_two_sample(samples[:1000], samples[1000:])
    assert 0 <= d <= 1 and p > 0.001

    beta = k.rescaled_path(k.TubeProfile.annulus(0.05), [0.0, 0.5], seed=1)
    assert beta[0] == 0.0 and len(beta) == 2

    inv = json.loads(k.compare_invariance(k.TubeProfile.annulus(0.05), [0.5], n_paths=200))
    assert inv["reference"] == "brownian"

    try:
        k.TubeProfile.annulus(0.7)
    except ValueError:
        pass
    else:
        raise AssertionError("width 0.7 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
