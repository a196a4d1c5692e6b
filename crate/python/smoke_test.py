#!/usr/bin/env python3
"""Smoke test for the adaseg_py extension module.

Build the extension first:

    cargo build -p adaseg-py            # or --release

then run:

    python3 python/smoke_test.py
"""

import json
import math
import pathlib
import shutil
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libadaseg_py.so", "adaseg_py.so", "libadaseg_py.dylib")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("extension not built; run `cargo build -p adaseg-py` first")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    staging = pathlib.Path(tempfile.mkdtemp(prefix="adaseg-py-"))
    shutil.copy(newest, staging / "adaseg_py.so")
    sys.path.insert(0, str(staging))
    import adaseg_py

    return adaseg_py


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    ada = load_module()
    print(f"adaseg_py {ada.__version__}")

    # Reward math against hand values.
    r = ada.local_reward([1.0, 2.0, 3.0])
    expected = math.sqrt(3.0 / 2.0)
    assert close(r[0], -expected) and close(r[1], 0.0) and close(r[2], expected), r

    imp = ada.improvement_reward([42.0, 43.0], 41.0)
    assert close(imp[0], 2.0) and close(imp[1], 4.0), imp

    combined = ada.combined_reward([40.0, 99.0, 43.0], 39.5, 4, 8, [True, False, True])
    assert combined[1] == -1.0, combined

    # Ensemble coefficients: normalized, hand case T=2 E=2 e=1.
    c = ada.ensemble_coefficients(1, 2, 2, 0.9)
    assert close(sum(c), 1.0) and close(c[0], 1.0 / 1.9), c

    # Policy: identity predicts unit weights; seeded init is reproducible.
    identity = ada.Policy.identity(3)
    w = identity.weights([0.5, 1.25, 4.0])
    assert all(close(x, 1.0, 1e-12) for x in w), w
    a = ada.Policy(4, seed=11).forward([1.0, 2.0, 3.0, 4.0])
    b = ada.Policy(4, seed=11).forward([1.0, 2.0, 3.0, 4.0])
    assert a == b

    # Candidate sampling respects the positivity floor.
    raw, applied, validity = ada.sample_candidates([1.0, -0.5], 0.2, 64, seed=3)
    assert len(raw) == 64 and len(validity) == 64
    assert all(w >= 1e-3 for cand in applied for w in cand)
    assert not all(validity)

    # A miniature end-to-end run: explore, transfer, uniform baseline.
    config = json.loads(ada.default_config("static-imbalance"))
    config["m"] = 2
    config["checkpoints"] = 2
    config["transfer_epochs"] = 2
    config_json = json.dumps(config)

    with tempfile.TemporaryDirectory(prefix="adaseg-run-") as tmp:
        tmp = pathlib.Path(tmp)
        summary = json.loads(ada.run_explore(config_json, str(tmp / "explore"), seed=7))
        assert summary["kind"] == "explore" and summary["steps"] == 2
        for artifact in ("run.jsonl", "summary.json", "ensemble.bin", "weights_trajectory.csv"):
            assert (tmp / "explore" / artifact).exists(), artifact

        transfer = json.loads(
            ada.run_transfer(
                config_json,
                str(tmp / "explore" / "ensemble.bin"),
                str(tmp / "transfer"),
                seed=7,
            )
        )
        assert transfer["kind"] == "transfer" and len(transfer["scores"]) == 2

        uniform = json.loads(ada.run_uniform(config_json, str(tmp / "uniform"), seed=7))
        assert uniform["kind"] == "uniform"
        assert math.isfinite(uniform["final_score"])

    print("smoke test OK")


if __name__ == "__main__":
    main()
