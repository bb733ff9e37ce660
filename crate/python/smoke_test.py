#!/usr/bin/env python3
"""Smoke test for the rclpy extension module.

Builds nothing itself: it expects `cargo build -p rcl-python --release`
to have produced target/release/librclpy.so, stages it as an importable
module, then runs a generate -> load -> diagnose -> evaluate round trip.
"""

import json
import pathlib
import shutil
import sys
import tempfile

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent


def stage_module(tmp: pathlib.Path) -> None:
    candidates = [
        REPO_ROOT / "target" / "release" / "librclpy.so",
        REPO_ROOT / "target" / "release" / "librclpy.dylib",
        REPO_ROOT / "target" / "debug" / "librclpy.so",
    ]
    for built in candidates:
        if built.exists():
            suffix = ".so" if built.suffix != ".dylib" else ".so"
            shutil.copy2(built, tmp / f"rclpy{suffix}")
            sys.path.insert(0, str(tmp))
            return
    sys.exit(
        "librclpy not found; run `cargo build -p rcl-python --release` first"
    )


def main() -> None:
    tmpdir = pathlib.Path(tempfile.mkdtemp(prefix="rclpy-smoke-"))
    stage_module(tmpdir)
    import rclpy

    scenario = {
        "fan_outs": [2, 2],
        "pods_per_service": 2,
        "num_nodes": 3,
        "fault_kind": "POD_LATENCY",
        "target": {"level": "POD", "name": "svc05-0"},
        "magnitude": 130.0,
        "baseline_ms": 100,
        "normal_traces": 8,
        "noise_seed": 5,
    }
    data_dir = tmpdir / "dataset"
    rclpy.generate_fixture(json.dumps(scenario), data_dir, seed=9)

    bundle = rclpy.load_dataset(data_dir)
    assert bundle.span_count() > 0, "no spans loaded"
    assert bundle.metric_point_count() > 0, "no metrics loaded"
    assert bundle.failure_trace_ids() == ["t-fault-000"]

    detected = bundle.detect_failures()
    assert detected == ["t-fault-000"], f"unexpected detection: {detected}"

    report = json.loads(bundle.diagnose("t-fault-000"))
    top = report["ranked"][0]
    assert (top["level"], top["name"]) == ("POD", "svc05-0"), top
    assert report["root_report"]["confidence"] > 0.5
    assert report["evidence_graph"]["nodes"], "evidence graph missing"

    benchmark = json.loads(bundle.evaluate())
    assert benchmark["cases"] == 1
    assert benchmark["recall_at_1"] == 1.0
    assert benchmark["mrr"] == 1.0

    assert rclpy.mrr([1, 2, None]) == 0.5
    assert abs(rclpy.recall_at_k([1, 4, None], 3) - 1 / 3) < 1e-12

    print("rclpy smoke test: all checks passed")
    print(f"  dataset: {data_dir}")
    print(f"  rank 1: {top['level']} {top['name']} (score {top['score']:.3f})")
    print(f"  benchmark: recall@1={benchmark['recall_at_1']}, mrr={benchmark['mrr']}")


if __name__ == "__main__":
    main()
