"""Smoke test for the kpiroot_py extension.

Either install it (``maturin develop -m crates/python/Cargo.toml``) or build
it with ``cargo build --release -p kpiroot-py``; in the latter case the
shared library is picked up from ``target/release``.
"""

import json
import pathlib
import shutil
import sys
import tempfile


def import_module():
    try:
        import kpiroot_py

        return kpiroot_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for name in ("libkpiroot_py.so", "libkpiroot_py.dylib", "kpiroot_py.dll"):
        built = root / "target" / "release" / name
        if built.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            suffix = ".pyd" if name.endswith(".dll") else ".so"
            shutil.copy(built, tmp / ("kpiroot_py" + suffix))
            sys.path.insert(0, str(tmp))
            import kpiroot_py

            return kpiroot_py
    sys.exit("kpiroot_py not found; build it with `cargo build --release -p kpiroot-py`")


def main():
    kp = import_module()

    z = kp.znormalize([1.0, 2.0, 3.0, 4.0])
    assert abs(sum(z)) < 1e-12
    assert kp.paa([1.0, 1.0, 3.0, 3.0], 2) == [1.0, 3.0]
    assert kp.jaccard([9, 9, 10], [9, 10, 11]) == 0.5
    assert kp.symbols([5.0] * 40, 4) == [18] * 4

    scenario = kp.generate_scenario(3, m=15, n=1440, period=48, roots=3)
    assert len(scenario.candidates) == 15
    config = kp.RunConfig(scenario.period)
    report = kp.localize(scenario.alarm, scenario.candidates, config, incident_id=scenario.incident_id)
    assert report.anomaly_detected
    metrics = kp.evaluate(report.ranked_ids, report.predicted, scenario.root_causes)
    assert metrics["hit@10"] == 1.0, metrics
    parsed = json.loads(report.to_json())
    assert parsed["config"]["period"] == 48

    trend, seasonal, residual = kp.stl(scenario.alarm, 48)
    assert max(abs(t + s + r - y) for t, s, r, y in zip(trend, seasonal, residual, scenario.alarm)) < 1e-9

    try:
        kp.RunConfig(48, encoding="bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("bad encoding accepted")

    top = ", ".join(report.ranked_ids[:5])
    print(f"ok: {report!r}; top 5: {top}; hit@10 {metrics['hit@10']:.2f}, ndcg@10 {metrics['ndcg@10']:.2f}")


if __name__ == "__main__":
    main()
