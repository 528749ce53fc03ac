"""Smoke test for the dqam_py extension module.

Build first with `cargo build -p dqam-py --release`; the script copies the
shared library next to itself as `dqam_py.so` when it is not importable.
"""
import json
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def load():
    try:
        import dqam_py
        return dqam_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libdqam_py.so", "libdqam_py.dylib"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                shutil.copy(lib, HERE / "dqam_py.so")
                sys.path.insert(0, str(HERE))
                import dqam_py
                return dqam_py
    sys.exit("dqam_py not built; run `cargo build -p dqam-py --release`")


def main():
    dq = load()

    # two paths on a 4x4 grid: the top row query sees each once
    h = dq.SpatialHistogram.from_paths(
        [[(0, 0), (0, 1), (1, 1), (1, 2), (0, 2), (0, 3)], [(3, 0), (3, 1), (3, 2)]], 4, 4
    )
    assert h.query(0, 0, 0, 3) == 2.0
    assert h.query(0, 3, 0, 3) == 2.0
    assert h.is_consistent()
    again = dq.SpatialHistogram.from_json(h.to_json())
    assert again.faces == h.faces and again.edges_v == h.edges_v

    trajs = dq.gen_skewed(500, 5, (0.3, 0.7), resolution=4, seed=1)
    truth, rejected = dq.ingest(trajs, (0.0, 0.0, 1.0, 1.0), 4)
    assert truth.n == 500 and not rejected

    queries = dq.gen_queries(truth.rows, truth.cols, 2000, seed=2)
    assert queries == dq.gen_queries(truth.rows, truth.cols, 2000, seed=2)
    assert truth.query_many(queries[:5]) == [truth.query(*q) for q in queries[:5]]

    regions, densities, delta = dq.partition(truth, 1.0, seed=3)
    assert sum(r[2] * r[3] for r in regions) == 256 and len(densities) == len(regions)

    pub, n_regions, trace = dq.synthesize(truth, queries, 1.0, seed=3)
    assert pub.is_consistent() and n_regions == len(regions)
    assert len(trace.splitlines()) == 10
    assert dq.publish(truth, queries, 1.0, seed=3).to_json() == pub.to_json()

    err = dq.avg_l1_error(truth, pub, queries)
    print(f"dqam avg_l1={err:.2f} kld={dq.kld(truth, pub):.3f}")
    for mech in ("mwem_face", "lm"):
        other = dq.publish(truth, queries, 1.0, seed=3, mechanism=mech)
        print(f"{mech} avg_l1={dq.avg_l1_error(truth, other, queries):.2f}")

    noisy = dq.publish(truth, queries, 0.5, seed=4, mechanism="lm")
    fixed, cost = dq.consistent_inference(noisy)
    greedy, greedy_cost = dq.greedy_repair(noisy)
    assert fixed.is_consistent() and cost <= greedy_cost + 1e-6

    assert dq.rasterize([(0.1, 0.1), (0.1, 0.4)], (0.0, 0.0, 1.0, 1.0), 2) == [(0, 0), (0, 1)]

    try:
        dq.SpatialHistogram(0, 4)
    except dq.DqamError as e:
        assert "validation" in str(e)
    else:
        raise AssertionError("zero-size grid accepted")

    csv = dq.run_experiment(json.dumps({
        "mechanisms": ["dqam", "lm"], "epsilons": [1.0],
        "datasets": [{"name": "u", "model": "uniform", "n": 100, "mean_len": 3, "resolution": 3}],
        "seeds": [1], "T": 3, "query_count": 100,
    }))
    assert len(csv.strip().splitlines()) == 3
    print("smoke test ok")


if __name__ == "__main__":
    main()
