# -*- coding: utf-8 -*-
"""
grader/grade.py

Acceptance grader for asndepth. Every criterion is one named case:

  plane_exactness      ASN, Sobel and least squares recover analytic planes (< 1e-4 deg, < 1 s at 128x128)
  gradient_oracle      analytic loss gradient vs central differences on 16x16 hemispheres, 5 seeds (< 30 s)
  area_robustness      area weighting <= uniform averaging at every noise level (mean over 3 seeds)
  triplet_saturation   error(K=40) <= error(K=10); gain 40->60 <= 25% of gain 10->20
  boundary_awareness   oracle-guided ASN <= 50% of Sobel and of constant-guided ASN inside the 2 px band
  ablation_ordering    Area+GC <= min(only Area, only GC) on the noisy step
  patch_insensitivity  spread of error over r in {3,5,7,9} <= 15% of its minimum
  metric_examples      closed-form metric values
  determinism          byte-identical outputs across runs and across --threads 1 / 8
  complexity_ordinal   ASN time linear in K (within 20%); lsq(r=9) per pixel > ASN(K=40) per pixel

Prints PASS:<name>: ... / FAIL:<name>: ... per case, then GRADE:PASS or GRADE:FAIL.
"""

import contextlib
import io
import os
import sys
import tempfile
import time
from collections import defaultdict

try:
    import numpy as np
except Exception as e:
    print("FAIL: numpy not available in environment:", e)
    sys.exit(1)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

try:
    from asndepth import cli, experiments
    from asndepth.asn import asn_normals
    from asndepth.backproject import backproject
    from asndepth.baselines import lsq_normal, sobel_normal
    from asndepth.config import AsnConfig, SceneConfig
    from asndepth.core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap
    from asndepth.metrics import depth_metrics, normal_metrics, pointcloud_metrics
    from asndepth.synthetic import gen_plane, make_scene
except Exception as e:
    print("FAIL: importing asndepth raised an exception:", e)
    sys.exit(1)

PLANES = [((0.3, -0.2, 1.0), 3.0), ((0.0, 0.0, 1.0), 2.0), ((1.0, 0.0, 1.0), 2.0), ((-0.4, 0.5, 1.0), 4.0)]


def _mean_by(rows, key, metric="mean_angle_deg"):
    """Mean ``value`` per ``key(row)`` over rows of ``metric``."""
    acc = defaultdict(list)
    for row in rows:
        if row["metric"] == metric:
            acc[key(row)].append(float(row["value"]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


# ---------- criteria; each returns (ok, detail) ----------


def check_plane_exactness():
    intr = Intrinsics.for_resolution(128)
    interior = np.zeros(intr.shape, dtype=bool)
    interior[4:-4, 4:-4] = True
    worst, slowest = 0.0, 0.0
    for normal, offset in PLANES:
        scene = gen_plane(intr, normal, offset)
        pm = backproject(scene.depth, intr)
        estimators = {
            "asn": lambda: asn_normals(pm, GuidanceFeatureMap.constant(pm.shape), AsnConfig()),
            "sobel": lambda: sobel_normal(pm),
            "lsq": lambda: lsq_normal(pm, 5),
        }
        for name, fn in estimators.items():
            start = time.perf_counter()
            pred = fn()
            slowest = max(slowest, time.perf_counter() - start)
            err = experiments.mean_angle(pred, scene.normals_gt, interior)
            if err >= 1e-4:
                return False, f"{name} on plane n={normal}: mean error {err:.3g} deg"
            worst = max(worst, err)
    return slowest < 1.0, f"worst mean error {worst:.3g} deg, slowest estimator {slowest:.2f} s"


def check_gradient_oracle():
    start = time.perf_counter()
    rows = experiments.run_gradcheck(res=16, seeds=range(5))
    elapsed = time.perf_counter() - start
    fractions = [float(r["value"]) for r in rows if r["metric"] == "pass_fraction"]
    ok = all(f >= 0.99 for f in fractions) and elapsed < 30.0
    return ok, f"pass fractions {[round(f, 4) for f in fractions]}, {elapsed:.1f} s"


def check_area_robustness():
    rows = experiments.noise_experiment()
    means = _mean_by(rows, lambda r: (r["param_value"], r["estimator"]))
    bad = [s for s in experiments.NOISE_SIGMAS if means[(s, "asn-area")] > means[(s, "asn-uniform")]]
    detail = ", ".join(
        f"sigma={s}: {means[(s, 'asn-area')]:.3f} vs {means[(s, 'asn-uniform')]:.3f}" for s in experiments.NOISE_SIGMAS
    )
    return not bad, detail


def check_triplet_saturation():
    rows = experiments.sweep_k(klist=(10, 20, 40, 60))
    e = _mean_by(rows, lambda r: r["param_value"])
    gain_low, gain_high = e[10] - e[20], e[40] - e[60]
    ok = e[40] <= e[10] and gain_high <= 0.25 * gain_low
    return ok, f"errors { {k: round(v, 4) for k, v in sorted(e.items())} }"


def check_boundary_awareness():
    rows = experiments.boundary_comparison()
    e = _mean_by(rows, lambda r: (r["scene"], r["estimator"]), "band_mean_angle_deg")
    details, ok = [], True
    for kind in ("step", "wedge"):
        oracle, const, sobel = e[(kind, "asn-oracle")], e[(kind, "asn-constant")], e[(kind, "sobel")]
        ok &= oracle <= 0.5 * sobel and oracle <= 0.5 * const
        details.append(f"{kind}: oracle {oracle:.3f}, constant {const:.3f}, sobel {sobel:.3f}")
    return ok, "; ".join(details)


def check_ablation_ordering():
    rows = experiments.ablation()
    e = _mean_by(rows, lambda r: r["estimator"])
    ok = e["asn-both"] <= min(e["asn-area"], e["asn-gc"])
    return ok, ", ".join(f"{k}={v:.3f}" for k, v in sorted(e.items()))


def check_patch_insensitivity():
    rows = experiments.sweep_patch()
    e = _mean_by(rows, lambda r: r["param_value"])
    lo, hi = min(e.values()), max(e.values())
    return hi - lo <= 0.15 * lo, f"errors { {k: round(v, 4) for k, v in sorted(e.items())} }"


def check_metric_examples():
    g = DepthMap.dense(np.linspace(1.0, 4.0, 64).reshape(8, 8))
    same = depth_metrics(g, g)
    if any(same[k] != 0.0 for k in ("rel", "log10", "rms")) or any(same[k] != 1.0 for k in ("delta1", "delta2", "delta3")):
        return False, f"identity depth metrics {same}"
    shifted = depth_metrics(DepthMap.dense(g.values + 0.5), g)
    want_rel = float(np.mean(0.5 / g.values))
    if abs(shifted["rms"] - 0.5) > 1e-12 or abs(shifted["rel"] - want_rel) > 1e-12:
        return False, f"offset depth metrics {shifted}"
    n = NormalMap.uniform((0.0, 0.0, -1.0), (8, 8))
    nm = normal_metrics(n, n)
    if nm["mean"] != 0.0 or nm["within_11.25"] != 1.0:
        return False, f"identity normal metrics {nm}"
    intr = Intrinsics.for_resolution(8)
    pc = pointcloud_metrics(backproject(g, intr), backproject(g, intr))
    if pc["dist"] != 0.0 or pc["within_0.1m"] != 1.0:
        return False, f"identity cloud metrics {pc}"
    return True, "identity and constant-offset values exact"


def _quiet_cli(argv):
    """``cli.run`` with its progress lines kept out of the case report."""
    with contextlib.redirect_stdout(io.StringIO()):
        return cli.run(argv)


def check_determinism():
    scene = make_scene(SceneConfig(kind="step", res=64, sigma=0.005))
    pm = backproject(scene.depth, scene.intr)
    f = GuidanceFeatureMap.constant(pm.shape)
    a = asn_normals(pm, f, AsnConfig(), threads=1)
    b = asn_normals(pm, f, AsnConfig(), threads=8)
    if a.normals.tobytes() != b.normals.tobytes():
        return False, "asn_normals differs between 1 and 8 threads"
    with tempfile.TemporaryDirectory() as tmp:
        if _quiet_cli(["scene", "--kind", "hemisphere", "--res", "48", "--sigma", "0.01", "--outdir", tmp]) != 0:
            return False, "scene subcommand failed"
        blobs = []
        for i, threads in enumerate(("1", "8", "1")):
            out = os.path.join(tmp, f"n{i}.asnr")
            argv = ["normals", "--depth", os.path.join(tmp, "depth.asnr"), "--intrinsics",
                    os.path.join(tmp, "intrinsics.txt"), "--guidance", "oracle", "--threads", threads, "--out", out]
            if _quiet_cli(argv) != 0:
                return False, f"normals subcommand failed with --threads {threads}"
            with open(out, "rb") as fh:
                blobs.append(fh.read())
        for i, threads in enumerate(("1", "8")):
            out = os.path.join(tmp, f"a{i}.csv")
            if _quiet_cli(["ablation", "--seeds", "0", "--res", "32", "--threads", threads, "--out", out]) != 0:
                return False, "ablation subcommand failed"
            with open(out, "rb") as fh:
                blobs.append(fh.read())
    ok = blobs[0] == blobs[1] == blobs[2] and blobs[3] == blobs[4]
    return ok, "normals raster and ablation CSV byte-identical" if ok else "outputs differ"


def check_complexity_ordinal():
    rows = experiments.bench(resolutions=(), klist=(10, 20, 40, 60, 80), k_res=192, lsq_patch=9, repeats=5)
    per_k = {int(r["param_value"]): float(r["value"]) for r in rows if r["param"] == "k" and r["metric"] == "per_pixel_s"}
    ks = np.array(sorted(per_k), dtype=float)
    ts = np.array([per_k[int(k)] for k in ks])
    slope, intercept = np.polyfit(ks, ts, 1)
    fit = slope * ks + intercept
    deviation = float(np.max(np.abs(ts - fit) / fit))
    lsq = next(float(r["value"]) for r in rows if r["param"] == "patch" and r["metric"] == "per_pixel_s")
    ok = slope > 0 and deviation <= 0.2 and lsq > per_k[40]
    return ok, f"max deviation from linear fit {deviation:.1%}, lsq(r=9) {lsq:.3g} s/px vs asn(K=40) {per_k[40]:.3g} s/px"


CASES = [
    ("plane_exactness", check_plane_exactness),
    ("gradient_oracle", check_gradient_oracle),
    ("area_robustness", check_area_robustness),
    ("triplet_saturation", check_triplet_saturation),
    ("boundary_awareness", check_boundary_awareness),
    ("ablation_ordering", check_ablation_ordering),
    ("patch_insensitivity", check_patch_insensitivity),
    ("metric_examples", check_metric_examples),
    ("determinism", check_determinism),
    ("complexity_ordinal", check_complexity_ordinal),
]


def run_case(name, check):
    try:
        ok, detail = check()
    except Exception as e:
        print(f"FAIL:{name}: raised {type(e).__name__}: {e}")
        return False
    print(f"{'PASS' if ok else 'FAIL'}:{name}: {detail}")
    return bool(ok)


def main(argv=None):
    names = set(argv if argv is not None else sys.argv[1:])
    selected = [(n, c) for n, c in CASES if not names or n in names]
    if not selected:
        print(f"FAIL: no case named {sorted(names)}")
        sys.exit(1)
    results = [run_case(name, check) for name, check in selected]
    print(f"\nPassed {sum(results)}/{len(results)} cases")
    print("GRADE:PASS" if all(results) else "GRADE:FAIL")
    sys.exit(0 if all(results) else 1)


if __name__ == "__main__":
    main()
