"""Acceptance criteria, one test each.  Every test prints one PASS/FAIL line
(also repeated in the terminal summary) before asserting."""

import time

import numpy as np

import oracles
from conftest import ACCEPTANCE_LINES
from fcstereo.core import CostVolume, GuideImage, PipelineParams
from fcstereo.cost import baseline_cost, read_cvol, write_cvol
from fcstereo.crf import BPModel, message_from_marginal, run_bp, sequential_pass
from fcstereo.evaluation import compute_metrics, encode_pfm, mask_metrics, parse_pfm
from fcstereo.geodesic import AffinityParams, build_edge_weights, gd_filter
from fcstereo.ovod import ovod
from fcstereo.pipeline import match
from fcstereo.postproc import plane_fit, subpixel, suppress_small_regions, upscale, weighted_median
from fcstereo.synthetic import two_plane_scene


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c1_filter_matches_tree_oracle():
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        h, w = rng.integers(1, 7, 2)
        pix = rng.uniform(0, 255, (h, w, 3))
        f = rng.normal(size=(h, w))
        a, d = rng.uniform(1e-3, 0.05), rng.uniform(0, 5)
        out, _ = gd_filter(f, GuideImage(pix), AffinityParams(a, d))
        ref = oracles.filter_oracle(f, pix, a, d)
        scale = oracles.filter_oracle(np.abs(f), pix, a, d)
        worst = max(worst, float(np.max(np.abs(out - ref) / scale)))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-10 and dt < 5.0, f"50 grids <= 6x6, max rel err {worst:.2e}, {dt:.2f}s")


def test_c2_messages_exact():
    rng = np.random.default_rng(200)
    mism = 0
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        c = rng.uniform(0, 5, n)
        lam, dmax = rng.uniform(0, 1), int(rng.integers(0, n + 2))
        mism += not np.array_equal(message_from_marginal(c, lam, dmax), oracles.brute_message(c, lam, dmax))
    report(2, mism == 0, f"1000 vectors |S| <= 64, {mism} mismatches vs brute force")


def test_c3_chain_pass_is_forward_dp():
    exact, worst = 0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        n, labels = int(rng.integers(2, 65)), int(rng.integers(2, 12))
        pix = rng.uniform(0, 255, (1, n, 3))
        cost = rng.uniform(0, 1, (1, n, labels))
        edges = build_edge_weights(GuideImage(pix), AffinityParams(2 / 900, 900 / 64))
        model = BPModel.from_edges(edges, 0.12, 3)
        marg = sequential_pass(cost, np.zeros_like(cost), model, 0)
        exact += np.array_equal(marg[0], oracles.chain_forward_dp(cost[0], edges.horizontal[0], 0.12, 3,
                                                                   model.coef[0]))
        indep = oracles.chain_forward_dp(cost[0], edges.horizontal[0], 0.12, 3)
        worst = max(worst, float(np.max(np.abs(marg[0] - indep) / np.abs(indep))))
    report(3, exact == 20 and worst <= 1e-12,
           f"{exact}/20 chains bit-identical, {worst:.1e} rel vs independently summed weights")


def test_c4_sequential_beats_nonsequential():
    wins, mono = 0, 0
    for seed in range(20):
        sc = two_plane_scene(64, 64, d_bg=2, gap=5 + seed % 4, seed=seed)
        cost = baseline_cost(sc.left, sc.right, sc.labels)
        p = PipelineParams()
        model = BPModel.build(sc.left, p)
        seq = run_bp(cost, sc.left, p, "sequential", 3, model=model).energy_trace
        non = run_bp(cost, sc.left, p, "nonsequential", 6, model=model).energy_trace
        wins += seq[-1] <= non[-1]
        mono += all(b <= a for a, b in zip(seq, seq[1:]))
    report(4, wins >= 18 and mono >= 18, f"seq-3 <= nonseq-6 on {wins}/20, non-increasing trace on {mono}/20")


def test_c5_ovod_beats_wta():
    good, recalls, ratios = 0, [], []
    for seed in range(20):
        sc = two_plane_scene(64, 64, d_bg=2, gap=5 + seed % 4, seed=seed)
        cost = baseline_cost(sc.left, sc.right, sc.labels)
        sol = ovod(cost)
        gt = sc.gt.values
        r = np.abs(sol.fused.values - gt).mean() / np.abs(sol.s_left.values - gt).mean()
        ratios.append(r)
        good += r <= 0.85
        recalls.append(sol.occlusion.occluded[sc.band].mean())
    rec = float(np.mean(recalls))
    report(5, good >= 16 and rec >= 0.8,
           f"OVOD/WTA error <= 0.85 on {good}/20 (max {max(ratios):.2f}), band recall {rec:.2f}")


def test_c6_end_to_end():
    sc = two_plane_scene(128, 128, d_bg=4, gap=12, seed=0)
    t0 = time.perf_counter()
    res = match(sc.left, sc.right, params=PipelineParams(labels=sc.labels))
    dt = time.perf_counter() - t0
    vis = ~sc.occluded
    frac = float(np.mean(np.abs(res.disparity.values - sc.gt.values)[vis] <= 1.0))
    report(6, frac >= 0.95 and dt < 60, f"128x128: {100 * frac:.1f}% nonocc within 1 label, {dt:.1f}s")


def test_c7_no_smoothness_is_cost_argmin():
    sc = two_plane_scene(48, 48, seed=7)
    cost = baseline_cost(sc.left, sc.right, sc.labels)
    target = np.argmin(cost.values, axis=2)
    same = []
    for lam, dmax in ((0.0, 8.0), (0.12, 0.0)):
        p = PipelineParams(lambda_=lam, delta_max=dmax)
        for schedule in ("sequential", "nonsequential"):
            marg = run_bp(cost, sc.left, p, schedule, 3).marginals
            same.append(np.array_equal(np.argmin(marg, axis=2), target))
    report(7, all(same), f"lambda=0 / delta_max=0 x two schedules equal cost argmin: {sum(same)}/4")


def test_c8_postproc_and_metrics():
    checks = {}
    g = GuideImage(np.random.default_rng(0).uniform(0, 255, (13, 13, 3)))
    c = np.full((13, 13), 6.0)
    checks["upscale"] = np.allclose(upscale(np.full((4, 4), 6.0), g, 4, 3.4, 3.4).values, 6.0, rtol=1e-12)
    checks["median"] = np.array_equal(weighted_median(c, g).values, c)
    checks["plane"] = np.allclose(plane_fit(c).values, c, rtol=1e-12)
    checks["suppress"] = np.array_equal(suppress_small_regions(c, 10).values, c)
    rng = np.random.default_rng(800)
    vol = CostVolume(rng.uniform(0, 1, (13, 13, 9)))
    s = rng.integers(0, 9, (13, 13)).astype(float)
    checks["subpixel"] = bool(np.all(np.abs(subpixel(s, vol).values - s) <= 0.5))
    m = compute_metrics(np.array([[5.0, 5.0], [6.0, 8.0]]), np.full((2, 2), 5.0), np.zeros((2, 2), bool)).all
    checks["4px"] = (m.bad2 == 25.0 and m.avrg == 1.0 and abs(m.rms - np.sqrt(2.5)) < 1e-12 and m.A50 == 0.0)
    fields = [np.abs(rng.normal(size=int(rng.integers(1, 500)))) * 10 for _ in range(100)]
    checks["rms>=avrg"] = all(mask_metrics(e).rms >= mask_metrics(e).avrg * (1 - 1e-12) for e in fields)
    failed = [k for k, v in checks.items() if not v]
    report(8, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks ({', '.join(checks)})"
           + (f", failed: {failed}" if failed else ""))


def test_c9_byte_round_trips(tmp_path):
    rng = np.random.default_rng(900)
    ok = 0
    for i in range(20):
        h, w, n = (int(v) for v in rng.integers(1, 20, 3))
        disp = rng.uniform(0, 100, (h, w)).astype(np.float32)
        disp[rng.random((h, w)) < 0.1] = np.inf
        scale = float(rng.choice([-1.0, 1.0]))
        data = encode_pfm(disp, scale)
        arr, sc = parse_pfm(data)
        pfm_ok = encode_pfm(arr, sc) == data and np.array_equal(arr, disp)
        vol = rng.uniform(0, 3, (h, w, n)).astype(np.float32).astype(np.float64)
        a, b = tmp_path / f"{i}a.cvol", tmp_path / f"{i}b.cvol"
        write_cvol(CostVolume(vol, label_origin=int(rng.integers(-5, 5))), a)
        write_cvol(read_cvol(a), b)
        ok += pfm_ok and a.read_bytes() == b.read_bytes() and np.array_equal(read_cvol(b).values, vol)
    report(9, ok == 20, f"PFM + CVOL byte-identical round trips on {ok}/20 instances")
