"""Acceptance criteria 1-8. Run with ``pytest tests/test_acceptance.py -s`` to see the report lines."""

import time
from fractions import Fraction

import numpy as np
import pytest

from mtlshare.arch import BackboneConfig
from mtlshare.autodiff import Prng
from mtlshare.data import MultiTaskDataset, SyntheticTaskSpec, gen_synthetic_pair
from mtlshare.gradsuite import run_suite, sigma_agreement
from mtlshare.losses import Combiner
from mtlshare.lws import AssignmentDistribution, cross_task_mass, inference_assignment, nes_update
from mtlshare.metrics import cumulative_accuracy, format_metrics
from mtlshare.trainer import TrainConfig, build_state, run_training, train_step

SEEDS = range(5)


def report(n, title, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    budget = f" (limit {limit:.0f}s)" if limit else ""
    print(f"\n[{status}] criterion {n}: {title}: {detail}; {elapsed:.1f}s{budget}")
    assert ok, detail
    assert within, f"took {elapsed:.1f}s, limit {limit}s"


def _pair(**kw):
    return [t.standardized() for t in gen_synthetic_pair(SyntheticTaskSpec(**kw))]


def _train(tasks, backbone, mode, loss="average", seed=0, **kw):
    cfg = TrainConfig.create(mode, loss, seed=seed, **kw)
    return run_training(cfg, MultiTaskDataset(tasks, cfg.batch_size, seed), build_state(cfg, backbone))


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    errors = run_suite(0)
    sigma = {m: sigma_agreement(m, 0) for m in ("uncertainty", "automatic")}
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and max(sigma.values()) < 1e-10
    detail = (f"{len(errors)} checks, max rel. error {errors[worst]:.2e} ({worst}) < 1e-4; "
              f"sigma analytic diff {max(sigma.values()):.2e} < 1e-10")
    report(1, "gradient suite", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_2_cross_stitch_decoupling():
    t0 = time.perf_counter()
    tasks = _pair(samples_a=400, samples_b=400, seed=3)
    bb = BackboneConfig.dense_variant(16, (4, 4), hidden=64)
    common = dict(iterations=50, seed=3, optimizer="sgd", eval_every=50)
    stl = _train(tasks, bb, "stl", lr=0.01, **common)
    # averaging over K=2 halves each task's gradient, so SPS takes twice the step size
    sps = _train(tasks, bb, "sps", lr=0.02, sps_s=0.0, freeze_stitch=True, **common)
    a, b = np.array(stl.step_task_losses), np.array(sps.step_task_losses)
    diff = float(np.max(np.abs(a - b)))
    ok = a.shape == b.shape == (50, 2) and diff < 1e-10
    report(2, "cross-stitch decoupling", ok, f"max per-task loss difference over 50 iterations {diff:.2e} < 1e-10",
           time.perf_counter() - t0, 60)


OPT = np.array([[1, 0], [0, 1]])


def _bandit_loss(net, batch, a):
    return float(np.sum(a != OPT))


def _p_opt(dist):
    p = dist.probs
    li, ti = np.indices(OPT.shape)
    return float(np.prod(p[li, ti, OPT]))


def test_criterion_3_nes_bandit():
    t0 = time.perf_counter()
    probs, argmax_ok = [], 0
    for seed in range(10):
        dist = AssignmentDistribution(2, 2, eta=0.1, pop_pi=4)
        prng = Prng(seed).child("bandit")
        for _ in range(500):
            nes_update(dist, None, None, _bandit_loss, prng)
        probs.append(_p_opt(dist))
        argmax_ok += int(np.array_equal(inference_assignment(dist), OPT))
    converged = sum(p > 0.9 for p in probs)

    steps = []
    for scale in (1.0, 100.0):
        dist = AssignmentDistribution(2, 2, eta=0.1, pop_pi=4)
        nes_update(dist, None, None, lambda n, b, a: scale * _bandit_loss(n, b, a), Prng(42))
        steps.append(dist.logits.copy())
    invariant = np.array_equal(steps[0], steps[1])
    ok = converged >= 9 and invariant
    detail = (f"P(optimum) > 0.9 for {converged}/10 seeds (min {min(probs):.3f}), argmax optimal for {argmax_ok}/10; "
              f"logit step identical for l and 100*l: {invariant}")
    report(3, "NES bandit convergence", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_4_loss_combiner_algebra():
    t0 = time.perf_counter()
    tasks = _pair(samples_a=1000, samples_b=300, seed=1)
    bb = BackboneConfig.dense_variant(16, (4, 4), hidden=32)
    worst_sum, min_reg = 0.0, np.inf
    for loss in ("dwa", "automatic"):
        cfg = TrainConfig.create("hps", loss, iterations=2000, seed=1)
        state, mtds = build_state(cfg, bb), MultiTaskDataset(tasks, 8, 1)
        comb = state.combiners[0]
        for _ in range(cfg.iterations):
            train_step(state, mtds.next_batch())
            if loss == "dwa":
                worst_sum = max(worst_sum, abs(comb.dwa_weights().sum() - 2.0))
            else:
                min_reg = min(min_reg, float(comb.regularizer().min()))
        if loss == "dwa":
            moved = not np.allclose(comb.dwa_weights(), 1.0)

    hand = Combiner("dwa", 2, temperature=2.0, window=1)
    hand.observe([2.0, 2.0])
    hand.observe([1.0, 2.0])
    lam = hand.dwa_weights()
    hand_err = float(np.max(np.abs(lam - [0.8757, 1.1243])))
    ok = worst_sum < 1e-9 and hand_err < 1e-3 and min_reg >= 0 and moved
    detail = (f"max |sum(lambda) - K| over 2000 iterations {worst_sum:.1e} < 1e-9; hand case lambda = "
              f"({lam[0]:.4f}, {lam[1]:.4f}), error {hand_err:.1e} < 1e-3; min log(1+sigma^2) along trajectory {min_reg:.3e} >= 0")
    report(4, "loss-combiner algebra", ok, detail, time.perf_counter() - t0, 120)


@pytest.mark.slow
def test_criterion_5_positive_transfer():
    t0 = time.perf_counter()
    means = {}
    for label, mode, kw in (("STL", "stl", {}), ("HPS", "hps", {}), ("SPS(s=0.2)", "sps", {"sps_s": 0.2})):
        accs = []
        for seed in SEEDS:
            tasks = _pair(dim=16, n_classes=4, samples_a=2000, samples_b=200, rho=1.0, noise=0.25, seed=seed)
            bb = BackboneConfig.dense_variant(16, (4, 4), hidden=64)
            res = _train(tasks, bb, mode, seed=seed, iterations=2000, batch_size=8, lr=0.001, eval_every=2000, **kw)
            accs.append(res.final.accuracies[1])
        means[label] = float(np.mean(accs))
    stl = means["STL"]
    ok = (means["HPS"] >= stl - 0.01 and means["SPS(s=0.2)"] >= stl - 0.01
          and max(means["HPS"], means["SPS(s=0.2)"]) > stl)
    detail = "task-B mean test accuracy over 5 seeds: " + ", ".join(f"{k} {v:.4f}" for k, v in means.items())
    report(5, "positive transfer", ok, detail, time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_criterion_6_lws_relatedness():
    t0 = time.perf_counter()
    mass = {}
    for rho in (1.0, 0.0):
        values = []
        for seed in SEEDS:
            tasks = _pair(dim=16, n_classes=4, samples_a=1000, samples_b=1000, rho=rho, noise=0.25, seed=seed)
            bb = BackboneConfig.dense_variant(16, (4, 4), hidden=64)
            res = _train(tasks, bb, "lws", seed=seed, iterations=2000, eval_every=2000, lws_eta_pi=0.1)
            values.append(cross_task_mass(res.state.dist, layer=0))
        mass[rho] = float(np.mean(values))
    ok = mass[1.0] > mass[0.0]
    detail = f"mean first-layer mass on the other task's weight sets: rho=1 {mass[1.0]:.4f} > rho=0 {mass[0.0]:.4f}"
    report(6, "LWS relatedness response", ok, detail, time.perf_counter() - t0, 600)


def test_criterion_7_budget_and_determinism(tmp_path):
    t0 = time.perf_counter()
    tasks = _pair(samples_a=300, samples_b=60, seed=2)
    bb = BackboneConfig.dense_variant(16, (4, 4), hidden=16)
    iterations = 120
    budgets, identical = {}, {}
    for mode, loss in (("stl", "average"), ("hps", "dwa"), ("sps", "uncertainty"), ("lws", "automatic")):
        files = []
        for run in range(2):
            res = _train(tasks, bb, mode, loss, seed=4, iterations=iterations, eval_every=40)
            budgets[mode] = res.batches
            path = tmp_path / f"{mode}{run}.csv"
            path.write_text(format_metrics(res.series, ["taskA", "taskB"]), encoding="utf-8")
            files.append(path.read_bytes())
        identical[mode] = files[0] == files[1]
    ok = all(b == iterations for b in budgets.values()) and all(identical.values())
    detail = (f"batches consumed {budgets} (expected {iterations} each); "
              f"byte-identical metric files on rerun: {identical}")
    report(7, "budget parity and determinism", ok, detail, time.perf_counter() - t0)


FIXTURES = [
    ([8, 1], [10, 5]),
    ([3, 7], [10, 10]),
    ([0, 5], [4, 5]),
    ([1, 2, 3], [3, 7, 11]),
    ([999], [1000]),
]


def test_criterion_8_metric_definitions():
    t0 = time.perf_counter()
    results = []
    for correct, totals in FIXTURES:
        want = float(Fraction(sum(correct), sum(totals)))
        results.append(cumulative_accuracy(correct, totals) == want)
    first = cumulative_accuracy([8, 1], [10, 5])
    with pytest.raises(ValueError):
        cumulative_accuracy([1, 0], [2, 0])
    ok = all(results) and first == 0.6
    detail = f"{sum(results)}/{len(results)} count fixtures exact; (8/10, 1/5) -> {first!r}; zero total rejected"
    report(8, "metric definitions", ok, detail, time.perf_counter() - t0)
