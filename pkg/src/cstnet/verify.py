"""Self-contained property suite: every differentiable operation and composite
is checked against central finite differences, correlation volumes and
ranking metrics against brute-force oracles, and the structural invariants
(attention normalization, gate bounds, zero-init identity, CMC monotonicity)
are measured directly.  Each check reports its measured error so regressions
are visible even while they still pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import faults, tensor as T
from .csl import CoSaliencyLearning, CslConfig, build_channel_volume, build_spatial_volume, ncc
from .gradcheck import check_op, max_gradcheck_error
from .losses import batch_hard_triplet, label_smooth_ce
from .metrics import compute_cmc, compute_map
from .model import Cstnet, CstnetConfig, pairwise_distances
from .nn import BatchNorm2d
from .optim import Adam, AdamConfig
from .sti import SpatialTemporalInteraction, StiConfig
from .tensor import Tensor, constant, mul, no_grad, tsum


@dataclass
class PropertyResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name:40s} measured={self.measured:.3e} tol={self.tolerance:.1e}{extra}"


def _naive_ncc(p, q, eps=1e-5):
    p = np.asarray(p, float); q = np.asarray(q, float)
    pc, qc = p - p.mean(), q - q.mean()
    return float((pc * qc).sum() / p.size / ((pc.std() + eps) * (qc.std() + eps)))


# ---------------------------------------------------------------------------
# individual checks, each returning (measured, tolerance, detail)
# ---------------------------------------------------------------------------

def _op_gradients() -> list[PropertyResult]:
    rng = np.random.default_rng(11)
    cases = {
        "grad/add": (lambda a, b: T.add(a, b),
                     [rng.standard_normal((3, 1, 4)), rng.standard_normal((1, 5, 4))]),
        "grad/mul": (lambda a, b: T.mul(a, b),
                     [rng.standard_normal((2, 5)), rng.standard_normal((2, 5))]),
        "grad/scale": (lambda a: T.scale(a, -1.7), [rng.standard_normal((3, 3))]),
        "grad/matmul": (lambda a, b: T.matmul(a, b),
                        [rng.standard_normal((3, 4)), rng.standard_normal((4, 5))]),
        "grad/matmul_batched": (lambda a, b: T.matmul(a, b),
                                [rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5))]),
        "grad/softmax": (lambda a: T.softmax(a, 1), [rng.standard_normal((3, 6))]),
        "grad/log_softmax": (lambda a: T.log_softmax(a, 1), [rng.standard_normal((3, 6))]),
        "grad/relu": (lambda a: T.relu(a), [rng.standard_normal((4, 4)) + 0.3]),
        "grad/sigmoid": (lambda a: T.sigmoid(a), [rng.standard_normal((4, 4))]),
        "grad/reshape_permute": (lambda a: T.permute(T.reshape(a, (4, 6)), (1, 0)),
                                 [rng.standard_normal((2, 3, 4))]),
        "grad/index_select": (lambda a: T.index_select(a, 0, [1, 1, 3]),
                              [rng.standard_normal((4, 3))]),
        "grad/concat": (lambda a, b: T.concat([a, b], 1),
                        [rng.standard_normal((2, 3)), rng.standard_normal((2, 4))]),
        "grad/standardize": (lambda a: T.standardize(a, -1, 1e-5),
                             [rng.standard_normal((4, 9))]),
        "grad/reduce_max": (lambda a: T.reduce_max(a, 1), [rng.standard_normal((3, 7))]),
        "grad/reduce_min": (lambda a: T.reduce_min(a, 1), [rng.standard_normal((3, 7))]),
        "grad/sum_mean": (lambda a: T.tmean(T.tsum(a, axis=2), axis=0),
                          [rng.standard_normal((2, 3, 4))]),
        "grad/conv2d_k3": (lambda x, w, b: T.conv2d(x, w, b, stride=1, padding=1),
                           [rng.standard_normal((2, 3, 5, 4)),
                            rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)]),
        "grad/conv2d_k3_s2": (lambda x, w: T.conv2d(x, w, stride=2, padding=1),
                              [rng.standard_normal((1, 2, 6, 5)),
                               rng.standard_normal((3, 2, 3, 3))]),
        "grad/conv2d_k1": (lambda x, w, b: T.conv2d(x, w, b),
                           [rng.standard_normal((2, 4, 3, 3)),
                            rng.standard_normal((5, 4, 1, 1)), rng.standard_normal(5)]),
        "grad/adaptive_pool": (lambda x: T.adaptive_avg_pool2d(x, 2, 2),
                               [rng.standard_normal((2, 3, 5, 4))]),
    }
    results = []
    for name, (build, arrays) in cases.items():
        err = check_op(build, arrays, coords_per_leaf=40)
        results.append(PropertyResult(name, err <= 1e-4, err, 1e-4))

    bn = BatchNorm2d(3, dtype=np.float64)
    x = Tensor(rng.standard_normal((4, 3, 2, 2)), requires_grad=True)
    proj = rng.standard_normal((4, 3, 2, 2))
    err = max_gradcheck_error(lambda: tsum(mul(bn(x), constant(proj))),
                              [x, bn.gamma, bn.beta], rng=np.random.default_rng(3))
    results.append(PropertyResult("grad/batch_norm", err <= 1e-4, err, 1e-4))
    return results


def _composite_gradients() -> list[PropertyResult]:
    rng = np.random.default_rng(23)
    results = []

    csl = CoSaliencyLearning(CslConfig(c_in=8, c_l=4, h_l=2, w_l=2), clip_len=3,
                             feat_h=4, feat_w=4, rng=rng, dtype=np.float64)
    x = Tensor(rng.standard_normal((1, 3, 8, 4, 4)), requires_grad=True)
    proj = rng.standard_normal((1, 3, 8, 4, 4))
    err = max_gradcheck_error(lambda: tsum(mul(csl(x), constant(proj))),
                              [x] + csl.parameters(), coords_per_leaf=6,
                              rng=np.random.default_rng(5))
    results.append(PropertyResult("grad/csl_forward", err <= 1e-4, err, 1e-4))

    sti = SpatialTemporalInteraction(StiConfig(c_in=8, c_1=4, h_1=2, w_1=2),
                                     rng=rng, dtype=np.float64)
    sti.out_spatial.weight.data = 0.3 * rng.standard_normal(sti.out_spatial.weight.shape)
    sti.out_temporal.weight.data = 0.3 * rng.standard_normal(sti.out_temporal.weight.shape)
    xs = Tensor(rng.standard_normal((1, 2, 8, 4, 4)), requires_grad=True)
    projs = rng.standard_normal((1, 2, 8, 4, 4))
    err = max_gradcheck_error(lambda: tsum(mul(sti(xs), constant(projs))),
                              [xs] + sti.parameters(), coords_per_leaf=6,
                              rng=np.random.default_rng(6))
    results.append(PropertyResult("grad/sti_forward", err <= 1e-4, err, 1e-4))

    cfg = CstnetConfig(num_identities=4, clip_len=2, frame_h=16, frame_w=8,
                       stage_channels=(4, 8, 8, 8, 8), embedding_dim=8,
                       csl_channels=4, csl_pool_h=2, csl_pool_w=2,
                       sti_channels=4, sti_pool_h=2, sti_pool_w=1,
                       dtype="f64", seed=3)
    model = Cstnet(cfg)
    for mod in (model.sti2, model.sti3, model.sti4):
        mod.out_spatial.weight.data = 0.3 * np.random.default_rng(8).standard_normal(
            mod.out_spatial.weight.shape)
        mod.out_temporal.weight.data = 0.3 * np.random.default_rng(9).standard_normal(
            mod.out_temporal.weight.shape)
    clips = Tensor(np.random.default_rng(10).random((2, 2, 3, 16, 8)), requires_grad=True)
    labels = np.array([0, 1])

    def model_loss():
        feats, logits = model(clips)
        return T.add(tsum(mul(feats, constant(np.random.default_rng(12).standard_normal(feats.shape)))),
                     label_smooth_ce(logits, labels, 0.1))

    err = max_gradcheck_error(model_loss, [clips] + model.parameters(),
                              coords_per_leaf=3, rng=np.random.default_rng(7))
    results.append(PropertyResult("grad/micro_model", err <= 1e-4, err, 1e-4))
    return results


def _ncc_properties() -> list[PropertyResult]:
    rng = np.random.default_rng(31)
    results = []

    sym = 0.0
    for _ in range(200):
        p = rng.standard_normal(16)
        q = rng.standard_normal(16)
        sym = max(sym, abs(ncc(p, q) - ncc(q, p)))
    results.append(PropertyResult("ncc/symmetry_exact", sym == 0.0, sym, 0.0))

    worst = 0.0
    for _ in range(1000):
        p = rng.standard_normal(16)
        a = rng.uniform(0.1, 10.0)
        b = rng.uniform(-5.0, 5.0)
        worst = max(worst, abs(ncc(p, a * p + b) - 1.0))
    results.append(PropertyResult("ncc/affine_invariance", worst <= 1e-3, worst, 1e-3))

    bound = 0.0
    for _ in range(500):
        p = rng.standard_normal(8) * rng.uniform(0.1, 3.0)
        q = rng.standard_normal(8) * rng.uniform(0.1, 3.0)
        bound = max(bound, abs(ncc(p, q)))
    bound = max(bound, abs(ncc(np.full(8, 2.0), rng.standard_normal(8))))
    bound = max(bound, abs(ncc(np.full(8, 2.0), np.full(8, -1.0))))
    results.append(PropertyResult("ncc/bounds", bound <= 1.001, bound, 1.001))
    return results


def _volume_oracles() -> list[PropertyResult]:
    rng = np.random.default_rng(41)
    worst_s = 0.0
    for t_len in (2, 3):
        for h, w in ((2, 2), (4, 3), (4, 4)):
            desc = rng.standard_normal((t_len, 4, h, w))
            for t in range(t_len):
                vol = build_spatial_volume(Tensor(desc), t).data
                slot = 0
                for k in [k for k in range(t_len) if k != t]:
                    for hh in range(h):
                        for ww in range(w):
                            for i in range(h):
                                for j in range(w):
                                    ref = _naive_ncc(desc[t, :, i, j], desc[k, :, hh, ww])
                                    worst_s = max(worst_s, abs(vol[slot, i, j] - ref))
                            slot += 1
    worst_c = 0.0
    for t_len in (2, 3):
        for c in (3, 8):
            desc = rng.standard_normal((t_len, c, 2, 2))
            for t in range(t_len):
                vol = build_channel_volume(Tensor(desc), t).data
                slot = 0
                for k in [k for k in range(t_len) if k != t]:
                    for cp in range(c):
                        for cc in range(c):
                            ref = _naive_ncc(desc[t, cc].ravel(), desc[k, cp].ravel())
                            worst_c = max(worst_c, abs(vol[slot, cc, 0, 0] - ref))
                        slot += 1
    return [PropertyResult("oracle/spatial_volume", worst_s <= 1e-10, worst_s, 1e-10),
            PropertyResult("oracle/channel_volume", worst_c <= 1e-10, worst_c, 1e-10)]


def _attention_invariants() -> list[PropertyResult]:
    rng = np.random.default_rng(53)
    results = []

    csl = CoSaliencyLearning(CslConfig(c_in=8, c_l=4, h_l=2, w_l=2), clip_len=3,
                             feat_h=4, feat_w=4, rng=rng, dtype=np.float64)
    with no_grad():
        att = csl.attention(Tensor(rng.standard_normal((2, 3, 8, 4, 4))))
    z = att.z.data
    margin = max(0.0 - z.min(), z.max() - 1.0)
    strict = float(z.min()) > 0.0 and float(z.max()) < 1.0
    results.append(PropertyResult("invariant/gate_in_unit_interval", strict, margin, 0.0,
                                  detail=f"range [{z.min():.3e}, {z.max():.3e}]"))

    sti = SpatialTemporalInteraction(StiConfig(c_in=8, c_1=4, h_1=2, w_1=2),
                                     rng=rng, dtype=np.float64)
    with no_grad():
        rel = sti.relations(Tensor(rng.standard_normal((2, 3, 8, 4, 4))))
    dev = max(abs(rel.m_s.data.sum(axis=2) - 1.0).max(),
              abs(rel.m_t.data.sum(axis=2) - 1.0).max())
    results.append(PropertyResult("invariant/attention_normalized", dev <= 1e-6, dev, 1e-6))

    fresh = SpatialTemporalInteraction(StiConfig(c_in=8, c_1=4, h_1=2, w_1=2),
                                       rng=rng, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 3, 8, 4, 4)))
    with no_grad():
        out = fresh(x)
    ident = abs(out.data - x.data).max()
    results.append(PropertyResult("invariant/zero_init_sti_identity", ident <= 1e-12, ident, 1e-12))
    return results


def _metric_oracles() -> list[PropertyResult]:
    rng = np.random.default_rng(61)

    def oracle(dist, qid, gid, qcam, gcam, max_rank):
        cmc = np.zeros(max_rank)
        aps = []
        valid = 0
        for i in range(dist.shape[0]):
            entries = sorted(range(dist.shape[1]), key=lambda j: (dist[i, j], j))
            kept = [j for j in entries if not (gid[j] == qid[i] and gcam[j] == qcam[i])]
            rel = [gid[j] == qid[i] for j in kept]
            if not any(rel):
                continue
            valid += 1
            first = rel.index(True)
            for kk in range(first, max_rank):
                cmc[kk] += 1
            hits, ap = 0, 0.0
            for rank, is_rel in enumerate(rel, start=1):
                if is_rel:
                    hits += 1
                    ap += hits / rank
            aps.append(ap / hits)
        return cmc / valid, float(np.mean(aps))

    worst_cmc, worst_map = 0.0, 0.0
    mono_ok = True
    for trial in range(100):
        q = int(rng.integers(1, 7))
        g = int(rng.integers(2, 11))
        dist = np.round(rng.random((q, g)), 2)      # rounding forces ties
        qid = rng.integers(0, 3, q)
        gid = np.concatenate([qid, rng.integers(0, 3, max(0, g - q))])[:g]
        qcam = rng.integers(0, 2, q)
        gcam = 1 - np.concatenate([qcam, rng.integers(0, 2, max(0, g - q))])[:g]
        max_rank = g
        try:
            got_cmc = compute_cmc(dist, qid, gid, qcam, gcam, max_rank)
            got_map = compute_map(dist, qid, gid, qcam, gcam)
        except Exception:
            continue
        ref_cmc, ref_map = oracle(dist, qid, gid, qcam, gcam, max_rank)
        worst_cmc = max(worst_cmc, abs(got_cmc - ref_cmc).max())
        worst_map = max(worst_map, abs(got_map - ref_map))
        mono_ok = mono_ok and bool((np.diff(got_cmc) >= -1e-15).all())
    return [PropertyResult("oracle/cmc_exact", worst_cmc == 0.0, worst_cmc, 0.0),
            PropertyResult("oracle/map", worst_map <= 1e-9, worst_map, 1e-9),
            PropertyResult("invariant/cmc_monotone", mono_ok, 0.0 if mono_ok else 1.0, 0.0)]


def _loss_and_misc_oracles() -> list[PropertyResult]:
    rng = np.random.default_rng(71)
    results = []

    # matmul vs triple loop
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    ref = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                ref[i, j] += a[i, k] * b[k, j]
    err = abs(T.matmul(Tensor(a), Tensor(b)).data - ref).max()
    results.append(PropertyResult("oracle/matmul_loops", err <= 1e-12, err, 1e-12))

    # conv vs sliding window loops
    x = rng.standard_normal((1, 2, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    got = T.conv2d(Tensor(x), Tensor(w), stride=1, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 4, 4))
    for co in range(3):
        for i in range(4):
            for j in range(4):
                ref[0, co, i, j] = (xp[0, :, i:i + 3, j:j + 3] * w[co]).sum()
    err = abs(got - ref).max()
    results.append(PropertyResult("oracle/conv2d_loops", err <= 1e-10, err, 1e-10))

    # adaptive pool bin means
    x = np.arange(1.0, 17.0).reshape(1, 1, 4, 4)
    got = T.adaptive_avg_pool2d(Tensor(x), 2, 2).data
    err = abs(got - np.array([[3.5, 5.5], [11.5, 13.5]])).max()
    results.append(PropertyResult("oracle/adaptive_pool_bins", err <= 1e-12, err, 1e-12))

    # softmax vs direct exp-normalize
    v = np.array([1.0, 2.0, 3.0])
    got = T.softmax(Tensor(v), 0).data
    ref = np.exp(v) / np.exp(v).sum()
    err = abs(got - ref).max()
    results.append(PropertyResult("oracle/softmax_expsum", err <= 1e-12, err, 1e-12))

    # batch-hard triplet vs exhaustive max/min
    feats = rng.standard_normal((8, 4))
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    got = float(batch_hard_triplet(Tensor(feats), labels, 0.3).data)
    d = pairwise_distances(feats)
    per_anchor = []
    for i in range(8):
        pos = max(d[i, j] for j in range(8) if labels[j] == labels[i])
        neg = min(d[i, j] for j in range(8) if labels[j] != labels[i])
        per_anchor.append(max(0.0, 0.3 + pos - neg))
    err = abs(got - float(np.mean(per_anchor)))
    results.append(PropertyResult("oracle/batch_hard_triplet", err <= 1e-9, err, 1e-9))

    # label-smoothed CE vs direct formula
    logits = np.array([[2.0, 0.0, 0.0]])
    got = float(label_smooth_ce(Tensor(logits), np.array([0]), 0.1).data)
    logp = logits[0] - np.log(np.exp(logits[0]).sum())
    targets = np.full(3, 0.1 / 3)
    targets[0] += 0.9
    err = abs(got - float(-(targets * logp).sum()))
    results.append(PropertyResult("oracle/label_smooth_ce", err <= 1e-9, err, 1e-9))

    # first Adam step closed form
    from .nn import Parameter
    p = Parameter(np.array([0.5]), dtype=np.float64)
    p.grad = np.array([2.0])
    opt = Adam({"w": p}, AdamConfig(lr=1e-2, weight_decay=0.0))
    opt.step()
    err = abs(float(p.data[0]) - (0.5 - 1e-2 * (2.0 / (2.0 + 1e-8))))
    results.append(PropertyResult("oracle/adam_first_step", err <= 1e-9, err, 1e-9))

    # pairwise distance 3-4-5
    d = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
    err = abs(d[0, 1] - 5.0)
    results.append(PropertyResult("oracle/pairwise_distance", err <= 1e-9, err, 1e-9))
    return results


def run_verification(inject_fault: str | None = None) -> list[PropertyResult]:
    """All property checks; optionally with a deliberately broken build."""
    if inject_fault:
        faults.inject(inject_fault)
    try:
        results = []
        results += _op_gradients()
        results += _composite_gradients()
        results += _ncc_properties()
        results += _volume_oracles()
        results += _attention_invariants()
        results += _metric_oracles()
        results += _loss_and_misc_oracles()
        return results
    finally:
        faults.clear()


def run_gradcheck_suite() -> list[PropertyResult]:
    return _op_gradients() + _composite_gradients()


def main_report(results: list[PropertyResult], print_fn=print) -> bool:
    started = time.perf_counter()
    ok = True
    worst_grad = 0.0
    for r in results:
        ok = ok and r.passed
        if r.name.startswith("grad/"):
            worst_grad = max(worst_grad, r.measured)
        print_fn(r.line())
    print_fn(f"max gradient-check relative error: {worst_grad:.3e}")
    print_fn(f"{sum(r.passed for r in results)}/{len(results)} properties passed "
             f"({time.perf_counter() - started:.2f}s reporting)")
    return ok
