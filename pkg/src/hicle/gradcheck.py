"""Finite-difference verification of every analytic gradient path."""

import numpy as np

from . import rng
from .hierarchy import LabelPath
from .losses import LossConfig, hicone, himulcon, himulcone, simclr, supcon
from .model import backward, forward, init_model

FD_STEP = 1e-4
REL_TOL = 1e-5


def fd_gradient(func, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences, one coordinate at a time, double precision."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = func(x)
        flat[k] = orig - step
        lo = func(x)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _random_batch(gen, n, d, depth, counts=(2, 2)):
    feats = gen.standard_normal((n, d))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    paths = []
    for i in range(n):
        labels = tuple(int(gen.integers(c)) for c in counts[:depth])
        paths.append(LabelPath(labels=labels, sample_id=i // 2))
    return feats, paths


def check_feature_losses(seed: int, inject_fault: bool = False) -> dict[str, float]:
    """Max FD relative error per loss, over features, for one seed."""
    gen = rng.stream(seed, "gradcheck")
    n, d, depth = 8, 4, 2
    feats, paths = _random_batch(gen, n, d, depth)
    # The clamp is differentiated with full max semantics here: the detached
    # floor (the training default) is not the derivative of the total.
    cfg = LossConfig(temperature=0.5, clamp_floor_stop_gradient=False)
    results = {}

    cases = {
        "himulcon": lambda f: himulcon(f, paths, cfg),
        "hicone": lambda f: hicone(f, paths, cfg),
        "himulcone": lambda f: himulcone(f, paths, cfg),
    }
    for name, op in cases.items():
        analytic = op(feats).gradient
        numeric = fd_gradient(lambda f: op(f).total, feats.copy())
        if inject_fault:
            analytic = analytic + 1e-2
        results[name] = relative_error(analytic, numeric)

    classes = np.array([p.labels[0] for p in paths])
    analytic = supcon(feats, classes, 0.5).gradient
    numeric = fd_gradient(lambda f: supcon(f, classes, 0.5).total, feats.copy())
    results["supcon"] = relative_error(analytic, numeric)

    pairing = np.arange(n)
    pairing[0::2] += 1
    pairing[1::2] -= 1
    analytic = simclr(feats, pairing, 0.5).gradient
    numeric = fd_gradient(lambda f: simclr(f, pairing, 0.5).total, feats.copy())
    results["simclr"] = relative_error(analytic, numeric)
    return results


def check_encoder_chain(seed: int, loss_kind: str = "himulcone") -> float:
    """FD check of d loss / d parameters through the full encoder chain."""
    gen = rng.stream(seed, "gradcheck-model")
    n, input_dim = 6, 5
    model = init_model(input_dim, (7,), (4,), seed)
    x = gen.standard_normal((n, input_dim))
    _, paths = _random_batch(gen, n, 4, 2)
    cfg = LossConfig(temperature=0.5, clamp_floor_stop_gradient=False)
    op = {"himulcon": himulcon, "hicone": hicone, "himulcone": himulcone}[loss_kind]

    def loss_of_model():
        _, proj, cache = forward(model, x)
        return op(proj, paths, cfg), cache

    out, cache = loss_of_model()
    enc_grads, proj_grads = backward(model, cache, out.gradient)
    analytic = np.concatenate(
        [g.ravel() for gw, gb in enc_grads + proj_grads for g in (gw, gb)]
    )
    numeric_parts = []
    for param in model.all_parameters():
        def param_loss(p):
            return loss_of_model()[0].total
        numeric_parts.append(fd_gradient(param_loss, param).ravel())
    numeric = np.concatenate(numeric_parts)
    return relative_error(analytic, numeric)


def run_suite(seed: int = 0, cases: int = 20, inject_fault: bool = False) -> dict:
    """The full verification report: per-loss max error plus the model chain."""
    worst: dict[str, float] = {}
    for k in range(cases):
        errs = check_feature_losses(seed + k, inject_fault=inject_fault)
        for name, err in errs.items():
            worst[name] = max(worst.get(name, 0.0), err)
    worst["encoder_chain"] = max(
        check_encoder_chain(seed + k) for k in range(3)
    )
    passed = all(v < REL_TOL for v in worst.values())
    return {"max_rel_err": worst, "tolerance": REL_TOL, "passed": passed}
