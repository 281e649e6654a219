"""Contrastive losses over unit-norm features, with analytic gradients.

All losses share the same per-pair building block: for anchor i and
positive p, the pair loss is

    l(i, p) = logsumexp_{a != i}(f_i . f_a / tau) - f_i . f_p / tau

i.e. the negated temperature-scaled log-probability of the positive.
Totals are sums over anchors (no 1/N), so the single-level reduction to
the supervised contrastive loss and the unlabeled reduction to the
augmentation-pair loss hold exactly.

The hierarchy-constraint losses process levels from finest to coarsest
and clamp each pair loss with a running floor: the maximum clamped pair
loss over all finer levels already processed. The floor is treated as a
constant by default, so no gradient flows through a clamp that wins.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateBatchError,
    NormalizationError,
    StructuralError,
)
from .hierarchy import LabelPath, PairingTensor, pairing_tensor

LAMBDA_SCHEDULES = (
    "exp_inv_gap",
    "exp_level",
    "pow2_level",
    "pow2_inv_gap",
    "inv_gap",
    "identity",
    "exp_inv_level",
)

#: Schedules that increase strictly with the level (the recommended family).
INCREASING_SCHEDULES = (
    "exp_inv_gap",
    "exp_level",
    "pow2_level",
    "pow2_inv_gap",
    "inv_gap",
)

LOSS_KINDS = ("himulcon", "hicone", "himulcone", "supcon", "simclr")

# Batch losses tolerate the small norm drift introduced by finite-difference
# probes; the scalar pair op is strict.
_BATCH_NORM_ATOL = 1e-3
_PAIR_NORM_ATOL = 1e-6


@dataclass
class LossConfig:
    temperature: float = 0.1
    lambda_schedule: str = "exp_inv_gap"
    positives_mode: str = "cumulative"
    instance_level: bool = True
    clamp_floor_stop_gradient: bool = True
    skip_empty_levels: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.lambda_schedule not in LAMBDA_SCHEDULES:
            raise ConfigError(f"unknown lambda schedule {self.lambda_schedule!r}")
        if self.positives_mode not in ("cumulative", "exact-lca"):
            raise ConfigError(f"unknown positives mode {self.positives_mode!r}")


@dataclass
class LossOutput:
    total: float
    per_level_pair_losses: dict[int, list[tuple[int, int, float]]]
    gradient: np.ndarray
    violation_rate: float | None
    per_level_clamped: dict[int, list[tuple[int, int, float]]] | None = field(
        default=None
    )


def lambda_value(schedule: str, level: int, level_count: int) -> float:
    """Level weight F(l). Non-identity recommended schedules increase with l."""
    if schedule not in LAMBDA_SCHEDULES:
        raise ConfigError(f"unknown lambda schedule {schedule!r}")
    if not 0 <= level <= level_count - 1:
        raise ConfigError(
            f"level {level} out of range for {level_count} levels"
        )
    gap = level_count - level
    if schedule == "exp_inv_gap":
        return math.exp(1.0 / gap)
    if schedule == "exp_level":
        return math.exp(level)
    if schedule == "pow2_level":
        return 2.0 ** level
    if schedule == "pow2_inv_gap":
        return 2.0 ** (1.0 / gap)
    if schedule == "inv_gap":
        return 1.0 / gap
    if schedule == "exp_inv_level":
        # Decreasing counterpart used by the schedule-direction ablation
        # (1-indexed so level 0 stays finite).
        return math.exp(1.0 / (level + 1))
    return 1.0


def _check_norms(features: np.ndarray, atol: float) -> None:
    norms = np.linalg.norm(features, axis=1)
    if not np.all(np.abs(norms - 1.0) <= atol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise NormalizationError(
            f"feature rows must be unit-norm (max deviation {worst:.3g})"
        )


def pair_loss_matrix(features: np.ndarray, temperature: float):
    """All-pairs pair losses and the per-anchor softmax.

    Returns ``(losses, softmax)`` where ``losses[i, p]`` is l(i, p) for
    p != i (the diagonal is +inf and must not be consumed) and
    ``softmax[i, a]`` is the anchor-i probability of candidate a, with a
    zero diagonal. Computed with a max-shifted log-sum-exp per row.
    """
    sims = (features @ features.T) / temperature
    np.fill_diagonal(sims, -np.inf)
    shift = np.max(sims, axis=1)
    logz = shift + np.log(np.sum(np.exp(sims - shift[:, None]), axis=1))
    losses = logz[:, None] - sims
    softmax = np.exp(sims - logz[:, None])
    return losses, softmax


def pair_log_prob(features: np.ndarray, i: int, p: int, temperature: float) -> float:
    """Log-probability of positive p for anchor i (the negated pair loss)."""
    if i == p:
        raise StructuralError("anchor and positive must differ")
    if features.shape[0] < 2:
        raise DegenerateBatchError("need at least 2 samples")
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    _check_norms(features, _PAIR_NORM_ATOL)
    sims = (features @ features[i]) / temperature
    sims[i] = -np.inf
    shift = np.max(sims)
    logz = shift + math.log(np.sum(np.exp(sims - shift)))
    return float(sims[p] - logz)


def _gradient_from_weights(
    weights: np.ndarray, softmax: np.ndarray, features: np.ndarray, temperature: float
) -> np.ndarray:
    """d(sum_ip W_ip * l(i,p))/d features, with W treated as constant."""
    row_weight = weights.sum(axis=1)
    gsim = row_weight[:, None] * softmax - weights
    np.fill_diagonal(gsim, 0.0)
    return (gsim + gsim.T) @ features / temperature


def _level_entries(mask_row_ids, mask_col_ids, losses):
    return [
        (int(i), int(p), float(losses[i, p]))
        for i, p in zip(mask_row_ids, mask_col_ids)
    ]


def loss_violation_rate(
    per_level_pair_losses: dict[int, list[tuple[int, int, float]]],
) -> float | None:
    """Fraction of cross-level comparisons where a finer pair out-losses a coarser one.

    Compares every pre-clamp pair loss at level l_a against every one at a
    coarser level l_b < l_a; a violation is l(pair at l_a) > l(pair at l_b).
    Returns None when fewer than two levels have pairs.
    """
    levels = sorted(l for l, v in per_level_pair_losses.items() if v)
    if len(levels) < 2:
        return None
    values = {
        l: np.sort(np.array([e[2] for e in per_level_pair_losses[l]]))
        for l in levels
    }
    violations = 0
    comparisons = 0
    for ai, la in enumerate(levels):
        fine = values[la]
        for lb in levels[:ai]:
            coarse = values[lb]
            # strict count of coarse entries < each fine entry
            violations += int(
                np.sum(np.searchsorted(coarse, fine, side="left"))
            )
            comparisons += fine.size * coarse.size
    return violations / comparisons


def _prepare(features, batch_paths, cfg):
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(batch_paths):
        raise StructuralError("features and batch paths disagree on batch size")
    _check_norms(features, _BATCH_NORM_ATOL)
    pairing = pairing_tensor(
        batch_paths, mode=cfg.positives_mode, instance_level=cfg.instance_level
    )
    losses, softmax = pair_loss_matrix(features, cfg.temperature)
    nonempty = [
        l
        for l in range(pairing.level_count)
        if pairing.per_level_positive[l].any()
    ]
    if not nonempty:
        raise DegenerateBatchError("no positive pair at any level")
    denom = len(nonempty) if cfg.skip_empty_levels else pairing.level_count
    return features, pairing, losses, softmax, nonempty, denom


def _anchor_coefficients(mask: np.ndarray, lam: float, denom_levels: int):
    """Per-pair weight lam / (denom * |P_l(i)|); empty anchors drop out."""
    counts = mask.sum(axis=1)
    coef = np.zeros(mask.shape[0])
    present = counts > 0
    coef[present] = lam / (denom_levels * counts[present])
    return coef[:, None] * mask


def himulcon(
    features: np.ndarray, batch_paths: Sequence[LabelPath], cfg: LossConfig
) -> LossOutput:
    """Level-weighted multi-level contrastive loss (fixed per-level penalty)."""
    features, pairing, losses, softmax, nonempty, denom = _prepare(
        features, batch_paths, cfg
    )
    n = features.shape[0]
    weights = np.zeros((n, n))
    per_level: dict[int, list] = {}
    for l in nonempty:
        mask = pairing.per_level_positive[l]
        lam = lambda_value(cfg.lambda_schedule, l, pairing.level_count)
        weights += _anchor_coefficients(mask, lam, denom)
        ii, pp = np.nonzero(mask)
        per_level[l] = _level_entries(ii, pp, losses)
    total = float(np.sum(weights * np.where(weights != 0.0, losses, 0.0)))
    gradient = _gradient_from_weights(weights, softmax, features, cfg.temperature)
    return LossOutput(
        total=total,
        per_level_pair_losses=per_level,
        gradient=gradient,
        violation_rate=loss_violation_rate(per_level),
    )


def _clamped_loss(features, batch_paths, cfg, use_lambda: bool) -> LossOutput:
    features, pairing, losses, softmax, nonempty, denom = _prepare(
        features, batch_paths, cfg
    )
    n = features.shape[0]
    weights = np.zeros((n, n))
    per_level: dict[int, list] = {}
    per_level_clamped: dict[int, list] = {}
    total = 0.0
    floor = -np.inf
    floor_pair: tuple[int, int] | None = None
    prev_min_clamped = None
    for l in sorted(nonempty, reverse=True):
        mask = pairing.per_level_positive[l]
        lam = (
            lambda_value(cfg.lambda_schedule, l, pairing.level_count)
            if use_lambda
            else 1.0
        )
        coef = _anchor_coefficients(mask, lam, denom)
        ii, pp = np.nonzero(mask)
        raw = losses[ii, pp]
        clamped = np.maximum(raw, floor)
        total += float(np.sum(coef[ii, pp] * clamped))
        per_level[l] = _level_entries(ii, pp, losses)
        per_level_clamped[l] = [
            (int(i), int(p), float(c)) for i, p, c in zip(ii, pp, clamped)
        ]
        raw_wins = raw >= floor
        keep = np.zeros((n, n), dtype=bool)
        keep[ii[raw_wins], pp[raw_wins]] = True
        weights += np.where(keep, coef, 0.0)
        if not cfg.clamp_floor_stop_gradient and floor_pair is not None:
            floored_weight = float(np.sum(coef[ii[~raw_wins], pp[~raw_wins]]))
            weights[floor_pair] += floored_weight
        # Monotonicity across processed levels is structural: every clamped
        # value at this (coarser) level is >= the floor, i.e. >= the max
        # clamped value of all finer levels.
        level_min = float(np.min(clamped))
        level_max = float(np.max(clamped))
        if prev_min_clamped is not None:
            assert level_min >= floor, "hierarchy clamp monotonicity broken"
        prev_min_clamped = level_min
        if raw.size and float(np.max(raw)) >= floor:
            k = int(np.argmax(raw))
            floor_pair = (int(ii[k]), int(pp[k]))
        floor = max(floor, level_max)
    gradient = _gradient_from_weights(weights, softmax, features, cfg.temperature)
    return LossOutput(
        total=total,
        per_level_pair_losses=per_level,
        gradient=gradient,
        violation_rate=loss_violation_rate(per_level),
        per_level_clamped=per_level_clamped,
    )


def hicone(
    features: np.ndarray, batch_paths: Sequence[LabelPath], cfg: LossConfig
) -> LossOutput:
    """Hierarchy-constraint loss: running-floor clamp, uniform level weights."""
    return _clamped_loss(features, batch_paths, cfg, use_lambda=False)


def himulcone(
    features: np.ndarray, batch_paths: Sequence[LabelPath], cfg: LossConfig
) -> LossOutput:
    """Combined loss: the clamp of hicone with the level weights of himulcon."""
    return _clamped_loss(features, batch_paths, cfg, use_lambda=True)


def supcon(
    features: np.ndarray, class_labels: Sequence[int], temperature: float
) -> LossOutput:
    """Single-level supervised contrastive loss (baseline and reduction target)."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < 2:
        raise DegenerateBatchError("need at least 2 samples")
    if len(class_labels) != n:
        raise StructuralError("labels and features disagree on batch size")
    _check_norms(features, _BATCH_NORM_ATOL)
    labels = np.asarray(class_labels)
    mask = (labels[:, None] == labels[None, :]) & ~np.eye(n, dtype=bool)
    if not mask.any():
        raise DegenerateBatchError("no positive pair in the batch")
    losses, softmax = pair_loss_matrix(features, temperature)
    weights = _anchor_coefficients(mask, 1.0, 1)
    total = float(np.sum(weights * np.where(weights != 0.0, losses, 0.0)))
    ii, pp = np.nonzero(mask)
    return LossOutput(
        total=total,
        per_level_pair_losses={0: _level_entries(ii, pp, losses)},
        gradient=_gradient_from_weights(weights, softmax, features, temperature),
        violation_rate=None,
    )


def simclr(
    features: np.ndarray, view_pairing: Sequence[int], temperature: float
) -> LossOutput:
    """Augmentation-pair InfoNCE over a perfect matching of views.

    ``view_pairing[i]`` is the index of anchor i's other view. The printed
    original omits the logarithm; this implementation includes it, which
    is what makes the single-positive case agree with the supervised loss.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    pairing = np.asarray(view_pairing, dtype=np.int64)
    if pairing.shape != (n,):
        raise StructuralError("view pairing must assign one partner per row")
    if np.any(pairing == np.arange(n)) or not np.array_equal(
        pairing[pairing], np.arange(n)
    ):
        raise StructuralError("view pairing must be a perfect matching")
    _check_norms(features, _BATCH_NORM_ATOL)
    losses, softmax = pair_loss_matrix(features, temperature)
    weights = np.zeros((n, n))
    weights[np.arange(n), pairing] = 1.0
    total = float(np.sum(weights * np.where(weights != 0.0, losses, 0.0)))
    entries = [
        (int(i), int(pairing[i]), float(losses[i, pairing[i]])) for i in range(n)
    ]
    return LossOutput(
        total=total,
        per_level_pair_losses={0: entries},
        gradient=_gradient_from_weights(weights, softmax, features, temperature),
        violation_rate=None,
    )
