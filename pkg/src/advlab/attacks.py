"""PGD and CW adversarial attacks, targeted and untargeted.

PGD walks sign(grad) steps of the cross-entropy loss and projects onto the
L-inf ball intersected with the valid data range [0, 1]. The targeted mode
descends toward the chosen class; the untargeted mode ascends on the true
class (the standard formulation). CW minimizes

    l2_weight * ||x_adv - x||_2^2 + margin_loss(x_adv)

by plain gradient descent over the tanh reparameterization
x_adv = (tanh(w) + 1) / 2, which keeps iterates inside (0, 1) for free.

Both loops stop at the first iteration whose iterate satisfies the success
predicate (prediction == target for targeted, != true class otherwise) and
report how many iterations that took.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .accel import get_backend
from .errors import ContractError, NumericError
from .models import TrainedModel, predict
from .rng import philox_rng

_TANH_CLIP = 1.0 - 1e-6


@dataclass
class PgdConfig:
    """L-inf attack parameters; alpha defaults to epsilon / 10."""

    epsilon: float
    alpha: float | None = None
    max_iters: int = 50
    target_class: int | None = None
    random_start: bool = False

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0) or not np.isfinite(self.epsilon):
            raise ContractError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.alpha is None:
            self.alpha = self.epsilon / 10.0
        if not (0.0 <= self.alpha <= self.epsilon):
            raise ContractError(f"alpha must satisfy 0 <= alpha <= epsilon, got {self.alpha}")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")

    @property
    def targeted(self) -> bool:
        return self.target_class is not None

    attack_name = "PGD"


@dataclass
class CwConfig:
    """CW parameters: confidence kappa, L2 trade-off weight, GD step size."""

    kappa: float = 0.0
    l2_weight: float = 1.0
    step_size: float = 1e-2
    max_iters: int = 1000
    target_class: int | None = None

    def __post_init__(self):
        if self.kappa < 0 or not np.isfinite(self.kappa):
            raise ContractError(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.l2_weight <= 0 or self.step_size <= 0:
            raise ContractError("l2_weight and step_size must be positive")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")

    @property
    def targeted(self) -> bool:
        return self.target_class is not None

    attack_name = "CW"


@dataclass
class AttackOutcome:
    adversarial: np.ndarray
    iterations_used: int
    success: bool
    final_predicted_class: int
    perturbation_linf: float
    perturbation_l2: float
    config: PgdConfig | CwConfig


@dataclass
class TraceEntry:
    iteration: int
    predicted_class: int
    success: tuple[bool, ...]


@dataclass
class AttackTrace:
    """Per-iteration view of an attack against a set of registered models."""

    target_names: tuple[str, ...]
    entries: list[TraceEntry] = field(default_factory=list)
    first_success: list[int | None] = field(default_factory=list)
    outcome: AttackOutcome | None = None


def cw_loss(logits, c: int, kappa: float):
    """max(max_{i != c} z_i - z_c, -kappa); ties in the inner max resolve to
    the lowest class index.

    Accepts a plain array (returns a float) or a taped tensor (returns a
    differentiable scalar tensor).
    """
    if isinstance(logits, ad.Tensor):
        return ad.margin_loss(logits, c, kappa, targeted=True)
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ContractError(f"need a 1-D logit vector with >= 2 classes, got shape {z.shape}")
    if not 0 <= c < z.shape[0]:
        raise IndexError(f"class index {c} out of range for {z.shape[0]} logits")
    masked = z.copy()
    masked[c] = -np.inf
    return float(max(masked.max() - z[c], -float(kappa)))


def _resolve_mode(model: TrainedModel, true_class: int, cfg) -> tuple[bool, int]:
    m = model.spec.num_classes
    if not 0 <= true_class < m:
        raise ContractError(f"true class {true_class} out of range for {m} classes")
    if cfg.target_class is None:
        return False, true_class
    c = int(cfg.target_class)
    if not 0 <= c < m:
        raise ContractError(f"target class {c} out of range for {m} classes")
    if c == true_class:
        raise ContractError("target class must differ from the true class")
    return True, c


def _pgd_iterates(model, x, cls, targeted, cfg, backend, rng) -> Iterator[tuple[int, np.ndarray]]:
    eps = cfg.epsilon
    lo = np.clip(x - eps, 0.0, 1.0)
    hi = np.clip(x + eps, 0.0, 1.0)
    adv = x.copy()
    if cfg.random_start and eps > 0.0:
        adv = np.clip(x + rng.uniform(-eps, eps, size=x.shape), lo, hi)
    for n in range(1, cfg.max_iters + 1):
        _, g = backend.ce_loss_grad(model, adv, cls)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite PGD gradient at iteration {n}")
        step = cfg.alpha * np.sign(g)
        adv = adv - step if targeted else adv + step
        adv = np.minimum(np.maximum(adv, lo), hi)
        yield n, adv


def _cw_iterates(model, x, cls, targeted, cfg, backend, rng) -> Iterator[tuple[int, np.ndarray]]:
    w = np.arctanh(np.clip(2.0 * x - 1.0, -_TANH_CLIP, _TANH_CLIP))
    for n in range(1, cfg.max_iters + 1):
        t = np.tanh(w)
        xt = (t + 1.0) / 2.0
        _, fg = backend.margin_loss_grad(model, xt, cls, cfg.kappa, targeted)
        gx = 2.0 * cfg.l2_weight * (xt - x) + fg
        gw = gx * (1.0 - t * t) / 2.0
        if not np.all(np.isfinite(gw)):
            raise NumericError(f"non-finite CW gradient at iteration {n}")
        w = w - cfg.step_size * gw
        t = np.tanh(w)
        yield n, (t + 1.0) / 2.0


_ITERATES = {"pgd": _pgd_iterates, "cw": _cw_iterates}


def _run(model, x, true_class, kind, cfg, backend=None, rng=None,
         targets: Sequence[TrainedModel] | None = None):
    backend = get_backend(backend)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if predict(model, x, 1).top_class != true_class:
        raise ContractError(
            f"source input is not classified as {true_class} by {model.name!r}; "
            "attacks need correctly classified sources"
        )
    targeted, cls = _resolve_mode(model, true_class, cfg)
    if rng is None:
        rng = philox_rng(0, stream=7)

    trace = None
    if targets is not None:
        if len(targets) == 0:
            raise ContractError("attack_until needs at least one registered target model")
        trace = AttackTrace(target_names=tuple(t.name for t in targets),
                            first_success=[None] * len(targets))

    def predicate(pred: int) -> bool:
        return pred == cls if targeted else pred != true_class

    adv = x.copy()
    pred = true_class
    iterations = cfg.max_iters
    success = False
    for n, adv in _ITERATES[kind](model, x, cls, targeted, cfg, backend, rng):
        pred = int(np.argmax(backend.logits(model, adv)))
        if trace is not None:
            flags = []
            for i, tgt in enumerate(targets):
                tpred = int(np.argmax(backend.logits(tgt, adv)))
                hit = predicate(tpred)
                flags.append(hit)
                if hit and trace.first_success[i] is None:
                    trace.first_success[i] = n
            trace.entries.append(TraceEntry(n, pred, tuple(flags)))
        if predicate(pred):
            iterations, success = n, True
            break

    delta = adv - x
    outcome = AttackOutcome(
        adversarial=adv,
        iterations_used=iterations,
        success=success,
        final_predicted_class=pred,
        perturbation_linf=float(np.abs(delta).max()),
        perturbation_l2=float(np.sqrt(np.square(delta).sum())),
        config=cfg,
    )
    if trace is not None:
        trace.outcome = outcome
        return trace
    return outcome


def pgd_attack(model: TrainedModel, x, true_class: int, cfg: PgdConfig,
               backend=None, rng=None) -> AttackOutcome:
    """Iterate x <- project(x -/+ alpha * sign(grad CE)) until the prediction
    flips (untargeted) or reaches the target class (targeted)."""
    return _run(model, x, true_class, "pgd", cfg, backend=backend, rng=rng)


def cw_attack(model: TrainedModel, x, true_class: int, cfg: CwConfig,
              backend=None) -> AttackOutcome:
    """Gradient descent on l2_weight * ||delta||^2 + margin loss over the
    tanh box reparameterization; stops at the first successful iterate."""
    return _run(model, x, true_class, "cw", cfg, backend=backend)


def attack_until(model: TrainedModel, x, true_class: int, attack_kind: str, cfg,
                 targets: Sequence[TrainedModel], backend=None, rng=None) -> AttackTrace:
    """Run an attack while checking every registered target model at every
    iteration; records the first-success iteration per target."""
    kind = attack_kind.lower()
    if kind not in _ITERATES:
        raise ContractError(f"unknown attack kind {attack_kind!r}; expected 'pgd' or 'cw'")
    return _run(model, x, true_class, kind, cfg, backend=backend, rng=rng, targets=list(targets))
