"""Backend selection for the attack hot loop.

``ADVLAB_BACKEND`` picks the implementation: ``numba`` (fused jit kernels),
``numpy`` (tape-backed fallback), or ``auto`` (default; numba when it
imports, numpy otherwise). Both backends expose the same three calls:
``logits``, ``ce_loss_grad`` and ``margin_loss_grad``.
"""

import os

from .fallback import NumpyBackend

ENV_VAR = "ADVLAB_BACKEND"

try:
    from . import kernels as _kernels

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _kernels = None
    _HAVE_NUMBA = False


class NumbaBackend:
    name = "numba"

    def logits(self, model, x):
        params, dims = model.packed()
        return _kernels.mlp_logits(params, dims, x)

    def ce_loss_grad(self, model, x, cls):
        params, dims = model.packed()
        return _kernels.ce_loss_grad_x(params, dims, x, cls)

    def margin_loss_grad(self, model, x, cls, kappa, targeted):
        params, dims = model.packed()
        return _kernels.margin_loss_grad_x(params, dims, x, cls, kappa, targeted)


_BACKENDS = {"numpy": NumpyBackend()}
if _HAVE_NUMBA:
    _BACKENDS["numba"] = NumbaBackend()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Resolve a backend by name, env var, or auto-detection."""
    if name is None:
        name = os.environ.get(ENV_VAR, "auto")
    if not isinstance(name, str):
        return name  # already a backend object
    name = name.lower()
    if name == "auto":
        name = "numba" if _HAVE_NUMBA else "numpy"
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {', '.join(available_backends())}") from None
