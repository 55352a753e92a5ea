"""Self-verification routines behind `advlab verify` and the acceptance suite.

Each check returns (passed, messages); messages carry the seed and the first
counterexample so failures reproduce with the simplest rerun.
"""

from __future__ import annotations

import numpy as np

from . import hierarchy as hy
from .accel import get_backend
from .attacks import PgdConfig, pgd_attack
from .autodiff import add_bias, cross_entropy_logits, finite_diff_check, matmul, relu, tensor
from .models import ModelSpec, forward_logits, init_model
from .rng import philox_rng


def _random_net(rng, max_dim=16):
    depth = int(rng.integers(2, 4))
    dims = [int(rng.integers(2, max_dim + 1)) for _ in range(depth + 1)]
    spec = ModelSpec(name="probe", input_dim=dims[0], hidden_dims=tuple(dims[1:-1]),
                     num_classes=max(2, dims[-1]), seed=int(rng.integers(0, 2**31)))
    return init_model(spec)


def _loss_fn(model, cls):
    def fn(x):
        h = x
        last = len(model.weights) - 1
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            h = add_bias(matmul(h, tensor(w)), tensor(b))
            if i < last:
                h = relu(h)
        return cross_entropy_logits(h, cls)
    return fn


def _hidden_margin(model, x) -> float:
    """Smallest |pre-activation| across hidden layers; inputs this close to a
    relu kink are excluded from finite-difference comparisons."""
    h = x
    margin = np.inf
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ w + b
        margin = min(margin, float(np.abs(z).min()))
        h = np.maximum(z, 0.0)
    return margin


def gradient_check_suite(n: int = 100, seed: int = 2024, tol: float = 1e-4) -> tuple[bool, list[str]]:
    """Finite-difference check of the tape gradient on `n` random 2-3 layer
    networks with dims <= 16 and inputs in [-2, 2]."""
    rng = philox_rng(seed, stream=0)
    worst = 0.0
    for i in range(n):
        model = _random_net(rng)
        for _ in range(64):
            x = rng.uniform(-2.0, 2.0, size=model.spec.input_dim)
            if _hidden_margin(model, x) > 1e-3:
                break
        cls = int(rng.integers(0, model.spec.num_classes))
        report = finite_diff_check(_loss_fn(model, cls), tensor(x), h=1e-5, tol=tol)
        worst = max(worst, report.max_rel_err)
        if not report.passed:
            return False, [f"seed={seed}", f"instance {i}: rel err {report.max_rel_err:.3e} "
                           f"at coordinate {report.worst_index} (tol {tol:g})"]
    return True, [f"seed={seed}", f"{n} networks checked, worst rel err {worst:.3e} < {tol:g}"]


def pgd_soundness_suite(n: int = 1000, seed: int = 99, backend=None) -> tuple[bool, list[str]]:
    """Fuzz PGD over random models, inputs and budgets; every outcome must
    stay inside the epsilon ball and the [0, 1] box, and epsilon=0 must
    return the input unchanged."""
    rng = philox_rng(seed, stream=1)
    backend = get_backend(backend)
    models = [_random_net(rng) for _ in range(8)]
    for i in range(n):
        model = models[int(rng.integers(0, len(models)))]
        x = rng.uniform(0.0, 1.0, size=model.spec.input_dim)
        pred = int(np.argmax(forward_logits(model.weights, model.biases, x)))
        eps = 0.0 if i % 25 == 0 else float(rng.uniform(0.0, 1.0))
        cfg = PgdConfig(
            epsilon=eps,
            alpha=float(rng.uniform(0.0, eps)) if eps > 0 else 0.0,
            max_iters=int(rng.integers(1, 13)),
            target_class=None if rng.random() < 0.5 else int((pred + 1) % model.spec.num_classes),
            random_start=bool(rng.random() < 0.3),
        )
        out = pgd_attack(model, x, pred, cfg, backend=backend, rng=rng)
        linf = float(np.abs(out.adversarial - x).max())
        if linf > eps + 1e-9:
            return False, [f"seed={seed}", f"instance {i}: ||delta||_inf {linf} > eps {eps}"]
        if out.adversarial.min() < 0.0 or out.adversarial.max() > 1.0:
            return False, [f"seed={seed}", f"instance {i}: iterate left [0, 1]"]
        if eps == 0.0 and not np.array_equal(out.adversarial, x):
            return False, [f"seed={seed}", f"instance {i}: eps=0 changed the input"]
    return True, [f"seed={seed}", f"{n} attacks fuzzed on backend {backend.name!r}; all inside the ball"]


def random_tree_doc(rng, max_classes: int = 50) -> dict:
    """Random valid hierarchy document with <= max_classes classes."""
    m = int(rng.integers(2, max_classes + 1))
    pool = [int(c) for c in rng.permutation(m)]
    # leave a few classes for the implicit root-only remainder
    pool = pool[:int(rng.integers(1, m + 1))]

    counter = [0]

    def build(classes, path, depth):
        counter[0] += 1
        node = {"name": f"c{counter[0]}", "path": path}
        if depth >= 4 or len(classes) <= 1 or rng.random() < 0.3:
            node["classes"] = sorted(classes)
            return node
        n_res = int(rng.integers(0, len(classes) // 3 + 1))
        if n_res:
            node["classes"] = sorted(classes[:n_res])
        rest = classes[n_res:]
        k = int(rng.integers(1, min(4, len(rest)) + 1))
        bounds = sorted(rng.choice(np.arange(1, len(rest)), size=k - 1, replace=False)) if k > 1 else []
        chunks = np.split(np.asarray(rest), bounds)
        node["children"] = [build([int(c) for c in chunk], f"{path}.{i + 1}" if path else str(i + 1), depth + 1)
                            for i, chunk in enumerate(chunks)]
        return node

    root = {"name": "root", "path": ""}
    if pool:
        k = int(rng.integers(1, min(4, len(pool)) + 1))
        bounds = sorted(rng.choice(np.arange(1, len(pool)), size=k - 1, replace=False)) if k > 1 else []
        chunks = np.split(np.asarray(pool), bounds)
        root["children"] = [build([int(c) for c in chunk], str(i + 1), 1)
                            for i, chunk in enumerate(chunks)]
    return {"num_classes": m, "root": root}


def hierarchy_property_suite(n_trees: int = 100, seed: int = 7, pairs_per_tree: int = 50) -> tuple[bool, list[str]]:
    """Monotonicity, root totality, and dump/load round-trip on random trees."""
    rng = philox_rng(seed, stream=2)
    for t in range(n_trees):
        tree = hy.load_hierarchy(random_tree_doc(rng))
        m = tree.num_classes
        if hy.dump_hierarchy(hy.load_hierarchy(hy.dump_hierarchy(tree))) != hy.dump_hierarchy(tree):
            return False, [f"seed={seed}", f"tree {t}: round-trip changed the tree"]
        total_direct = sum(len(n.direct_classes) for n in tree.nodes.values())
        if total_direct > m:
            return False, [f"seed={seed}", f"tree {t}: {total_direct} assigned classes > {m}"]
        for _ in range(pairs_per_tree):
            a, b = int(rng.integers(0, m)), int(rng.integers(0, m))
            if not hy.is_intra_collection(tree, tree.root_id, a, b):
                return False, [f"seed={seed}", f"tree {t}: root not total for ({a}, {b})"]
            deepest = hy.deepest_common_collection(tree, a, b)
            chain = hy.collections_of(tree, a)
            if deepest not in chain:
                return False, [f"seed={seed}",
                               f"tree {t}: deepest common of ({a}, {b}) is off a's ancestor chain"]
            idx = chain.index(deepest)
            for nid in chain[:idx + 1]:
                if not hy.is_intra_collection(tree, nid, a, b):
                    return False, [f"seed={seed}",
                                   f"tree {t}: intra not monotone at node {nid} for ({a}, {b})"]
            for nid in chain[idx + 1:]:
                if hy.is_intra_collection(tree, nid, a, b):
                    return False, [f"seed={seed}",
                                   f"tree {t}: node {nid} below the deepest common holds both ({a}, {b})"]
    return True, [f"seed={seed}", f"{n_trees} random trees verified"]
