"""Transfer-study pipeline: source filtering, attack runs across the zoo,
and the metric set computed from the resulting record stream.

One TransferRecord is emitted per (item, source model, attack, target model)
whenever the white-box attack on the source model succeeds within budget.
Every report in the toolkit is a pure aggregation over such a record list,
so the same functions serve both in-process studies and ingested logs.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .attacks import CwConfig, PgdConfig, cw_attack, pgd_attack
from .errors import AdvlabError, ContractError
from .hierarchy import HierarchyTree, path_sort_key
from .models import TrainedModel, predict

log = logging.getLogger("advlab")

ATTACK_NAMES = ("PGD", "CW")


@dataclass(frozen=True)
class DatasetItem:
    item_id: str
    x: np.ndarray
    true_class: int


@dataclass
class LabeledDataset:
    items: list[DatasetItem]
    num_classes: int
    note: str = ""

    def __post_init__(self):
        ids = [it.item_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ContractError("item ids must be unique")
        for it in self.items:
            if not 0 <= it.true_class < self.num_classes:
                raise ContractError(f"item {it.item_id}: class {it.true_class} out of range")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def inputs(self) -> np.ndarray:
        return np.stack([it.x for it in self.items]) if self.items else np.zeros((0, 0))

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([it.true_class for it in self.items], dtype=np.int64)


@dataclass(frozen=True)
class TransferRecord:
    """Outcome of one adversarial example evaluated on one target model."""

    item_id: str
    true_class: int
    source_model: str
    attack: str
    target_model: str
    clean_top_k: tuple[int, ...]
    adv_pred: int
    target_class: int | None = None

    def __post_init__(self):
        if self.attack not in ATTACK_NAMES:
            raise ContractError(f"unknown attack name {self.attack!r}")
        if not self.clean_top_k or self.clean_top_k[0] != self.true_class:
            raise ContractError(
                f"clean_top_k must start with the true class {self.true_class}, got {self.clean_top_k}")

    @property
    def untargeted_success(self) -> bool:
        return self.adv_pred != self.true_class

    @property
    def targeted_success(self) -> bool:
        return (self.target_class is not None
                and self.adv_pred == self.target_class
                and self.adv_pred != self.true_class)


def is_untargeted_transfer(r: TransferRecord) -> bool:
    """Prediction moved off the true class and, when a target class exists,
    off the target class as well."""
    return r.adv_pred != r.true_class and (r.target_class is None or r.adv_pred != r.target_class)


def is_targeted_transfer(r: TransferRecord) -> bool:
    return r.targeted_success


def filter_commonly_correct(dataset: LabeledDataset, models: Sequence[TrainedModel]) -> LabeledDataset:
    """Keep exactly the items every model classifies correctly."""
    if not models:
        raise ContractError("need at least one model to filter against")
    kept = []
    for it in dataset.items:
        if all(predict(m, it.x, 1).top_class == it.true_class for m in models):
            kept.append(it)
    note = ""
    if not kept:
        note = "no items are classified correctly by all models"
        log.warning(note)
    return LabeledDataset(items=kept, num_classes=dataset.num_classes, note=note)


def _attack_fn(cfg):
    if isinstance(cfg, PgdConfig):
        return pgd_attack
    if isinstance(cfg, CwConfig):
        return cw_attack
    raise ContractError(f"unsupported attack config {type(cfg).__name__}")


def _one_unit(item, source, cfg, models, top_k_depth, backend):
    try:
        outcome = _attack_fn(cfg)(source, item.x, item.true_class, cfg, backend=backend)
    except AdvlabError as exc:
        raise type(exc)(f"attack failed for item {item.item_id!r} on model "
                        f"{source.name!r}: {exc}") from exc
    if not outcome.success:
        return []
    records = []
    for target in models:
        clean = predict(target, item.x, top_k_depth)
        adv = predict(target, outcome.adversarial, 1)
        records.append(TransferRecord(
            item_id=item.item_id,
            true_class=item.true_class,
            source_model=source.name,
            attack=cfg.attack_name,
            target_model=target.name,
            clean_top_k=tuple(c for c, _ in clean.top_k),
            adv_pred=adv.top_class,
            target_class=cfg.target_class,
        ))
    return records


def run_transfer_study(dataset: LabeledDataset, models: Sequence[TrainedModel],
                       attacks: Sequence[PgdConfig | CwConfig], *, top_k_depth: int = 5,
                       backend=None, target_rule: Callable[[int, int], int] | None = None,
                       jobs: int = 1) -> list[TransferRecord]:
    """Attack every (item, source model, attack config); on white-box success
    evaluate the adversarial example on every model in the zoo.

    The dataset is expected to be pre-filtered (see filter_commonly_correct).
    `target_rule(true_class, num_classes)` turns untargeted configs into
    per-item targeted ones; items whose true class equals a fixed target are
    skipped. Records come back sorted, whatever the parallelism.
    """
    if len(models) < 2:
        raise ContractError("a transfer study needs at least two models")
    if top_k_depth < 1:
        raise ContractError("top_k_depth must be >= 1")
    units = []
    for cfg in attacks:
        for source in models:
            for item in dataset.items:
                cfg_i = cfg
                if cfg.target_class is None and target_rule is not None:
                    cfg_i = replace(cfg, target_class=target_rule(item.true_class, dataset.num_classes))
                if cfg_i.target_class is not None and cfg_i.target_class == item.true_class:
                    continue
                units.append((item, source, cfg_i))

    records: list[TransferRecord] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(lambda u: _one_unit(*u, models, top_k_depth, backend), units):
                records.extend(out)
    else:
        for u in units:
            records.extend(_one_unit(*u, models, top_k_depth, backend))
    records.sort(key=lambda r: (r.item_id, r.source_model, r.attack, r.target_model))
    return records


@dataclass
class TransferMatrix:
    """Per (source, target) success counts for one attack and one mode."""

    attack: str
    mode: str
    models: tuple[str, ...]
    counts: dict[tuple[str, str], int]
    attempted: dict[str, int]

    def count(self, source: str, target: str) -> int:
        return self.counts.get((source, target), 0)

    def percentage(self, source: str, target: str) -> float | None:
        n = self.attempted.get(source, 0)
        return None if n == 0 else 100.0 * self.count(source, target) / n

    def cells(self) -> Iterable[tuple[str, str, int]]:
        for s in self.models:
            for t in self.models:
                yield s, t, self.count(s, t)


def transfer_matrix(records: Sequence[TransferRecord], attack: str, mode: str = "untargeted",
                    attempted: int | dict[str, int] | None = None) -> TransferMatrix:
    """Tally per-cell successes. `attempted` supplies the per-source
    denominator (the filtered-source count); without it the distinct items
    seen in the log for each source stand in, which makes diagonal cells
    read 100%.
    """
    if mode not in ("untargeted", "targeted"):
        raise ContractError(f"mode must be 'untargeted' or 'targeted', got {mode!r}")
    recs = [r for r in records if r.attack == attack]
    if not recs:
        raise KeyError(f"no records for attack {attack!r}")
    success = is_untargeted_transfer if mode == "untargeted" else is_targeted_transfer
    names = sorted({r.source_model for r in recs} | {r.target_model for r in recs})
    counts: dict[tuple[str, str], int] = {}
    seen_items: dict[str, set] = {s: set() for s in names}
    for r in recs:
        if success(r):
            key = (r.source_model, r.target_model)
            counts[key] = counts.get(key, 0) + 1
        seen_items.setdefault(r.source_model, set()).add(r.item_id)
    if attempted is None:
        att = {s: len(seen_items.get(s, ())) for s in names}
    elif isinstance(attempted, int):
        att = {s: attempted for s in names}
    else:
        att = {s: int(attempted.get(s, 0)) for s in names}
    return TransferMatrix(attack=attack, mode=mode, models=tuple(names), counts=counts, attempted=att)


@dataclass
class TopkReport:
    """How often adversarial predictions fall inside the clean top-K."""

    k: int
    hits: int
    total: int
    per_class: dict[int, tuple[int, int]]

    @property
    def rate(self) -> float | None:
        return None if self.total == 0 else self.hits / self.total

    def class_rate(self, cls: int) -> float | None:
        hits, total = self.per_class.get(cls, (0, 0))
        return None if total == 0 else hits / total


def _check_depth(records: Iterable[TransferRecord], k: int):
    if k < 2:
        raise ContractError(f"K must be >= 2, got {k}")
    for r in records:
        if k > len(r.clean_top_k):
            raise ContractError(
                f"K={k} exceeds the captured top-K depth {len(r.clean_top_k)} "
                f"(item {r.item_id}, target {r.target_model})")


def topk_misclassification(records: Sequence[TransferRecord], k: int) -> TopkReport:
    """Fraction of transfer successes predicted into the clean top-K of their
    source image, overall and per true class."""
    transfers = [r for r in records if is_untargeted_transfer(r)]
    _check_depth(transfers, k)
    hits = 0
    per_class: dict[int, list[int]] = {}
    for r in transfers:
        hit = r.adv_pred in r.clean_top_k[:k]
        hits += hit
        cell = per_class.setdefault(r.true_class, [0, 0])
        cell[0] += hit
        cell[1] += 1
    return TopkReport(k=k, hits=hits, total=len(transfers),
                      per_class={c: (h, t) for c, (h, t) in sorted(per_class.items())})


@dataclass
class CollectionReportRow:
    """One taxonomy collection's share of sources, transfers, and where the
    transferred predictions landed."""

    path: str
    name: str
    classes_in_collection: int
    source_images: int
    adv_examples: int
    intra_count: int
    topk_hits: dict[int, int] = field(default_factory=dict)

    @property
    def intra_pct(self) -> float | None:
        return None if self.adv_examples == 0 else 100.0 * self.intra_count / self.adv_examples

    def topk_pct(self, k: int) -> float | None:
        if self.adv_examples == 0:
            return None
        return 100.0 * self.topk_hits[k] / self.adv_examples


def collection_report(records: Sequence[TransferRecord], tree: HierarchyTree,
                      collections: str | Sequence = "all",
                      source_class_counts: dict[int, int] | None = None,
                      top_ks: Sequence[int] = (3, 5)) -> list[CollectionReportRow]:
    """Table of per-collection transfer statistics, ordered by hierarchy path.

    `source_class_counts` maps class index to filtered-source count; without
    it the distinct item ids seen in the records stand in.
    """
    if collections == "all":
        node_ids = [n.node_id for n in tree.nodes_by_path()]
    else:
        node_ids = [c if isinstance(c, int) else tree.find(c) for c in collections]
        node_ids.sort(key=lambda nid: path_sort_key(tree.node(nid).path))
    transfers = [r for r in records if is_untargeted_transfer(r)]
    for k in top_ks:
        _check_depth(transfers, k)

    rows = []
    for nid in node_ids:
        node = tree.node(nid)
        cset = node.class_set
        if source_class_counts is not None:
            sources = sum(source_class_counts.get(c, 0) for c in cset)
        else:
            sources = len({r.item_id for r in records if r.true_class in cset})
        adv = [r for r in transfers if r.true_class in cset]
        intra = sum(1 for r in adv if r.adv_pred in cset)
        hits = {k: sum(1 for r in adv if r.adv_pred in r.clean_top_k[:k]) for k in top_ks}
        rows.append(CollectionReportRow(
            path=node.path, name=node.name, classes_in_collection=len(cset),
            source_images=sources, adv_examples=len(adv), intra_count=intra,
            topk_hits=hits,
        ))
    return rows
