"""advlab: desk-scale adversarial attack evaluation.

Train a small zoo of MLP classifiers, craft PGD/CW adversarial examples,
measure model-to-model transfer, and analyze which classes the untargeted
misclassifications land in using a class taxonomy.
"""

from .attacks import (
    AttackOutcome,
    AttackTrace,
    CwConfig,
    PgdConfig,
    attack_until,
    cw_attack,
    cw_loss,
    pgd_attack,
)
from .autodiff import Tape, Tensor, finite_diff_check, grad, tensor
from .evaluation import (
    DatasetItem,
    LabeledDataset,
    TransferRecord,
    collection_report,
    filter_commonly_correct,
    run_transfer_study,
    topk_misclassification,
    transfer_matrix,
)
from .hierarchy import (
    HierarchyTree,
    collections_of,
    deepest_common_collection,
    dump_hierarchy,
    is_intra_collection,
    load_hierarchy,
)
from .models import ModelSpec, TrainedModel, load_model, predict, save_model, train

__version__ = "0.1.0"

__all__ = [
    "AttackOutcome", "AttackTrace", "CwConfig", "PgdConfig", "attack_until",
    "cw_attack", "cw_loss", "pgd_attack",
    "Tape", "Tensor", "finite_diff_check", "grad", "tensor",
    "DatasetItem", "LabeledDataset", "TransferRecord", "collection_report",
    "filter_commonly_correct", "run_transfer_study", "topk_misclassification",
    "transfer_matrix",
    "HierarchyTree", "collections_of", "deepest_common_collection",
    "dump_hierarchy", "is_intra_collection", "load_hierarchy",
    "ModelSpec", "TrainedModel", "load_model", "predict", "save_model", "train",
    "__version__",
]
