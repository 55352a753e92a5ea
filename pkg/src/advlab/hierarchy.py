"""Class taxonomy: named collections of class indices arranged as a tree.

File format (JSON)::

    {
      "num_classes": 1000,
      "notes": "optional free text",
      "root": {
        "name": "All",
        "path": "",
        "classes": [7, 8],          # classes attached directly to this node
        "children": [ {...}, ... ]
      }
    }

A node's collection is its direct classes plus everything under its
children. Sibling subtrees must be disjoint, so every class has one
well-defined deepest collection; classes listed nowhere belong to the root
only. Paths are dotted integer labels ("1.1.2.1.4"); each child extends its
parent's path by one segment, and the root's path is empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import (
    HierarchyConflictError,
    HierarchyRangeError,
    HierarchyStructureError,
)


@dataclass(frozen=True)
class Node:
    node_id: int
    name: str
    path: str
    parent: int | None
    children: tuple[int, ...]
    direct_classes: frozenset[int]
    class_set: frozenset[int]


@dataclass(frozen=True)
class Collection:
    node_id: int
    name: str
    path: str
    class_set: frozenset[int]

    @property
    def class_count(self) -> int:
        return len(self.class_set)


def path_sort_key(path: str) -> tuple[int, ...]:
    return () if path == "" else tuple(int(p) for p in path.split("."))


class HierarchyTree:
    """Immutable after load; all queries are pure."""

    def __init__(self, nodes: dict[int, Node], root_id: int, num_classes: int, notes: str = ""):
        self.nodes = nodes
        self.root_id = root_id
        self.num_classes = num_classes
        self.notes = notes
        # validation guarantees each class is direct in at most one node,
        # which is then the deepest collection containing it
        self._deepest: dict[int, int] = {}
        for nid, node in nodes.items():
            if nid == root_id:
                continue
            for cls in node.direct_classes:
                self._deepest[cls] = nid

    def _preorder(self):
        out, stack = [], [self.root_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown collection id {node_id}") from None

    def find(self, key: str) -> int:
        """Node id by exact path, or by name when the name is unambiguous."""
        by_path = [n.node_id for n in self.nodes.values() if n.path == key]
        if by_path:
            return by_path[0]
        by_name = [n.node_id for n in self.nodes.values() if n.name == key]
        if len(by_name) == 1:
            return by_name[0]
        if not by_name:
            raise KeyError(f"no collection named or at path {key!r}")
        raise KeyError(f"name {key!r} is ambiguous; use its path")

    def collection(self, node_id: int) -> Collection:
        n = self.node(node_id)
        return Collection(node_id=n.node_id, name=n.name, path=n.path, class_set=n.class_set)

    def class_count(self, key: str) -> int:
        return len(self.node(self.find(key)).class_set)

    def nodes_by_path(self) -> list[Node]:
        return sorted(self.nodes.values(), key=lambda n: path_sort_key(n.path))

    def validate_class(self, cls: int) -> int:
        cls = int(cls)
        if not 0 <= cls < self.num_classes:
            raise HierarchyRangeError(f"class index {cls} outside [0, {self.num_classes})")
        return cls


def _build(obj: dict, parent: Node | None, nodes: dict[int, Node], seen_paths: set[str],
           num_classes: int) -> int:
    if not isinstance(obj, dict) or "name" not in obj:
        raise HierarchyStructureError(f"node is not an object with a name: {obj!r}")
    name = obj["name"]
    path = obj.get("path", "")
    if parent is None:
        if path != "":
            raise HierarchyStructureError(f"root path must be empty, got {path!r}")
    else:
        head, _, seg = path.rpartition(".")
        if head != parent.path:
            raise HierarchyStructureError(
                f"node {name!r}: path {path!r} does not extend parent path {parent.path!r}")
        if not seg.isdigit():
            raise HierarchyStructureError(f"node {name!r}: path segment {seg!r} is not an integer")
    if path in seen_paths:
        raise HierarchyStructureError(f"duplicate path {path!r} (node {name!r})")
    seen_paths.add(path)

    direct = frozenset(int(c) for c in obj.get("classes", ()))
    for cls in direct:
        if not 0 <= cls < num_classes:
            raise HierarchyRangeError(f"node {name!r}: class index {cls} outside [0, {num_classes})")

    node_id = len(nodes)
    placeholder = Node(node_id, name, path, parent.node_id if parent else None, (), direct, frozenset())
    nodes[node_id] = placeholder

    child_ids = []
    union: set[int] = set(direct)
    for child_obj in obj.get("children", ()):
        cid = _build(child_obj, placeholder, nodes, seen_paths, num_classes)
        child_set = nodes[cid].class_set
        overlap = union & child_set
        if overlap:
            raise HierarchyConflictError(
                f"class {min(overlap)} appears in two sibling subtrees under {name!r}")
        union |= child_set
        child_ids.append(cid)

    if parent is not None and not union:
        raise HierarchyStructureError(f"collection {name!r} has an empty class set")
    nodes[node_id] = Node(node_id, name, path, placeholder.parent, tuple(child_ids),
                          direct, frozenset(union))
    return node_id


def load_hierarchy(source) -> HierarchyTree:
    """Load and validate a hierarchy from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if "num_classes" not in doc or "root" not in doc:
        raise HierarchyStructureError("hierarchy file needs num_classes and root")
    num_classes = int(doc["num_classes"])
    if num_classes < 1:
        raise HierarchyStructureError(f"num_classes must be positive, got {num_classes}")
    nodes: dict[int, Node] = {}
    root_id = _build(doc["root"], None, nodes, set(), num_classes)
    # the root holds every class, including ones no named collection claims
    root = nodes[root_id]
    nodes[root_id] = Node(root.node_id, root.name, root.path, None, root.children,
                          root.direct_classes, frozenset(range(num_classes)))
    return HierarchyTree(nodes, root_id, num_classes, notes=str(doc.get("notes", "")))


def dump_hierarchy(tree: HierarchyTree) -> dict:
    """Inverse of load_hierarchy (round-trips to an identical tree)."""

    def render(nid: int) -> dict:
        n = tree.nodes[nid]
        out: dict = {"name": n.name, "path": n.path}
        if n.direct_classes:
            out["classes"] = sorted(n.direct_classes)
        if n.children:
            out["children"] = [render(c) for c in n.children]
        return out

    doc = {"num_classes": tree.num_classes, "root": render(tree.root_id)}
    if tree.notes:
        doc["notes"] = tree.notes
    return doc


def save_hierarchy(tree: HierarchyTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_hierarchy(tree), fh, indent=1, sort_keys=True)
        fh.write("\n")


def is_intra_collection(tree: HierarchyTree, collection_id: int, class_a: int, class_b: int) -> bool:
    """True iff both classes belong to the collection."""
    node = tree.node(collection_id)
    a, b = tree.validate_class(class_a), tree.validate_class(class_b)
    if collection_id == tree.root_id:
        return True
    return a in node.class_set and b in node.class_set


def collections_of(tree: HierarchyTree, class_index: int) -> list[int]:
    """Ancestor chain of the class's deepest collection, root first."""
    cls = tree.validate_class(class_index)
    nid = tree._deepest.get(cls, tree.root_id)
    chain = []
    cur: int | None = nid
    while cur is not None:
        chain.append(cur)
        cur = tree.nodes[cur].parent
    chain.reverse()
    return chain


def deepest_common_collection(tree: HierarchyTree, class_a: int, class_b: int) -> int:
    """Deepest node containing both classes; the root when nothing deeper does."""
    chain_a = collections_of(tree, class_a)
    chain_b = collections_of(tree, class_b)
    common = tree.root_id
    for a, b in zip(chain_a, chain_b):
        if a != b:
            break
        common = a
    return common


def bundled_hierarchy_path(name: str):
    """Filesystem path of a hierarchy shipped with the package
    ("imagenet" or "fixture")."""
    fname = {"imagenet": "imagenet_hierarchy.json", "fixture": "fixture_hierarchy.json"}.get(name)
    if fname is None:
        raise KeyError(f"no bundled hierarchy named {name!r}")
    return resources.files("advlab.data").joinpath(fname)
