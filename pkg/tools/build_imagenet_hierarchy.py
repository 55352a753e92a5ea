#!/usr/bin/env python3
"""Regenerate src/advlab/data/imagenet_hierarchy.json.

Builds a strict-tree transcription of the ImageNet/WordNet collection layout
with representative class counts. WordNet is a DAG; collections that overlap
other branches in the original lattice cannot keep their DAG-based sizes in
a tree, so "Domesticated animal" is omitted and Covering/Transport/Vehicle
hold only the classes no other branch claims. Class indices are assigned as
contiguous blocks in path order and do not correspond to real ImageNet ids.
"""

import json
from pathlib import Path

NUM_CLASSES = 1000

# (path, display name, total classes in the collection)
COLLECTIONS = [
    ("1", "Organism", 410),
    ("1.1", "Creature", 398),
    ("1.1.2", "Vertebrate", 337),
    ("1.1.2.1", "Mammalian", 218),
    ("1.1.2.1.1", "Primate", 20),
    ("1.1.2.1.2", "Hoofed mammal", 17),
    ("1.1.2.1.3", "Feline", 13),
    ("1.1.2.1.4", "Canine", 130),
    ("1.1.2.2", "Aquatic vertebrate", 16),
    ("1.1.2.3", "Bird", 59),
    ("1.1.2.4", "Reptilian", 36),
    ("1.1.2.4.1", "Saurian", 11),
    ("1.1.2.4.2", "Serpent", 17),
    ("1.1.3", "Invertebrate", 61),
    ("1.1.3.1", "Arthropod", 47),
    ("1.1.3.1.1", "Insect", 27),
    ("1.1.3.1.2", "Arachnoid", 9),
    ("1.1.3.1.3", "Crustacean", 9),
    ("2", "Artifact", 522),
    ("2.1", "Commodity", 63),
    ("2.1.1", "Consumer Good", 62),
    ("2.1.1.1", "Clothing", 49),
    ("2.1.1.1.1", "Garment", 24),
    ("2.1.1.2", "Durable", 13),
    ("2.2", "Covering", 49),        # 90 in the DAG; clothing overlap excluded
    ("2.2.1", "Protective covering", 27),
    ("2.3", "Instrumentation", 353),
    ("2.3.1", "Container", 99),
    ("2.3.1.1", "Vessel", 23),
    ("2.3.1.2", "Wheeled vehicle", 43),
    ("2.3.1.2.1", "Self-propelled vehicle", 31),
    ("2.3.1.2.1.1", "Motor vehicle", 22),
    ("2.3.2", "Transport", 29),     # 71 in the DAG; wheeled-vehicle overlap excluded
    ("2.3.2.1", "Vehicle", 24),     # 66 in the DAG; same overlap
    ("2.3.2.1.1", "Air craft", 4),
    ("2.3.2.1.2", "Water craft", 15),
    ("2.3.3", "Device", 125),
    ("2.3.3.1", "Instrument", 28),
    ("2.3.3.1.1", "Measuring instrument", 12),
    ("2.3.3.1.2", "Weapon", 7),
    ("2.3.3.2", "Machine", 14),
    ("2.3.3.3", "Mechanism", 12),
    ("2.3.3.4", "Musical instrument", 26),
    ("2.3.3.4.1", "Stringed instrument", 8),
    ("2.3.3.4.2", "Wind instrument", 12),
    ("2.3.4", "Equipment", 37),
    ("2.3.4.1", "Electronic equipment", 13),
    ("2.3.4.2", "Game equipment", 13),
    ("2.3.5", "Furnishing", 25),
    ("2.3.6", "Implement", 38),
    ("2.4", "Structure", 57),
    ("2.4.1", "Building", 14),
    ("3", "Geological formation", 10),
    ("3.1", "Natural elevation", 5),
    ("4", "Natural object", 17),
    ("4.1", "Plant", 16),
    ("4.1.1", "Fruit", 16),
    ("4.1.1.1", "Edible fruit", 10),
    ("5", "Fungus", 7),
    ("6", "Nutrition", 10),
    ("7", "Vegetable", 13),
    ("8", "Beverage", 4),
]

NOTES = (
    "Synthetic transcription of the ImageNet/WordNet collection layout. "
    "WordNet is a DAG, so collections that overlap other branches in the "
    "original lattice are omitted (Domesticated animal) or shrunk to the "
    "classes no other branch claims (Covering, Transport, Vehicle). Class "
    "indices are contiguous blocks in path order, not real ImageNet ids."
)


def build():
    by_path = {path: {"name": name, "path": path, "count": count, "children": []}
               for path, name, count in COLLECTIONS}
    roots = []
    for path, node in sorted(by_path.items(), key=lambda kv: tuple(int(p) for p in kv[0].split("."))):
        parent = path.rpartition(".")[0]
        (by_path[parent]["children"] if parent else roots).append(node)

    cursor = 0

    def assign(node):
        nonlocal cursor
        residual = node["count"] - sum(c["count"] for c in node["children"])
        assert residual >= 0, f"{node['name']}: children exceed count by {-residual}"
        out = {"name": node["name"], "path": node["path"]}
        if residual:
            out["classes"] = list(range(cursor, cursor + residual))
            cursor += residual
        if node["children"]:
            out["children"] = [assign(c) for c in node["children"]]
        return out

    children = [assign(r) for r in roots]
    assert cursor <= NUM_CLASSES, f"assigned {cursor} classes > {NUM_CLASSES}"
    root = {"name": "All", "path": "", "children": children}
    return {"num_classes": NUM_CLASSES, "notes": NOTES, "root": root}


def main():
    out_path = Path(__file__).resolve().parents[1] / "src" / "advlab" / "data" / "imagenet_hierarchy.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    doc = build()
    out_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    import sys
    sys.path.insert(0, str(out_path.parents[2]))
    from advlab.hierarchy import load_hierarchy

    tree = load_hierarchy(str(out_path))
    for key, want in [("Artifact", 522), ("Organism", 410), ("Canine", 130), ("", 1000)]:
        got = tree.class_count(key) if key else tree.num_classes
        assert got == want, f"{key or 'root'}: {got} != {want}"
    print(f"wrote {out_path} ({len(tree.nodes)} collections, {tree.num_classes} classes)")


if __name__ == "__main__":
    main()
