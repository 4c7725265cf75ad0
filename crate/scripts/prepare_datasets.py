#!/usr/bin/env python3
"""Convert raw benchmark sources into the loader formats under data/.

Zoo:  Orange's zoo.tab (UCI Zoo).  Nodes are animals, features are the 16
      attributes, and one hyperedge is created per (attribute, value) pair
      over the 16 attributes plus the animal type, giving 43 hyperedges.
Cora: LINQS cora.content / cora.cites.  One hyperedge per citing paper,
      holding every paper it cites, kept when it has at least two members
      (1579 hyperedges, duplicates preserved).

usage: prepare_datasets.py ZOO_TAB CORA_CONTENT CORA_CITES OUT_DIR
"""
import json
import os
import sys
from collections import OrderedDict


def zoo(tab_path, out_dir):
    with open(tab_path) as f:
        rows = [line.rstrip("\n").split("\t") for line in f]
    header, body = rows[0], [r for r in rows[3:] if len(r) == len(rows[0])]
    attrs = header[1:-1]
    type_order = ["mammal", "bird", "reptile", "fish", "amphibian", "insect", "invertebrate"]
    features = [[float(v) for v in r[1:-1]] for r in body]
    labels = [type_order.index(r[-1]) for r in body]
    hyperedges = []
    for col in range(len(attrs)):
        for value in sorted({r[1 + col] for r in body}, key=float):
            hyperedges.append([i for i, r in enumerate(body) if r[1 + col] == value])
    for t in range(len(type_order)):
        hyperedges.append([i for i, y in enumerate(labels) if y == t])
    doc = OrderedDict(
        num_nodes=len(body),
        features=features,
        hyperedges=hyperedges,
        labels=labels,
        num_classes=len(type_order),
    )
    with open(os.path.join(out_dir, "zoo.json"), "w") as f:
        json.dump(doc, f, separators=(",", ":"))
    print("zoo", len(body), len(hyperedges), len(attrs), len(type_order))


def cora(content_path, cites_path, out_dir):
    ids, feats, names = [], [], []
    with open(content_path) as f:
        for line in f:
            parts = line.split()
            ids.append(parts[0])
            feats.append(parts[1:-1])
            names.append(parts[-1])
    index = {p: i for i, p in enumerate(ids)}
    classes = sorted(set(names))
    cited = OrderedDict()
    with open(cites_path) as f:
        for line in f:
            target, source = line.split()
            cited.setdefault(source, set()).add(index[target])
    edges = [sorted(s) for s in cited.values() if len(s) >= 2]
    d = os.path.join(out_dir, "cora")
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "features.csv"), "w") as f:
        for row in feats:
            f.write(",".join(row) + "\n")
    with open(os.path.join(d, "hyperedges.txt"), "w") as f:
        for e in edges:
            f.write(" ".join(map(str, e)) + "\n")
    with open(os.path.join(d, "labels.csv"), "w") as f:
        for n in names:
            f.write(f"{classes.index(n)}\n")
    print("cora", len(ids), len(edges), len(feats[0]), len(classes))


if __name__ == "__main__":
    zoo_tab, content, cites, out = sys.argv[1:5]
    zoo(zoo_tab, out)
    cora(content, cites, out)
