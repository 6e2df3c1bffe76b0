"""Line-oriented graph files and dataset directories.

File layout: a header line ``n F``, then n feature rows of F space-separated
decimals (omitted entirely when F = 0), then one ``u v`` line per edge with
u < v, then a terminating blank line.  Floats are written with `repr` so a
write/read round trip is lossless.

A dataset is a directory of such files plus ``manifest.json`` recording each
file name with its train/test split tag, the generator spec, and the seed.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ContractViolation, ParseError
from .graphs import Graph

MANIFEST_NAME = "manifest.json"


def write_graph(g: Graph, path: str) -> None:
    lines = [f"{g.n} {g.feature_dim}"]
    for row in g.features:
        lines.append(" ".join(repr(float(x)) for x in row))
    for u, v in g.edges():
        lines.append(f"{u} {v}")
    lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path: str) -> Graph:
    with open(path) as fh:
        raw = fh.read().split("\n")
    if not raw or not raw[0].strip():
        raise ParseError(f"{path}:1: missing 'n F' header")
    head = raw[0].split()
    if len(head) != 2:
        raise ParseError(f"{path}:1: header must be 'n F', got {raw[0]!r}")
    try:
        n, fdim = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError(f"{path}:1: non-integer header fields in {raw[0]!r}") from None
    if n < 0 or fdim < 0:
        raise ParseError(f"{path}:1: negative sizes in header")

    feats = np.zeros((n, fdim))
    lineno = 1
    if fdim > 0:
        for i in range(n):
            lineno = 2 + i
            if lineno - 1 >= len(raw):
                raise ParseError(f"{path}:{lineno}: expected {n} feature rows, file ended")
            parts = raw[lineno - 1].split()
            if len(parts) != fdim:
                raise ParseError(
                    f"{path}:{lineno}: feature row has {len(parts)} values, expected {fdim}")
            try:
                feats[i] = [float(x) for x in parts]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None
        lineno = 1 + n

    adj = np.zeros((n, n), dtype=np.int8)
    for offset, line in enumerate(raw[lineno:], start=lineno + 1):
        if not line.strip():
            break
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{offset}: edge line must be 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{path}:{offset}: non-integer edge endpoint") from None
        if u == v:
            raise ParseError(f"{path}:{offset}: self-loop ({u},{v}) is not allowed")
        if not (0 <= u < v < n):
            raise ParseError(f"{path}:{offset}: edge ({u},{v}) out of range or not u < v")
        if adj[u, v]:
            raise ParseError(f"{path}:{offset}: duplicate edge ({u},{v})")
        adj[u, v] = adj[v, u] = 1
    return Graph(adj, feats)


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(graphs, directory: str, generator: dict | None = None,
                  seed: int | None = None, splits=None) -> None:
    """Materialize graphs into a directory with a manifest.

    `splits` is an optional per-graph list of 'train'/'test' tags; the
    default marks everything 'train'.
    """
    graphs = list(graphs)
    os.makedirs(directory, exist_ok=True)
    if splits is None:
        splits = ["train"] * len(graphs)
    if len(splits) != len(graphs):
        raise ContractViolation("splits must match the number of graphs")
    entries = []
    for idx, (g, split) in enumerate(zip(graphs, splits)):
        name = f"graph_{idx:05d}.txt"
        write_graph(g, os.path.join(directory, name))
        entries.append({"file": name, "split": split})
    manifest = {"files": entries, "generator": generator or {}, "seed": seed}
    _atomic_write_text(os.path.join(directory, MANIFEST_NAME),
                       json.dumps(manifest, indent=2) + "\n")


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise ParseError(f"{path}: manifest not found")
    with open(path) as fh:
        return json.load(fh)


def read_dataset(directory: str, split: str | None = None) -> list[Graph]:
    """Load every graph in a dataset directory, optionally filtered by split."""
    manifest = read_manifest(directory)
    graphs = []
    for entry in manifest["files"]:
        if split is not None and entry.get("split", "train") != split:
            continue
        graphs.append(read_graph(os.path.join(directory, entry["file"])))
    return graphs
