"""Dataset bundles: directory ingestion and the stochastic-block-model benchmark generator."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, IngestionError
from .graph import Graph, SplitSpec, make_production_split, make_transductive_split


@dataclass(eq=False)
class DatasetBundle:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    split: SplitSpec
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def validate(self):
        n = self.graph.n
        if self.features.shape[0] != n:
            raise DataError(f"features have {self.features.shape[0]} rows, graph has {n} nodes")
        if len(self.labels) != n:
            raise DataError(f"{len(self.labels)} labels for {n} nodes")
        if np.any(self.labels < 0):
            raise DataError("negative class id")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature value")
        self.split.validate(n)
        return self

    def with_split(self, split):
        return DatasetBundle(self.graph, self.features, self.labels, split, self.name, dict(self.meta))


def _read_lines(path):
    if not path.exists():
        raise IngestionError("missing file", path=path)
    return path.read_text().splitlines()


def ingest_dataset(directory, labels_per_class=20, val_per_class=30, seed=0, mode="transductive"):
    """Read ``edges.txt``, ``features.csv``, ``labels.txt`` and optional ``split.json``."""
    d = Path(directory)
    if not d.is_dir():
        raise IngestionError("dataset directory not found", path=d)

    features = []
    width = None
    for i, line in enumerate(_read_lines(d / "features.csv"), start=1):
        if not line.strip():
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise IngestionError("malformed feature row", path=d / "features.csv", line=i) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise IngestionError(f"expected {width} values, found {len(row)}", path=d / "features.csv", line=i)
        if not all(np.isfinite(row)):
            raise IngestionError("non-finite feature value", path=d / "features.csv", line=i)
        features.append(row)
    if not features:
        raise IngestionError("no feature rows", path=d / "features.csv")
    x = np.array(features, dtype=np.float64)
    n = x.shape[0]

    labels = []
    for i, line in enumerate(_read_lines(d / "labels.txt"), start=1):
        if not line.strip():
            continue
        try:
            c = int(line.strip())
        except ValueError:
            raise IngestionError("malformed class id", path=d / "labels.txt", line=i) from None
        if c < 0:
            raise IngestionError(f"negative class id {c}", path=d / "labels.txt", line=i)
        labels.append(c)
    if len(labels) != n:
        raise IngestionError(f"{len(labels)} labels but {n} feature rows", path=d / "labels.txt")
    y = np.array(labels, dtype=np.int64)

    pairs = []
    for i, line in enumerate(_read_lines(d / "edges.txt"), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise IngestionError("expected two node ids", path=d / "edges.txt", line=i)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise IngestionError("malformed node id", path=d / "edges.txt", line=i) from None
        for w in (u, v):
            if not 0 <= w < n:
                raise IngestionError(f"node id {w} out of range [0, {n})", path=d / "edges.txt", line=i)
        pairs.append((u, v))
    g = Graph.from_edges(n, pairs)

    split_path = d / "split.json"
    if split_path.exists():
        try:
            split = SplitSpec.from_dict(json.loads(split_path.read_text()))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise IngestionError(f"bad split file: {exc}", path=split_path) from None
    else:
        split = make_transductive_split(n, labels_per_class, val_per_class, y, seed)
        if mode == "production":
            split = make_production_split(split, seed)
    bundle = DatasetBundle(g, x, y, split, name=d.name)
    try:
        return bundle.validate()
    except DataError as exc:
        raise IngestionError(str(exc), path=d) from None


def write_dataset(bundle, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "edges.txt").write_text("".join(f"{u} {v}\n" for u, v in bundle.graph.edges))
    (d / "features.csv").write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in bundle.features))
    (d / "labels.txt").write_text("".join(f"{int(c)}\n" for c in bundle.labels))
    (d / "split.json").write_text(json.dumps(bundle.split.to_dict()))


def generate_sbm(n=200, blocks=2, p_in=0.1, p_out=0.01, feature_dim=16, class_shift=1.0, seed=0,
                 labels_per_class=20, val_per_class=30, noise=1.0):
    """Stochastic block model with Gaussian features shifted per class.

    Class ``c`` features are ``N(mu_c, noise^2 I)`` where the class means are random
    unit-norm directions scaled by ``class_shift``.
    """
    if blocks < 1 or n % blocks != 0:
        raise DataError(f"n={n} must be divisible by blocks={blocks}")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise DataError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks), n // blocks)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    g = Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))
    means = rng.standard_normal((blocks, feature_dim))
    means *= class_shift / np.linalg.norm(means, axis=1, keepdims=True)
    x = means[labels] + noise * rng.standard_normal((n, feature_dim))
    split = make_transductive_split(n, labels_per_class, val_per_class, labels, seed)
    meta = {"generator": "sbm", "n": n, "blocks": blocks, "p_in": p_in, "p_out": p_out,
            "feature_dim": feature_dim, "class_shift": class_shift, "seed": seed}
    return DatasetBundle(g, x, labels, split, name=f"sbm-{seed}", meta=meta).validate()
