"""Dataset loading, base similarities and the heterogeneous adjacency.

File formats (all UTF-8, tab separated):

* catalog files: one identifier per line
* association / target-interaction edge files: ``id_a<TAB>id_b``
* fingerprint file: ``drug_id<TAB>comma-separated-bit-indices`` (list may be empty)
* similarity matrix file: dense matrix with a header row and a header column of ids
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError

logger = logging.getLogger(__name__)

DATASET_FILES = {
    "drugs": "drugs.txt",
    "targets": "targets.txt",
    "associations": "associations.tsv",
    "fingerprints": "fingerprints.tsv",
    "target_interactions": "target_interactions.tsv",
}


@dataclass(frozen=True)
class EntityCatalog:
    drug_ids: tuple[str, ...]
    target_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.drug_ids or not self.target_ids:
            raise DataError("catalogs need at least one drug and one target")
        for name, ids in (("drug", self.drug_ids), ("target", self.target_ids)):
            if len(set(ids)) != len(ids):
                raise DataError(f"duplicate {name} identifiers in catalog")

    @property
    def n_drugs(self) -> int:
        return len(self.drug_ids)

    @property
    def n_targets(self) -> int:
        return len(self.target_ids)

    def drug_index(self) -> dict[str, int]:
        return {d: i for i, d in enumerate(self.drug_ids)}

    def target_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.target_ids)}


@dataclass
class Dataset:
    """Everything the pipeline consumes, aligned to ``catalog`` order.

    ``drug_similarity`` / ``target_similarity`` may be supplied directly, in
    which case the fingerprint / interaction inputs are not needed.
    """

    catalog: EntityCatalog
    Y: np.ndarray
    fingerprints: list[frozenset[int]] | None = None
    interactions: list[frozenset[int]] | None = None
    drug_similarity: np.ndarray | None = None
    target_similarity: np.ndarray | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.float64)
        shape = (self.catalog.n_drugs, self.catalog.n_targets)
        if self.Y.shape != shape:
            raise DataError(f"association matrix shape {self.Y.shape} != {shape}")
        if not np.isin(self.Y, (0.0, 1.0)).all():
            raise DataError("association matrix entries must be 0 or 1")

    def base_kernels(self) -> tuple[np.ndarray, np.ndarray]:
        kd = self.drug_similarity
        if kd is None:
            if self.fingerprints is None:
                raise DataError("need fingerprints or a drug similarity matrix")
            kd = tanimoto_similarity(self.fingerprints)
        kt = self.target_similarity
        if kt is None:
            if self.interactions is None:
                raise DataError("need target interactions or a target similarity matrix")
            kt = jaccard_similarity(self.interactions)
        return kd, kt


@dataclass(frozen=True)
class HeteroAdjacency:
    A: np.ndarray
    drug_similarity: np.ndarray
    target_similarity: np.ndarray
    neighbor_lists: tuple[tuple[tuple[int, float], ...], ...]
    n_drugs: int
    n_targets: int

    @property
    def n_nodes(self) -> int:
        return self.n_drugs + self.n_targets

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(owner, neighbor) index arrays, grouped by owner."""
        owners = [i for i, nbrs in enumerate(self.neighbor_lists) for _ in nbrs]
        nbrs = [j for lst in self.neighbor_lists for j, _ in lst]
        return np.asarray(owners, dtype=np.intp), np.asarray(nbrs, dtype=np.intp)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _read_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if line.strip():
                yield lineno, line


def read_catalog(path) -> tuple[str, ...]:
    seen = {}
    for _, line in _read_lines(Path(path)):
        seen.setdefault(line.strip(), None)
    return tuple(seen)


def _read_pairs(path: Path, left: dict, right: dict):
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected two tab-separated fields")
        a, b = parts[0].strip(), parts[1].strip()
        if a not in left:
            raise DataError(f"{path}:{lineno}: unknown identifier {a!r}")
        if b not in right:
            raise DataError(f"{path}:{lineno}: unknown identifier {b!r}")
        yield left[a], right[b]


def read_fingerprints(path, catalog: EntityCatalog) -> list[frozenset[int]]:
    path = Path(path)
    index = catalog.drug_index()
    bits: list[frozenset[int] | None] = [None] * catalog.n_drugs
    for lineno, line in _read_lines(path):
        drug, _, rest = line.partition("\t")
        drug = drug.strip()
        if drug not in index:
            raise DataError(f"{path}:{lineno}: unknown identifier {drug!r}")
        try:
            idx = frozenset(int(tok) for tok in rest.split(",") if tok.strip())
        except ValueError:
            raise DataError(f"{path}:{lineno}: bit indices must be integers") from None
        if any(i < 0 for i in idx):
            raise DataError(f"{path}:{lineno}: bit indices must be non-negative")
        bits[index[drug]] = idx
    missing = [catalog.drug_ids[i] for i, b in enumerate(bits) if b is None]
    if missing:
        logger.warning("%d drugs have no fingerprint line; treated as empty", len(missing))
    return [b if b is not None else frozenset() for b in bits]


def read_interactions(path, catalog: EntityCatalog) -> list[frozenset[int]]:
    """Target-target network edges, read as undirected."""
    index = catalog.target_index()
    nbrs: list[set[int]] = [set() for _ in range(catalog.n_targets)]
    for a, b in _read_pairs(Path(path), index, index):
        nbrs[a].add(b)
        nbrs[b].add(a)
    return [frozenset(s) for s in nbrs]


def read_similarity_matrix(path, ids) -> np.ndarray:
    """Read a dense labelled matrix and reorder it to ``ids``."""
    path = Path(path)
    rows = list(_read_lines(path))
    if not rows:
        raise DataError(f"{path}: empty similarity file")
    header = [h.strip() for h in rows[0][1].split("\t")[1:]]
    col_pos = {h: k for k, h in enumerate(header)}
    data = {}
    for lineno, line in rows[1:]:
        parts = line.split("\t")
        if len(parts) != len(header) + 1:
            raise DataError(f"{path}:{lineno}: expected {len(header) + 1} fields")
        try:
            data[parts[0].strip()] = [float(x) for x in parts[1:]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric entry") from None
    missing = [i for i in ids if i not in col_pos or i not in data]
    if missing:
        raise DataError(f"{path}: identifiers missing from similarity matrix: {missing[:5]}")
    cols = [col_pos[i] for i in ids]
    return np.array([[data[i][c] for c in cols] for i in ids], dtype=np.float64)


def write_matrix(path, M: np.ndarray, row_ids, col_ids) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["id", *col_ids]) + "\n")
        for rid, row in zip(row_ids, M):
            fh.write("\t".join([rid, *(repr(float(x)) for x in row)]) + "\n")


def load_dataset(paths) -> Dataset:
    """Load a dataset from a directory or a mapping of file roles to paths.

    Roles: ``drugs``, ``targets``, ``associations`` (required) and
    ``fingerprints`` / ``drug_similarity``, ``target_interactions`` /
    ``target_similarity`` (one of each pair).
    """
    if isinstance(paths, (str, Path)):
        root = Path(paths)
        paths = {k: root / v for k, v in DATASET_FILES.items() if (root / v).exists()}
        for extra in ("drug_similarity", "target_similarity"):
            if (root / f"{extra}.tsv").exists():
                paths[extra] = root / f"{extra}.tsv"
    paths = {k: Path(v) for k, v in paths.items()}
    for role in ("drugs", "targets", "associations"):
        if role not in paths:
            raise DataError(f"missing required input: {role}")
    for role, p in paths.items():
        if not p.exists():
            raise DataError(f"{role} file not found: {p}")

    catalog = EntityCatalog(read_catalog(paths["drugs"]), read_catalog(paths["targets"]))
    Y = np.zeros((catalog.n_drugs, catalog.n_targets))
    for i, j in _read_pairs(paths["associations"], catalog.drug_index(), catalog.target_index()):
        Y[i, j] = 1.0

    ds = Dataset(catalog, Y)
    if "drug_similarity" in paths:
        ds.drug_similarity = read_similarity_matrix(paths["drug_similarity"], catalog.drug_ids)
    if "fingerprints" in paths:
        ds.fingerprints = read_fingerprints(paths["fingerprints"], catalog)
    if "target_similarity" in paths:
        ds.target_similarity = read_similarity_matrix(paths["target_similarity"], catalog.target_ids)
    if "target_interactions" in paths:
        ds.interactions = read_interactions(paths["target_interactions"], catalog)
    if ds.drug_similarity is None and ds.fingerprints is None:
        raise DataError("need a fingerprints file or a drug similarity matrix")
    if ds.target_similarity is None and ds.interactions is None:
        raise DataError("need a target interaction file or a target similarity matrix")
    return ds


def save_dataset(ds: Dataset, root) -> None:
    """Write ``ds`` in the on-disk layout read by :func:`load_dataset`."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cat = ds.catalog
    (root / DATASET_FILES["drugs"]).write_text("".join(f"{d}\n" for d in cat.drug_ids), encoding="utf-8")
    (root / DATASET_FILES["targets"]).write_text("".join(f"{t}\n" for t in cat.target_ids), encoding="utf-8")
    with open(root / DATASET_FILES["associations"], "w", encoding="utf-8") as fh:
        for i, j in zip(*np.nonzero(ds.Y)):
            fh.write(f"{cat.drug_ids[i]}\t{cat.target_ids[j]}\n")
    if ds.fingerprints is not None:
        with open(root / DATASET_FILES["fingerprints"], "w", encoding="utf-8") as fh:
            for d, bits in zip(cat.drug_ids, ds.fingerprints):
                fh.write(f"{d}\t{','.join(str(b) for b in sorted(bits))}\n")
    if ds.interactions is not None:
        with open(root / DATASET_FILES["target_interactions"], "w", encoding="utf-8") as fh:
            for a, nbrs in enumerate(ds.interactions):
                for b in sorted(nbrs):
                    if a < b:
                        fh.write(f"{cat.target_ids[a]}\t{cat.target_ids[b]}\n")
    if ds.drug_similarity is not None:
        write_matrix(root / "drug_similarity.tsv", ds.drug_similarity, cat.drug_ids, cat.drug_ids)
    if ds.target_similarity is not None:
        write_matrix(root / "target_similarity.tsv", ds.target_similarity, cat.target_ids, cat.target_ids)


# ---------------------------------------------------------------------------
# Similarities
# ---------------------------------------------------------------------------


def _set_similarity(sets, what: str) -> np.ndarray:
    n = len(sets)
    universe = sorted(set().union(*sets)) if n else []
    pos = {b: k for k, b in enumerate(universe)}
    M = np.zeros((n, len(universe)))
    for i, s in enumerate(sets):
        M[i, [pos[b] for b in s]] = 1.0
    inter = M @ M.T
    sizes = M.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    S = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    empty = sizes == 0
    if empty.sum() > 1:
        logger.warning("%d empty %s sets; similarity between them set to 0", int(empty.sum()), what)
    np.fill_diagonal(S, 1.0)
    return S


def tanimoto_similarity(fingerprints) -> np.ndarray:
    """Tanimoto coefficient between binary fingerprints given as sets of on-bits."""
    return _set_similarity([frozenset(f) for f in fingerprints], "fingerprint")


def jaccard_similarity(interactions) -> np.ndarray:
    """Jaccard coefficient between target neighbor sets."""
    return _set_similarity([frozenset(s) for s in interactions], "interaction")


def build_hetero_adjacency(drug_sim, target_sim, Y, tau: float = 0.0,
                           top_k: int | None = None) -> HeteroAdjacency:
    """Assemble ``[[K_d, Y], [Y^T, K_t]]`` and its attention neighbor lists.

    A node's neighbors are the entries of its row strictly above ``tau``
    (optionally only the ``top_k`` largest), plus a self-loop of weight 1.
    """
    drug_sim = np.asarray(drug_sim, dtype=np.float64)
    target_sim = np.asarray(target_sim, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    nd, nt = Y.shape
    if drug_sim.shape != (nd, nd) or target_sim.shape != (nt, nt):
        raise DataError(f"shape mismatch: drug sim {drug_sim.shape}, target sim "
                        f"{target_sim.shape}, Y {Y.shape}")
    if tau < 0:
        raise DataError("threshold tau must be non-negative")
    n = nd + nt
    A = np.empty((n, n))
    A[:nd, :nd] = drug_sim
    A[:nd, nd:] = Y
    A[nd:, :nd] = Y.T
    A[nd:, nd:] = target_sim
    if not np.array_equal(A, A.T):
        raise DataError("similarity blocks must be symmetric")

    lists = []
    for i in range(n):
        row = A[i]
        cand = [j for j in np.flatnonzero(row > tau) if j != i]
        if top_k is not None and len(cand) > top_k:
            order = sorted(cand, key=lambda j: (-row[j], j))
            cand = sorted(order[:top_k])
        lists.append(((i, 1.0),) + tuple((int(j), float(row[j])) for j in cand))
    return HeteroAdjacency(A, drug_sim, target_sim, tuple(lists), nd, nt)


def save_adjacency(adj: HeteroAdjacency, path) -> None:
    np.savez(path, A=adj.A, n_drugs=adj.n_drugs, n_targets=adj.n_targets)


def load_adjacency(path, tau: float = 0.0, top_k: int | None = None) -> HeteroAdjacency:
    with np.load(path) as z:
        A, nd = z["A"], int(z["n_drugs"])
    return build_hetero_adjacency(A[:nd, :nd], A[nd:, nd:], A[:nd, nd:], tau, top_k)
