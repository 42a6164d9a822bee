"""Reading, generating, splitting and persisting data and fitted parameters.

File formats
------------
Edge list
    One ``i j`` pair per line (tab or space separated), 0-based, undirected.
    Blank lines and ``#`` comments are skipped; an optional ``#nodes N``
    header fixes the node count.
Matrix
    Headerless delimited text, one sample per row.
Parameter file
    JSON object ``{"format": "gammavi-qparams", "version": 1, "manifest":
    {...}, "family": ..., "alpha": [...], "beta": [...]}``. Floats are
    written with ``repr`` precision so a round trip is bit-identical.
"""

import json
import logging
import os
import warnings
from dataclasses import dataclass

import numpy as np

from gammavi.engine import NormalState, VariationalState
from gammavi.epm import EpmData
from gammavi.errors import LayoutMismatchError

log = logging.getLogger(__name__)

QPARAMS_FORMAT = "gammavi-qparams"
QPARAMS_VERSION = 1


class EdgeListParseError(ValueError):
    pass


def load_edge_list(path):
    """Parse an undirected edge list into :class:`EpmData`.

    Duplicate and reversed pairs collapse to one edge. Self-loops are dropped
    and counted in ``self_loops_rejected``.
    """
    n_header = None
    pairs = set()
    loops = 0
    max_idx = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                parts = s[1:].split()
                if len(parts) == 2 and parts[0] == "nodes":
                    try:
                        n_header = int(parts[1])
                    except ValueError:
                        raise EdgeListParseError(f"{path}:{lineno}: bad #nodes header {s!r}") from None
                continue
            parts = s.split()
            if len(parts) != 2:
                raise EdgeListParseError(f"{path}:{lineno}: expected two node indices, got {s!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(f"{path}:{lineno}: non-integer node index in {s!r}") from None
            if i < 0 or j < 0:
                raise EdgeListParseError(f"{path}:{lineno}: negative node index in {s!r}")
            max_idx = max(max_idx, i, j)
            if i == j:
                loops += 1
                continue
            pairs.add((max(i, j), min(i, j)))
    if loops:
        warnings.warn(f"{path}: rejected {loops} self-loop(s)", stacklevel=2)
    n = n_header if n_header is not None else max_idx + 1
    if n_header is not None and max_idx >= n_header:
        raise EdgeListParseError(f"{path}: node index {max_idx} exceeds #nodes {n_header}")
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return EpmData(n, edges, self_loops_rejected=loops)


def save_edge_list(data, path):
    with open(path, "w") as fh:
        fh.write(f"#nodes {data.n_nodes}\n")
        for i, j in data.present_edges:
            fh.write(f"{i}\t{j}\n")


def load_matrix(path, delimiter=None):
    """Read a headerless matrix; commas are detected, otherwise whitespace."""
    if delimiter is None:
        with open(path) as fh:
            first = next((line for line in fh if line.strip() and not line.startswith("#")), "")
        delimiter = "," if "," in first else None
    return np.atleast_2d(np.loadtxt(path, delimiter=delimiter, dtype=float))


def save_matrix(M, path, delimiter=","):
    np.savetxt(path, np.atleast_2d(M), delimiter=delimiter, fmt="%.17g")


@dataclass(frozen=True)
class SplitSpec:
    holdout_fraction: float = 0.2
    seed: int = 0
    n_splits: int = 10
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")


@dataclass
class PairSplit:
    train: EpmData
    test_pairs: np.ndarray
    test_labels: np.ndarray


def all_pairs(n):
    i, j = np.tril_indices(n, k=-1)
    return np.column_stack([i, j]).astype(np.int64)


def split_pairs(data, spec):
    """Hold out a random fraction of all unordered node pairs.

    Edges and non-edges alike are eligible (unless ``spec.stratified``, which
    holds out the same fraction of each). Held-out pairs become missing in
    the returned training graph. Split ``s`` uses the generator seeded with
    ``(spec.seed, s)``.
    """
    pairs = all_pairs(data.n_nodes)
    if len(data.missing_pairs):
        already = np.isin(pairs[:, 0] * data.n_nodes + pairs[:, 1],
                          data.pair_ids(data.missing_pairs))
        pairs = pairs[~already]
    labels = np.isin(pairs[:, 0] * data.n_nodes + pairs[:, 1],
                     data.pair_ids(data.present_edges)).astype(np.int8)
    n_test = int(round(spec.holdout_fraction * len(pairs)))
    if n_test < 1:
        raise ValueError("holdout_fraction selects no pairs")

    out = []
    for s in range(spec.n_splits):
        rng = np.random.default_rng([spec.seed, s])
        if spec.stratified:
            chosen = []
            for lab in (0, 1):
                cand = np.flatnonzero(labels == lab)
                k = int(round(spec.holdout_fraction * len(cand)))
                chosen.append(rng.choice(cand, size=k, replace=False))
            test = np.sort(np.concatenate(chosen))
        else:
            test = np.sort(rng.choice(len(pairs), size=n_test, replace=False))
        is_test = np.zeros(len(pairs), dtype=bool)
        is_test[test] = True
        train = EpmData(
            data.n_nodes,
            pairs[~is_test & (labels == 1)],
            np.concatenate([data.missing_pairs, pairs[is_test]]),
        )
        out.append(PairSplit(train, pairs[test], labels[test]))
    return out


def synth_gpfa(D=50, K=10, N=1000, seed=0, noise_var=0.1, density=0.2):
    """Sparse nonnegative factor-analysis data.

    Loadings are 0 with probability ``1 - density`` and ``U[0, 1]`` otherwise;
    ``y_n = W x_n + noise`` with ``x_n ~ N(0, I)`` and noise variance
    ``noise_var``.

    Returns
    -------
    Y : ndarray, shape (N, D)
    W_true : ndarray, shape (D, K)
    """
    rng = np.random.default_rng(seed)
    W = np.where(rng.random((D, K)) < density, rng.random((D, K)), 0.0)
    X = rng.standard_normal((N, K))
    Y = X @ W.T + np.sqrt(noise_var) * rng.standard_normal((N, D))
    return Y, W


def synth_epm(N, K, seed=0, blocks=None):
    """Sample a graph from the EPM.

    With ``blocks=None`` all latents come from the model's priors. With
    ``blocks=(within, between)`` nodes are split into two halves; node ``i``
    loads ``within`` on its own block's factor and ``between`` on the other,
    with ``r = 1`` (remaining ``K - 2`` factors are zero).

    Returns
    -------
    data : EpmData
    truth : dict with ``W`` and ``r``
    """
    rng = np.random.default_rng(seed)
    if blocks is None:
        a = rng.gamma(0.01, 1 / 0.01, size=N)
        c = rng.gamma(1.0, 1.0, size=N)
        g0 = rng.gamma(1.0, 1.0)
        c0 = rng.gamma(1.0, 1.0)
        r = rng.gamma(g0 / K, 1 / c0, size=K)
        W = rng.gamma(a[:, None], 1 / c[:, None], size=(N, K))
    else:
        within, between = blocks
        if K < 2:
            raise ValueError("a planted two-block graph needs K >= 2")
        W = np.zeros((N, K))
        half = np.arange(N) >= N // 2
        W[:, 0] = np.where(half, between, within)
        W[:, 1] = np.where(half, within, between)
        r = np.zeros(K)
        r[:2] = 1.0
    pairs = all_pairs(N)
    p = np.einsum("pk,pk,k->p", W[pairs[:, 0]], W[pairs[:, 1]], r)
    y = rng.random(len(pairs)) < -np.expm1(-p)
    return EpmData(N, pairs[y]), {"W": W, "r": r}


def save_qparams(state, path, manifest):
    """Write a fitted variational state plus manifest as versioned JSON.

    ``manifest`` should carry at least ``model``, ``layout``, ``K``,
    ``seed`` and ``iterations``.
    """
    if isinstance(state, VariationalState):
        family, first, second = "gamma", state.alpha, state.beta
    elif isinstance(state, NormalState):
        family, first, second = "normal", state.mean, state.log_sd
    else:
        family, first, second = "point", np.asarray(state, dtype=float), np.zeros(0)
    doc = {
        "format": QPARAMS_FORMAT,
        "version": QPARAMS_VERSION,
        "family": family,
        "manifest": manifest,
        "alpha": [float(v) for v in first],
        "beta": [float(v) for v in second],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_qparams(path, expect_layout=None):
    """Inverse of :func:`save_qparams`; returns ``(state, manifest)``.

    Raises
    ------
    FileNotFoundError
    ValueError
        On a wrong format tag, unsupported version or malformed content.
    LayoutMismatchError
        If ``expect_layout`` differs from the file's manifest layout.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: corrupt parameter file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != QPARAMS_FORMAT:
        raise ValueError(f"{path}: not a {QPARAMS_FORMAT} file")
    if doc.get("version") != QPARAMS_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}, expected {QPARAMS_VERSION}")
    manifest = doc.get("manifest", {})
    if expect_layout is not None and manifest.get("layout") != expect_layout:
        raise LayoutMismatchError(
            f"{path}: layout {manifest.get('layout')!r} does not match expected {expect_layout!r}")
    try:
        first = np.array(doc["alpha"], dtype=float)
        second = np.array(doc["beta"], dtype=float)
        family = doc["family"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed parameter arrays ({exc})") from exc
    if family == "gamma":
        state = VariationalState(first, second)
    elif family == "normal":
        state = NormalState(first, second)
    elif family == "point":
        state = first
    else:
        raise ValueError(f"{path}: unknown family {family!r}")
    return state, manifest
