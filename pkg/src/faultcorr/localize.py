"""Localization of the anomalously correlated sensor group.

Three algorithms are provided:

``lowrank``
    Best rank-1 approximation of the matrix, then keep the ``k`` largest
    entries (by magnitude) of its vector: rank-1 sparse PCA by sorting.
``las``
    Large Average Submatrix: alternate between picking the best ``k`` rows
    for the current columns and the best ``k`` columns for the current rows
    until neither step improves the submatrix sum.
``igp``
    Iterative Greedy Procedure: from one random row, alternately add the
    single best column and the single best row until the submatrix is
    ``k x k``.

LAS and IGP are multi-start. Restart ``r`` draws from its own stream seeded
by ``(seed, r)`` so that the winner does not depend on how restarts are
batched or spread over workers; ties between restarts go to the lowest
restart index.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from faultcorr.corr import CorrelationMatrix, as_matrix
from faultcorr.errors import NumericalError, RangeError, ValidationError

ALGORITHMS = ("lowrank", "las", "igp")

# relative improvement a LAS update must achieve to replace the current set
LAS_RTOL = 1e-12
LAS_MAX_ITER = 10_000
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    """Outcome of one localization run.

    ``selected`` is the row set (sorted indices into the matrix). For the
    biclustering algorithms ``columns`` holds the column set; for lowrank it
    equals ``selected`` and ``weights`` holds the sparse unit vector entries
    on ``selected``.
    """

    algorithm: str
    k: int
    selected: tuple[int, ...]
    score: float
    columns: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    restarts: int = 0
    iterations: int = 0
    seed: int | None = None
    sensors: tuple[str, ...] | None = field(default=None, repr=False)

    @property
    def selected_ids(self) -> list[str]:
        if self.sensors is None:
            return [str(i) for i in self.selected]
        return [self.sensors[i] for i in self.selected]

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "k": self.k,
            "selected_ids": self.selected_ids,
            "score": float(self.score),
            "restarts": self.restarts,
            "seed": self.seed,
        }


def _sensor_ids(m) -> tuple[str, ...] | None:
    return m.sensors if isinstance(m, CorrelationMatrix) else None


def _check_k(k: int, n: int) -> int:
    if int(k) != k or not 1 <= k <= n:
        raise RangeError(f"k must be an integer in [1, {n}], got {k}")
    return int(k)


def rank1_approx(m) -> tuple[float, np.ndarray]:
    """Frobenius-optimal rank-1 approximation ``sigma * q q^T`` of a symmetric matrix.

    ``sigma`` is the eigenvalue of largest magnitude (the leading singular
    value carrying its sign); ``q`` is its unit eigenvector, signed so that
    its entries sum to a non-negative value.
    """
    arr = as_matrix(m)
    if not np.isfinite(arr).all():
        raise NumericalError("matrix has non-finite entries")
    try:
        values, vectors = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    mags = np.abs(values)
    # eigh sorts ascending, so the last index of maximal magnitude prefers the positive end
    idx = int(np.flatnonzero(mags == mags.max())[-1])
    q = vectors[:, idx].copy()
    if q.sum() < 0:
        q = -q
    return float(values[idx]), q


def sparse_topk(q, m, k: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Keep the ``k`` largest-magnitude entries of ``q`` (ties to lower index).

    Returns:
        ``(q_k, sigma_k, selected)``: the renormalized k-sparse vector,
        ``q_k^T M q_k``, and the sorted selected indices.
    """
    arr = as_matrix(m)
    q = np.asarray(q, dtype=float)
    k = _check_k(k, q.size)
    order = np.argsort(-np.abs(q), kind="stable")
    selected = np.sort(order[:k])
    qk = np.zeros_like(q)
    qk[selected] = q[selected]
    norm = np.linalg.norm(qk)
    if norm == 0.0:
        raise NumericalError("selected entries of q are all zero")
    qk /= norm
    sub = qk[selected]
    sigma_k = float(sub @ arr[np.ix_(selected, selected)] @ sub)
    return qk, sigma_k, selected


def lowrank(m, k: int) -> LocalizationResult:
    sigma, q = rank1_approx(m)
    qk, sigma_k, selected = sparse_topk(q, m, k)
    sel = tuple(int(i) for i in selected)
    return LocalizationResult(
        "lowrank", len(sel), sel, sigma_k,
        columns=sel, weights=tuple(float(qk[i]) for i in sel), sensors=_sensor_ids(m),
    )


def elbow_errors(m) -> np.ndarray:
    """``eps_k = ||M - sigma_k q_k q_k^T||_F`` for ``k = 1..N``.

    Uses ``||M - s x x^T||^2 = ||M||^2 - s^2`` for unit ``x`` with
    ``s = x^T M x`` and grows the quadratic form one index at a time.
    """
    arr = as_matrix(m)
    _, q = rank1_approx(arr)
    n = q.size
    order = np.argsort(-np.abs(q), kind="stable")
    total = float(np.sum(arr * arr))
    partial = np.zeros(n)  # M[:, S] @ q[S]
    quad = 0.0
    norm2 = 0.0
    errors = np.empty(n)
    for k, j in enumerate(order):
        qj = q[j]
        quad += 2.0 * qj * partial[j] + arr[j, j] * qj * qj
        partial += arr[:, j] * qj
        norm2 += qj * qj
        sigma_k = quad / norm2 if norm2 > 0 else 0.0
        errors[k] = math.sqrt(max(total - sigma_k * sigma_k, 0.0))
    return errors


@dataclass(frozen=True)
class Elbow:
    """Elbow choice of group size.

    ``pronounced`` is False when the error curve has no clear cusp at ``k``:
    the drop into ``k`` is less than ``cusp_ratio`` times the drop out of it.
    """

    k: int
    errors: np.ndarray
    sharpness: float
    pronounced: bool


def elbow(m, epsilon: float, cusp_ratio: float = 3.0) -> Elbow:
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    errors = elbow_errors(m)
    n = errors.size
    drops = errors[:-1] - errors[1:]
    hits = np.flatnonzero(drops < epsilon)
    k = int(hits[0]) + 1 if hits.size else n
    if 2 <= k <= n - 1:
        sharpness = float(drops[k - 2] / max(drops[k - 1], epsilon))
    else:
        sharpness = 0.0
    return Elbow(k, errors, sharpness, sharpness >= cusp_ratio)


def elbow_size(m, epsilon: float) -> int:
    """Smallest k with ``eps_k - eps_{k+1} < epsilon``; N if there is none."""
    return elbow(m, epsilon).k


def default_group_size(n: int) -> int:
    """``round(sqrt(N))``, at least 1."""
    if n < 1:
        raise ValidationError(f"N must be >= 1, got {n}")
    return max(1, int(math.floor(math.sqrt(n) + 0.5)))


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(restart)])


def _topk_sorted(scores: np.ndarray, k: int) -> np.ndarray:
    n = scores.shape[1]
    if k == n:
        return np.broadcast_to(np.arange(n), scores.shape).copy()
    part = np.argpartition(-scores, k - 1, axis=1)[:, :k]
    return np.sort(part, axis=1)


def _gather_scores(mat: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Row ``b`` is ``mat[idx[b]].sum(axis=0)``."""
    return mat[idx].sum(axis=1)


def _las_update(scores: np.ndarray, current: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    best = _topk_sorted(scores, k)
    best_sum = np.take_along_axis(scores, best, axis=1).sum(axis=1)
    cur_sum = np.take_along_axis(scores, current, axis=1).sum(axis=1)
    improve = best_sum > cur_sum + LAS_RTOL * (1.0 + np.abs(cur_sum))
    return np.where(improve[:, None], best, current), improve


def _submatrix_sums(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return arr[rows[:, :, None], cols[:, None, :]].sum(axis=(1, 2))


def _indicator(idx: np.ndarray, n: int) -> np.ndarray:
    ind = np.zeros((idx.shape[0], n))
    np.put_along_axis(ind, idx, 1.0, axis=1)
    return ind


def _shift_scores(scores: np.ndarray, old: np.ndarray, new: np.ndarray, mat: np.ndarray) -> None:
    """``scores += (ind(new) - ind(old)) @ mat`` touching only changed indices."""
    n = mat.shape[0]
    delta = sparse.csr_matrix(_indicator(new, n) - _indicator(old, n))
    if delta.nnz:
        scores += delta @ mat


def _las_chunk(arr: np.ndarray, k: int, seed: int, restarts: range):
    n = arr.shape[0]
    rows = np.empty((len(restarts), k), dtype=np.intp)
    cols = np.empty_like(rows)
    for b, r in enumerate(restarts):
        rng = _restart_rng(seed, r)
        rows[b] = np.sort(rng.choice(n, k, replace=False))
        cols[b] = np.sort(rng.choice(n, k, replace=False))
    arr_t = np.ascontiguousarray(arr.T)
    # row i scores sum_c M[i, c]; column j scores sum_r M[r, j]
    row_scores = _indicator(cols, n) @ arr_t
    rows, moved_r = _las_update(row_scores, rows, k)
    col_scores = _indicator(rows, n) @ arr
    new_cols, moved_c = _las_update(col_scores, cols, k)
    _shift_scores(row_scores, cols, new_cols, arr_t)
    cols = new_cols
    iterations = np.ones(len(restarts), dtype=int)
    active = np.flatnonzero(moved_r | moved_c)
    while active.size and iterations.max() < LAS_MAX_ITER:
        new_rows, moved_r = _las_update(row_scores[active], rows[active], k)
        cs = col_scores[active]
        _shift_scores(cs, rows[active], new_rows, arr)
        col_scores[active] = cs
        rows[active] = new_rows
        new_cols, moved_c = _las_update(cs, cols[active], k)
        rs = row_scores[active]
        _shift_scores(rs, cols[active], new_cols, arr_t)
        row_scores[active] = rs
        cols[active] = new_cols
        iterations[active] += 1
        active = active[moved_r | moved_c]
    return rows, cols, iterations


def _igp_chunk(arr: np.ndarray, k: int, seed: int, restarts: range):
    n = arr.shape[0]
    b = len(restarts)
    arr_t = np.ascontiguousarray(arr.T)
    start = np.array([_restart_rng(seed, r).integers(n) for r in restarts], dtype=np.intp)
    rows = np.empty((b, k), dtype=np.intp)
    cols = np.empty((b, k), dtype=np.intp)
    rows[:, 0] = start
    row_taken = np.zeros((b, n), dtype=bool)
    col_taken = np.zeros((b, n), dtype=bool)
    row_taken[np.arange(b), start] = True
    col_scores = arr[start].copy()  # sum over chosen rows of M[r, j]
    row_scores = np.zeros((b, n))  # sum over chosen cols of M[i, c]
    batch = np.arange(b)
    for step in range(k):
        j = np.argmax(np.where(col_taken, -np.inf, col_scores), axis=1)
        cols[:, step] = j
        col_taken[batch, j] = True
        row_scores += arr_t[j]
        if step + 1 < k:
            i = np.argmax(np.where(row_taken, -np.inf, row_scores), axis=1)
            rows[:, step + 1] = i
            row_taken[batch, i] = True
            col_scores += arr[i]
    return np.sort(rows, axis=1), np.sort(cols, axis=1), np.full(b, 2 * k - 1)


def _multistart(algorithm: str, m, k: int, restarts: int, seed: int, workers: int) -> LocalizationResult:
    arr = as_matrix(m)
    if not np.isfinite(arr).all():
        raise NumericalError("matrix has non-finite entries")
    n = arr.shape[0]
    k = _check_k(k, n)
    if int(restarts) != restarts or restarts < 1:
        raise ValidationError(f"restarts must be >= 1, got {restarts}")
    if seed is None:
        seed = 0
    runner = _las_chunk if algorithm == "las" else _igp_chunk
    chunk = max(1, _CHUNK_ELEMENTS // max(k * k, n))
    chunks = [range(lo, min(lo + chunk, restarts)) for lo in range(0, restarts, chunk)]

    def run(rng_range: range):
        rows, cols, its = runner(arr, k, seed, rng_range)
        sums = _submatrix_sums(arr, rows, cols)
        b = int(np.argmax(sums))
        return float(sums[b]), rng_range.start + b, rows[b], cols[b], int(its[b])

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, chunks))
    else:
        outcomes = [run(c) for c in chunks]
    # chunk order is restart order, so ">" keeps the lowest restart index on ties
    best = outcomes[0]
    for out in outcomes[1:]:
        if out[0] > best[0]:
            best = out
    total, _, rows, cols, its = best
    return LocalizationResult(
        algorithm, k, tuple(int(i) for i in rows), total / k,
        columns=tuple(int(j) for j in cols), restarts=int(restarts), iterations=its,
        seed=int(seed), sensors=_sensor_ids(m),
    )


def las(m, k: int, restarts: int = 1000, seed: int = 0, workers: int = 1) -> LocalizationResult:
    """Large Average Submatrix search, best of ``restarts`` random starts.

    ``score`` is the submatrix sum divided by ``k`` (mean times ``k``).
    """
    return _multistart("las", m, k, restarts, seed, workers)


def igp(m, k: int, restarts: int = 1000, seed: int = 0, workers: int = 1) -> LocalizationResult:
    """Iterative Greedy Procedure, best of ``restarts`` random start rows.

    After the start row, columns and rows are added alternately, column
    first. ``score`` is the submatrix sum divided by ``k``.
    """
    return _multistart("igp", m, k, restarts, seed, workers)


def localize(
    m,
    algorithm: str,
    k: int,
    restarts: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> LocalizationResult:
    if algorithm == "lowrank":
        return lowrank(m, k)
    if algorithm == "las":
        return las(m, k, restarts, seed, workers)
    if algorithm == "igp":
        return igp(m, k, restarts, seed, workers)
    raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def objective(m, result: LocalizationResult) -> float:
    """Recompute ``result.score`` from the matrix and the stored index sets."""
    arr = as_matrix(m)
    rows = np.asarray(result.selected, dtype=np.intp)
    if result.algorithm == "lowrank":
        w = np.asarray(result.weights)
        return float(w @ arr[np.ix_(rows, rows)] @ w)
    cols = np.asarray(result.columns, dtype=np.intp)
    return float(arr[np.ix_(rows, cols)].sum() / result.k)


def las_certificate(m, result: LocalizationResult) -> bool:
    """True when neither a row update nor a column update would move the result."""
    arr = as_matrix(m)
    rows = np.asarray(result.selected, dtype=np.intp)[None, :]
    cols = np.asarray(result.columns, dtype=np.intp)[None, :]
    row_scores = _gather_scores(np.ascontiguousarray(arr.T), cols)
    _, moved_r = _las_update(row_scores, rows, result.k)
    col_scores = _gather_scores(arr, rows)
    _, moved_c = _las_update(col_scores, cols, result.k)
    return not (moved_r[0] or moved_c[0])

