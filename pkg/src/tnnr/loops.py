"""Loop taxonomy and random loop batches.

A loop is an ordered triple (i, j, k) of distinct rows, read as the three
directed pairs (i, j), (j, k), (k, i). Its type counts unlabelled members:
A = none, B = one, C = two, D = three. Type-A loops feed the supervised
objective; the others feed the loop-consistency objective.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SamplingError


class LoopType(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


_BY_COUNT = (LoopType.A, LoopType.B, LoopType.C, LoopType.D)
UNSUPERVISED_TYPES = frozenset({LoopType.B, LoopType.C, LoopType.D})


def classify_loop(labelled_flags):
    """Loop type from three labelled/unlabelled flags."""
    flags = tuple(bool(f) for f in labelled_flags)
    if len(flags) != 3:
        raise ValueError("a loop has exactly three members")
    return _BY_COUNT[3 - sum(flags)]


def parse_loop_types(spec):
    """``"BC"``, ``"B,C"`` or an iterable of names -> frozenset of LoopType."""
    if spec is None:
        return UNSUPERVISED_TYPES
    if isinstance(spec, str):
        spec = [c for c in spec.replace(",", "").upper() if not c.isspace()]
    types = frozenset(LoopType(str(getattr(t, "value", t)).upper()) for t in spec)
    if not types:
        raise ValueError("empty loop-type selection")
    return types


@dataclass(frozen=True)
class LoopTriple:
    i: int
    j: int
    k: int
    loop_type: LoopType
    diff_labels: tuple  # (y_i - y_j, y_j - y_k, y_k - y_i), None where unknown


@dataclass
class LoopBatch:
    """Index triples for one training step, both halves as ``(n, 3)`` int arrays."""

    supervised: np.ndarray
    unsupervised: np.ndarray
    unsupervised_types: np.ndarray  # unlabelled-member counts, 1..3

    def supervised_diffs(self, labels):
        """Difference labels of the supervised half, shape ``(n, 3)``."""
        y = labels[self.supervised]
        return y - y[:, [1, 2, 0]]

    def triples(self, labels, labelled_mask):
        """Materialise both halves as :class:`LoopTriple` lists."""
        def build(rows):
            out = []
            for i, j, k in rows.tolist():
                flags = (labelled_mask[i], labelled_mask[j], labelled_mask[k])
                diffs = []
                for a, b in ((i, j), (j, k), (k, i)):
                    known = labelled_mask[a] and labelled_mask[b]
                    diffs.append(float(labels[a] - labels[b]) if known else None)
                out.append(LoopTriple(i, j, k, classify_loop(flags), tuple(diffs)))
            return out

        return build(self.supervised), build(self.unsupervised)


def _distinct_rows(rng, pool_size, n, oversample=1):
    """``n`` uniformly random ordered triples of distinct positions in ``range(pool_size)``."""
    out = np.empty((0, 3), dtype=np.int64)
    while out.shape[0] < n:
        draw = rng.integers(0, pool_size, size=(max(n - out.shape[0], 1) * oversample, 3))
        ok = (draw[:, 0] != draw[:, 1]) & (draw[:, 1] != draw[:, 2]) & (draw[:, 0] != draw[:, 2])
        out = np.concatenate([out, draw[ok]])
    return out[:n]


class LoopSampler:
    """Random loop generator over one split.

    The supervised half draws from the labelled rows only; the unsupervised
    half draws from labelled plus training-visible unlabelled rows and keeps
    only loops whose type is in ``allowed_types``. Inductive test rows are
    never part of either pool. Supervised and unsupervised draws use separate
    streams, so skipping the unsupervised half leaves the supervised sequence
    unchanged.
    """

    def __init__(self, labelled, unlabelled, seed, allowed_types=None):
        self.labelled = np.asarray(labelled, dtype=np.int64)
        self.unlabelled = np.asarray(unlabelled, dtype=np.int64)
        self.allowed_types = parse_loop_types(allowed_types) & UNSUPERVISED_TYPES
        if not self.allowed_types:
            raise SamplingError("no unsupervised loop type (B, C, D) selected")
        if len(self.labelled) < 3:
            raise SamplingError(f"need at least 3 labelled rows, have {len(self.labelled)}")
        self.pool = np.concatenate([self.labelled, self.unlabelled])
        if len(set(self.pool.tolist())) != len(self.pool):
            raise SamplingError("labelled and unlabelled pools overlap")
        self._pool_unlabelled = np.concatenate(
            [np.zeros(len(self.labelled), dtype=np.int64), np.ones(len(self.unlabelled), dtype=np.int64)]
        )
        self._allowed_counts = np.array(
            sorted(_BY_COUNT.index(t) for t in self.allowed_types), dtype=np.int64
        )
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        sup_ss, unsup_ss = ss.spawn(2)
        self.sup_rng = np.random.default_rng(sup_ss)
        self.unsup_rng = np.random.default_rng(unsup_ss)

    def _check_unsupervised(self):
        if len(self.pool) < 3 or len(self.unlabelled) < 1:
            raise SamplingError("unsupervised loops need >= 3 rows including >= 1 unlabelled row")
        n_l, n_u = len(self.labelled), len(self.unlabelled)
        reachable = {1: n_u >= 1 and n_l >= 2, 2: n_u >= 2 and n_l >= 1, 3: n_u >= 3}
        if not any(reachable[int(c)] for c in self._allowed_counts):
            raise SamplingError(
                f"no loop of types {sorted(t.value for t in self.allowed_types)} can be formed"
            )

    def sample_supervised(self, n):
        pos = _distinct_rows(self.sup_rng, len(self.labelled), n)
        return self.labelled[pos]

    def sample_unsupervised(self, n):
        self._check_unsupervised()
        out = np.empty((0, 3), dtype=np.int64)
        counts_out = np.empty(0, dtype=np.int64)
        while out.shape[0] < n:
            pos = _distinct_rows(self.unsup_rng, len(self.pool), max(n - out.shape[0], 1) * 4)
            counts = self._pool_unlabelled[pos].sum(axis=1)
            ok = np.isin(counts, self._allowed_counts)
            out = np.concatenate([out, self.pool[pos[ok]]])
            counts_out = np.concatenate([counts_out, counts[ok]])
        return out[:n], counts_out[:n]

    def sample(self, batch_size, with_unsupervised=True):
        """One :class:`LoopBatch`: ``batch_size // 2`` loops per half.

        With ``with_unsupervised=False`` the whole batch budget of
        ``batch_size // 2`` supervised loops is drawn and the unsupervised
        stream is not touched.
        """
        if batch_size < 2 or batch_size % 2:
            raise SamplingError(f"batch_size must be even and >= 2, got {batch_size}")
        half = batch_size // 2
        sup = self.sample_supervised(half)
        if with_unsupervised:
            unsup, counts = self.sample_unsupervised(half)
        else:
            unsup, counts = np.empty((0, 3), dtype=np.int64), np.empty(0, dtype=np.int64)
        return LoopBatch(sup, unsup, counts)


def sample_batch(split, labels, batch_size, rng, allowed_types=None):
    """Draw one batch for ``split``; ``rng`` is a seed or ``np.random.Generator``.

    ``labels`` is accepted for symmetry with :meth:`LoopBatch.triples`; the
    sampler needs only the index partition.
    """
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**63))
    else:
        seed = rng
    sampler = LoopSampler(split.labelled_train, split.unlabelled_pool, seed, allowed_types)
    return sampler.sample(batch_size)
