"""Column streams.

A *column source* is anything that yields columns of a d x n data matrix
in order, without the whole matrix needing to exist in memory:

* a 2-D array (d x n), or a 1-D array taken as a single column;
* an iterable of 1-D columns and/or 2-D column blocks;
* a zero-argument callable returning such an iterable (re-openable);
* an object with a ``blocks()`` method, such as a trajectory file reader.

:func:`iter_blocks` rebatches any source into blocks of a fixed width so
that floating-point accumulation order depends only on the block size,
never on how the producer happened to chunk its output.
"""

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput

DEFAULT_BLOCK = 1000


def _raw_items(source):
    if isinstance(source, np.ndarray):
        if source.ndim == 1:
            yield source.reshape(-1, 1)
        elif source.ndim == 2:
            yield source
        else:
            raise DimensionMismatch(f"column source array must be 1-D or 2-D, got {source.shape}")
        return
    if hasattr(source, "blocks") and callable(source.blocks):
        yield from source.blocks()
        return
    if callable(source):
        source = source()
    for item in source:
        a = np.asarray(item, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        elif a.ndim != 2:
            raise DimensionMismatch(f"stream items must be 1-D or 2-D, got shape {a.shape}")
        yield a


def iter_blocks(source, block=DEFAULT_BLOCK, d=None):
    """Yield float64 blocks of exactly ``block`` columns (the last may be short).

    ``d`` fixes the expected row count; when omitted it is taken from the
    first item. Rows that disagree raise :class:`DimensionMismatch`.
    """
    block = int(block)
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    if isinstance(source, np.ndarray) and source.ndim == 2:
        X = np.asarray(source, dtype=np.float64)
        if d is not None and X.shape[0] != d:
            raise DimensionMismatch(f"expected {d} rows, stream has {X.shape[0]}")
        for j in range(0, X.shape[1], block):
            B = X[:, j:j + block]
            if not np.all(np.isfinite(B)):
                raise NonFiniteInput(f"non-finite value in columns {j}..{j + B.shape[1] - 1}")
            yield B
        return
    pending = []
    count = 0
    for a in _raw_items(source):
        if d is None:
            d = a.shape[0]
        elif a.shape[0] != d:
            raise DimensionMismatch(f"expected {d} rows, stream item has {a.shape[0]}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("non-finite value in stream")
        start = 0
        while start < a.shape[1]:
            take = min(block - count, a.shape[1] - start)
            pending.append(a[:, start:start + take])
            count += take
            start += take
            if count == block:
                yield pending[0] if len(pending) == 1 else np.concatenate(pending, axis=1)
                pending = []
                count = 0
    if count:
        yield pending[0] if len(pending) == 1 else np.concatenate(pending, axis=1)


def stream_length(source):
    """Number of columns in ``source`` if it can be known without consuming it."""
    if isinstance(source, np.ndarray):
        return 1 if source.ndim == 1 else source.shape[1]
    n = getattr(source, "n_columns", None)
    return int(n) if n is not None else None


def stream_rows(source):
    if isinstance(source, np.ndarray):
        return source.shape[0]
    d = getattr(source, "n_rows", None)
    return int(d) if d is not None else None
