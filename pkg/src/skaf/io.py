"""Binary model and trajectory files, plus CSV interchange.

Both binary formats are little-endian and end with an 8-byte checksum:
the BLAKE2b digest (8-byte digest size) of every preceding byte, read as
a little-endian u64.

Model file::

    "SKAF" | version u32 | d' u32 | r u32 | s u32 | ell u32 | q u32
           | gamma f64 | mu f64 | feature_seed u64 | training_n u64
           | W (r*s f64, column-major) | checksum u64

Trajectory file::

    "TRAJ" | version u32 | d u32 | n u64 | dt f64 | system_tag u32
           | params (8 f64) | data (d*n f64, column-major) | checksum u64

Feature descriptors are never stored; they are re-derived from
(feature_seed, gamma, d', s).
"""

import csv
import hashlib
import os
import struct

import numpy as np

from .dynamics import SYSTEM_TAGS, L63Params, L96Params, Trajectory
from .errors import FormatError
from .kaf import ForecastModel, LinearModel, NaiveModel

FORMAT_VERSION = 1
MODEL_HEADER = struct.Struct("<4sI5I2d2Q")
TRAJ_HEADER = struct.Struct("<4sIIQdI8d")
CHECKSUM = struct.Struct("<Q")
_CHUNK = 1 << 22


def _digest(chunks):
    h = hashlib.blake2b(digest_size=8)
    for c in chunks:
        h.update(c)
    return CHECKSUM.unpack(h.digest())[0]


def _file_digest(path, upto):
    with open(path, "rb") as fh:
        def chunks():
            left = upto
            while left > 0:
                b = fh.read(min(_CHUNK, left))
                if not b:
                    raise FormatError(f"{path}: file truncated")
                left -= len(b)
                yield b
        return _digest(chunks())


# models --------------------------------------------------------------------

def model_bytes(model):
    W = np.asarray(model.W, dtype="<f8")
    header = MODEL_HEADER.pack(b"SKAF", FORMAT_VERSION, model.d, W.shape[0], model.s, model.ell,
                               model.q, model.gamma, model.mu, model.feature_seed, model.training_n)
    body = header + W.tobytes(order="F")
    return body + CHECKSUM.pack(_digest([body]))


def write_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def read_model(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_model(raw, path)


def parse_model(raw, name="<bytes>"):
    if len(raw) < MODEL_HEADER.size + CHECKSUM.size:
        raise FormatError(f"{name}: too short for a model file")
    (magic, version, d, r, s, ell, q, gamma, mu, seed, n) = MODEL_HEADER.unpack_from(raw)
    if magic != b"SKAF":
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    expected = MODEL_HEADER.size + 8 * r * s + CHECKSUM.size
    if len(raw) != expected:
        raise FormatError(f"{name}: size {len(raw)} does not match header ({expected})")
    body = raw[:-CHECKSUM.size]
    (stored,) = CHECKSUM.unpack_from(raw, len(body))
    if stored != _digest([body]):
        raise FormatError(f"{name}: checksum mismatch")
    W = np.frombuffer(body, dtype="<f8", offset=MODEL_HEADER.size).reshape((r, s), order="F")
    return ForecastModel(np.array(W, dtype=np.float64), gamma, d, s, seed, q, ell, mu, n)


def save_baseline(model, path):
    """Naive and linear models go to .npz; they are not compact by nature."""
    if isinstance(model, NaiveModel):
        np.savez(path, kind="naive", U=model.U, weights=model.weights, gamma=model.gamma,
                 ell=model.ell, mu=model.mu, q=model.q)
    elif isinstance(model, LinearModel):
        np.savez(path, kind="linear", A=model.A, q=model.q)
    else:
        raise TypeError(f"not a baseline model: {type(model).__name__}")


def load_any_model(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"SKAF":
        return read_model(path)
    try:
        z = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise FormatError(f"{path}: not a model file ({exc})") from exc
    kind = str(z["kind"])
    if kind == "naive":
        return NaiveModel(z["U"], z["weights"], float(z["gamma"]), int(z["ell"]),
                          float(z["mu"]), int(z["q"]))
    if kind == "linear":
        return LinearModel(z["A"], int(z["q"]))
    raise FormatError(f"{path}: unknown model kind {kind!r}")


# trajectories --------------------------------------------------------------

def _system_fields(system):
    if system is None:
        return SYSTEM_TAGS["generic"], [0.0] * 8
    return SYSTEM_TAGS[system.tag], system.packed()


def write_trajectory(traj, path):
    data = np.asarray(traj.data, dtype="<f8")
    d, n = data.shape
    tag, params = _system_fields(traj.system)
    header = TRAJ_HEADER.pack(b"TRAJ", FORMAT_VERSION, d, n, traj.dt, tag, *params)
    h = hashlib.blake2b(digest_size=8)
    with open(path, "wb") as fh:
        for piece in _traj_pieces(header, data):
            h.update(piece)
            fh.write(piece)
        fh.write(h.digest())


def _traj_pieces(header, data):
    yield header
    cols = max(1, _CHUNK // (8 * max(1, data.shape[0])))
    for j in range(0, data.shape[1], cols):
        # column-major d x n is row-major n x d
        yield np.ascontiguousarray(data[:, j:j + cols].T).tobytes()


class TrajectoryFile:
    """Reader for trajectory files; also a column source for streaming.

    The checksum is verified when the file is opened. Columns are served
    from a memory map, so :meth:`blocks` never loads the whole file.
    """

    def __init__(self, path, verify=True):
        self.path = os.fspath(path)
        size = os.path.getsize(self.path)
        with open(self.path, "rb") as fh:
            head = fh.read(TRAJ_HEADER.size)
        if len(head) < TRAJ_HEADER.size:
            raise FormatError(f"{self.path}: too short for a trajectory file")
        fields = TRAJ_HEADER.unpack(head)
        magic, version, d, n, dt, tag = fields[:6]
        if magic != b"TRAJ":
            raise FormatError(f"{self.path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")
        expected = TRAJ_HEADER.size + 8 * d * n + CHECKSUM.size
        if size != expected:
            raise FormatError(f"{self.path}: size {size} does not match header ({expected})")
        if verify:
            with open(self.path, "rb") as fh:
                fh.seek(size - CHECKSUM.size)
                (stored,) = CHECKSUM.unpack(fh.read())
            if stored != _file_digest(self.path, size - CHECKSUM.size):
                raise FormatError(f"{self.path}: checksum mismatch")
        self.d, self.n, self.dt, self.tag = int(d), int(n), float(dt), int(tag)
        self.params = list(fields[6:])

    @property
    def n_columns(self):
        return self.n

    @property
    def n_rows(self):
        return self.d

    @property
    def system(self):
        if self.tag == SYSTEM_TAGS["l63"]:
            return L63Params.unpack(self.params, self.dt)
        if self.tag == SYSTEM_TAGS["l96"]:
            return L96Params.unpack(self.params, self.dt)
        return None

    def _map(self):
        if self.n == 0:
            return np.zeros((0, self.d))
        return np.memmap(self.path, dtype="<f8", mode="r", offset=TRAJ_HEADER.size,
                         shape=(self.n, self.d))

    def blocks(self, block=10_000, rows=None):
        mm = self._map()
        for j in range(0, self.n, block):
            B = np.array(mm[j:j + block].T, dtype=np.float64)
            yield B if rows is None else B[rows]

    def rows(self, rows):
        """Column source restricted to a subset of rows (e.g. L96 slow variables)."""
        return _RowView(self, rows)

    def read(self):
        return Trajectory(np.array(self._map().T, dtype=np.float64), self.dt, 0, self.system)


class _RowView:
    def __init__(self, f, rows):
        self.f = f
        self.sel = rows
        self.n_columns = f.n
        self.n_rows = len(range(f.d)[rows]) if isinstance(rows, slice) else len(rows)

    def blocks(self):
        return self.f.blocks(rows=self.sel)


def read_trajectory(path):
    return TrajectoryFile(path).read()


# CSV -----------------------------------------------------------------------

def coordinate_names(d, system=None):
    if isinstance(system, L63Params):
        return ["x1", "x2", "x3"]
    if isinstance(system, L96Params) and d == system.dim:
        return ([f"x{k + 1}" for k in range(system.K)]
                + [f"z{j + 1}_{k + 1}" for k in range(system.K) for j in range(system.J)])
    if isinstance(system, L96Params) and d == system.K:
        return [f"x{k + 1}" for k in range(system.K)]
    return [f"c{i + 1}" for i in range(d)]


def write_csv(data, path, names=None):
    """One snapshot per row, 17 significant digits (round-trips exactly)."""
    data = np.asarray(data, dtype=np.float64)
    names = names or coordinate_names(data.shape[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for col in data.T:
            w.writerow(["%.17g" % v for v in col])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return names, data.reshape(-1, len(names)).T
