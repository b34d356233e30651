"""Lorenz '63 and two-level Lorenz '96 trajectories.

Both systems are advanced with the classical fourth-order Runge-Kutta
scheme at a fixed output step ``dt``. The two-level L96 system is stiff
(fast variables evolve on a 1/eps = 128 times faster clock), so each
output step is split into ``substeps`` equal RK4 steps; plain RK4 at
dt = 0.01 diverges within a few steps.

State layout for L96: the K slow variables first, then the K*J fast ones
ordered slow-index major, so that flat position K + k*J + j holds z(j, k)
and the fast variables form a single ring of length K*J.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng
from .errors import BlowUp, DimensionMismatch

LYAPUNOV_L63 = 0.91

SYSTEM_TAGS = {"generic": 0, "l63": 1, "l96": 2}


@dataclass(frozen=True)
class L63Params:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    substeps: int = 1

    tag = "l63"

    @property
    def dim(self):
        return 3

    def packed(self):
        return [self.sigma, self.rho, self.beta, float(self.substeps), 0.0, 0.0, 0.0, 0.0]

    @classmethod
    def unpack(cls, values, dt):
        return cls(values[0], values[1], values[2], dt, int(values[3]))


@dataclass(frozen=True)
class L96Params:
    F: float = 10.0
    hx: float = -0.8
    hy: float = 1.0
    K: int = 9
    J: int = 8
    eps: float = 1.0 / 128.0
    dt: float = 0.01
    substeps: int = 32

    tag = "l96"

    @property
    def dim(self):
        return self.K + self.K * self.J

    def packed(self):
        return [self.hx, self.hy, float(self.K), float(self.J), self.eps, self.F,
                float(self.substeps), 0.0]

    @classmethod
    def unpack(cls, values, dt):
        return cls(F=values[5], hx=values[0], hy=values[1], K=int(values[2]), J=int(values[3]),
                   eps=values[4], dt=dt, substeps=int(values[6]))


L96_REGIMES = {"periodic": 5.0, "quasi-periodic": 6.9, "chaotic": 10.0}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State snapshots as columns, consecutive columns ``dt`` apart."""

    data: np.ndarray
    dt: float
    burn_in_discarded: int = 0
    system: object = field(default=None)

    @property
    def d(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]

    @property
    def final_state(self):
        return self.data[:, -1].copy()


def step_rk4(field, x, dt):
    """One classical Runge-Kutta step of ``dx/dt = field(x)``."""
    x = np.asarray(x, dtype=np.float64)
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise BlowUp(0, x.copy())
    return out


def l63_vector_field(p, x):
    x1, x2, x3 = x
    return np.array([p.sigma * (x2 - x1), x1 * (p.rho - x3) - x2, x1 * x2 - p.beta * x3])


def l96_vector_field(p, state):
    state = np.asarray(state, dtype=np.float64)
    K, J = p.K, p.J
    if state.shape != (K + K * J,):
        raise DimensionMismatch(f"L96 state must have length {K + K * J}, got {state.shape}")
    x = state[:K]
    z = state[K:]
    dx = (-np.roll(x, 1) * (np.roll(x, 2) - np.roll(x, -1)) - x + p.F
          + (p.hx / J) * z.reshape(K, J).sum(axis=1))
    dz = (-np.roll(z, -1) * (np.roll(z, -2) - np.roll(z, 1)) - z
          + p.hy * np.repeat(x, J)) / p.eps
    return np.concatenate([dx, dz])


def vector_field(p):
    """The right-hand side of system ``p`` as a one-argument callable."""
    if isinstance(p, L63Params):
        return lambda x: l63_vector_field(p, x)
    if isinstance(p, L96Params):
        return lambda x: l96_vector_field(p, x)
    raise TypeError(f"unknown system {p!r}")


# compiled integrators ------------------------------------------------------

@njit(cache=True)
def _l63_rhs(x, out, sigma, rho, beta):
    out[0] = sigma * (x[1] - x[0])
    out[1] = x[0] * (rho - x[2]) - x[1]
    out[2] = x[0] * x[1] - beta * x[2]


@njit(cache=True)
def _l96_rhs(s, out, F, hx, hy, K, J, inv_eps):
    KJ = K * J
    for k in range(K):
        acc = 0.0
        for j in range(J):
            acc += s[K + k * J + j]
        out[k] = (-s[(k - 1) % K] * (s[(k - 2) % K] - s[(k + 1) % K]) - s[k] + F
                  + (hx / J) * acc)
    for i in range(KJ):
        k = i // J
        out[K + i] = inv_eps * (-s[K + (i + 1) % KJ] * (s[K + (i + 2) % KJ] - s[K + (i - 1) % KJ])
                                - s[K + i] + hy * s[k])


@njit(cache=True)
def _rk4_run(kind, x0, skip, n_out, h, substeps, prm, out):
    """Advance x0, discarding ``skip`` snapshots, recording ``n_out``.

    Returns -1 on success, else the index of the snapshot that went bad.
    """
    d = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    total = skip + n_out
    for t in range(total):
        if t > 0:
            for _ in range(substeps):
                if kind == 1:
                    _l63_rhs(x, k1, prm[0], prm[1], prm[2])
                    for i in range(d):
                        tmp[i] = x[i] + 0.5 * h * k1[i]
                    _l63_rhs(tmp, k2, prm[0], prm[1], prm[2])
                    for i in range(d):
                        tmp[i] = x[i] + 0.5 * h * k2[i]
                    _l63_rhs(tmp, k3, prm[0], prm[1], prm[2])
                    for i in range(d):
                        tmp[i] = x[i] + h * k3[i]
                    _l63_rhs(tmp, k4, prm[0], prm[1], prm[2])
                else:
                    K = int(prm[3])
                    J = int(prm[4])
                    _l96_rhs(x, k1, prm[0], prm[1], prm[2], K, J, prm[5])
                    for i in range(d):
                        tmp[i] = x[i] + 0.5 * h * k1[i]
                    _l96_rhs(tmp, k2, prm[0], prm[1], prm[2], K, J, prm[5])
                    for i in range(d):
                        tmp[i] = x[i] + 0.5 * h * k2[i]
                    _l96_rhs(tmp, k3, prm[0], prm[1], prm[2], K, J, prm[5])
                    for i in range(d):
                        tmp[i] = x[i] + h * k3[i]
                    _l96_rhs(tmp, k4, prm[0], prm[1], prm[2], K, J, prm[5])
                for i in range(d):
                    x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(d):
                if not np.isfinite(x[i]):
                    for m in range(d):
                        out[m, 0] = x[m]
                    return t
        if t >= skip:
            for i in range(d):
                out[i, t - skip] = x[i]
    return -1


def _kernel_args(p):
    if isinstance(p, L63Params):
        return 1, np.array([p.sigma, p.rho, p.beta])
    if isinstance(p, L96Params):
        return 2, np.array([p.F, p.hx, p.hy, float(p.K), float(p.J), 1.0 / p.eps])
    raise TypeError(f"unknown system {p!r}")


def default_initial_state(p, seed=0):
    """(1,1,1) for L63 and x = F, z = 0 for L96, each plus 1e-3 seeded noise."""
    noise = 1e-3 * rng.normals(rng.derive_seed(seed, 0x1C), p.dim)
    if isinstance(p, L63Params):
        return np.ones(3) + noise
    base = np.zeros(p.dim)
    base[:p.K] = p.F
    return base + noise


def integrate(p, x_init, n, skip=0):
    """``n`` snapshots of system ``p`` starting ``skip`` output steps after ``x_init``.

    Snapshot 0 (with ``skip=0``) is ``x_init`` itself.
    """
    x0 = np.array(x_init, dtype=np.float64).reshape(-1)
    if x0.shape[0] != p.dim:
        raise DimensionMismatch(f"initial state must have length {p.dim}, got {x0.shape[0]}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    kind, prm = _kernel_args(p)
    out = np.empty((p.dim, n))
    h = p.dt / p.substeps
    bad = _rk4_run(kind, x0, int(skip), int(n), h, int(p.substeps), prm, out)
    if bad >= 0:
        raise BlowUp(bad, out[:, 0].copy())
    return out


def generate(system, x_init=None, n=1, burn_in=10_000, seed=0):
    """Trajectory of ``n`` snapshots after discarding ``burn_in`` of them.

    ``system`` is an :class:`L63Params`/:class:`L96Params`, or a callable
    vector field (then ``x_init`` is required and the plain-Python RK4
    stepper is used with a step ``dt`` of 0.01). The full state is
    returned; use :func:`slow_vars` for the L96 observables.
    """
    if callable(system) and not isinstance(system, (L63Params, L96Params)):
        if x_init is None:
            raise ValueError("x_init is required for a user vector field")
        return _generate_generic(system, x_init, n, burn_in)
    if x_init is None:
        x_init = default_initial_state(system, seed)
    data = integrate(system, x_init, n, skip=burn_in)
    return Trajectory(data, system.dt, int(burn_in), system)


def _generate_generic(field, x_init, n, burn_in, dt=0.01):
    x = np.array(x_init, dtype=np.float64).reshape(-1)
    out = np.empty((x.shape[0], n))
    for t in range(burn_in + n):
        if t > 0:
            try:
                x = step_rk4(field, x, dt)
            except BlowUp as exc:
                raise BlowUp(t, exc.state) from None
        if t >= burn_in:
            out[:, t - burn_in] = x
    return Trajectory(out, dt, int(burn_in), None)


def slow_vars(t, p):
    data = t.data if isinstance(t, Trajectory) else np.asarray(t)
    if data.shape[0] != p.K + p.K * p.J:
        raise DimensionMismatch(
            f"L96 trajectory must have {p.K + p.K * p.J} rows, got {data.shape[0]}"
        )
    return data[:p.K]


def split_test_chain(final_state, system, m=10_000, sets=5):
    """``sets`` consecutive test trajectories of ``m`` snapshots each.

    Set 1 starts one step after ``final_state``; each later set starts one
    step after the last snapshot of the previous one.
    """
    if sets < 1 or m < 1:
        raise ValueError(f"need sets >= 1 and m >= 1, got sets={sets}, m={m}")
    out = []
    x = np.asarray(final_state, dtype=np.float64)
    for _ in range(sets):
        data = integrate(system, x, m, skip=1)
        out.append(Trajectory(data, system.dt, 0, system))
        x = data[:, -1]
    return out
