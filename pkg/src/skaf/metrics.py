"""Normalized RMSE and lead-time error curves."""

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import LYAPUNOV_L63, Trajectory
from .errors import ConfigError, DegenerateTruth, DimensionMismatch
from .features import featurize
from .kaf import ForecastModel


def normalized_rmse(forecast, truth):
    """``|forecast - truth| / (sqrt(m) * std(truth))`` with population std.

    The climatological forecast ``mean(truth)`` scores exactly 1.
    """
    f = np.asarray(forecast, dtype=np.float64).reshape(-1)
    y = np.asarray(truth, dtype=np.float64).reshape(-1)
    if f.shape != y.shape:
        raise DimensionMismatch(f"forecast has {f.size} values, truth has {y.size}")
    m = y.size
    if m < 2:
        raise ValueError(f"need at least 2 values, got {m}")
    sd = float(np.std(y))
    if sd == 0.0:
        raise DegenerateTruth("truth series has zero variance")
    return float(np.linalg.norm(f - y) / (np.sqrt(m) * sd))


@dataclass(frozen=True, eq=False)
class RmseCurve:
    lead_steps: np.ndarray
    per_set_rmse: np.ndarray      # sets x leads
    variable_index: int
    dt: float = 0.01
    lyapunov_time_steps: int = None

    @property
    def mean(self):
        return self.per_set_rmse.mean(axis=0)

    @property
    def std(self):
        return self.per_set_rmse.std(axis=0)

    @property
    def lead_times(self):
        return self.lead_steps * self.dt

    def crossing_step(self, level=0.5):
        """First lead (in steps) whose mean RMSE exceeds ``level``, or None."""
        above = np.flatnonzero(self.mean > level)
        return int(self.lead_steps[above[0]]) if above.size else None

    def to_csv(self, path):
        write_curve_csv(self, path)


def lyapunov_steps(dt, exponent=LYAPUNOV_L63):
    return int(round(1.0 / (exponent * dt)))


def _observe(test_set, observe):
    data = test_set.data if isinstance(test_set, Trajectory) else np.asarray(test_set)
    return data if observe is None else observe(data)


def evaluate_curve(models, test_sets, variable, leads=None, observe=None, response_row=None,
                   dt=0.01, lyapunov_time_steps=None):
    """RMSE of the ``variable``-th observable versus lead time.

    Parameters
    ----------
    models : mapping
        Lead (steps) to a model with ``forecast(Y)``.
    test_sets : list of Trajectory or arrays
        Each is a contiguous run of states; ``observe`` maps its data to the
        covariate rows (identity by default), whose row ``variable`` is the
        truth.
    response_row : int, optional
        Row of the model output to score. Defaults to ``variable`` for
        multi-output models and 0 for single-output ones.
    """
    leads = sorted(models) if leads is None else [int(q) for q in leads]
    missing = [q for q in leads if q not in models]
    if missing:
        raise ConfigError(f"no model for leads {missing}")
    if not test_sets:
        raise ConfigError("need at least one test set")
    obs = [_observe(t, observe) for t in test_sets]
    q_max = max(leads)
    for Y in obs:
        if Y.shape[1] - q_max < 2:
            raise ConfigError(f"test set of {Y.shape[1]} points is too short for lead {q_max}")
    rows = {}
    for q in leads:
        r = models[q].r
        rows[q] = response_row if response_row is not None else (variable if r > 1 else 0)
    # models trained together share a feature map; featurize each set once then
    shared = _shared_phi([models[q] for q in leads])
    out = np.empty((len(obs), len(leads)))
    for i, Y in enumerate(obs):
        m = Y.shape[1]
        V = featurize(shared, Y) if shared is not None else None
        for j, q in enumerate(leads):
            model = models[q]
            if V is not None:
                f = model.W[rows[q]] @ V[:, :m - q]
            else:
                f = model.forecast(Y[:, :m - q])[rows[q]]
            out[i, j] = normalized_rmse(f, Y[variable, q:])
    return RmseCurve(np.array(leads), out, int(variable), dt, lyapunov_time_steps)


def _shared_phi(models):
    if not all(isinstance(m, ForecastModel) for m in models):
        return None
    meta = {m.feature_meta for m in models}
    return models[0].phi if len(meta) == 1 else None


def write_curve_csv(curve, path):
    k = curve.per_set_rmse.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lead_time", "mean_rmse", "std_rmse"] + [f"per_set_{i + 1}" for i in range(k)])
        for j, t in enumerate(curve.lead_times):
            w.writerow([repr(float(t)), repr(float(curve.mean[j])), repr(float(curve.std[j]))]
                       + [repr(float(v)) for v in curve.per_set_rmse[:, j]])


def read_curve_csv(path):
    """Header and float rows of a curve CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
