"""Experiment configuration files.

Grammar (one setting per line)::

    # comment to end of line
    key = value

Keys are case-sensitive identifiers; blank lines are ignored; a later
assignment to the same key wins. A value is one of

* a number (``10``, ``0.09``, ``1e-6``),
* a word (``l63``, ``median_rule``),
* a comma-separated list (``0, 10, 20``),
* an inclusive range ``start:stop:step`` (``0:800:10``).

Command-line ``--set key=value`` flags are applied after the file, using
the same value syntax. Keys ending in ``_time`` are in model time units
and are converted to steps with the system's ``dt``.
"""

import hashlib
import os
from dataclasses import asdict, dataclass, field, fields

from .dynamics import L63Params, L96Params
from .errors import ConfigError

S_POLICIES = ("sqrt_n_log_n", "mult_of_ell")
GAMMA_POLICIES = ("median_rule",)
METHODS = ("streaming", "naive", "linear")

# regime defaults: (gamma, ell)
REGIME_DEFAULTS = {
    ("l63", None): (0.05, 400),
    ("l96", 5.0): (1e-4, 400),
    ("l96", 6.9): (1e-2, 400),
    ("l96", 10.0): (1e-4, 400),
}


@dataclass
class ExperimentConfig:
    system: str = "l63"
    F: float = 10.0
    substeps: int = None
    n_train: int = 10_000
    m_test: int = 10_000
    test_sets: int = 5
    burn_in: int = 10_000
    leads: list = None
    q: int = 50
    variable: int = 0
    responses: str = "variable"     # "variable" or "all"
    ell: int = None
    s: object = "sqrt_n_log_n"
    s_multiple: int = 4
    gamma: object = None
    mu: float = 1e-6
    data_seed: int = 0
    feature_seed: int = 0
    sketch_seed: int = 1
    method: str = "streaming"
    passes: int = 2
    block: int = 1000
    naive_max_n: int = 20_000
    grid: list = None               # bench cells "n/ell/gamma/s"
    bench_methods: list = field(default_factory=lambda: ["streaming"])
    data_dir: str = None
    model: str = None
    curve: str = None
    report: str = None

    def params(self):
        if self.system == "l63":
            return L63Params() if self.substeps is None else L63Params(substeps=self.substeps)
        p = L96Params(F=self.F)
        return p if self.substeps is None else L96Params(F=self.F, substeps=self.substeps)

    @property
    def dt(self):
        return self.params().dt

    def resolved_gamma(self):
        if self.gamma is not None:
            return self.gamma
        return REGIME_DEFAULTS.get(self._regime_key(), (0.05, 400))[0]

    def resolved_ell(self):
        if self.ell is not None:
            return self.ell
        return REGIME_DEFAULTS.get(self._regime_key(), (0.05, 400))[1]

    def _regime_key(self):
        return ("l63", None) if self.system == "l63" else ("l96", float(self.F))

    def resolved_leads(self):
        if self.leads is not None:
            return list(self.leads)
        # every 10 steps out to 8 time units
        last = int(round(8.0 / self.dt))
        return list(range(0, last + 1, 10))

    def resolved_s(self, n):
        from .kaf import recommended_features
        if isinstance(self.s, int):
            return self.s
        if self.s == "mult_of_ell":
            return self.s_multiple * self.resolved_ell()
        return recommended_features(max(n, 2))

    def covariate_rows(self):
        return slice(None) if self.system == "l63" else slice(0, self.params().K)

    def digest(self):
        return hashlib.sha256(render(self).encode()).hexdigest()[:16]


def _parse_scalar(text):
    t = text.strip()
    if t == "":
        raise ConfigError("empty value")
    if t.lower() in ("none", "null"):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_value(text):
    t = text.strip()
    if t.count(":") == 2 and "/" not in t:
        a, b, c = (_parse_scalar(x) for x in t.split(":"))
        if not all(isinstance(v, (int, float)) for v in (a, b, c)) or c <= 0:
            raise ConfigError(f"bad range {t!r}")
        out, v, k = [], a, 0
        while v <= b + 1e-9 * abs(c):
            out.append(v)
            k += 1
            v = a + k * c
        return out
    if "," in t:
        return [_parse_scalar(x) for x in t.split(",") if x.strip()]
    return _parse_scalar(t)


def parse_text(text, origin="<config>"):
    """Key-value pairs from config text, in file order."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if not key.isidentifier():
            raise ConfigError(f"{origin}:{lineno}: bad key {key!r}")
        try:
            pairs[key] = parse_value(value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return pairs


_INT_FIELDS = {"substeps", "n_train", "m_test", "test_sets", "burn_in", "q", "variable", "ell",
               "s_multiple", "data_seed", "feature_seed", "sketch_seed", "passes", "block",
               "naive_max_n"}
_FLOAT_FIELDS = {"F", "mu"}
_PATH_FIELDS = {"data_dir", "model", "curve", "report"}


def build(pairs, base=None):
    """An :class:`ExperimentConfig` from parsed pairs, validated."""
    cfg = base or ExperimentConfig()
    names = {f.name for f in fields(ExperimentConfig)}
    timed = {}
    for key, value in pairs.items():
        if key.endswith("_time") and key[:-5] in ("q", "leads"):
            timed[key[:-5]] = value
            continue
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    for key, value in timed.items():
        dt = cfg.dt
        if key == "q":
            cfg.q = _to_steps(value, dt)
        else:
            vals = value if isinstance(value, list) else [value]
            cfg.leads = [_to_steps(v, dt) for v in vals]
    validate(cfg)
    return cfg


def _to_steps(t, dt):
    if not isinstance(t, (int, float)):
        raise ConfigError(f"time value must be numeric, got {t!r}")
    return int(round(t / dt))


def _coerce(key, value):
    if value is None:
        return None
    if key in _INT_FIELDS:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_FIELDS:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key in _PATH_FIELDS:
        return str(value)
    if key == "leads":
        vals = value if isinstance(value, list) else [value]
        return [_coerce("q", v) for v in vals]
    if key in ("grid", "bench_methods"):
        return [str(v) for v in (value if isinstance(value, list) else [value])]
    if key == "s":
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        return value
    if key == "gamma" and isinstance(value, int):
        return float(value)
    return value


def validate(cfg):
    if cfg.system not in ("l63", "l96"):
        raise ConfigError(f"system must be l63 or l96, got {cfg.system!r}")
    for name in ("n_train", "m_test", "test_sets", "block", "passes", "s_multiple"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    if cfg.burn_in < 0 or cfg.q < 0:
        raise ConfigError("burn_in and q must be nonnegative")
    if cfg.ell is not None and cfg.ell < 1:
        raise ConfigError("ell must be positive")
    if not (isinstance(cfg.s, int) and cfg.s > 0) and cfg.s not in S_POLICIES:
        raise ConfigError(f"s must be a positive integer or one of {S_POLICIES}, got {cfg.s!r}")
    if cfg.gamma is not None and cfg.gamma not in GAMMA_POLICIES:
        if not isinstance(cfg.gamma, float) or not cfg.gamma > 0:
            raise ConfigError(f"gamma must be positive or one of {GAMMA_POLICIES}")
    if not cfg.mu > 0:
        raise ConfigError("mu must be positive")
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    for m in cfg.bench_methods:
        if m not in METHODS:
            raise ConfigError(f"bench method must be one of {METHODS}, got {m!r}")
    if cfg.responses not in ("variable", "all"):
        raise ConfigError("responses must be 'variable' or 'all'")
    if cfg.leads is not None and (not cfg.leads or min(cfg.leads) < 0):
        raise ConfigError("leads must be nonnegative step counts")
    if cfg.substeps is not None and cfg.substeps < 1:
        raise ConfigError("substeps must be positive")
    d_obs = 3 if cfg.system == "l63" else cfg.params().K
    if not 0 <= cfg.variable < d_obs:
        raise ConfigError(f"variable must lie in [0, {d_obs})")
    if cfg.grid:
        for cell in cfg.grid:
            parse_cell(cell)
    return cfg


def parse_cell(cell):
    """A bench cell ``n/ell/gamma/s`` (s may be a policy name)."""
    parts = cell.split("/")
    if len(parts) != 4:
        raise ConfigError(f"bench cell must be n/ell/gamma/s, got {cell!r}")
    try:
        n, ell, gamma = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"bad bench cell {cell!r}") from None
    s = parts[3].strip()
    s = int(s) if s.isdigit() else s
    if not (isinstance(s, int) or s in S_POLICIES):
        raise ConfigError(f"bad s in bench cell {cell!r}")
    return n, ell, gamma, s


def load(path=None, overrides=()):
    """Read a config file (optional) and apply ``key=value`` overrides."""
    pairs = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            pairs.update(parse_text(fh.read(), path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        pairs.update(parse_text(item, "--set"))
    cfg = build(pairs)
    if cfg.data_dir is None:
        cfg.data_dir = os.environ.get("SKAF_DATA_DIR", "skaf-data")
    return cfg


def _render_value(v):
    if isinstance(v, list):
        return ", ".join(_render_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(cfg):
    """Config text that parses back to ``cfg`` (paths excluded)."""
    lines = []
    for key, value in asdict(cfg).items():
        if value is None or key in _PATH_FIELDS:
            continue
        lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"
