"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, lists are comma separated.
Unknown keys are errors. Any key can be overridden from the environment as
``DDIMLAB_<KEY>`` (upper case), e.g. ``DDIMLAB_SEED=7``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os

import numpy as np

from . import process as _process
from . import score as _score
from .errors import ConfigError
from .laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian
from .samplers import SamplerConfig

ENV_PREFIX = "DDIMLAB_"


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    s = s.strip()
    return [float(v) for v in s.split(",")] if s else []


def _ints(s):
    out = []
    for v in _floats(s):
        if v != int(v):
            raise ValueError(f"not an integer: {v}")
        out.append(int(v))
    return out


def _words(s):
    return [w.strip() for w in s.split(",") if w.strip()]


def _uint64(s):
    v = int(s.strip(), 0)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return v


PROCESS_ALIASES = {"ou": "OU_standard", "ou_standard": "OU_standard", "vp": "VP", "ve": "VE",
                   "nonlinear": "NonlinearTest", "nonlineartest": "NonlinearTest"}

# key -> (parser, default); None default means "unset"
SCHEMA = {
    "process": (lambda s: s.strip(), "ou"),
    "vp_beta0": (float, 0.1),
    "vp_beta1": (float, 19.9),
    "ve_rate": (float, 1.0),
    "dim": (int, 1),
    "data": (lambda s: s.strip().lower(), "gaussian"),
    "data_mean": (_floats, [0.0]),
    "data_var": (float, 1.0),
    "gmm_weights": (_floats, [0.5, 0.5]),
    "gmm_means": (_floats, [-2.0, 2.0]),
    "gmm_vars": (_floats, [0.25, 0.25]),
    "T": (float, 6.0),
    "h": (float, 1e-3),
    "ell": (int, 64),
    "lambda": (float, 0.0),
    "init_mode": (lambda s: s.strip(), "exact_qT"),
    "lookback": (lambda s: s.strip(), "shifted"),
    "N": (int, 10000),
    "seed": (_uint64, 0),
    "n_points": (int, 4096),
    "grid_min": (float, None),
    "grid_max": (float, None),
    "sweep_h": (_floats, None),
    "sweep_ell": (_ints, None),
    "sweep_lambda": (_floats, None),
    "sweep_ellh": (_floats, None),
    "sweep_mode": (lambda s: s.strip().lower(), "cartesian"),
    "metrics": (_words, ["kl", "tv"]),
    "out_dir": (lambda s: s.strip(), "out"),
    "record_excess": (_bool, True),
    "threads": (int, 1),
}
# keys that do not change results and are left out of the config hash
NON_SEMANTIC = ("out_dir", "threads")
SWEEP_KEYS = ("sweep_h", "sweep_ell", "sweep_lambda", "sweep_ellh")
METRICS = ("kl", "tv")


def _parse_value(key, raw):
    parser = SCHEMA[key][0]
    try:
        return parser(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None


def _canonical(v):
    if isinstance(v, list):
        return ",".join(_canonical(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


class ExperimentConfig:
    """Parsed, validated experiment settings."""

    def __init__(self, values):
        self.values = dict(values)
        self._validate()

    # -- construction --
    @classmethod
    def from_text(cls, text, env=None, overrides=None):
        values = {k: d for k, (_, d) in SCHEMA.items()}
        seen = set()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            seen.add(key)
            values[key] = _parse_value(key, raw)
        env = os.environ if env is None else env
        lower = {k.lower(): k for k in SCHEMA}
        for name, raw in env.items():
            if not name.startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX):]
            key = key if key in SCHEMA else lower.get(key.lower())
            if key is None:
                raise ConfigError(f"environment variable {name} names no config key")
            values[key] = _parse_value(key, raw)
        for key, v in (overrides or {}).items():
            if v is not None:
                values[key] = v
        return cls(values)

    @classmethod
    def from_file(cls, path, env=None, overrides=None):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, env=env, overrides=overrides)

    def __getitem__(self, key):
        return self.values[key]

    # -- validation --
    def _validate(self):
        v = self.values
        kind = PROCESS_ALIASES.get(v["process"].lower())
        if kind is None:
            raise ConfigError(f"unknown process {v['process']!r}")
        self.kind = kind
        if v["data"] not in ("gaussian", "gmm"):
            raise ConfigError("data must be 'gaussian' or 'gmm'")
        if v["dim"] < 1:
            raise ConfigError("dim must be >= 1")
        if (kind == "NonlinearTest" or v["data"] == "gmm") and v["dim"] != 1:
            raise ConfigError("nonlinear processes and mixture data are 1-D only")
        if v["N"] < 1:
            raise ConfigError("N must be >= 1")
        if v["threads"] < 1:
            raise ConfigError("threads must be >= 1")
        if v["n_points"] < 16:
            raise ConfigError("n_points must be >= 16")
        if v["sweep_mode"] not in ("cartesian", "paired"):
            raise ConfigError("sweep_mode must be 'cartesian' or 'paired'")
        bad = [m for m in v["metrics"] if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}; choose from {METRICS}")
        for key in SWEEP_KEYS:
            if v[key] is not None and len(v[key]) == 0:
                raise ConfigError(f"sweep axis {key} is empty")
        self.sampler_config()  # surfaces sampler invariant violations

    def config_hash(self):
        lines = [f"{k}={_canonical(self.values[k])}" for k in sorted(SCHEMA) if k not in NON_SEMANTIC]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    # -- builders --
    def build_process(self):
        v = self.values
        if self.kind == "OU_standard":
            return _process.ou_standard(v["dim"])
        if self.kind == "VP":
            return _process.vp(v["vp_beta0"], v["vp_beta1"], v["dim"], T=self._max_T())
        if self.kind == "VE":
            return _process.ve(v["ve_rate"], v["dim"])
        return _process.nonlinear_test()

    def _max_T(self):
        return self.values["T"]

    def build_data_law(self):
        v = self.values
        try:
            if v["data"] == "gmm":
                return GaussianMixture1D(v["gmm_weights"], v["gmm_means"], v["gmm_vars"])
            mean = v["data_mean"]
            if len(mean) == 1:
                mean = mean * v["dim"]
            if len(mean) != v["dim"]:
                raise ConfigError("data_mean length must be 1 or dim")
            return IsotropicGaussian(mean, v["data_var"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid_bounds(self, law):
        v = self.values
        lo, hi = _score.default_bounds(law)
        return (v["grid_min"] if v["grid_min"] is not None else lo,
                v["grid_max"] if v["grid_max"] is not None else hi)

    def build_score(self, p, law, h):
        """Analytic score for linear processes, a Fokker-Planck grid otherwise."""
        if p.is_linear:
            return _score.analytic_score_field(p, law), None
        lo, hi = self.grid_bounds(law)
        q0 = GridDensity1D.from_law(law, lo, hi, self.values["n_points"])
        sol = _score.fp_evolve_1d(p, q0, _process.TimeGrid(self.values["T"], h))
        return _score.grid_score_field(sol), q0

    def sampler_config(self, h=None, ell=None, lam=None, record_excess=None):
        v = self.values
        try:
            return SamplerConfig(
                T=v["T"], h=v["h"] if h is None else h, ell=v["ell"] if ell is None else ell,
                lam=v["lambda"] if lam is None else lam, init_mode=v["init_mode"],
                seed=v["seed"], lookback=v["lookback"],
                record_excess=v["record_excess"] if record_excess is None else record_excess)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def sweep_cells(self):
        """List of (h, ell, lambda) cells; raises ConfigError if no axis is set."""
        v = self.values
        axes = {k: v[k] for k in SWEEP_KEYS if v[k] is not None}
        if not axes:
            raise ConfigError("sweep needs at least one nonempty sweep axis")
        ells = v["sweep_ell"] or [v["ell"]]
        lams = v["sweep_lambda"] or [v["lambda"]]
        if v["sweep_ellh"] is not None:
            if v["sweep_h"] is not None:
                raise ConfigError("sweep_h and sweep_ellh cannot both be set")
            ellh = v["sweep_ellh"]
            axes_vals = [ellh, ells, lams]
            build = lambda a, b, c: (a / b, b, c)
        else:
            axes_vals = [v["sweep_h"] or [v["h"]], ells, lams]
            build = lambda a, b, c: (a, b, c)
        if v["sweep_mode"] == "paired":
            n = max(len(a) for a in axes_vals)
            if any(len(a) not in (1, n) for a in axes_vals):
                raise ConfigError("paired sweep axes must have equal lengths (or length 1)")
            combos = [tuple(a[i] if len(a) > 1 else a[0] for a in axes_vals) for i in range(n)]
        else:
            combos = list(itertools.product(*axes_vals))
        cells = [build(*c) for c in combos]
        for h, ell, lam in cells:
            if not (h > 0 and math.isfinite(h)):
                raise ConfigError(f"bad step size {h}")
            self.sampler_config(h=h, ell=ell, lam=lam)
        return cells
