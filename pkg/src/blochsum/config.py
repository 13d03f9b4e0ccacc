"""INI experiment configs.

A config has a ``[run]`` section naming the experiment, a ``[potential]``
section, and optional ``[basis]``, ``[grid]``, ``[contour]``,
``[experiment]`` and ``[tolerances]`` sections.  Unknown keys are errors;
missing keys take the defaults below.  Every error carries a line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .model import FAMILIES, ContourSpec, PotentialSpec

EXPERIMENTS = ("spectrum", "pimatrix", "decay", "sumrule", "perturb", "trace", "delta")


class ConfigError(ValueError):
    def __init__(self, message, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# typed defaults per section; None means "no default, optional"
_POTENTIAL = {
    "family": "trig-polynomial",
    "dimension": 1,
    "shift": 0.0,
    "amplitudes": "",
    "amplitude": 1.0,
    "decay": 2.0,
    "width": 4.0,
    "strength": 1.0,
    "cutoff": None,
    "seed": None,
}
_BASIS = {"m_cut": 64}
_GRID = {"n": 8, "offset": 0.0}
_CONTOUR = {"beta": 2.0, "mu": 10.0, "delta": None, "x_max": None, "n_quad": 16}

_EXPERIMENT = {
    "spectrum": {"n_bands": None, "check_free": False},
    "pimatrix": {"n_bands": None, "alpha": 0, "fh_bands": [1, 2], "check_free": False},
    "decay": {
        "k": 0.3,
        "powers": [1, 2, 3],
        "s_max": 10,
        "t_values": [100, 200],
        "expect_stable": None,
        "fit_band": 1,
        "fit_window": [50, 200],
        "commutator_power": 1,
    },
    "sumrule": {
        "k": 0.0,
        "band": 1,
        "cutoffs": [25, 50, 100, 150, 200],
        "t_grid": [],
        "holder_window": [1e-5, 1e-3],
        "expect_converge": True,
    },
    "perturb": {
        "k0": 0.0,
        "k": 0.05,
        "kp_points": [0.3],
        "fd_step": 1e-3,
        "richardson": False,
        "nested_cutoffs": [64, 96],
        "expect_nested_converged": None,
    },
    "trace": {"alphas": [0, 0], "j": 12, "check_cyclic": True},
    "delta": {
        "g": 1.0,
        "j_max": 400,
        "pi_js": [1, 2, 5, 10, 50, 100, 200],
        "cutoffs": [100, 150, 200, 250, 300, 350, 400],
        "holder_window": [1e-5, 1e-3],
        "holder_j": 10000,
    },
}

_TOLERANCES = {
    "free": 1e-10,
    "offdiag": 1e-12,
    "hermiticity": 1e-12,
    "feynman_hellmann": 1e-6,
    "stability": 0.01,
    "sumrule": 1e-3,
    "feshbach": 1e-10,
    "kp": 1e-4,
    "nested": 1e-8,
    "trace": 1e-6,
    "cyclic": 1e-10,
    "slope": 0.1,
    "asymptote": 0.01,
    "holder_low": 0.4,
    "holder_high": 0.6,
}


@dataclass
class ExperimentConfig:
    experiment: str
    potential: PotentialSpec
    m_cut: int
    grid_n: int
    grid_offset: float
    contour: ContourSpec | None
    params: dict
    tolerances: dict
    out: str | None = None
    seed: int | None = None
    source: str | None = None
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Plain-data echo of every setting after defaults were applied."""
        pot = {k: getattr(self.potential, k) for k in _POTENTIAL}
        pot["amplitudes"] = {str(m): _jsonable(v) for m, v in dict(self.potential.amplitudes).items()}
        c = self.contour
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "potential": pot,
            "basis": {"m_cut": self.m_cut},
            "grid": {"n": self.grid_n, "offset": self.grid_offset},
            "contour": None
            if c is None
            else {"beta": c.beta, "mu": c.mu, "delta": c.delta, "x_max": c.x_max, "n_quad": c.n_quad},
            "experiment_params": dict(self.params),
            "tolerances": dict(self.tolerances),
        }


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _line_index(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    where, sec = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            where[(sec, None)] = i
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            where[(sec, m.group(1).strip().lower())] = i
    return where


def _parse_number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def _coerce(raw: str, default, key: str, line):
    raw = raw.strip()
    try:
        if isinstance(default, bool) or (default is None and raw.lower() in ("true", "false")):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"expected a boolean, got {raw!r}")
            return low in ("true", "yes", "1")
        if isinstance(default, list):
            if not raw:
                return []
            return [_parse_number(x) for x in re.split(r"[,\s]+", raw) if x]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if default is None:
            if raw.lower() in ("", "none"):
                return None
            return _parse_number(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {exc}", line) from None


def _section(cp, name, defaults, lines, required=False):
    if not cp.has_section(name):
        if required:
            raise ConfigError(f"missing section [{name}]")
        return dict(defaults)
    out = dict(defaults)
    for key, raw in cp.items(name):
        line = lines.get((name, key))
        if key not in defaults:
            raise ConfigError(f"unknown key '{key}' in [{name}]", line)
        out[key] = _coerce(raw, defaults[key], key, line)
    return out


def _amplitudes(raw: str, d: int, line) -> dict:
    """'1:1 -1:1' or '1,0:0.5 -1,0:0.5' (d=2) -> {freq: coefficient}.

    Entries are whitespace separated; ``a+bj`` gives a complex coefficient.
    """
    out = {}
    for tok in raw.split():
        tok = tok.strip().rstrip(",")
        if not tok:
            continue
        try:
            freq, val = tok.split(":")
            m = tuple(int(x) for x in freq.split(","))
            if len(m) != d:
                raise ValueError(f"frequency {freq} has {len(m)} components, dimension is {d}")
            out[m[0] if d == 1 else m] = complex(val.replace("i", "j")) if "i" in val or "j" in val else float(val)
        except ValueError as exc:
            raise ConfigError(f"bad amplitude entry {tok!r}: {exc}", line) from None
    return out


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("content before the first [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse config: {exc.message.splitlines()[0]}", line) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(str(exc).split(":", 1)[-1].strip(), exc.lineno) from None
    lines = _line_index(text)
    known = {"run", "potential", "basis", "grid", "contour", "experiment", "tolerances"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))

    run = _section(cp, "run", {"experiment": "", "seed": None, "out": ""}, lines, required=True)
    name = run["experiment"]
    if name not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {name!r}", lines.get(("run", "experiment")))

    pot = _section(cp, "potential", _POTENTIAL, lines, required=name != "delta")
    if pot["family"] not in FAMILIES:
        raise ConfigError(f"unknown potential family {pot['family']!r}", lines.get(("potential", "family")))
    amps = _amplitudes(pot.pop("amplitudes"), pot["dimension"], lines.get(("potential", "amplitudes")))
    if run["seed"] is not None and pot["seed"] is None:
        pot["seed"] = int(run["seed"])
    try:
        spec = PotentialSpec(amplitudes=amps, **pot)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid potential: {exc}", lines.get(("potential", None))) from None

    basis = _section(cp, "basis", _BASIS, lines)
    grid = _section(cp, "grid", _GRID, lines)
    if basis["m_cut"] < 1:
        raise ConfigError("m_cut must be positive", lines.get(("basis", "m_cut")))
    if grid["n"] < 1:
        raise ConfigError("grid n must be positive", lines.get(("grid", "n")))

    contour = None
    if name == "trace" or cp.has_section("contour"):
        c = _section(cp, "contour", _CONTOUR, lines)
        try:
            contour = ContourSpec(c["beta"], c["mu"], c["delta"], c["x_max"], c["n_quad"])
        except ValueError as exc:
            raise ConfigError(str(exc), lines.get(("contour", None))) from None

    params = _section(cp, "experiment", _EXPERIMENT[name], lines)
    tols = _section(cp, "tolerances", _TOLERANCES, lines)
    for key, val in tols.items():
        if not val > 0:
            raise ConfigError(f"tolerance '{key}' must be positive", lines.get(("tolerances", key)))

    return ExperimentConfig(
        experiment=name,
        potential=spec,
        m_cut=basis["m_cut"],
        grid_n=grid["n"],
        grid_offset=grid["offset"],
        contour=contour,
        params=params,
        tolerances=tols,
        out=run["out"] or None,
        seed=None if run["seed"] is None else int(run["seed"]),
        source=source,
        raw={s: dict(cp.items(s)) for s in cp.sections()},
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
