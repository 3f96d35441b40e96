"""Command-line front end.

Every command reads a :class:`RunConfig` (flags, optionally layered over a
JSON config file), writes its grid or histogram as CSV when ``--out`` is
given, and emits a JSON report to ``--report`` or stdout.

Exit codes: 0 success, 2 configuration error, 3 truncation or tolerance
failure.  Error messages start with the offending parameter name.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import re
import sys
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .eightport import NetworkConfig, compare_to_limit, joint_statistics, lattice_grid
from .fock import (Grid1D, Grid2D, InvalidStateError, TruncationError, check_density,
                   coherent_state, number_state, poisson_tail, pure_density,
                   thermal_state, vacuum)
from .observable import (EfficiencyQuad, GeneratingOperator, density_at, generating_operator,
                         margin_measures, phase_space_density, smeared_generator, tilt_map,
                         weyl_transform_support)
from .quadrature import convolve_density, limit_rhs_density, quadrature_density, restrict
from .tomography import build_forward_map, fidelity, reconstruct, trace_distance

COMMANDS = ("limit-density", "simulate", "compare", "margins", "tomography", "support-check",
            "smear", "verify-tilt")

DEFAULT_TOLERANCES = {
    "trace": 1e-6,      # generating-operator trace deficit
    "state_tail": 1e-10,  # Fock tail lost by a truncated input state
    "mass": 1e-4,       # histogram mass deficit
    "tv": 0.1,          # compare: maximal total-variation distance
    "margin": 1e-5,     # margins: L1 error
    "support": 1e-10,   # support-check bracketing tolerance (relative)
    "tilt": 1e-9,       # verify-tilt: pointwise error
    "residual": 1e-8,   # tomography: residual of internally generated data
}

MAX_AUTO_CUTOFF = 400


class ConfigError(ValueError):
    def __init__(self, parameter, message):
        super().__init__(f"{parameter}: {message}")
        self.parameter = parameter


class ToleranceFailure(RuntimeError):
    def __init__(self, parameter, message):
        super().__init__(f"{parameter}: {message}")
        self.parameter = parameter


# -- parsing helpers -------------------------------------------------------------------------

_ANGLE = re.compile(r"^\s*(-?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(text) -> float:
    """Radians, or ``pi``-multiples such as ``pi/4``, ``-pi/3``, ``3pi/4``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    m = _ANGLE.match(s)
    if m:
        sign, coef, den = m.groups()
        val = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
        return -val if sign else val
    try:
        return float(s)
    except ValueError:
        raise ConfigError("theta", f"cannot parse angle {text!r}") from None


def parse_complex(text, name="z") -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ConfigError(name, f"cannot parse complex number {text!r}") from None


def format_complex(z: complex) -> str:
    return f"{z.real!r}{z.imag:+}i" if z.imag else repr(z.real)


def format_grid(g: Grid2D) -> str:
    def one(a: Grid1D):
        return f"{a.min!r}:{a.max!r}:{a.count}"
    return one(g.x) if g.x == g.y else f"{one(g.x)},{one(g.y)}"


def parse_grid(text, name="grid") -> Grid2D:
    try:
        return Grid2D.parse(str(text))
    except (ValueError, TypeError) as exc:
        raise ConfigError(name, f"expected min:max:count[,min:max:count], got {text!r} ({exc})") from None


@dataclass(frozen=True)
class StateSpec:
    """``vacuum | number:n | coherent:re+imi | thermal:nbar | file:path.npy``."""

    kind: str
    value: object = None

    @classmethod
    def parse(cls, text, name="rho") -> "StateSpec":
        s = str(text).strip()
        kind, _, arg = s.partition(":")
        kind = kind.lower()
        try:
            if kind == "vacuum" and not arg:
                return cls("vacuum")
            if kind == "number":
                n = int(arg)
                if n < 0:
                    raise ValueError("negative photon number")
                return cls("number", n)
            if kind == "coherent":
                return cls("coherent", parse_complex(arg, name))
            if kind == "thermal":
                nbar = float(arg)
                if not nbar >= 0:
                    raise ValueError("negative mean photon number")
                return cls("thermal", nbar)
            if kind == "file" and arg:
                return cls("file", arg)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(name, f"invalid state spec {text!r} ({exc})") from None
        raise ConfigError(name, f"unknown state spec {text!r}; expected vacuum, number:n, "
                                "coherent:re+imi, thermal:nbar or file:path.npy")

    def __str__(self):
        if self.kind == "vacuum":
            return "vacuum"
        if self.kind == "coherent":
            return "coherent:" + format_complex(self.value)
        return f"{self.kind}:{self.value}"

    def natural_cutoff(self, tail_tol) -> int:
        if self.kind == "vacuum":
            return 2
        if self.kind == "number":
            return max(2, self.value + 1)
        if self.kind == "coherent":
            d = 2
            while poisson_tail(abs(self.value) ** 2, d) > tail_tol:
                d += 1
            return d
        if self.kind == "thermal":
            if self.value == 0:
                return 2
            r = self.value / (1 + self.value)
            return max(2, int(math.ceil(math.log(tail_tol) / math.log(r))))
        return self.load().shape[0]

    def load(self) -> np.ndarray:
        try:
            return np.load(self.value)
        except (OSError, ValueError) as exc:
            raise ConfigError("file", f"cannot read {self.value!r} ({exc})") from None

    def build(self, d, tail_tol, name) -> np.ndarray:
        try:
            if self.kind == "vacuum":
                return vacuum(d)
            if self.kind == "number":
                return number_state(self.value, d)
            # a tolerated tail is renormalized away
            if self.kind == "coherent":
                v = coherent_state(self.value, d, tail_tol=tail_tol)
                return pure_density(v / np.linalg.norm(v))
            if self.kind == "thermal":
                rho = thermal_state(self.value, d, tail_tol=tail_tol)
                return rho / np.trace(rho).real
        except TruncationError as exc:
            raise TruncationError(f"{name} at cutoff {d}: {exc}", parameter="cutoff",
                                  suggested_cutoff=exc.suggested_cutoff) from None
        rho = self.load()
        try:
            rho = check_density(rho, name=name)
        except InvalidStateError as exc:
            raise ConfigError(name, str(exc)) from None
        if rho.shape[0] > d:
            raise ConfigError("cutoff", f"{name} file has dimension {rho.shape[0]} > cutoff {d}")
        out = np.zeros((d, d), dtype=complex)
        out[: rho.shape[0], : rho.shape[0]] = rho
        return out


# -- configuration -----------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    theta: float = math.pi / 4
    rho: str = "vacuum"
    sigma: str = "vacuum"
    z: complex = 3.0
    cutoff: Optional[int] = None
    s_cutoff: Optional[int] = None
    lo_cutoff: Optional[int] = None
    grid: str = "-5:5:41"
    efficiencies: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    generator: str = "field"
    ridge: float = 0.0
    samples: Optional[str] = None
    reference: Optional[str] = None
    tilted: Optional[str] = None
    out: Optional[str] = None
    report: Optional[str] = None
    tolerances: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        self.theta = parse_angle(self.theta)
        if not math.isfinite(self.theta) or math.sin(self.theta) == 0:
            raise ConfigError("theta", f"sin(theta) must be nonzero, got {self.theta!r}")
        self.rho = str(StateSpec.parse(self.rho, "rho"))
        self.sigma = str(StateSpec.parse(self.sigma, "sigma"))
        self.z = parse_complex(self.z)
        for name in ("cutoff", "s_cutoff", "lo_cutoff"):
            v = getattr(self, name)
            if v is not None:
                if int(v) != v or v < 2:
                    raise ConfigError(name, f"must be an integer >= 2, got {v!r}")
                setattr(self, name, int(v))
        self.grid = format_grid(parse_grid(self.grid))
        eff = self.efficiencies
        if isinstance(eff, str):
            eff = eff.split(",")
        try:
            eff = tuple(float(e) for e in eff)
            if len(eff) != 4:
                raise ValueError("need four values e1,e2,e3,e4")
            EfficiencyQuad(*eff)
        except (ValueError, TypeError) as exc:
            raise ConfigError("efficiencies", str(exc)) from None
        self.efficiencies = eff
        if self.generator not in ("field", "fixed"):
            raise ConfigError("generator", f"expected 'field' or 'fixed', got {self.generator!r}")
        self.ridge = float(self.ridge)
        if self.ridge < 0:
            raise ConfigError("ridge", "must be >= 0")
        tol = dict(self.tolerances)
        for k, v in tol.items():
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError("tol", f"unknown tolerance {k!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
            tol[k] = float(v)
        self.tolerances = tol

    def tol(self, name) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["z"] = format_complex(self.z)
        d["efficiencies"] = list(self.efficiencies)
        return d

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown configuration key")
        if "command" not in data:
            raise ConfigError("command", "missing")
        return cls(**data)

    def to_argv(self) -> List[str]:
        """Flags that parse back to an equal config."""
        argv = [self.command]
        for f in dataclasses.fields(self):
            if f.name == "command":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            flag = "--" + f.name.replace("_", "-")
            if f.name == "tolerances":
                for k, t in sorted(v.items()):
                    argv.append(f"--tol={k}={t!r}")
            elif f.name == "efficiencies":
                argv.append(f"{flag}={','.join(repr(e) for e in v)}")
            elif f.name == "z":
                argv.append(f"{flag}={format_complex(v)}")
            else:
                argv.append(f"{flag}={v!r}" if isinstance(v, float) else f"{flag}={v}")
        return argv

    def parameters(self) -> dict:
        """Parameters echoed into artifacts (no output paths)."""
        d = self.to_dict()
        for k in ("out", "report"):
            d.pop(k)
        return d


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltedps", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    S = argparse.SUPPRESS
    helps = {
        "limit-density": "analytic density of the tilted phase space observable",
        "simulate": "finite-amplitude eight-port histogram",
        "compare": "histogram versus limit density (total variation)",
        "margins": "Cartesian margins versus smeared quadratures",
        "tomography": "reconstruct a state from density samples",
        "support-check": "search for zeros of tr[S W(q,p)]",
        "smear": "density with inefficient detectors",
        "verify-tilt": "check the tilt relation between a theta=pi/2 and a tilted CSV",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], argument_default=S)
        p.add_argument("--config", help="JSON config; flags override its entries")
        p.add_argument("--theta", help="phase shift in radians (pi/4 style accepted)")
        p.add_argument("--rho", help="signal state spec")
        p.add_argument("--sigma", help="parameter field state spec")
        p.add_argument("--z", help="oscillator amplitude, e.g. 3 or 2+1i")
        p.add_argument("--cutoff", type=int, help="Fock cutoff of rho and sigma (default: per state)")
        p.add_argument("--s-cutoff", type=int, dest="s_cutoff", help="cutoff of the generating operator")
        p.add_argument("--lo-cutoff", type=int, dest="lo_cutoff", help="oscillator cutoff")
        p.add_argument("--grid", help="min:max:count[,min:max:count]")
        p.add_argument("--efficiencies", help="e1,e2,e3,e4")
        p.add_argument("--generator", choices=("field", "fixed"),
                       help="field: S = S_theta(sigma); fixed: S = sigma")
        p.add_argument("--ridge", type=float, help="tomography ridge parameter")
        p.add_argument("--samples", help="tomography input CSV (q,p,density)")
        p.add_argument("--reference", help="verify-tilt: CSV at theta = pi/2")
        p.add_argument("--tilted", help="verify-tilt: CSV at theta")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--report", help="JSON report path (default stdout)")
        p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                       help="tolerance override: " + ", ".join(DEFAULT_TOLERANCES))
    return parser


_VALUE_FLAGS = ("--theta", "--z", "--grid", "--rho", "--sigma", "--efficiencies", "--tol")


def _join_negative_values(argv):
    """``--grid -5:5:81`` -> ``--grid=-5:5:81`` so argparse does not see an option."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and re.match(r"^-[\d.p]", argv[i + 1]):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def parse_args(argv) -> RunConfig:
    ns = build_parser().parse_args(_join_negative_values(list(argv)))
    if ns.command is None:
        raise ConfigError("command", f"missing; choose one of {', '.join(COMMANDS)}")
    given = vars(ns)
    data = {}
    if "config" in given:
        try:
            with open(given.pop("config"), encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
    tol = dict(data.get("tolerances", {}))
    for item in given.pop("tol", []):
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError("tol", f"expected NAME=VALUE, got {item!r}")
        try:
            tol[k] = float(v)
        except ValueError:
            raise ConfigError("tol", f"bad value in {item!r}") from None
    data.update(given)
    if tol:
        data["tolerances"] = tol
    return RunConfig.from_dict(data)


# -- artifacts --------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def render_csv(header, columns, params: dict, command: str) -> str:
    buf = io.StringIO()
    buf.write(f"# tiltedps {command}\n")
    for k, v in params.items():
        buf.write(f"# {k}={json.dumps(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path, name="samples"):
    """Returns ``(params, header, data)`` of a CSV written by :func:`render_csv`."""
    params = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise ConfigError(name, str(exc)) from None
    rows = []
    header = None
    for line in lines:
        if not line:
            continue
        if line.startswith("#"):
            k, sep, v = line[1:].strip().partition("=")
            if sep:
                params[k] = json.loads(v)
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ConfigError(name, f"{path}: no header line")
    return params, header, np.array(rows).reshape(-1, len(header))


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- computations -----------------------------------------------------------------------------

def _states(cfg: RunConfig):
    tail = cfg.tol("state_tail")
    out = []
    for name in ("rho", "sigma"):
        spec = StateSpec.parse(getattr(cfg, name), name)
        d = cfg.cutoff or spec.natural_cutoff(tail)
        out.append(spec.build(d, tail, name))
    return out


def _grow(build, start, parameter, fixed=None):
    """Call ``build(c)`` with growing cutoffs until it stops truncating."""
    if fixed is not None:
        try:
            return build(fixed)
        except TruncationError as exc:
            raise TruncationError(str(exc), parameter=parameter,
                                  suggested_cutoff=exc.suggested_cutoff) from None
    c = start
    while True:
        try:
            return build(c)
        except TruncationError as exc:
            if c >= MAX_AUTO_CUTOFF:
                raise TruncationError(f"{exc} (automatic search stopped at {c})",
                                      parameter=parameter) from None
            c = min(MAX_AUTO_CUTOFF, int(c * 1.5) + 1)


def _generator(cfg: RunConfig, rho, sigma) -> GeneratingOperator:
    d = max(rho.shape[0], sigma.shape[0])
    if cfg.generator == "fixed":
        S = np.zeros((d, d), dtype=complex)
        S[: sigma.shape[0], : sigma.shape[0]] = sigma
        return GeneratingOperator(S, cfg.theta)
    trace_tol = cfg.tol("trace")
    return _grow(lambda c: generating_operator(sigma, cfg.theta, cutoff=c, trace_tol=trace_tol),
                 max(d, 20), "s_cutoff", cfg.s_cutoff)


def _density_report(dens):
    return {"integral": dens.integral(),
            "min": float(dens.values.min()), "max": float(dens.values.max())}


def _grid_columns(grid: Grid2D, values):
    Q, P = grid.mesh()
    return [Q.ravel(), P.ravel(), np.asarray(values).ravel()]


def cmd_limit_density(cfg: RunConfig):
    rho, sigma = _states(cfg)
    grid = parse_grid(cfg.grid)
    G = _generator(cfg, rho, sigma)
    dens = phase_space_density(rho, G, grid)
    rep = _density_report(dens)
    rep["generator_cutoff"] = G.cutoff
    rep["generator_trace"] = float(np.trace(G.S).real)
    return rep, (["q", "p", "density"], _grid_columns(grid, dens.values)), None


def _histogram(cfg: RunConfig, rho, sigma):
    try:
        net = NetworkConfig(cfg.theta, cfg.z, lo_cutoff=cfg.lo_cutoff,
                            efficiencies=EfficiencyQuad(*cfg.efficiencies))
    except TruncationError:
        raise
    except ValueError as exc:
        param = "z" if "nonzero" in str(exc) else "efficiencies"
        raise ConfigError(param, str(exc)) from None
    return net, joint_statistics(rho, sigma, net, mass_tol=cfg.tol("mass"))


def _hist_columns(hist):
    K1, K2 = np.meshgrid(hist.k1, hist.k2, indexing="ij")
    return [K1.ravel(), K2.ravel(), hist.probabilities.ravel()]


def _hist_report(net, hist):
    x, y = hist.values()
    px, py = hist.marginal(0), hist.marginal(1)
    return {"total_mass": hist.total, "spacing": list(hist.spacing), "lo_cutoff": net.lo_cutoff,
            "mean": [float(np.dot(x, px)), float(np.dot(y, py))]}


def cmd_simulate(cfg: RunConfig):
    rho, sigma = _states(cfg)
    net, hist = _histogram(cfg, rho, sigma)
    return _hist_report(net, hist), (["k1", "k2", "probability"], _hist_columns(hist)), None


def _limit_for(cfg, rho, sigma, grid):
    eps = EfficiencyQuad(*cfg.efficiencies)
    if eps.ideal:
        return limit_rhs_density(rho, sigma, cfg.theta, grid, warn=False)
    G = _generator(cfg, rho, sigma)
    Gs = _grow(lambda c: smeared_generator(_pad(G, c), eps, trace_tol=cfg.tol("trace")),
               G.cutoff, "s_cutoff")
    return phase_space_density(rho, Gs, grid, check=False)


def _pad(G: GeneratingOperator, c):
    if c <= G.cutoff:
        return G
    S = np.zeros((c, c), dtype=complex)
    S[: G.cutoff, : G.cutoff] = G.S
    return GeneratingOperator(S, G.theta)


def cmd_compare(cfg: RunConfig):
    rho, sigma = _states(cfg)
    net, hist = _histogram(cfg, rho, sigma)
    g = _limit_for(cfg, rho, sigma, lattice_grid(hist))
    tv = compare_to_limit(hist, g)
    rep = _hist_report(net, hist)
    rep["tv_distance"] = tv
    ok = tv < cfg.tol("tv")
    rep["verdict"] = "pass" if ok else "fail"
    hx, hy = hist.spacing
    cols = _hist_columns(hist) + [np.asarray(g.values).ravel() * hx * hy]
    failure = None if ok else ToleranceFailure("tv", f"tv_distance {tv:.4g} >= {cfg.tol('tv'):g}")
    return rep, (["k1", "k2", "probability", "limit_probability"], cols), failure


def cmd_margins(cfg: RunConfig):
    rho, sigma = _states(cfg)
    grid = parse_grid(cfg.grid)
    G = _generator(cfg, rho, sigma)
    dens = phase_space_density(rho, G, grid)
    rep = {}
    cols = [grid.x.points]
    header = ["x"]
    worst = 0.0
    ok_axes = grid.x == grid.y
    for label, marginal, axis, angle, k in (("q", dens.marginal(1), grid.x, 0.0, 0),
                                            ("p", dens.marginal(0), grid.y, cfg.theta, 1)):
        kernel = margin_measures(G, axis)[k]
        conv = restrict(convolve_density(kernel, quadrature_density(rho, angle, axis, warn=False)), axis)
        l1 = float(np.sum(np.abs(marginal.values - conv.values)) * axis.spacing)
        rep[f"l1_{label}"] = l1
        worst = max(worst, l1)
        if ok_axes:
            header += [f"marginal_{label}", f"smeared_quadrature_{label}"]
            cols += [marginal.values, conv.values]
    ok = worst <= cfg.tol("margin")
    rep["verdict"] = "pass" if ok else "fail"
    failure = None if ok else ToleranceFailure("margin", f"L1 error {worst:.3g} > {cfg.tol('margin'):g}")
    table = (header, cols) if ok_axes else None
    return rep, table, failure


def cmd_tomography(cfg: RunConfig):
    tail = cfg.tol("state_tail")
    sigma_spec = StateSpec.parse(cfg.sigma, "sigma")
    d = cfg.cutoff or 6
    sigma = sigma_spec.build(cfg.cutoff or sigma_spec.natural_cutoff(tail), tail, "sigma")
    truth = None
    if cfg.samples:
        _, header, data = read_csv(cfg.samples)
        if header[:3] != ["q", "p", "density"]:
            raise ConfigError("samples", f"expected columns q,p,density, got {','.join(header)}")
        points, values = data[:, :2], data[:, 2]
    else:
        grid = parse_grid(cfg.grid)
        Q, P = grid.mesh()
        points = np.column_stack([Q.ravel(), P.ravel()])
        values = None
    if not cfg.samples or cfg.rho != "vacuum":
        truth = StateSpec.parse(cfg.rho, "rho").build(d, tail, "rho")
    G = _generator(cfg, np.zeros((d, d)), sigma)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        F = build_forward_map(G, points, d)
        if values is None:
            values = F.apply(truth)
        rec = reconstruct(values, F, ridge=cfg.ridge)
    rep = {"cutoff": d, "samples": int(points.shape[0]), "rank": rec.rank,
           "parameters": d * d, "residual": rec.residual,
           "warnings": [str(w.message) for w in caught]}
    if truth is not None:
        rep["fidelity"] = min(1.0, fidelity(truth, rec.rho))
        rep["trace_distance"] = trace_distance(truth, rec.rho)
    rep["verdict"] = "informationally complete on grid" if rec.rank == d * d else "rank deficient"
    failure = None
    if not cfg.samples and rec.rank == d * d and rec.residual > cfg.tol("residual"):
        failure = ToleranceFailure("residual", f"noiseless residual {rec.residual:.3g}")
    m, n = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    cols = [m.ravel(), n.ravel(), rec.rho.real.ravel(), rec.rho.imag.ravel()]
    return rep, (["m", "n", "re", "im"], cols), failure


def cmd_support_check(cfg: RunConfig):
    rho, sigma = _states(cfg)
    grid = parse_grid(cfg.grid)
    G = _generator(cfg, rho, sigma)
    sr = weyl_transform_support(G.S, grid, tol=cfg.tol("support"))
    rep = {"verdict": sr.verdict, "flagged_cells": len(sr.flagged),
           "flagged": [list(c) for c in sr.flagged], "generator_cutoff": G.cutoff}
    cols = _grid_columns(grid, sr.values.real) + [sr.values.imag.ravel()]
    return rep, (["q", "p", "re", "im"], cols), None


def cmd_smear(cfg: RunConfig):
    rho, sigma = _states(cfg)
    grid = parse_grid(cfg.grid)
    G = _generator(cfg, rho, sigma)
    eps = EfficiencyQuad(*cfg.efficiencies)
    Gs = _grow(lambda c: smeared_generator(_pad(G, c), eps, trace_tol=cfg.tol("trace")),
               G.cutoff, "s_cutoff", cfg.s_cutoff)
    dens = phase_space_density(rho, Gs, grid)
    rep = _density_report(dens)
    rep["generator_cutoff"] = Gs.cutoff
    return rep, (["q", "p", "density"], _grid_columns(grid, dens.values)), None


def cmd_verify_tilt(cfg: RunConfig):
    if not cfg.reference or not cfg.tilted:
        raise ConfigError("reference" if not cfg.reference else "tilted", "CSV path required")
    pr, hr, ref = read_csv(cfg.reference, "reference")
    pt, ht, til = read_csv(cfg.tilted, "tilted")
    for name, h in (("reference", hr), ("tilted", ht)):
        if h != ["q", "p", "density"]:
            raise ConfigError(name, "expected a limit-density CSV (q,p,density)")
    for key in ("rho", "sigma", "generator", "cutoff", "s_cutoff"):
        if pr.get(key) != pt.get(key):
            raise ConfigError(key, f"CSVs differ: {pr.get(key)!r} vs {pt.get(key)!r}")
    if pt.get("generator") != "fixed":
        raise ConfigError("generator", "the tilt relation needs one generating operator for both "
                                       "angles; produce both CSVs with --generator fixed")
    if not math.isclose(math.sin(pr["theta"]), 1.0, abs_tol=1e-6):
        raise ConfigError("reference", f"reference theta {pr['theta']!r} is not pi/2")
    half_pi = pr["theta"]
    theta = pt["theta"]
    sub = RunConfig("limit-density", theta=theta, rho=pt["rho"], sigma=pt["sigma"],
                    cutoff=pt.get("cutoff"), generator="fixed",
                    tolerances=pt.get("tolerances", {}))
    rho, sigma = _states(sub)
    S = _generator(sub, rho, sigma).S
    G_ref = GeneratingOperator(S, half_pi)
    # tilted values against the reference density at the preimages
    q, p = til[:, 0], til[:, 1]
    pq, pp = tilt_map(theta, q, p, inverse=True)
    expect = density_at(rho, G_ref, pq, pp) / abs(math.sin(theta))
    err_tilted = float(np.abs(til[:, 2] - expect).max())
    # the reference CSV is that same density on its own nodes
    err_ref = float(np.abs(ref[:, 2] - density_at(rho, G_ref, ref[:, 0], ref[:, 1])).max())
    # direct cross-check: bilinear interpolation of the reference CSV
    rx, ry = np.unique(ref[:, 0]), np.unique(ref[:, 1])
    table = ref[:, 2].reshape(rx.size, ry.size)
    inside = (pq >= rx[0]) & (pq <= rx[-1]) & (pp >= ry[0]) & (pp <= ry[-1])
    interp = _bilinear(rx, ry, table, pq[inside], pp[inside]) / abs(math.sin(theta))
    err_interp = float(np.abs(interp - til[inside, 2]).max()) if inside.any() else None
    tol = cfg.tol("tilt")
    ok = max(err_tilted, err_ref) <= tol
    rep = {"theta": theta, "reference_theta": half_pi, "max_error_tilted": err_tilted,
           "max_error_reference": err_ref, "interpolated_points": int(inside.sum()),
           "max_error_interpolated": err_interp, "verdict": "pass" if ok else "fail"}
    failure = None if ok else ToleranceFailure("tilt", f"tilt relation error {max(err_tilted, err_ref):.3g} > {tol:g}")
    return rep, None, failure


def _bilinear(xs, ys, table, x, y):
    i = np.clip(np.searchsorted(xs, x) - 1, 0, xs.size - 2)
    j = np.clip(np.searchsorted(ys, y) - 1, 0, ys.size - 2)
    tx = (x - xs[i]) / (xs[i + 1] - xs[i])
    ty = (y - ys[j]) / (ys[j + 1] - ys[j])
    return ((1 - tx) * (1 - ty) * table[i, j] + tx * (1 - ty) * table[i + 1, j]
            + (1 - tx) * ty * table[i, j + 1] + tx * ty * table[i + 1, j + 1])


HANDLERS = {
    "limit-density": cmd_limit_density,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "margins": cmd_margins,
    "tomography": cmd_tomography,
    "support-check": cmd_support_check,
    "smear": cmd_smear,
    "verify-tilt": cmd_verify_tilt,
}


def execute(cfg: RunConfig):
    """Run a command; returns ``(report, failure)`` after writing artifacts."""
    params = cfg.parameters()
    tolerances = {k: cfg.tol(k) for k in DEFAULT_TOLERANCES}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result, table, failure = HANDLERS[cfg.command](cfg)
    report = {"command": cfg.command, "version": __version__, "parameters": params,
              "tolerances": tolerances, "result": result}
    notes = sorted({str(w.message) for w in caught})
    if notes:
        report["warnings"] = notes
    if table is not None and cfg.out:
        header, cols = table
        _write(cfg.out, render_csv(header, cols, params, cfg.command))
    return report, failure


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_args(argv)
        report, failure = execute(cfg)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except InvalidStateError as exc:
        print(f"error: state: {exc}", file=stderr)
        return 2
    except TruncationError as exc:
        hint = f" (try {exc.parameter} >= {exc.suggested_cutoff})" if exc.suggested_cutoff else ""
        print(f"error: {exc.parameter}: {exc}{hint}", file=stderr)
        return 3
    text = json.dumps(report, indent=2, default=_json_default) + "\n"
    if cfg.report:
        _write(cfg.report, text)
    else:
        stdout.write(text)
    if failure is not None:
        print(f"error: {failure}", file=stderr)
        return 3
    return 0


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def main():
    sys.exit(run())
