"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 inconclusive experiment,
1 internal error. Messages go to stderr; data goes to --out or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .evolve import (
    StateVector,
    certify_times,
    eigen_state,
    eigendecompose,
    evolve_many,
    site_state,
    spectral_measure,
)
from .exponents import (
    FREE_BAND_LOG_OFFSET,
    AlphaFunction,
    alpha_scan,
    beta_from_series,
    d2_from_series,
)
from .observables import (
    TimeAverageSeries,
    expectation_series,
    log_time_grid,
    moment_q,
    parse_observable,
    return_probability_series,
)
from .operators import (
    AndersonSpec,
    build_continuum,
    build_free_laplacian,
    build_jacobi,
    build_vk_operator,
    continuum_grid,
    disorder_from_dict,
    load_operator,
    operator_hash,
    sample_anderson,
    sparse_barrier_potential,
    to_json,
)
from .records import _atomic_write, jsonable, summarize
from .experiments import REGISTRY, run_experiment

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 1, 2, 3
THREADS_ENV = "INTERMITTENCY_LAB_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


# (flag, type, default, help); default None with REQUIRED marks a required option
REQUIRED = object()

_OPERATOR_FLAGS = [
    ("operator", str, REQUIRED, "free | anderson | barriers | path to an operator JSON"),
    ("size", int, None, "half width N (sites -N..N)"),
    ("seed", int, 0, "RNG seed"),
    ("disorder-bound", float, 2.0, "Anderson disorder bound b"),
    ("distribution", str, "uniform", "uniform | bernoulli"),
    ("barrier-height", float, 3.0, "barrier height for sparse barriers"),
    ("barrier-ratio", float, 2.0, "barriers sit at +-round(ratio^m)"),
    ("xi", str, "e0", "e<n> site vector, psi<k> eigenvector, or a coefficient file"),
    ("safety", float, 0.8, "ballistic horizon safety factor"),
    ("cache-dir", str, None, "eigensystem cache directory"),
]

_GRID_FLAGS = [
    ("t-decades", str, "0:2", "log10 time range a:b"),
    ("points-per-decade", int, 32, "grid density"),
]

COMMANDS = {
    "forge": [
        ("kind", str, REQUIRED, "free | anderson | jacobi | continuum"),
        ("size", float, REQUIRED, "half width (sites for lattices, length for continuum)"),
        ("seed", int, 0, "RNG seed"),
        ("disorder-bound", float, 2.0, "Anderson disorder bound b"),
        ("distribution", str, "uniform", "uniform | bernoulli"),
        ("potential", str, None, "file of potential samples (jacobi/continuum)"),
        ("barrier-height", float, None, "sparse barriers instead of a potential file (jacobi)"),
        ("barrier-ratio", float, 2.0, "barriers sit at +-round(ratio^m)"),
        ("spacing", float, 0.05, "continuum grid spacing"),
        ("cap", float, 1.0, "continuum potential cap C"),
        ("vk", int, None, "build V_k from the potential (continuum)"),
        ("out", str, REQUIRED, "output JSON file"),
    ],
    "evolve": _OPERATOR_FLAGS + [
        ("times", str, REQUIRED, "comma-separated times"),
        ("out", str, None, "output CSV (stdout if absent)"),
    ],
    "observe": _OPERATOR_FLAGS + _GRID_FLAGS + [
        ("A", str, "proj:e0", "proj:e<n> | rank:<r> | zero"),
        ("quantity", str, "expectation", "expectation | return | moment"),
        ("q", float, 2.0, "moment order"),
        ("out", str, None, "output CSV (stdout if absent)"),
    ],
    "exponents": _OPERATOR_FLAGS + _GRID_FLAGS + [
        ("series", str, None, "read a CSV series instead of computing one"),
        ("estimator", str, "d2", "d2 | beta | alpha"),
        ("window", float, 1.0, "window width in decades"),
        ("log-offset", str, None, "float, or 'free' for ln 16 + Euler gamma"),
        ("subtract-wiener", bool, False, "subtract the Wiener limit before fitting"),
        ("q", float, 2.0, "moment order for beta"),
        ("alpha", str, "power:1", "power:p | log_power:p | iterated_log"),
        ("out", str, None, "output JSON (stdout if absent)"),
    ],
    "experiment": [
        ("name", str, REQUIRED, "experiment name"),
        ("seed", int, 0, "RNG seed"),
        ("out", str, "runs", "run directory root"),
    ],
    "report": [
        ("run-dir", str, "runs", "directory of run records"),
    ],
}


def _dest(flag: str) -> str:
    return flag.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="intermittency-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name, flags in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file whose keys mirror the flags")
        sp.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
        for flag, typ, default, help_ in flags:
            kw = {"dest": _dest(flag), "default": argparse.SUPPRESS, "help": help_}
            if typ is bool:
                sp.add_argument(f"--{flag}", action="store_true", **kw)
            else:
                sp.add_argument(f"--{flag}", type=typ, **kw)
    return p


def resolve_config(command: str, ns: argparse.Namespace) -> tuple[dict, dict]:
    """Merge file and flags (flags win) over defaults.

    For ``experiment`` the file may also carry experiment parameters; those
    come back separately and are checked against the experiment's defaults.
    """
    flags = COMMANDS[command]
    known = {_dest(f): (t, d) for f, t, d, _ in flags}
    given = {k: v for k, v in vars(ns).items() if k in known}
    extra = {}
    file_cfg = {}
    if getattr(ns, "config", None):
        try:
            file_cfg = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")
    cfg = {}
    for key, value in file_cfg.items():
        k = _dest(key)
        if k == "threads":
            cfg["threads"] = value
        elif k in known:
            cfg[k] = value
        elif command == "experiment":
            extra[key] = value
        else:
            raise ValidationError(f"unknown config key {key!r} for {command}")
    cfg.update(given)
    if getattr(ns, "threads", None) is not None:
        cfg["threads"] = ns.threads
    for k, (typ, default) in known.items():
        if k not in cfg:
            if default is REQUIRED:
                raise ValidationError(f"missing required option --{k.replace('_', '-')}")
            cfg[k] = default
        elif typ is bool:
            if not isinstance(cfg[k], bool):
                raise ValidationError(f"{k} must be true or false")
        elif cfg[k] is not None and typ is not str:
            try:
                cfg[k] = typ(cfg[k])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for {k}: {cfg[k]!r}") from exc
    cfg["threads"] = resolve_threads(cfg.get("threads"))
    return cfg, extra


def resolve_threads(value) -> int:
    if value is None:
        value = os.environ.get(THREADS_ENV) or os.cpu_count() or 1
    try:
        n = int(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"threads must be an integer, got {value!r}") from exc
    if n < 1:
        raise ValidationError("threads must be >= 1")
    return n


# ---------------------------------------------------------------- pipelines


def _disorder(name: str, b: float):
    if name in ("uniform", "bernoulli"):
        return disorder_from_dict({"kind": name, "bound": b})
    raise ValidationError(f"unknown distribution {name!r}")


def _read_numbers(path: str) -> np.ndarray:
    p = Path(path)
    try:
        if p.suffix == ".json":
            return np.asarray(json.loads(p.read_text()), dtype=float)
        return np.loadtxt(p, dtype=float, delimiter=None, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read numbers from {path}: {exc}") from exc


def make_operator(cfg: dict):
    name = cfg["operator"]
    if name in ("free", "anderson", "barriers"):
        if cfg["size"] is None:
            raise ValidationError("--size is required for built-in operators")
        n = int(cfg["size"])
        if name == "free":
            return build_free_laplacian(n)
        if name == "anderson":
            return sample_anderson(AndersonSpec(n, cfg["disorder_bound"], _disorder(cfg["distribution"], cfg["disorder_bound"]), cfg["seed"]))
        h = cfg["barrier_height"]
        return build_jacobi(sparse_barrier_potential(n, h, cfg["barrier_ratio"]), h, "barriers")
    if not Path(name).exists():
        raise ValidationError(f"unknown operator {name!r} (not a built-in, no such file)")
    return load_operator(name)


def make_state(es, spec: str) -> StateVector:
    if spec.startswith("psi") and spec[3:].isdigit():
        k = int(spec[3:])
        if not 0 <= k < es.dim:
            raise ValidationError(f"eigenvector index {k} out of range")
        return eigen_state(es, k)
    if spec.startswith("e") and spec[1:].lstrip("-").isdigit():
        if es.sites is None:
            n = int(spec[1:])
            if not 0 <= n < es.dim:
                raise ValidationError(f"basis index {n} out of range")
            a = np.zeros(es.dim, dtype=complex)
            a[n] = 1.0
            return StateVector(a, None, spec)
        return site_state(es.sites, int(spec[1:]))
    raw = _read_numbers(spec)
    amp = raw[:, 0] + 1j * raw[:, 1] if raw.ndim == 2 else raw.astype(complex)
    if amp.size != es.dim:
        raise ValidationError(f"coefficient file has {amp.size} entries, operator dim {es.dim}")
    nrm = np.linalg.norm(amp)
    if nrm == 0:
        raise ValidationError("coefficient vector is zero")
    return StateVector(amp / nrm, es.sites, Path(spec).stem)


def _time_grid(cfg: dict) -> np.ndarray:
    try:
        a, b = (float(x) for x in cfg["t_decades"].split(":"))
    except ValueError as exc:
        raise ValidationError("--t-decades takes a:b") from exc
    return log_time_grid(10.0**a, 10.0**b, cfg["points_per_decade"])


def _certified(es, xi, times, cfg) -> tuple[np.ndarray, dict]:
    """Apply the horizon rule; notes go to stderr."""
    if es.sites is None:
        return times, {"horizon": "not applicable"}
    kept, info = certify_times(es, xi, times, cfg["safety"])
    if kept.size < times.size:
        print(f"note: {times.size - kept.size} times beyond the faithful horizon "
              f"(ballistic {info['ballistic_horizon']:.6g}) were dropped", file=sys.stderr)
    if kept.size == 0:
        raise ValidationError("no requested time lies inside the horizon")
    return kept, info


def _emit_text(text: str, out) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _series_text(s: TimeAverageSeries) -> str:
    import io

    buf = io.StringIO()
    s.to_csv(buf)
    return buf.getvalue()


def _setup(cfg):
    op = make_operator(cfg)
    es = eigendecompose(op, cache_dir=cfg["cache_dir"])
    xi = make_state(es, cfg["xi"])
    return op, es, xi


def cmd_forge(cfg: dict) -> int:
    kind = cfg["kind"]
    size = cfg["size"]
    if kind in ("free", "anderson", "jacobi") and size != int(size):
        raise ValidationError("lattice size must be an integer")
    if kind == "free":
        op = build_free_laplacian(int(size))
    elif kind == "anderson":
        op = sample_anderson(AndersonSpec(int(size), cfg["disorder_bound"], _disorder(cfg["distribution"], cfg["disorder_bound"]), cfg["seed"]))
    elif kind == "jacobi":
        n = int(size)
        if cfg["barrier_height"] is not None:
            h = cfg["barrier_height"]
            op = build_jacobi(sparse_barrier_potential(n, h, cfg["barrier_ratio"]), h, "barriers")
        elif cfg["potential"]:
            v = _read_numbers(cfg["potential"])
            if v.size != 2 * n + 1:
                raise ValidationError(f"potential needs {2 * n + 1} samples, got {v.size}")
            op = build_jacobi(v)
        else:
            raise ValidationError("jacobi needs --potential or --barrier-height")
    elif kind == "continuum":
        x = continuum_grid(size, cfg["spacing"])
        v = np.zeros_like(x) if not cfg["potential"] else _read_numbers(cfg["potential"])
        if v.size != x.size:
            raise ValidationError(f"potential needs {x.size} samples, got {v.size}")
        if cfg["vk"] is not None:
            op = build_vk_operator(size, cfg["spacing"], cfg["cap"], cfg["vk"], base=v)
        else:
            op = build_continuum(size, cfg["spacing"], v, cfg["cap"])
    else:
        raise ValidationError(f"unknown kind {kind!r}")
    _emit_text(json.dumps(to_json(op), sort_keys=True) + "\n", cfg["out"])
    print(operator_hash(op))
    return EXIT_OK


def cmd_evolve(cfg: dict) -> int:
    try:
        times = np.array([float(x) for x in cfg["times"].split(",")])
    except ValueError as exc:
        raise ValidationError("--times takes comma-separated numbers") from exc
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValidationError("times must be positive and increasing")
    op, es, xi = _setup(cfg)
    times, _ = _certified(es, xi, times, cfg)
    rows = evolve_many(es, xi, times)
    c0 = xi.amplitudes.conj()
    values = np.abs(rows @ c0) ** 2
    s = TimeAverageSeries(times, values, "survival_probability", operator_hash(op), xi.label)
    _emit_text(_series_text(s), cfg["out"])
    return EXIT_OK


def _observe_series(cfg: dict, op, es, xi, times) -> TimeAverageSeries:
    q = cfg["quantity"]
    if q == "expectation":
        a = parse_observable(cfg["A"], es.sites if es.sites is not None else np.arange(es.dim), cfg["seed"])
        s = expectation_series(a, es, xi, times)
    elif q == "return":
        s = return_probability_series(es, xi, times)
    elif q == "moment":
        s = moment_q(es, xi, times, cfg["q"])
    else:
        raise ValidationError(f"unknown quantity {q!r}")
    s.operator_hash = operator_hash(op)
    s.xi_label = xi.label
    return s


def cmd_observe(cfg: dict) -> int:
    grid = _time_grid(cfg)
    op, es, xi = _setup(cfg)
    times, _ = _certified(es, xi, grid, cfg)
    _emit_text(_series_text(_observe_series(cfg, op, es, xi, times)), cfg["out"])
    return EXIT_OK


def cmd_exponents(cfg: dict) -> int:
    est = cfg["estimator"]
    if est not in ("d2", "beta", "alpha"):
        raise ValidationError(f"unknown estimator {est!r}")
    wiener = None
    if cfg["series"]:
        series = TimeAverageSeries.from_csv(cfg["series"])
        if cfg["subtract_wiener"]:
            raise ValidationError("--subtract-wiener needs the operator, not a stored series")
    else:
        grid = _time_grid(cfg)
        op, es, xi = _setup(cfg)
        times, _ = _certified(es, xi, grid, cfg)
        quantity = "moment" if est == "beta" else "return"
        series = _observe_series({**cfg, "quantity": quantity}, op, es, xi, times)
        if cfg["subtract_wiener"]:
            wiener = spectral_measure(es, xi).wiener_limit()
    if est == "alpha":
        sup, t_at, growth = alpha_scan(AlphaFunction.parse(cfg["alpha"]), series)
        doc = {"quantity": "alpha_scan", "alpha": cfg["alpha"], "sup": sup, "argmax_t": t_at, "growth_flag": growth}
    elif est == "d2":
        off = cfg["log_offset"]
        off = FREE_BAND_LOG_OFFSET if off == "free" else (None if off is None else float(off))
        doc = d2_from_series(series, cfg["window"], off, wiener).as_dict()
    else:
        doc = beta_from_series(series, cfg["q"], cfg["window"]).as_dict()
    _emit_text(json.dumps(jsonable(doc), sort_keys=True) + "\n", cfg["out"])
    return EXIT_OK


def cmd_experiment(cfg: dict, params: dict) -> int:
    if cfg["name"].removeprefix("exp_") not in REGISTRY:
        raise ValidationError(f"unknown experiment {cfg['name']!r}; choose from {sorted(REGISTRY)}")
    rec = run_experiment(cfg["name"], params, cfg["seed"], cfg["threads"])
    path = rec.save(cfg["out"])
    print(f"{rec.verdict}\t{path}")
    # a fail verdict is a valid scientific outcome, not a program error
    return EXIT_INCONCLUSIVE if rec.verdict == "inconclusive" else EXIT_OK


def cmd_report(cfg: dict) -> int:
    lines, ok = summarize(cfg["run_dir"])
    for line in lines:
        print(line)
    if not ok:
        print("error: corrupt records present", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise ValidationError("a subcommand is required: " + ", ".join(COMMANDS))
        cfg, extra = resolve_config(ns.command, ns)
        if ns.command == "experiment":
            return cmd_experiment(cfg, extra)
        return {
            "forge": cmd_forge,
            "evolve": cmd_evolve,
            "observe": cmd_observe,
            "exponents": cmd_exponents,
            "report": cmd_report,
        }[ns.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
