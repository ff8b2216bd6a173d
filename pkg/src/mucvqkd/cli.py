"""Command-line driver: single points, sweeps, amplitude optimisation and self-checks.

Configuration files are INI-style with optional sections::

    [protocol]
    n_states = 4
    delta_r = 0
    alpha = 0.87          ; omit to optimise

    [network]
    n_bobs = 2
    scenario = c          ; a, b, c or d
    m_trusted = 2         ; needed for b (and optional for d)

    [channel]
    distance_km = 20      ; or eta = 0.398
    xi = 0
    loss_db_per_km = 0.2

    [engine]
    kind = lossonly       ; or sdp
    n_c = 7
    beta_rec = 0.95

    [sweep]
    axis = distance_km
    values = 0, 5, 10, 15

Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

from .errors import ConfigError, QKDError
from .lossonly import TrustScenario, dw_rate, optimal_rate
from .protocol import ChannelSpec, ProtocolSpec

log = logging.getLogger("mucvqkd")

CSV_SCHEMA = 1
EXIT_OK, EXIT_ROW_FAILURE, EXIT_CONFIG = 0, 1, 2
SWEEP_AXES = ("distance_km", "eta", "n_bobs", "m_trusted", "xi", "alpha")


def eta_from_distance(distance_km: float, loss_db_per_km: float = 0.2) -> float:
    """Fiber transmittance 10^(-loss * L / 10)."""
    if distance_km < 0:
        raise ValueError("distance must be nonnegative")
    return 10 ** (-loss_db_per_km * distance_km / 10)


@dataclass(frozen=True)
class RunConfig:
    """One run: a base point plus an optional sweep over one axis."""

    engine: str = "lossonly"
    scenario: str = "a"
    n_bobs: int = 1
    m_trusted: Optional[int] = None
    distance_km: Optional[float] = 20.0
    eta: Optional[float] = None
    loss_db_per_km: float = 0.2
    xi: float = 0.0
    eta_d: float = 1.0
    nu_el: float = 0.0
    n_states: int = 4
    delta_r: float = 0.0
    alpha: Optional[float] = None
    alpha_lo: float = 0.3
    alpha_hi: Optional[float] = None
    alpha_step: float = 0.01
    alpha_span: int = 3
    beta_rec: float = 0.95
    n_c: Optional[int] = None
    n_f: Optional[int] = None
    sdp_tol: float = 1e-4
    max_trusted: int = 2
    sweep_axis: Optional[str] = None
    sweep_values: tuple = ()
    workers: int = 1

    def __post_init__(self):
        if self.engine not in ("lossonly", "sdp"):
            raise ConfigError(f"engine must be 'lossonly' or 'sdp', got {self.engine!r}")
        if self.scenario not in ("a", "b", "c", "d"):
            raise ConfigError(f"scenario must be one of a-d, got {self.scenario!r}")
        if self.n_bobs < 1:
            raise ConfigError("n_bobs must be >= 1")
        if self.m_trusted is not None and not 1 <= self.m_trusted <= self.n_bobs:
            raise ConfigError("need 1 <= m_trusted <= n_bobs")
        if self.scenario == "b" and self.m_trusted is None:
            raise ConfigError("scenario b needs m_trusted")
        if (self.distance_km is None) == (self.eta is None):
            raise ConfigError("give exactly one of distance_km and eta")
        if self.distance_km is not None and self.distance_km < 0:
            raise ConfigError("distance_km must be >= 0")
        if self.eta is not None and not 0 < self.eta <= 1:
            raise ConfigError("eta must lie in (0, 1]")
        if not 0 < self.beta_rec <= 1:
            raise ConfigError("beta_rec must lie in (0, 1]")
        if self.engine == "lossonly" and (self.xi > 0 or self.nu_el > 0):
            raise ConfigError("the loss-only engine needs xi = 0 and nu_el = 0; use engine = sdp")
        if self.sweep_axis is not None and self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
        if self.sweep_axis is not None and not self.sweep_values:
            raise ConfigError("sweep needs at least one value")

    # -- derived -------------------------------------------------------------

    @property
    def resolved_eta(self) -> float:
        if self.eta is not None:
            return self.eta
        return eta_from_distance(self.distance_km, self.loss_db_per_km)

    @property
    def trust(self) -> TrustScenario:
        return TrustScenario.from_label(self.scenario, self.n_bobs, self.m_trusted)

    @property
    def resolved_n_c(self) -> int:
        if self.n_c is not None:
            return self.n_c
        return 7 if self.trust.m_trusted == 1 else 3

    def points(self) -> list["RunConfig"]:
        """Single-point configs in sweep order."""
        if self.sweep_axis is None:
            return [replace(self, sweep_axis=None, sweep_values=())]
        out = []
        for value in self.sweep_values:
            if self.sweep_axis in ("n_bobs", "m_trusted"):
                value = int(round(value))
            changes = {"sweep_axis": None, "sweep_values": (), self.sweep_axis: value}
            if self.sweep_axis == "distance_km":
                changes["eta"] = None
            elif self.sweep_axis == "eta":
                changes["distance_km"] = None
            out.append(replace(self, **changes))
        return out

    # -- loading -------------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[key] = None if raw is None else _coerce(key, raw)
        if kwargs.get("eta") is not None and "distance_km" not in kwargs:
            kwargs["distance_km"] = None
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


_SECTION_KEYS = {
    ("engine", "kind"): "engine",
    ("sweep", "axis"): "sweep_axis",
    ("sweep", "values"): "sweep_values",
}
_INT_KEYS = {"n_bobs", "m_trusted", "n_states", "alpha_span", "n_c", "n_f", "max_trusted", "workers"}
_STR_KEYS = {"engine", "scenario", "sweep_axis"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if key == "sweep_values" else raw
    text = raw.strip()
    try:
        if key in _STR_KEYS:
            return text.lower()
        if key == "sweep_values":
            return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
        if text.lower() in ("", "none"):
            return None
        return int(text) if key in _INT_KEYS else float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from exc


def load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[_SECTION_KEYS.get((section, key), key)] = value
    return out


# ---------------------------------------------------------------------------
# results

CSV_COLUMNS = (
    "schema",
    "engine",
    "scenario",
    "n_bobs",
    "m_trusted",
    "distance_km",
    "eta",
    "xi",
    "eta_d",
    "nu_el",
    "n_states",
    "delta_r",
    "beta_rec",
    "n_c",
    "alpha",
    "rate",
    "rate_clamped",
    "holevo",
    "mi_ab",
    "mi_bb",
    "f_step1",
    "f_step2",
    "gap",
    "weight",
    "delta_w",
    "delta_ec",
    "iterations",
    "status",
    "message",
)


@dataclass
class ResultRow:
    """Inputs and outputs of one evaluated point; NaN marks fields an engine does not produce."""

    engine: str
    scenario: str
    n_bobs: int
    m_trusted: int
    distance_km: float
    eta: float
    xi: float
    eta_d: float
    nu_el: float
    n_states: int
    delta_r: float
    beta_rec: float
    n_c: float = math.nan
    alpha: float = math.nan
    rate: float = math.nan
    holevo: float = math.nan
    mi_ab: float = math.nan
    mi_bb: float = math.nan
    f_step1: float = math.nan
    f_step2: float = math.nan
    gap: float = math.nan
    weight: float = math.nan
    delta_w: float = math.nan
    delta_ec: float = math.nan
    iterations: float = math.nan
    status: str = "ok"
    message: str = ""
    wall_time: float = field(default=math.nan, compare=False)

    @property
    def rate_clamped(self) -> float:
        return max(self.rate, 0.0) if math.isfinite(self.rate) else math.nan

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def as_record(self, timing: bool = False) -> dict:
        rec = {"schema": CSV_SCHEMA, "rate_clamped": self.rate_clamped}
        rec.update({k: getattr(self, k) for k in CSV_COLUMNS if k not in rec})
        if timing:
            rec["wall_time"] = self.wall_time
        return rec


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[ResultRow], stream, timing: bool = False) -> None:
    columns = list(CSV_COLUMNS) + (["wall_time"] if timing else [])
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        rec = row.as_record(timing)
        writer.writerow([_fmt(rec[c]) for c in columns])


# ---------------------------------------------------------------------------
# evaluation


def _echo(cfg: RunConfig) -> ResultRow:
    distance = (
        cfg.distance_km if cfg.distance_km is not None else -10 * math.log10(cfg.resolved_eta) / cfg.loss_db_per_km
    )
    return ResultRow(
        engine=cfg.engine,
        scenario=cfg.scenario,
        n_bobs=cfg.n_bobs,
        m_trusted=cfg.trust.m_trusted,
        distance_km=float(distance),
        eta=cfg.resolved_eta,
        xi=cfg.xi,
        eta_d=cfg.eta_d,
        nu_el=cfg.nu_el,
        n_states=cfg.n_states,
        delta_r=cfg.delta_r,
        beta_rec=cfg.beta_rec,
    )


def _lossonly_point(cfg: RunConfig, row: ResultRow) -> None:
    eta = cfg.resolved_eta * cfg.eta_d
    if cfg.alpha is None:
        res = optimal_rate(
            cfg.trust, eta, cfg.n_bobs, cfg.beta_rec, cfg.n_states, cfg.delta_r, cfg.alpha_lo, cfg.alpha_hi
        )
    else:
        spec = ProtocolSpec.psk(cfg.alpha, cfg.n_states, cfg.delta_r)
        res = dw_rate(cfg.trust, spec, eta, cfg.n_bobs, cfg.beta_rec)
    row.alpha, row.rate = res.alpha_opt, float(res.rate)
    row.holevo, row.mi_ab, row.mi_bb = float(res.holevo), float(res.mi_ab), float(res.mi_bb_max)


def _sdp_report(cfg: RunConfig, alpha: float):
    from .sdpengine import CutoffSpec, NetworkSpec, keyrate_numeric

    trust = cfg.trust
    spec = ProtocolSpec.psk(alpha, cfg.n_states, cfg.delta_r)
    channel = ChannelSpec(cfg.resolved_eta, cfg.xi, cfg.eta_d, cfg.nu_el)
    return keyrate_numeric(
        spec,
        channel,
        NetworkSpec(cfg.n_bobs, trust.m_trusted),
        CutoffSpec(cfg.resolved_n_c, cfg.n_f),
        cfg.beta_rec,
        fully_private=trust.kind == TrustScenario.FULLY_PRIVATE,
        tol=cfg.sdp_tol,
        max_trusted=cfg.max_trusted,
    )


def sdp_alpha_grid(cfg: RunConfig) -> list[float]:
    """Amplitudes tried by the numerical engine: a seed value +- alpha_span steps of alpha_step.

    The seed is the loss-only optimum at the same transmittance.
    """
    if cfg.alpha is not None:
        return [cfg.alpha]
    eta = cfg.resolved_eta * cfg.eta_d
    seed = optimal_rate(cfg.trust, eta, cfg.n_bobs, cfg.beta_rec, cfg.n_states, cfg.delta_r, cfg.alpha_lo, cfg.alpha_hi)
    centre = round(seed.alpha_opt / cfg.alpha_step) * cfg.alpha_step
    grid = [round(centre + k * cfg.alpha_step, 10) for k in range(-cfg.alpha_span, cfg.alpha_span + 1)]
    return [a for a in grid if a > 0]


def _sdp_point(cfg: RunConfig, row: ResultRow) -> None:
    best = None
    for alpha in sdp_alpha_grid(cfg):
        rep = _sdp_report(cfg, alpha)
        if best is None or rep.rate > best[1].rate:
            best = (alpha, rep)
    alpha, rep = best
    row.alpha, row.rate = alpha, rep.rate
    row.n_c = cfg.resolved_n_c
    row.f_step1, row.f_step2, row.gap = rep.f_step1, rep.f_step2, rep.gap
    row.weight, row.delta_w, row.delta_ec = rep.weight, rep.delta_w, rep.delta_ec
    row.iterations = rep.iterations
    if rep.h_cond_bob is not None:
        row.message = f"h_cond_bob={rep.h_cond_bob!r}"
    if rep.stalled:
        row.message = (row.message + " stalled").strip()


def evaluate_point(cfg: RunConfig) -> ResultRow:
    """Evaluate one point; failures are recorded in the row rather than raised."""
    start = time.perf_counter()
    row = _echo(cfg)
    try:
        if cfg.engine == "lossonly":
            _lossonly_point(cfg, row)
        else:
            _sdp_point(cfg, row)
    except (QKDError, ValueError, ArithmeticError) as exc:
        row.status, row.message = "error", f"{type(exc).__name__}: {exc}"
        log.warning("point failed: %s", row.message)
    row.wall_time = time.perf_counter() - start
    return row


def run(config: RunConfig) -> list[ResultRow]:
    """Evaluate every sweep point, in sweep order."""
    points = config.points()
    if config.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(evaluate_point, points))
    return [evaluate_point(p) for p in points]


# ---------------------------------------------------------------------------
# command line


def _add_point_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--engine", choices=("lossonly", "sdp"))
    g.add_argument("--scenario", choices=("a", "b", "c", "d"))
    g.add_argument("--n-bobs", type=int, dest="n_bobs")
    g.add_argument("--m-trusted", type=int, dest="m_trusted")
    g.add_argument("--distance-km", type=float, dest="distance_km")
    g.add_argument("--eta", type=float)
    g.add_argument("--loss-db-per-km", type=float, dest="loss_db_per_km")
    g.add_argument("--xi", type=float)
    g.add_argument("--eta-d", type=float, dest="eta_d")
    g.add_argument("--nu-el", type=float, dest="nu_el")
    g.add_argument("--n-states", type=int, dest="n_states")
    g.add_argument("--delta-r", type=float, dest="delta_r")
    g.add_argument("--alpha", type=float)
    g.add_argument("--alpha-lo", type=float, dest="alpha_lo")
    g.add_argument("--alpha-hi", type=float, dest="alpha_hi")
    g.add_argument("--beta-rec", type=float, dest="beta_rec")
    g.add_argument("--n-c", type=int, dest="n_c")
    g.add_argument("--n-f", type=int, dest="n_f")
    g.add_argument("--max-trusted", type=int, dest="max_trusted")
    g.add_argument("--workers", type=int)
    p.add_argument("--config", help="INI-style configuration file")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--timing", action="store_true", help="add a wall_time column (makes output non-reproducible)")
    p.add_argument("--seed", type=int, default=0, help="seed for Monte-Carlo checks")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mucvqkd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    p_rate = sub.add_parser("rate", help="key rate at a single point")
    _add_point_flags(p_rate)
    p_sweep = sub.add_parser("sweep", help="key rate over a grid of one parameter")
    _add_point_flags(p_sweep)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, dest="sweep_axis")
    p_sweep.add_argument("--values", dest="sweep_values", help="comma-separated values, or start:stop:step")
    p_opt = sub.add_parser("optimize-alpha", help="best PSK amplitude at a single point")
    _add_point_flags(p_opt)
    p_ver = sub.add_parser("verify", help="run the built-in consistency checks")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--skip-sdp", action="store_true", help="skip the (slower) numerical-engine checks")
    p_ver.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_values(text: str) -> tuple:
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(n))
    return _coerce("sweep_values", text)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    cli = {k: v for k, v in vars(args).items() if k in names and v is not None}
    if isinstance(cli.get("sweep_values"), str):
        cli["sweep_values"] = parse_values(cli["sweep_values"])
    if "eta" in cli:
        values["distance_km"] = None
    if "distance_km" in cli:
        values["eta"] = None
    values.update(cli)
    return RunConfig.from_mapping(values)


def _emit(rows: Sequence[ResultRow], args) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh, args.timing)
    else:
        buf = io.StringIO()
        write_csv(rows, buf, args.timing)
        sys.stdout.write(buf.getvalue())


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb == "verify":
        from .verification import run_checks

        return EXIT_OK if run_checks(seed=args.seed, include_sdp=not args.skip_sdp) else EXIT_ROW_FAILURE
    try:
        cfg = config_from_args(args)
        if args.verb != "sweep" and cfg.sweep_axis is not None:
            cfg = replace(cfg, sweep_axis=None, sweep_values=())
        if args.verb == "optimize-alpha":
            cfg = replace(cfg, alpha=None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "sweep" and cfg.sweep_axis is None:
        print("config error: sweep needs an axis and values", file=sys.stderr)
        return EXIT_CONFIG
    rows = run(cfg)
    if args.verb == "optimize-alpha":
        for row in rows:
            if row.failed:
                print(f"failed: {row.message}", file=sys.stderr)
            else:
                print(f"alpha_opt={row.alpha:.6f} rate={row.rate:.10g}")
    else:
        _emit(rows, args)
    return EXIT_ROW_FAILURE if any(r.failed for r in rows) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
