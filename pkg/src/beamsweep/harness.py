"""Monte-Carlo experiment runner for NSE-versus-truncation curves."""

from __future__ import annotations

import csv
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import error_report, predict_mse, predict_truncation_se
from .array_model import ArrayGeometry, Scene, SincPattern, Source, half_power_beamwidth, true_scm
from .snapshots import RngStream, generate_snapshots
from .sweep import Reconstructor, make_plan, statistical_powers, truncated_sweep

log = logging.getLogger(__name__)

MODES = ("measured", "statistical")
THETA2_PRESET = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0)
ALPHA_PRESET = (1.0, 2.0, 3.0)


class ConfigError(ValueError):
    pass


class UnknownKey(ConfigError):
    pass


class OutOfRange(ConfigError):
    pass


@dataclass(frozen=True)
class Scenario:
    label: str
    theta2_deg: float
    alpha: float


@dataclass(frozen=True)
class ExperimentSpec:
    """Two unit-power sources, one fixed at ``theta1_deg``, with SNR set by N0.

    ``truncations`` of None means every T in [0, Q-1].
    """

    num_antennas: int = 16
    spacing_ratio: float = 0.5
    alphas: tuple = (1.0,)
    theta1_deg: float = 0.0
    theta2_degs: tuple = THETA2_PRESET
    snr_db: float = 0.0
    num_snapshots: int = 5000
    truncations: tuple | None = None
    num_runs: int = 1000
    base_seed: int = 20240601
    out: str | None = None
    mode: str = "measured"
    workers: int = 1

    def __post_init__(self):
        if self.num_antennas < 2:
            raise OutOfRange(f"antennas: need >= 2, got {self.num_antennas}")
        if self.spacing_ratio <= 0:
            raise OutOfRange(f"spacing: must be positive, got {self.spacing_ratio}")
        if self.num_runs < 1:
            raise OutOfRange(f"runs: need >= 1, got {self.num_runs}")
        if self.num_snapshots < 1:
            raise OutOfRange(f"snapshots: need >= 1, got {self.num_snapshots}")
        if self.workers < 1:
            raise OutOfRange(f"workers: need >= 1, got {self.workers}")
        if self.mode not in MODES:
            raise OutOfRange(f"mode: expected one of {MODES}, got {self.mode!r}")
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise OutOfRange(f"alpha: values must be positive, got {self.alphas}")
        for th in (self.theta1_deg, *self.theta2_degs):
            if abs(th) > 90:
                raise OutOfRange(f"theta2_deg: angles must lie in [-90, 90], got {th}")
        if self.truncations is not None:
            bad = [t for t in self.truncations if not 0 <= t <= self.Q - 1]
            if bad:
                raise OutOfRange(f"truncate: T must lie in [0, {self.Q - 1}], got {bad}")
        if not math.isfinite(self.snr_db):
            raise OutOfRange(f"snr_db: must be finite, got {self.snr_db}")

    @property
    def Q(self) -> int:
        return 2 * self.num_antennas - 1

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_antennas, self.spacing_ratio)

    @property
    def noise_power(self) -> float:
        # unit source power, so SNR = 1 / N0
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def t_values(self) -> tuple:
        return tuple(range(self.Q)) if self.truncations is None else tuple(self.truncations)

    def scene(self, scenario: Scenario) -> Scene:
        return Scene(
            (
                Source(math.radians(self.theta1_deg), 1.0),
                Source(math.radians(scenario.theta2_deg), 1.0),
            ),
            self.noise_power,
        )

    def metadata(self) -> dict:
        return {
            "antennas": self.num_antennas,
            "spacing": self.spacing_ratio,
            "snr_db": self.snr_db,
            "noise_power": self.noise_power,
            "source_power": 1.0,
            "theta1_deg": self.theta1_deg,
            "snapshots": self.num_snapshots,
            "runs": self.num_runs,
            "seed": self.base_seed,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    T: int
    scenario: str
    nse: float
    seed: int


@dataclass(frozen=True)
class CurveRow:
    scenario: str
    T: int
    mean_nse: float
    stderr: float
    runs: int
    pred_truncation_nse: float | None = None
    pred_mse_nse: float | None = None


@dataclass
class CurveTable:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    records: list | None = None

    def curve(self, scenario: str) -> dict:
        """T -> mean NSE for one scenario."""
        return {r.T: r.mean_nse for r in self.rows if r.scenario == scenario}

    def row(self, scenario: str, T: int) -> CurveRow:
        for r in self.rows:
            if r.scenario == scenario and r.T == T:
                return r
        raise KeyError((scenario, T))

    @property
    def scenarios(self) -> list:
        return list(dict.fromkeys(r.scenario for r in self.rows))


def derive_seed(base_seed: int, scenario: str, T: int, run_index: int) -> int:
    """Per-trial seed, a pure function of its coordinates in the experiment grid."""
    key = (zlib.crc32(scenario.encode()), int(T), int(run_index))
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
    return int(seq.generate_state(1, np.uint64)[0])


@lru_cache(maxsize=16)
def _reconstructor(geometry: ArrayGeometry) -> Reconstructor:
    return Reconstructor(geometry)


def run_single_trial(spec: ExperimentSpec, scenario: Scenario, T: int, run_index: int) -> RunRecord:
    geometry = spec.geometry
    pattern = SincPattern(scenario.alpha)
    scene = spec.scene(scenario)
    recon = _reconstructor(geometry)
    seed = derive_seed(spec.base_seed, scenario.label, T, run_index)
    if spec.mode == "statistical":
        sweep = statistical_powers(geometry, pattern, scene, recon.grid, T)
    else:
        block = generate_snapshots(geometry, pattern, scene, spec.num_snapshots, RngStream(seed))
        sweep = truncated_sweep(block, geometry, recon.grid, T, scene.noise_power)
    nse = error_report(recon(sweep), true_scm(geometry, pattern, scene)).nse
    return RunRecord(run_index, int(T), scenario.label, nse, seed)


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def _cell(args) -> list:
    spec, scenario, T = args
    return [run_single_trial(spec, scenario, T, i) for i in range(spec.num_runs)]


def predictions(spec: ExperimentSpec, scenario: Scenario, T: int) -> tuple[float, float]:
    """Closed-form truncation NSE and asymptotic MSE NSE for one curve point."""
    geometry = spec.geometry
    pattern = SincPattern(scenario.alpha)
    scene = spec.scene(scenario)
    grid = _reconstructor(geometry).grid
    ref = float(np.sum(np.abs(true_scm(geometry, pattern, scene)) ** 2))
    plan = make_plan(grid, geometry.num_antennas, T, scene.noise_power)
    trunc = predict_truncation_se(scene, pattern, grid, plan) / ref
    mse = predict_mse(scene, pattern, grid, spec.num_snapshots).total / ref
    return trunc, mse


def run_monte_carlo(spec: ExperimentSpec, scenarios, with_predictions: bool = True, keep_records=False):
    """Average NSE over ``num_runs`` trials for every (scenario, T) cell.

    Cells run in parallel when ``spec.workers > 1``; results are reduced in
    scenario-then-T order so the table does not depend on scheduling.
    """
    cells = [(spec, sc, T) for sc in scenarios for T in spec.t_values]
    if spec.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = []
        for i, cell in enumerate(cells):
            results.append(_cell(cell))
            log.debug("cell %d/%d done (%s, T=%d)", i + 1, len(cells), cell[1].label, cell[2])
    table = CurveTable(metadata=spec.metadata())
    records = []
    for (_, sc, T), recs in zip(cells, results):
        mean, se = _mean_stderr(np.array([r.nse for r in recs]))
        pt, pm = predictions(spec, sc, T) if with_predictions else (None, None)
        table.rows.append(CurveRow(sc.label, T, mean, se, len(recs), pt, pm))
        if keep_records:
            records.extend(recs)
    if keep_records:
        table.records = records
    return table


def theta_scenarios(spec: ExperimentSpec) -> list:
    alpha = spec.alphas[0]
    return [Scenario(f"theta2={_fmt(th)}", th, alpha) for th in spec.theta2_degs]


def alpha_scenarios(spec: ExperimentSpec) -> list:
    theta2 = spec.theta2_degs[0]
    return [Scenario(f"alpha={_fmt(a)}", theta2, a) for a in spec.alphas]


def experiment_fig_theta(spec: ExperimentSpec, **kw) -> CurveTable:
    """NSE vs T, one curve per second-source DOA, pattern fixed at alphas[0]."""
    table = run_monte_carlo(spec, theta_scenarios(spec), **kw)
    table.metadata["alpha"] = spec.alphas[0]
    return table


def experiment_fig_alpha(spec: ExperimentSpec, **kw) -> CurveTable:
    """NSE vs T, one curve per pattern width, second source fixed at theta2_degs[0]."""
    table = run_monte_carlo(spec, alpha_scenarios(spec), **kw)
    table.metadata["theta2_deg"] = spec.theta2_degs[0]
    for a in spec.alphas:
        bw = half_power_beamwidth(SincPattern(a))
        table.metadata[f"beamwidth_deg[alpha={_fmt(a)}]"] = round(bw, 2)
        log.info("alpha=%s half-power beamwidth %.1f deg", _fmt(a), bw)
    return table


def _fmt(x: float) -> str:
    return f"{x:g}"


# -- CSV -------------------------------------------------------------------

BASE_COLUMNS = ["scenario", "T", "mean_nse", "stderr", "runs"]
PRED_COLUMNS = ["pred_truncation_nse", "pred_mse_nse"]


def write_table(table: CurveTable, fh) -> None:
    """Write the table to an open text stream; metadata first as ``# key=value`` lines."""
    with_pred = any(r.pred_truncation_nse is not None for r in table.rows)
    for k, v in table.metadata.items():
        fh.write(f"# {k}={v}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BASE_COLUMNS + (PRED_COLUMNS if with_pred else []))
    for r in table.rows:
        row = [r.scenario, r.T, repr(r.mean_nse), repr(r.stderr), r.runs]
        if with_pred:
            row += [repr(r.pred_truncation_nse), repr(r.pred_mse_nse)]
        w.writerow(row)


def emit_csv(table: CurveTable, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            write_table(table, fh)
    except OSError as exc:
        raise OSError(f"cannot write curve table to {path}: {exc}") from exc


def read_csv(path) -> CurveTable:
    table = CurveTable()
    with open(Path(path), newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                table.metadata[k] = v
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    for rec in reader:
        opt = lambda k: float(rec[k]) if rec.get(k) not in (None, "", "None") else None
        table.rows.append(
            CurveRow(
                rec["scenario"],
                int(rec["T"]),
                float(rec["mean_nse"]),
                float(rec["stderr"]),
                int(rec["runs"]),
                opt("pred_truncation_nse"),
                opt("pred_mse_nse"),
            )
        )
    return table


# -- configuration -----------------------------------------------------------

def _floats(v):
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _ints(v):
    out = []
    for part in str(v).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _truncations(v):
    return None if str(v).strip().lower() == "all" else _ints(v)


# config key -> (spec field, parser)
CONFIG_KEYS = {
    "antennas": ("num_antennas", int),
    "spacing": ("spacing_ratio", float),
    "alpha": ("alphas", _floats),
    "theta1_deg": ("theta1_deg", float),
    "theta2_deg": ("theta2_degs", _floats),
    "snr_db": ("snr_db", float),
    "snapshots": ("num_snapshots", int),
    "truncate": ("truncations", _truncations),
    "runs": ("num_runs", int),
    "seed": ("base_seed", int),
    "out": ("out", str),
    "mode": ("mode", str),
    "workers": ("workers", int),
}

PRESETS = {
    "theta": {"alphas": (1.0,), "theta2_degs": THETA2_PRESET},
    "alpha": {"alphas": ALPHA_PRESET, "theta2_degs": (45.0,)},
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_config(path=None, flags: dict | None = None, preset: str | None = None) -> ExperimentSpec:
    """Build a spec from defaults, an optional preset, a config file, then flags.

    Later sources override earlier ones. Flags set to None are ignored.
    """
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    values.update({k.replace("-", "_"): v for k, v in (flags or {}).items() if v is not None})
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    kwargs = dict(PRESETS[preset]) if preset else {}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise UnknownKey(f"unknown configuration key {key!r}")
        name, conv = CONFIG_KEYS[key]
        try:
            kwargs[name] = conv(raw) if isinstance(raw, str) or conv is str else _coerce(conv, raw)
        except (TypeError, ValueError) as exc:
            raise OutOfRange(f"{key}: cannot parse {raw!r} ({exc})") from exc
    return ExperimentSpec(**kwargs)


def _coerce(conv, raw):
    if isinstance(raw, (list, tuple)):
        return conv(",".join(str(x) for x in raw))
    return conv(raw) if conv not in (_floats, _ints, _truncations) else conv(str(raw))

