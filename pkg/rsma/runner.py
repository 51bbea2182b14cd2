"""Scenario runner: config file in, CSV files and a manifest out.

Outputs are written into a processing directory and moved to the output
directory only when the whole scenario succeeded.
"""
import csv
import json
import math
import os
import shutil
import tempfile
import time

from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import toml
from nxtools import log_traceback, logging
from pydantic import BaseModel, ValidationError, root_validator, validator

from .channel import (
    IcChannel,
    gen_multicell,
    gen_rayleigh,
    geometry_2user,
    theta_for_rho,
)
from .ic2 import (
    DEFAULT_EPS_VW,
    DEFAULT_ORTHOGONAL_BOOST,
    baseline_rates,
    optimize_t,
    orthogonal_note,
    sweep_inr,
)
from .metric import Metric
from .multicell import (
    cooperative_channel,
    design_coordinated,
    optimize_coordinated,
    rate_cooperative,
    rate_coordinated,
    scale_to_cell_budgets,
)
from .optimize import (
    OptimizerConfig,
    RayleighEnsemble,
    ergodic_average,
    mean_stderr,
    optimize,
    rate_region_boundary,
)
from .schemes import (
    DPCRS,
    GRS,
    HRS,
    MULTICAST,
    NOMA,
    OMA,
    ONE_LAYER_RS,
    SDMA,
    PrecoderSet,
    StreamLayout,
    build_layout,
    noma_groups,
    rate_1layer,
    rate_grs,
)
from .uplink import (
    mac_region_2user,
    oma_uplink_rates,
    find_split_for_point,
    rate_uplink,
    siso_channel,
    two_user_siso_config,
)
from .utils import (
    ConfigError,
    NumericalError,
    ParameterError,
    config_hash,
    db_to_linear,
    dbm_to_watt,
    derive_seed,
    format_number,
    remove_tmpdir,
    sample_rng,
    complex_gaussian,
)
from .version import __version__

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# -- parameter models -------------------------------------------------------

class _Params(BaseModel):
    class Config:
        extra = "forbid"


class _SnrRange(_Params):
    snr_db_min: float = 0.0
    snr_db_max: float = 30.0
    snr_points: int = 7

    @root_validator(skip_on_failure=True)
    def _check_snr_range(cls, values):
        low = values["snr_db_min"]
        high = values["snr_db_max"]
        if not (math.isfinite(low) and math.isfinite(high)):
            raise ValueError("SNR range must be finite")
        if low > high:
            raise ValueError(
                f"snr_db_min {low} is above snr_db_max {high}")
        if values["snr_points"] < 1:
            raise ValueError("snr_points must be >= 1")
        return values

    def snr_grid(self) -> List[float]:
        return [
            float(s) for s in np.linspace(
                self.snr_db_min, self.snr_db_max, self.snr_points)
        ]


class Ic2SweepParams(_Params):
    snr_db: float = 30.0
    ratio_min: float = 0.1
    ratio_max: float = 100.0
    points: int = 200
    grid_points: int = 1001
    eps_vw: float = DEFAULT_EPS_VW
    orthogonal_power_boost: float = DEFAULT_ORTHOGONAL_BOOST

    @root_validator(skip_on_failure=True)
    def _check_ratios(cls, values):
        if not 0 < values["ratio_min"] < values["ratio_max"]:
            raise ValueError("Need 0 < ratio_min < ratio_max")
        if values["points"] < 2:
            raise ValueError("points must be >= 2")
        return values


class _Ensemble(_Params):
    tx: int = 4
    rx: List[int] = [1, 1]
    variances: List[float] = [1.0, 1.0]
    alpha_exponent: Optional[float] = None
    samples: int = 100
    base_seed: int = 0
    layouts: List[str] = [ONE_LAYER_RS, SDMA, NOMA]

    @root_validator(skip_on_failure=True)
    def _check_users(cls, values):
        if len(values["rx"]) != len(values["variances"]):
            raise ValueError("rx and variances need one entry per user")
        if values["samples"] < 1:
            raise ValueError("samples must be >= 1")
        if values["base_seed"] < 0:
            raise ValueError("base_seed must be >= 0")
        return values

    @property
    def num_users(self) -> int:
        return len(self.rx)

    def ensemble(self, power: float) -> RayleighEnsemble:
        return RayleighEnsemble(
            self.tx,
            tuple(self.rx),
            tuple(self.variances),
            self.alpha_exponent,
            power,
        )


class RateRegionParams(_Ensemble):
    snr_db: float = 20.0
    weights: int = 20

    @validator("weights")
    def _check_weights(cls, value):
        if value < 1:
            raise ValueError("weights must be >= 1")
        return value


class MmfSweepParams(_SnrRange, _Ensemble):
    tx: int = 5
    rx: List[int] = [1] * 6
    variances: List[float] = [1.0] * 6
    alpha_exponent: Optional[float] = -0.5
    layouts: List[str] = [ONE_LAYER_RS, SDMA, "NOMA_G1", "NOMA_G3"]


class EeSweepParams(_SnrRange, _Ensemble):
    snr_db_min: float = -10.0
    snr_db_max: float = 20.0
    eta: float = 0.35
    p_dyn_dbm: float = 27.0
    p_sta: float = 1e-3
    layouts: List[str] = [ONE_LAYER_RS, SDMA]


class RegionMapParams(_Params):
    snr_db: float = 20.0
    gamma_db: List[float] = [-20.0, -10.0, -5.0, 0.0]
    rho: List[float] = [0.01, 0.25, 0.5, 0.75, 0.99]
    weights: List[float] = [1.0, 1.0]
    layouts: List[str] = [ONE_LAYER_RS, SDMA, NOMA]

    @validator("rho", each_item=True)
    def _check_rho(cls, value):
        if not 0 <= value <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {value}")
        return value


class UplinkRegionParams(_Params):
    p1_db: float = 10.0
    p2_db: float = 10.0
    h1: float = 1.0
    h2: float = 0.7
    points: int = 50

    @validator("points")
    def _check_points(cls, value):
        if value < 2:
            raise ValueError("points must be >= 2")
        return value


class MulticellEvalParams(_SnrRange):
    cells: int = 2
    tx: int = 2
    rx: int = 1
    direct_variance: float = 1.0
    cross_variance: float = 0.5
    samples: int = 100
    base_seed: int = 0
    grid: int = 51

    @root_validator(skip_on_failure=True)
    def _check_cells(cls, values):
        if values["cells"] < 2:
            raise ValueError("cells must be >= 2")
        if values["samples"] < 1:
            raise ValueError("samples must be >= 1")
        return values


@dataclass(frozen=True)
class ScenarioInfo:
    kind: str
    params: type
    description: str
    setup: str
    columns: Tuple[str, ...]


SCENARIOS = {}


def _register(info: ScenarioInfo):
    SCENARIOS[info.kind] = info


_register(ScenarioInfo(
    "ic2_sweep", Ic2SweepParams,
    "Symmetric two-user interference channel, rate-splitting against"
    " treating interference as noise, full decoding and orthogonal access",
    "SNR = P|h_d|^2 = 30 dB, INR/SNR log grid over [0.1, 100]",
    ("inr_over_snr", "rs", "tin", "decode", "orthogonal", "regime",
     "t_star"),
))
_register(ScenarioInfo(
    "rate_region", RateRegionParams,
    "Two-user rate region frontiers traced by weighted sum rate",
    "MISO M=4, K=2, SNR 20 dB, 20 weights, 100 Rayleigh channels",
    ("weight_ratio", "r1", "r2", "objective", "stderr_r1", "stderr_r2",
     "frontier"),
))
_register(ScenarioInfo(
    "mmf_sweep", MmfSweepParams,
    "Max-min fairness rate versus SNR under imperfect CSIT",
    "M=5, K=6, CSIT error exponent -0.5, 1-layer RS against SDMA and NOMA"
    " with one or three groups",
    ("snr_db", "mmf", "stderr", "sum_rate", "feasible_fraction"),
))
_register(ScenarioInfo(
    "ee_sweep", EeSweepParams,
    "Energy efficiency versus SNR with optimized transmit power",
    "M=4, K=2, eta=0.35, P_dyn=27 dBm, P_sta=1 mW",
    ("snr_db", "ee", "stderr", "sum_rate", "transmit_power"),
))
_register(ScenarioInfo(
    "region_map", RegionMapParams,
    "Best scheme over user strength disparity and channel angle",
    "Two-user MISO geometry, M=2, SNR 20 dB, WSR(1, 1)",
    ("gamma_db", "rho", "layout", "objective", "common_fraction", "best"),
))
_register(ScenarioInfo(
    "uplink_region", UplinkRegionParams,
    "Two-user SISO uplink: rate-splitting reaching the dominant face"
    " without time sharing, against orthogonal time sharing",
    "P1 = P2 = 10 dB, |h1| = 1, |h2| = 0.7",
    ("target_r1", "target_r2", "feasible", "split", "order", "r1", "r2"),
))
_register(ScenarioInfo(
    "multicell_eval", MulticellEvalParams,
    "Coordinated multi-cell rate-splitting against cooperative and"
    " interference-as-noise transmission",
    "2 cells, M=2, N=1, cross-link variance 0.5, WSR(1, ..., 1)",
    ("snr_db", "sum_rate", "stderr"),
))


# -- layouts ------------------------------------------------------------------

_PLAIN_LAYOUTS = (ONE_LAYER_RS, SDMA, NOMA, OMA, MULTICAST, GRS, DPCRS)


def parse_layout(label: str, rx: Sequence[int], variances: Sequence[float],
                 tx: int) -> StreamLayout:
    """Layout from a label such as ``OneLayerRS``, ``NOMA_G3`` or ``HRS_G2``.

    Groups are formed round-robin over users sorted by decreasing channel
    variance, so each group mixes strong and weak users.
    """

    num_users = len(rx)
    dims = [min(n, tx) for n in rx]
    base, _, suffix = label.partition("_G")
    strength = sorted(range(num_users), key=lambda k: (-variances[k], k))
    if suffix:
        if base not in (NOMA, HRS):
            raise ConfigError(f"Layout '{label}' does not take groups")
        try:
            count = int(suffix)
        except ValueError:
            raise ConfigError(f"Invalid group count in layout '{label}'")
        groups = noma_groups(strength, count)
    else:
        groups = None
    if base == HRS:
        return build_layout(
            HRS, num_users, dims,
            groups=groups or noma_groups(strength, min(2, num_users)))
    if base == NOMA:
        return build_layout(
            NOMA, num_users, dims, groups=groups, noma_order=strength)
    if base in _PLAIN_LAYOUTS and not suffix:
        return build_layout(base, num_users, dims)
    raise ConfigError(f"Unknown layout '{label}'")


# -- run context ------------------------------------------------------------

@dataclass
class RunContext:
    tmpdir: str
    digest: str
    optimizer: OptimizerConfig
    executor: Any = None
    files: List[str] = field(default_factory=list)

    def write_csv(self, name: str, columns: Sequence[str], rows):
        path = os.path.join(self.tmpdir, name)
        with open(path, "w", encoding="utf-8", newline="") as stream:
            stream.write(f"# config_hash={self.digest}\n")
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
        self.files.append(name)
        logging.debug(f"Wrote {name}")


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_number(float(value))
    return str(value)


@contextmanager
def _executor(jobs: int):
    if jobs is None or jobs <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        yield executor


# -- scenario kinds -----------------------------------------------------------

def _run_ic2_sweep(params: Ic2SweepParams, ctx: RunContext):
    ratios = np.logspace(
        math.log10(params.ratio_min), math.log10(params.ratio_max),
        params.points)
    rows = sweep_inr(
        db_to_linear(params.snr_db),
        ratios,
        grid_points=params.grid_points,
        eps_vw=params.eps_vw,
        power_boost=params.orthogonal_power_boost,
    )
    ctx.write_csv(
        "ic2_sweep.csv",
        SCENARIOS["ic2_sweep"].columns,
        [
            (r.inr_over_snr, r.rs, r.tin, r.decode, r.orthogonal, r.regime,
             r.t_star)
            for r in rows
        ],
    )


def _run_rate_region(params: RateRegionParams, ctx: RunContext):
    power = db_to_linear(params.snr_db)
    for label in params.layouts:
        layout = parse_layout(label, params.rx, params.variances, params.tx)
        if layout.num_users != 2:
            raise ConfigError("rate_region needs exactly two users")
        logging.info(f"Rate region of {label}")
        trace = rate_region_boundary(
            params.ensemble(power), layout, power, params.weights,
            ctx.optimizer, params.samples, params.base_seed,
            executor=ctx.executor,
        )
        frontier = set(trace.frontier)
        ctx.write_csv(
            f"rate_region_{label}.csv",
            SCENARIOS["rate_region"].columns,
            [
                (p.weight_ratio, p.rates[0], p.rates[1], p.objective,
                 p.stderr[0], p.stderr[1], p in frontier)
                for p in trace.points
            ],
        )


def _run_ensemble_sweep(params, ctx: RunContext, kind: str, metric: Metric):
    for label in params.layouts:
        layout = parse_layout(label, params.rx, params.variances, params.tx)
        logging.info(f"{kind}: {label} over {params.snr_points} SNR points")
        rows = []
        for snr_db in params.snr_grid():
            power = db_to_linear(snr_db)
            result = ergodic_average(
                params.ensemble(power), layout, metric, power,
                params.samples, params.base_seed, ctx.optimizer,
                executor=ctx.executor,
            )
            if kind == "mmf_sweep":
                rows.append((
                    snr_db, result.mean_objective, result.stderr_objective,
                    result.mean_sum_rate, result.feasible_fraction))
            else:
                rows.append((
                    snr_db, result.mean_objective, result.stderr_objective,
                    result.mean_sum_rate, result.mean_transmit_power))
        ctx.write_csv(f"{kind}_{label}.csv", SCENARIOS[kind].columns, rows)


def _run_mmf_sweep(params: MmfSweepParams, ctx: RunContext):
    _run_ensemble_sweep(params, ctx, "mmf_sweep", Metric.mmf())


def _run_ee_sweep(params: EeSweepParams, ctx: RunContext):
    metric = Metric.ee(
        eta=params.eta, p_dyn=dbm_to_watt(params.p_dyn_dbm),
        p_sta=params.p_sta)
    _run_ensemble_sweep(params, ctx, "ee_sweep", metric)


def _run_region_map(params: RegionMapParams, ctx: RunContext):
    power = db_to_linear(params.snr_db)
    metric = Metric.wsr(params.weights)
    rows = []
    for gamma_db in params.gamma_db:
        for rho in params.rho:
            ch = geometry_2user(gamma_db, theta_for_rho(rho))
            results = []
            for label in params.layouts:
                layout = parse_layout(label, [1, 1], [1.0, 1.0], 2)
                result = optimize(ch, layout, metric, power, ctx.optimizer)
                common = 0.0
                if result.layout.kind == ONE_LAYER_RS:
                    common = float(np.vdot(
                        result.precoders.precoders[0],
                        result.precoders.precoders[0]).real) / power
                results.append((label, result.objective, common))
            best = max(results, key=lambda item: item[1])[0]
            for label, objective, common in results:
                rows.append((
                    gamma_db, rho, label, objective, common, label == best))
    ctx.write_csv(
        "region_map.csv", SCENARIOS["region_map"].columns, rows)


def _run_uplink_region(params: UplinkRegionParams, ctx: RunContext):
    p1 = db_to_linear(params.p1_db)
    p2 = db_to_linear(params.p2_db)
    g1 = params.h1 ** 2
    g2 = params.h2 ** 2
    region = mac_region_2user(p1, p2, g1, g2)
    rows = []
    for target in region.dominant_face(params.points):
        solution = find_split_for_point(target, p1, p2, (params.h1, params.h2))
        order = "" if solution.order is None else " ".join(
            f"{user + 1}.{part}" for user, part in solution.order)
        rates = solution.rates or (0.0, 0.0)
        rows.append((
            target[0], target[1], solution.feasible,
            solution.split if solution.split is not None else 0.0,
            order, rates[0], rates[1],
        ))
    ctx.write_csv(
        "uplink_rsma.csv", SCENARIOS["uplink_region"].columns, rows)
    oma = [
        (share,) + oma_uplink_rates(p1, p2, g1, g2, float(share))
        for share in np.linspace(0.0, 1.0, params.points)
    ]
    ctx.write_csv("uplink_oma.csv", ("share", "r1", "r2"), oma)


def multicell_sample(
    params: MulticellEvalParams,
    optimizer: OptimizerConfig,
    snr_db: float,
    index: int,
) -> Tuple[float, float, float]:
    """Sum rates of one channel sample: coordinated RS, interference as
    noise (no common power) and cooperative 1-layer RS under per-cell
    budgets."""
    power = db_to_linear(snr_db)
    mc = gen_multicell(
        derive_seed(params.base_seed, index), params.cells, params.tx,
        params.rx, params.direct_variance, params.cross_variance)
    metric = Metric.wsr()
    coordinated = optimize_coordinated(mc, power, metric, params.grid)
    tin = rate_coordinated(mc, design_coordinated(mc, power, 0.0))

    layout = build_layout(ONE_LAYER_RS, params.cells, [1] * params.cells)
    designed = optimize(
        cooperative_channel(mc), layout, metric, power * params.cells,
        optimizer)
    budgets = [power] * params.cells
    pre = scale_to_cell_budgets(designed.precoders, budgets, params.tx)
    cooperative = rate_cooperative(mc, designed.layout, pre, budgets, metric)
    return coordinated.report.sum_rate, tin.sum_rate, cooperative.sum_rate


def _multicell_task(args):
    return multicell_sample(*args)


def _run_multicell_eval(params: MulticellEvalParams, ctx: RunContext):
    names = ("coordinated", "tin", "cooperative")
    rows = {name: [] for name in names}
    for snr_db in params.snr_grid():
        logging.info(f"multicell_eval at {snr_db:g} dB")
        tasks = [
            (params, ctx.optimizer, snr_db, index)
            for index in range(params.samples)
        ]
        if ctx.executor is None:
            outcomes = [_multicell_task(task) for task in tasks]
        else:
            outcomes = list(ctx.executor.map(_multicell_task, tasks))
        for position, name in enumerate(names):
            mean, error = mean_stderr([o[position] for o in outcomes])
            rows[name].append((snr_db, mean, error))
    for name in names:
        ctx.write_csv(
            f"multicell_{name}.csv",
            SCENARIOS["multicell_eval"].columns,
            rows[name],
        )


HANDLERS = {
    "ic2_sweep": _run_ic2_sweep,
    "rate_region": _run_rate_region,
    "mmf_sweep": _run_mmf_sweep,
    "ee_sweep": _run_ee_sweep,
    "region_map": _run_region_map,
    "uplink_region": _run_uplink_region,
    "multicell_eval": _run_multicell_eval,
}


# -- config -------------------------------------------------------------------

def load_document(config_path: str) -> Dict[str, Any]:
    """Read a TOML or JSON scenario document (JSON by extension)."""
    if not os.path.isfile(config_path):
        raise ConfigError(f"Config file '{config_path}' does not exist")
    try:
        with open(config_path, "r", encoding="utf-8") as stream:
            content = stream.read()
        if config_path.lower().endswith(".json"):
            document = json.loads(content)
        else:
            document = toml.loads(content)
    except (OSError, ValueError, toml.TomlDecodeError) as exc:
        raise ConfigError(f"Could not parse '{config_path}': {exc}")
    if not isinstance(document, dict):
        raise ConfigError("Config root must be a table")
    return document


def load_scenario(
    document: Dict[str, Any], seed: Optional[int] = None
) -> Tuple[str, BaseModel, OptimizerConfig]:
    """Validated (kind, parameters, optimizer) of a scenario document.

    Raises:
        ConfigError: Unknown kind, unknown keys or invalid values.
    """

    unknown = set(document) - {"kind", "parameters", "optimizer"}
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")
    kind = document.get("kind")
    if kind not in SCENARIOS:
        raise ConfigError(
            f"Unknown scenario kind '{kind}', expected one of"
            f" {', '.join(SCENARIOS)}"
        )
    parameters = dict(document.get("parameters") or {})
    optimizer = dict(document.get("optimizer") or {})
    model = SCENARIOS[kind].params
    if seed is not None:
        if "base_seed" in model.__fields__:
            parameters["base_seed"] = seed
        optimizer["seed"] = seed
    try:
        return kind, model(**parameters), OptimizerConfig(**optimizer)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {kind} config: {exc}")


def _write_manifest(ctx: RunContext, resolved, started: float, jobs: int):
    manifest = {
        "config": resolved,
        "config_hash": ctx.digest,
        "seeds": {
            "base_seed": resolved["parameters"].get("base_seed"),
            "optimizer_seed": resolved["optimizer"]["seed"],
        },
        "version": __version__,
        "jobs": jobs,
        "started": time.strftime(
            "%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "wall_time_s": round(time.time() - started, 3),
        "files": list(ctx.files),
    }
    if resolved["kind"] == "ic2_sweep":
        manifest["notes"] = [orthogonal_note(
            resolved["parameters"]["orthogonal_power_boost"])]
    path = os.path.join(ctx.tmpdir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as stream:
        json.dump(manifest, stream, indent=2, sort_keys=True)
        stream.write("\n")


def _publish(ctx: RunContext, out_dir: str):
    """Move results into ``out_dir``, the manifest last.

    Files are first staged inside ``out_dir`` so the final step is a rename
    on one filesystem. When a rename fails, files already placed are removed
    again, and so is ``out_dir`` if this run created it.
    """

    created = not os.path.isdir(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".rsma_staging_", dir=out_dir)
    names = ctx.files + ["manifest.json"]
    placed = []
    try:
        for name in names:
            shutil.move(
                os.path.join(ctx.tmpdir, name), os.path.join(staging, name))
        for name in names:
            target = os.path.join(out_dir, name)
            os.replace(os.path.join(staging, name), target)
            placed.append(target)
    except Exception:
        for target in placed:
            os.remove(target)
        if created:
            shutil.rmtree(out_dir, ignore_errors=True)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def run(
    config_path: str,
    out_dir: Optional[str] = None,
    jobs: Optional[int] = None,
    seed: Optional[int] = None,
) -> int:
    """Run a scenario config and return the process exit code.

    0 on success, 2 on config or parameter errors, 3 on numerical failures,
    1 on anything unexpected. Nothing is left in ``out_dir`` on failure.
    """

    started = time.time()
    jobs = jobs or 1
    try:
        kind, params, optimizer = load_scenario(
            load_document(config_path), seed)
    except ConfigError as exc:
        logging.error(str(exc))
        return EXIT_CONFIG

    out_dir = out_dir or os.path.join(os.getcwd(), "results", kind)
    resolved = {
        "kind": kind,
        "parameters": params.dict(),
        "optimizer": optimizer.dict(),
    }
    ctx = RunContext(
        tmpdir=tempfile.mkdtemp(prefix="rsma_"),
        digest=config_hash(resolved),
        optimizer=optimizer,
    )
    logging.info(f"Running {kind} (config hash {ctx.digest[:12]})")
    try:
        with _executor(jobs) as executor:
            ctx.executor = executor
            HANDLERS[kind](params, ctx)
        ctx.executor = None
        _write_manifest(ctx, resolved, started, jobs)
        _publish(ctx, out_dir)

    except (ConfigError, ParameterError) as exc:
        logging.error(f"{kind} failed: {exc}")
        return EXIT_CONFIG

    except NumericalError as exc:
        logging.error(f"{kind} failed with a numerical error: {exc}")
        return EXIT_NUMERICAL

    except Exception:
        log_traceback(f"{kind} failed unexpectedly")
        return EXIT_UNEXPECTED

    finally:
        failed = remove_tmpdir(ctx.tmpdir)
        if failed:
            logging.warning(f"Could not remove {len(failed)} temp files")

    logging.goodnews(
        f"{kind} finished in {time.time() - started:.1f}s,"
        f" {len(ctx.files)} files in {out_dir}"
    )
    return EXIT_OK


def list_scenarios():
    print("--- Available scenarios ---")
    for info in SCENARIOS.values():
        print(info.kind)
        print(f"    {info.description}")
        print(f"    setup: {info.setup}")
        print(f"    columns: {', '.join(info.columns)}")
        print("    parameters:")
        for name, model_field in info.params.__fields__.items():
            print(f"        {name} = {model_field.default!r}")
    print("optimizer (all kinds):")
    for name, model_field in OptimizerConfig.__fields__.items():
        print(f"    {name} = {model_field.default!r}")
    print("---------------------------")


# -- selftest -------------------------------------------------------------------

def _check_ic_dominance() -> bool:
    for ratio in np.logspace(-1.0, 2.0, 20):
        ch = IcChannel(h_d=1.0, h_c=math.sqrt(ratio), power=1000.0)
        _, rate = optimize_t(ch, 201)
        baselines = baseline_rates(ch, power_boost=1.0)
        if rate < max(baselines.values()) - 1e-9:
            return False
    return True


def _check_scalar_oracle() -> bool:
    layout = build_layout(ONE_LAYER_RS, 2)
    for index in range(20):
        ch = gen_rayleigh(derive_seed(7, index), 3, [1, 1], [1.0, 1.0])
        rng = sample_rng(derive_seed(8, index))
        pre = PrecoderSet(
            tuple(complex_gaussian(rng, (3, 1), 1.0) for _ in range(3)),
            100.0,
        )
        report = rate_1layer(ch, layout, pre)
        for user, matrix in enumerate(ch.matrices()):
            gains = [
                abs(np.vdot(matrix[:, 0], p[:, 0])) ** 2
                for p in pre.precoders
            ]
            private = layout.private_index(user)
            others = sum(
                gains[layout.private_index(k)] for k in range(2) if k != user)
            expected_common = math.log2(
                1.0 + gains[0] / (1.0 + others + gains[private]))
            expected_private = math.log2(1.0 + gains[private] / (1.0 + others))
            if abs(report.per_stream_user_rate[(0, user)]
                   - expected_common) > 1e-12:
                return False
            if abs(report.per_stream_user_rate[(private, user)]
                   - expected_private) > 1e-12:
                return False
    return True


def _check_specialisation() -> bool:
    one_layer = build_layout(ONE_LAYER_RS, 2)
    grs = build_layout(GRS, 2, grs_active_subsets=[(0, 1)])
    for index in range(20):
        ch = gen_rayleigh(derive_seed(9, index), 2, [1, 1], [1.0, 1.0])
        rng = sample_rng(derive_seed(10, index))
        pre = PrecoderSet(
            tuple(complex_gaussian(rng, (2, 1), 1.0) for _ in range(3)),
            100.0,
        )
        a = rate_1layer(ch, one_layer, pre).user_total
        b = rate_grs(ch, grs, pre).user_total
        if any(abs(x - y) > 1e-12 for x, y in zip(a, b)):
            return False
    return True


def _check_uplink_conservation() -> bool:
    ch = siso_channel(1.0, 0.6 + 0.3j)
    bound = math.log2(1.0 + 10.0 + 5.0 * abs(0.6 + 0.3j) ** 2)
    for a in np.linspace(0.0, 1.0, 11):
        rates = rate_uplink(ch, two_user_siso_config(10.0, 5.0, float(a)))
        if abs(rates.sum_rate - bound) > 1e-10:
            return False
    return True


def _check_ee_arithmetic() -> bool:
    metric = Metric.ee()
    expected = 3.0 / (2.0 / 0.35 + 4 * 10.0 ** (2.7 - 3.0) + 1e-3)
    return abs(metric.value([1.0, 2.0], 2.0, 4) - expected) < 1e-12


SELFTEST_CHECKS = (
    ("interference channel dominance", _check_ic_dominance),
    ("log-det against scalar SINR", _check_scalar_oracle),
    ("GRS with one common stream equals 1-layer RS", _check_specialisation),
    ("uplink sum-rate conservation", _check_uplink_conservation),
    ("energy efficiency arithmetic", _check_ee_arithmetic),
)


def selftest() -> int:
    """Quick invariant checks; returns 0 when all pass."""
    failed = 0
    for name, check in SELFTEST_CHECKS:
        try:
            passed = check()
        except Exception:
            log_traceback(f"Selftest '{name}' raised")
            passed = False
        if passed:
            logging.goodnews(f"{name}: ok")
        else:
            logging.error(f"{name}: FAILED")
            failed += 1
    return EXIT_OK if failed == 0 else EXIT_UNEXPECTED
