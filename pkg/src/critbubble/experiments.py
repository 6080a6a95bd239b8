"""Experiment dispatch, threshold bisection, refinement studies and the record store."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bubbles import BubbleParams, Cutoff, bubble_energies, expansion_sweep, template_columns
from .config import KINDS, ExperimentConfig
from .constants import (RegimeError, alpha_lower_bound, beta_tilde, compute_A_k, gamma_tilde,
                        sobolev_constants, threshold_set)
from .family import FamilyParams, center_F, choose_r0, energy_E, family_w, gamma_Gamma
from .fem import DiscreteFunction
from .pohozaev import certify_nonexistence, pohozaev_residual
from .variational import (MinimizeOptions, annulus_solve, eigen_lambda1_div, minimize_S_lambda,
                          reconstruct_solution, s_lambda_curve)
from .weights import RadialGrid

log = logging.getLogger(__name__)

CACHE_ENV = "CRITBUBBLE_CACHE_DIR"


def clean(obj):
    """Convert numpy scalars/arrays to plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["%.17g" % v if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def loads_csv(text: str) -> tuple[list[str], list[list[float]]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    return header, [[float(v) for v in row] for row in reader]


@dataclass
class RunRecord:
    config: dict
    kind: str
    params: dict
    version: str
    result: dict
    output: str
    output_format: str
    started: str = ""
    finished: str = ""
    oracle: dict = field(default_factory=dict)
    from_cache: bool = False

    def to_json(self) -> str:
        d = {k: v for k, v in self.__dict__.items() if k != "from_cache"}
        return dumps_json(d)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


class RecordStore:
    """Append-only directory of run records keyed by config digest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> RunRecord | None:
        p = self.path(key)
        if not p.exists():
            return None
        rec = RunRecord.from_json(p.read_text())
        rec.from_cache = True
        return rec

    def put(self, key: str, record: RunRecord) -> None:
        p = self.path(key)
        if p.exists():
            return
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(record.to_json())
        os.replace(tmp, p)


def resolve_cache_dir(cli_value: str | None) -> str | None:
    return os.environ.get(CACHE_ENV) or cli_value


# individual experiments --------------------------------------------------------

def _constants(cfg: ExperimentConfig, params: dict) -> dict:
    n = int(params.get("n") or cfg.n)
    k = float(params.get("k") or cfg.k)
    beta = float(params["beta"]) if params.get("beta") is not None else cfg.beta
    diam = float(params.get("diam") or 2.0 * cfg.R)
    sc = sobolev_constants(n)
    out = {"K1": sc.K1, "K2": sc.K2, "K3": sc.K3, "S": sc.S, "omega_n": sc.omega_n,
           "A_k": None, "gamma_tilde": None, "beta_tilde": beta_tilde(k, beta, diam),
           "alpha_lower": None, "regime": {}}
    if sc.K3 is None:
        out["regime"]["K3"] = "logarithmic regime" if n == 4 else "divergent"
    try:
        out["A_k"] = compute_A_k(n, k, beta)
    except RegimeError as exc:
        out["regime"]["A_k"] = exc.regime
    if n >= 4:
        out["gamma_tilde"] = gamma_tilde(n, beta)
    else:
        out["regime"]["gamma_tilde"] = "defined for n >= 4"
    if k <= 2:
        out["alpha_lower"] = alpha_lower_bound(n, k, beta, diam)
    else:
        out["regime"]["alpha_lower"] = "k > 2: alpha(p) = 0"
    return out


def _energies_worker(args):
    n, eps, l, L, cfg_dict = args
    cfg = ExperimentConfig(**cfg_dict)
    return bubble_energies(BubbleParams(n, eps, Cutoff(l, L)), cfg.weight(), cfg.make_domain())


def expansion_energies(cfg: ExperimentConfig, eps_list, jobs: int = 1, cutoff: Cutoff | None = None):
    d = cfg.make_domain()
    cutoff = cutoff or Cutoff(0.5 * d.R, d.R)
    tasks = [(cfg.n, float(e), cutoff.l, cutoff.L, cfg.as_dict()) for e in eps_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_energies_worker, tasks))
    return [_energies_worker(t) for t in tasks]


def default_eps(n: int, eps_min: float | None, eps_max: float | None, points: int | None):
    eps_max = eps_max or 1e-3
    eps_min = eps_min or (1e-5 if n >= 5 else 1e-6)
    return np.geomspace(eps_max, eps_min, points or 12)


def _expansion(cfg: ExperimentConfig, params: dict, jobs: int) -> tuple[dict, str]:
    lam = float(params.get("lambda") or 0.0)
    eps = default_eps(cfg.n, params.get("eps_min"), params.get("eps_max"), params.get("points"))
    energies = expansion_energies(cfg, eps, jobs)
    fit = expansion_sweep(cfg.weight(), lam, cfg.make_domain(), eps, energies=energies)
    correction = template_columns(cfg.n, cfg.k, fit.regime)[1][1]
    rows = []
    for en in energies:
        pred = fit.predicted_leading + fit.predicted_slope * float(correction(np.array(en.eps)))
        rows.append([en.eps, en.dirichlet, en.l2, en.lq, en.quotient(lam), pred])
    table = dumps_csv(["eps", "dirichlet", "l2", "lq", "Q_lambda", "regime_prediction"], rows)
    result = {"regime": fit.regime, "correction": fit.correction, "fitted_leading": fit.leading,
              "fitted_slope": fit.slope, "predicted_slope": fit.predicted_slope,
              "predicted_leading": fit.predicted_leading, "fit_residual": fit.residual}
    return result, table


def _family(cfg: ExperimentConfig, params: dict) -> dict:
    w, d = cfg.weight(), cfg.make_domain()
    r0 = params.get("r0") or choose_r0(w, cfg.n, r_max=0.5 * d.R)
    fp = FamilyParams.along_axis(cfg.n, float(params.get("t") or 0.0), int(params.get("sigma_axis") or 0),
                                 int(params.get("scale") or 64), float(r0),
                                 float(params.get("R0") or 0.5 * d.R))
    u, r = family_w(fp, w, d)
    S = sobolev_constants(cfg.n).S
    return {"E": energy_E(u, w, d), "Gamma": gamma_Gamma(u, w, d),
            "F": center_F(u, w, d, S, w.p0), "r_scale": r, "r0": r0}


def _solution_payload(u: DiscreteFunction) -> dict:
    return {"r": u.grid.nodes, "u": u.values, "grid_M": u.grid.M, "grid_ratio": u.grid.ratio}


def _minimize(cfg: ExperimentConfig, params: dict) -> dict:
    lam = float(params.get("lambda") or 0.0)
    grid = cfg.grid(params.get("grid_M"))
    w, d = cfg.weight(), cfg.make_domain()
    rep = minimize_S_lambda(w, d, grid, lam, MinimizeOptions(refine=bool(params.get("refine"))))
    out = rep.as_dict()
    out["p0S"] = w.p0 * sobolev_constants(cfg.n).S
    if rep.achieved is not False and rep.S_lambda_estimate > 0:
        rec = reconstruct_solution(rep, lam, w, d)
        out["residual"] = rec.residual
        out["solution"] = _solution_payload(rec.solution)
    return out


def _eigen(cfg: ExperimentConfig, params: dict) -> dict:
    grid = cfg.grid(params.get("grid_M"))
    rep = eigen_lambda1_div(cfg.weight(), cfg.make_domain(), grid)
    return {"lambda1_div": rep.lambda1_div, "iterations": rep.iterations,
            "relative_change": rep.relative_change,
            "eigenfunction": _solution_payload(rep.eigenfunction)}


def _annulus(cfg: ExperimentConfig, params: dict) -> dict:
    hole = float(params.get("hole") or cfg.eps_hole)
    acfg = cfg.replace(domain="annulus", eps_hole=hole)
    res = annulus_solve(acfg.weight(), hole, acfg.R, acfg.grid(params.get("grid_M")))
    return res.as_dict()


def _curve(cfg: ExperimentConfig, params: dict) -> tuple[dict, str]:
    lams = np.linspace(float(params["lambda_from"]), float(params["lambda_to"]), int(params["steps"]))
    pts = s_lambda_curve(cfg.weight(), cfg.make_domain(), cfg.grid(params.get("grid_M")), lams)
    table = dumps_csv(["lambda", "S_lambda", "iterations"], [[p.lam, p.S_lambda, p.iterations] for p in pts])
    return {"lambda": [p.lam for p in pts], "S_lambda": [p.S_lambda for p in pts]}, table


def load_solution(path: str | Path, cfg: ExperimentConfig) -> DiscreteFunction:
    data = json.loads(Path(path).read_text())
    data = data.get("result", data)
    data = data.get("solution", data)
    if "r" not in data or "u" not in data:
        raise ValueError(f"{path} holds no solution (need 'r' and 'u' arrays)")
    r = np.asarray(data["r"], dtype=float)
    u = np.asarray(data["u"], dtype=float)
    M = int(data.get("grid_M", r.size - 1))
    ratio = float(data.get("grid_ratio", cfg.grid_ratio))
    d = cfg.make_domain()
    grid = RadialGrid.for_domain(d, M=M, ratio=ratio)
    if not np.allclose(grid.nodes, r, rtol=1e-12, atol=0.0):
        raise ValueError("solution nodes do not match the configured grid")
    return DiscreteFunction(grid, u, d.kind == "annulus")


def _pohozaev(cfg: ExperimentConfig, params: dict) -> dict:
    u = load_solution(params["solution"], cfg)
    return pohozaev_residual(u, cfg.weight(), cfg.make_domain(), float(params.get("lambda") or 0.0)).as_dict()


def _certify(cfg: ExperimentConfig, params: dict) -> dict:
    w, d = cfg.weight(), cfg.make_domain()
    lam = float(params.get("lambda") or 0.0)
    th = threshold_set(cfg.n, w.k, w.beta_k, d.diam) if not w.is_constant else None
    grid = cfg.grid()
    if th is not None:
        th.lambda1_div = eigen_lambda1_div(w, d, grid).lambda1_div
    return certify_nonexistence(w, d, lam, th, grid).as_dict()


def run(cfg: ExperimentConfig, kind: str, params: dict | None = None, *,
        store: RecordStore | None = None, jobs: int = 1, seed: int = 0) -> RunRecord:
    """Run one experiment, serving identical (config, kind, params, version) from ``store``."""
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    params = clean({k: v for k, v in (params or {}).items() if v is not None})
    if kind == "pohozaev":
        # the solution file's content, not its name, identifies the run
        params["solution_sha"] = hashlib.sha256(
            Path(params["solution"]).read_bytes()).hexdigest()
    key_params = {k: v for k, v in params.items() if k != "solution"}
    key = cfg.digest({"kind": kind, "params": key_params, "seed": seed}, __version__)
    if store is not None:
        cached = store.get(key)
        if cached is not None:
            log.info("served %s run from cache %s", kind, key[:12])
            return cached
    started = datetime.now(timezone.utc).isoformat()
    try:
        table = None
        if kind == "constants":
            result = _constants(cfg, params)
        elif kind == "expansion":
            result, table = _expansion(cfg, params, jobs)
        elif kind == "family":
            result = _family(cfg, params)
        elif kind == "minimize":
            result = _minimize(cfg, params)
        elif kind == "eigen":
            result = _eigen(cfg, params)
        elif kind == "annulus":
            result = _annulus(cfg, params)
        elif kind == "curve":
            result, table = _curve(cfg, params)
        elif kind == "pohozaev":
            result = _pohozaev(cfg, params)
        else:
            result = _certify(cfg, params)
    except (ValueError, ArithmeticError) as exc:
        raise type(exc)(f"{kind} run failed for config {cfg.as_dict()}: {exc}") from exc
    result = clean(result)
    payload = {"config": cfg.as_dict(), "kind": kind, "params": key_params, "seed": seed,
               "version": __version__, "result": result}
    if table is not None:
        output, fmt = table, "csv"
    else:
        output, fmt = dumps_json(payload), "json"
    record = RunRecord(config=cfg.as_dict(), kind=kind, params=key_params, version=__version__,
                       result=result, output=output, output_format=fmt, started=started,
                       finished=datetime.now(timezone.utc).isoformat())
    if store is not None:
        store.put(key, record)
    return record


# threshold bisection and refinement ---------------------------------------------

class BracketError(ValueError):
    pass


def bisect_threshold(cfg: ExperimentConfig, lam_lo: float, lam_hi: float, predicate: str = "slope-sign",
                     *, eps_list=None, grid_M: int | None = None, jobs: int = 1) -> float:
    """Locate the ``lambda`` where the predicate flips, to ``1e-3 (lam_hi - lam_lo)``.

    ``slope-sign``: the fitted leading correction of the bubble quotient is
    negative (the bubble dips below ``p0 S``). ``achieved``: the two-grid
    verdict says the infimum is attained (inconclusive counts as not).
    """
    if not lam_hi > lam_lo:
        raise ValueError("need lam_lo < lam_hi")
    if predicate == "slope-sign":
        eps = eps_list if eps_list is not None else default_eps(cfg.n, None, None, None)
        # Q is affine in lambda, so the bubble integrals are computed once
        energies = expansion_energies(cfg, eps, jobs)
        w, d = cfg.weight(), cfg.make_domain()

        def test(lam):
            return expansion_sweep(w, lam, d, eps, energies=energies).slope < 0
    elif predicate == "achieved":
        grid = cfg.grid(grid_M)
        w, d = cfg.weight(), cfg.make_domain()

        def test(lam):
            return minimize_S_lambda(w, d, grid, lam).achieved is True
    else:
        raise ValueError(f"unknown predicate {predicate!r}")
    lo_val, hi_val = test(lam_lo), test(lam_hi)
    if lo_val == hi_val:
        raise BracketError(f"predicate {predicate!r} is {lo_val} at both ends of [{lam_lo}, {lam_hi}]")
    lo, hi = lam_lo, lam_hi
    width = 1e-3 * (lam_hi - lam_lo)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if test(mid) == lo_val:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _observed_orders(values: list[float]) -> list[float | None]:
    orders: list[float | None] = [None, None]
    for i in range(2, len(values)):
        a, b = values[i - 2] - values[i - 1], values[i - 1] - values[i]
        orders.append(math.log2(abs(a / b)) if a != 0 and b != 0 else None)
    return orders


def refine_study(cfg: ExperimentConfig, M_list, kind: str = "eigen", lam: float = 0.0) -> list[dict]:
    """Rerun ``eigen`` or ``minimize`` over grid sizes and report Richardson orders."""
    w, d = cfg.weight(), cfg.make_domain()
    rows = []
    for M in M_list:
        grid = cfg.grid(int(M))
        if kind == "eigen":
            rows.append({"grid_M": int(M), "value": eigen_lambda1_div(w, d, grid).lambda1_div})
        elif kind == "minimize":
            rep = minimize_S_lambda(w, d, grid, lam, MinimizeOptions(refine=False))
            rows.append({"grid_M": int(M), "value": rep.S_lambda_estimate,
                         "concentration_radius_90": rep.concentration_radius_90})
        else:
            raise ValueError("refine_study supports 'eigen' and 'minimize'")
    for row, order in zip(rows, _observed_orders([r["value"] for r in rows])):
        row["observed_order"] = order
    if kind == "minimize" and len(rows) >= 2:
        for prev, row in zip(rows, rows[1:]):
            row["radius_ratio"] = row["concentration_radius_90"] / prev["concentration_radius_90"]
    return rows


__all__ = ["RunRecord", "RecordStore", "run", "bisect_threshold", "refine_study", "dumps_json",
           "dumps_csv", "loads_csv", "CACHE_ENV", "resolve_cache_dir"]
