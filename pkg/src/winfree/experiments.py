"""Parameter sweeps behind the command line: curves, maps, domains, scans.

Every function returns plain row dicts sorted by their key columns, so the
output does not depend on how cells were distributed over workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .integrator import IntegratorConfig, NonFiniteStateError, integrate
from .locking import LockingError, find_locked_solution, return_time_bounds
from .model import (
    TWO_PI,
    EnsembleParams,
    EnsembleState,
    ModelSpec,
    make_frequencies,
    make_initial_conditions,
)
from .observables import SYNCHRONIZED, order_d, order_r, sync_verdict
from .theory import (
    CouplingRangeError,
    SyncHypothesisError,
    certify_domain,
    h_integral,
    kappa_star,
)

THRESHOLD = 3.0 * math.pi


@dataclass(frozen=True)
class SimSetup:
    """Everything a single synchronization run needs besides (beta, gamma, kappa)."""

    N: int = 100
    t_end: float = 1500.0
    h: float = 1e-2
    seed: int = 0
    ic_low: float = -math.pi / 2
    ic_high: float = math.pi / 2
    scheme: str = "equidistant"
    threshold: float = THRESHOLD


def run_parallel(fn: Callable, cells: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``cells``; results come back in cell order."""
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells, chunksize=1))


def simulate_cell(beta: float, gamma: float, kappa: float, setup: SimSetup) -> dict:
    """One run to ``t_end``; returns the record of final order parameters."""
    started = time.perf_counter()
    model = ModelSpec.simplified(beta)
    params = EnsembleParams(kappa, gamma, make_frequencies(setup.N, gamma, setup.scheme, setup.seed))
    state0 = make_initial_conditions(setup.N, setup.ic_low, setup.ic_high, setup.seed)
    traj = integrate(state0, params, model, IntegratorConfig(h=setup.h), setup.t_end,
                     record_every=1 << 30)
    x_T = traj.x[-1]
    d_T = order_d(x_T)
    return {
        "beta": beta,
        "gamma": gamma,
        "kappa": kappa,
        "N": setup.N,
        "seed": setup.seed,
        "T": setup.t_end,
        "d_X": d_T,
        "r_X": order_r(x_T),
        "verdict": sync_verdict(d_T, setup.threshold),
        "runtime": time.perf_counter() - started,
    }


def _verdict(beta, gamma, kappa, setup: SimSetup, seeds: Sequence[int]) -> bool:
    votes = 0
    for seed in seeds:
        rec = simulate_cell(beta, gamma, kappa, SimSetup(**{**asdict(setup), "seed": seed}))
        votes += rec["verdict"] == SYNCHRONIZED
    return 2 * votes > len(seeds)


def gamma_max(beta: float, kappa: float, setup: SimSetup, resolution: float = 1e-3,
              bisections: int = 10, gamma_cap: float = 0.999,
              seeds: Optional[Sequence[int]] = None) -> dict:
    """Largest synchronized spectrum width at ``(beta, kappa)``.

    Scans upward in steps of ``resolution`` until the first desynchronized
    width, then bisects the last bracket. ``seeds`` switches to a majority
    vote over several realizations.
    """
    seeds = list(seeds) if seeds else [setup.seed]
    runs = 0
    good = 0.0
    bad = None
    k = 1
    while k * resolution <= gamma_cap:
        g = k * resolution
        runs += len(seeds)
        if _verdict(beta, g, kappa, setup, seeds):
            good = g
            k += 1
        else:
            bad = g
            break
    fail = bad
    if bad is not None:
        lo, hi = good, bad
        for _ in range(bisections):
            mid = 0.5 * (lo + hi)
            runs += len(seeds)
            if _verdict(beta, mid, kappa, setup, seeds):
                lo = mid
            else:
                hi = mid
        good, fail = lo, hi
    return {"beta": beta, "kappa": kappa, "gamma_max": good, "gamma_fail": fail, "runs": runs}


# -- subcommand bodies ---------------------------------------------------------

def kappa_star_curve(betas: Iterable[float]) -> list[dict]:
    rows = [{"beta": b, "kappa_star": kappa_star(ModelSpec.simplified(b))} for b in betas]
    return sorted(rows, key=lambda r: r["beta"])


def _h_cell(cell):
    beta, kappa = cell
    model = ModelSpec.simplified(beta)
    ks = kappa_star(model)
    valid = 0.0 <= kappa < ks
    H = h_integral(model, kappa) if valid else None
    sign = None if H is None else int(np.sign(H)) if abs(H) > 1e-9 else 0
    return {"beta": beta, "kappa": kappa, "kappa_star": ks, "valid": valid, "H": H, "sign": sign}


def h_map(betas, kappas, workers: int = 1) -> list[dict]:
    cells = [(b, k) for b in betas for k in kappas]
    rows = run_parallel(_h_cell, cells, workers)
    return sorted(rows, key=lambda r: (r["beta"], r["kappa"]))


def _gamma_max_cell(args):
    beta, kappa, setup, resolution, bisections, seeds = args
    return gamma_max(beta, kappa, setup, resolution, bisections, seeds=seeds)


def sync_domain(beta: float, kappas, setup: SimSetup, resolution: float = 1e-3,
                bisections: int = 10, seeds=None, workers: int = 1) -> list[dict]:
    cells = [(beta, k, setup, resolution, bisections, seeds) for k in kappas]
    rows = run_parallel(_gamma_max_cell, cells, workers)
    return sorted(rows, key=lambda r: r["kappa"])


def desync_curve(kappa: float, betas, setup: SimSetup, resolution: float = 1e-3,
                 bisections: int = 10, seeds=None, workers: int = 1) -> list[dict]:
    cells = [(b, kappa, setup, resolution, bisections, seeds) for b in betas]
    rows = run_parallel(_gamma_max_cell, cells, workers)
    return sorted(rows, key=lambda r: r["beta"])


def _sim_cell(args):
    beta, gamma, kappa, setup = args
    return simulate_cell(beta, gamma, kappa, setup)


def order_scan(betas, gammas, kappa: float, setup: SimSetup, workers: int = 1) -> list[dict]:
    cells = [(b, g, kappa, setup) for g in gammas for b in betas]
    rows = run_parallel(_sim_cell, cells, workers)
    return sorted(rows, key=lambda r: (r["gamma"], r["beta"]))


def sync_grid(beta: float, gammas, kappas, setup: SimSetup, workers: int = 1) -> list[dict]:
    """Final-time verdict on every (gamma, kappa) cell."""
    cells = [(beta, g, k, setup) for g in gammas for k in kappas]
    rows = run_parallel(_sim_cell, cells, workers)
    return sorted(rows, key=lambda r: (r["gamma"], r["kappa"]))


def timeseries(beta: float, gamma: float, kappa: float, setup: SimSetup,
               record_every: int = 100, chunk: int = 1000) -> dict:
    """Recorded ``d_X`` and mean along one run, plus the final circle snapshot.

    Integration proceeds in chunks so a non-finite state still leaves the
    samples gathered so far; ``status`` reports it.
    """
    model = ModelSpec.simplified(beta)
    params = EnsembleParams(kappa, gamma, make_frequencies(setup.N, gamma, setup.scheme, setup.seed))
    state = make_initial_conditions(setup.N, setup.ic_low, setup.ic_high, setup.seed)
    config = IntegratorConfig(h=setup.h)
    span = record_every * chunk * setup.h
    rows = [{"t": 0.0, "d_X": order_d(state.x), "mu": float(np.mean(state.x))}]
    status = "ok"
    while state.t < setup.t_end - 1e-12:
        t_next = min(state.t + span, setup.t_end)
        try:
            traj = integrate(state, params, model, config, t_next, record_every)
        except NonFiniteStateError as exc:
            status = f"non-finite: {exc}"
            break
        for t, d, mu in zip(traj.t[1:], traj.d[1:], traj.mu[1:]):
            rows.append({"t": float(t), "d_X": float(d), "mu": float(mu)})
        state = traj.final
    return {
        "rows": rows,
        "status": status,
        "snapshot": {
            "t": state.t,
            "phases_mod_2pi": np.mod(state.x, TWO_PI).tolist(),
            "r_X": order_r(state.x),
            "d_X": order_d(state.x),
        },
    }


def _certify_cell(args):
    beta, gamma, kappa = args
    model = ModelSpec.simplified(beta)
    row = {"gamma": gamma, "kappa": kappa, "in_U": False, "D": None, "L": None,
           "max_delta": None, "mean_increasing": None, "status": "ok"}
    try:
        cert = certify_domain(model, gamma, kappa)
    except SyncHypothesisError:
        row["status"] = "sync-hypothesis-fails"
        return row
    except (CouplingRangeError, ValueError) as exc:
        row["status"] = f"invalid: {exc}"
        return row
    if not kappa < cert.kappa_star:
        row["status"] = "kappa>=kappa_star"
        return row
    row.update(in_U=cert.in_U, D=cert.D, L=cert.L, max_delta=cert.max_delta,
               mean_increasing=cert.mean_increasing)
    return row


def certify_grid(beta: float, gammas, kappas, workers: int = 1) -> list[dict]:
    cells = [(beta, g, k) for g in gammas for k in kappas]
    rows = run_parallel(_certify_cell, cells, workers)
    return sorted(rows, key=lambda r: (r["gamma"], r["kappa"]))


def lock_report(beta: float, gamma: float, kappa: float, N: int, seed: Optional[int] = None,
                h: float = 1e-2, scheme: str = "equidistant", accelerate: bool = False,
                max_iters: int = 5000, include_psi: bool = False) -> dict:
    """Certify ``(gamma, kappa)`` and locate the locked solution there."""
    model = ModelSpec.simplified(beta)
    cert = certify_domain(model, gamma, kappa)
    if not cert.in_U:
        raise ValueError(f"(gamma={gamma}, kappa={kappa}) is not in the certified domain")
    params = EnsembleParams(kappa, gamma, make_frequencies(N, gamma, scheme, seed))
    sol = find_locked_solution(params, model, IntegratorConfig(h=h), certificate=cert,
                               seed=seed, accelerate=accelerate, max_iters=max_iters)
    lower, upper = return_time_bounds(params, model, cert)
    report = sol.to_dict(include_psi)
    report.update(beta=beta, gamma=gamma, kappa=kappa, theta_lower=lower, theta_upper=upper,
                  theta_within_bounds=bool(lower < sol.theta < upper),
                  certificate=cert.to_dict())
    return report


__all__ = [
    "SimSetup",
    "THRESHOLD",
    "LockingError",
    "certify_grid",
    "desync_curve",
    "gamma_max",
    "h_map",
    "kappa_star_curve",
    "lock_report",
    "order_scan",
    "run_parallel",
    "simulate_cell",
    "sync_domain",
    "sync_grid",
    "timeseries",
]
