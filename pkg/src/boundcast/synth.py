"""Synthetic bounded AR series with known parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .datapipe import BoundedSeries, write_farm_csv
from .errors import ParameterError
from .glogit import DEFAULT_EPS, glogit_forward, glogit_inverse

BURN_IN = 1000


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a simulated AR(p) process in the transformed domain.

    ``nu_profile`` is ``"constant"``, ``"ramp"`` (linear from ``nu`` to
    ``nu_end``) or ``"step"`` (switch at ``step_at`` as a fraction of the
    length). A ramp holds ``nu`` until ``ramp_start`` (fraction of the length). ``theta_end``, when given, ramps the coefficients linearly.
    """

    theta: tuple
    sigma2: float
    seed: int
    length: int = 10_000
    nu: float = 1.0
    nu_profile: str = "constant"
    nu_end: float | None = None
    step_at: float = 0.5
    ramp_start: float = 0.0
    theta_end: tuple | None = None
    eps: float = DEFAULT_EPS
    missing_rate: float = 0.0
    burn_in: int = BURN_IN

    @property
    def p(self) -> int:
        return len(self.theta) - 1


@dataclass
class SynthResult:
    series: BoundedSeries
    y: np.ndarray  # transformed values before clamping
    noise: np.ndarray
    nu_path: np.ndarray
    theta_path: np.ndarray
    spec: SynthSpec = field(repr=False)


def is_stationary(theta) -> bool:
    """AR polynomial ``1 - theta_1 z - ... - theta_p z^p`` has roots outside the unit circle."""
    phi = np.asarray(theta, dtype=float)[1:]
    if not np.any(phi):
        return True
    roots = np.roots(np.concatenate([-phi[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0))


def _validate(spec: SynthSpec):
    if spec.seed is None:
        raise ParameterError("a seed is mandatory")
    if spec.sigma2 < 0 or spec.length < 1 or not 0 <= spec.missing_rate < 1:
        raise ParameterError("invalid synthetic spec")
    if spec.nu_profile not in ("constant", "ramp", "step"):
        raise ParameterError(f"unknown nu profile {spec.nu_profile!r}")
    if spec.nu_profile != "constant" and spec.nu_end is None:
        raise ParameterError("ramp and step profiles need nu_end")
    # a noiseless process may sit on a unit root (it is simply constant)
    if spec.sigma2 > 0:
        for th in (spec.theta, spec.theta_end):
            if th is not None and not is_stationary(th):
                raise ParameterError(f"non-stationary AR coefficients {th}")


def nu_path(spec: SynthSpec) -> np.ndarray:
    n = spec.length
    if spec.nu_profile == "constant":
        return np.full(n, float(spec.nu))
    if spec.nu_profile == "ramp":
        k = int(spec.ramp_start * n)
        return np.concatenate([np.full(k, float(spec.nu)), np.linspace(spec.nu, spec.nu_end, n - k)])
    return np.where(np.arange(n) < int(spec.step_at * n), spec.nu, spec.nu_end).astype(float)


def generate(spec: SynthSpec) -> SynthResult:
    """Simulate the transformed AR process and map it back to ``[eps, 1 - eps]``.

    Noise comes from a Philox (counter-based) generator seeded by
    ``spec.seed``; the first ``burn_in`` steps use the initial parameters and
    are discarded.
    """
    _validate(spec)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    p, n, nb = spec.p, spec.length, spec.burn_in
    th0 = np.asarray(spec.theta, dtype=float)
    th1 = th0 if spec.theta_end is None else np.asarray(spec.theta_end, dtype=float)
    frac = np.linspace(0.0, 1.0, n)[:, None]
    theta_path = np.vstack([np.repeat(th0[None, :], nb, axis=0), th0 + frac * (th1 - th0)])

    noise = rng.standard_normal(nb + n) * np.sqrt(spec.sigma2)
    phi_sum = th0[1:].sum()
    start = th0[0] / (1.0 - phi_sum) if abs(1.0 - phi_sum) > 1e-12 else 0.0
    y = np.empty(nb + n + p)
    y[:p] = start
    for t in range(nb + n):
        th = theta_path[t]
        y[t + p] = th[0] + th[1:] @ y[t + p - 1 :: -1][:p] + noise[t] if p else th[0] + noise[t]
    y = y[p + nb :]
    nus = nu_path(spec)
    x = np.clip(glogit_inverse(y, nus), spec.eps, 1.0 - spec.eps)
    if spec.missing_rate > 0:
        x[rng.uniform(size=n) < spec.missing_rate] = np.nan
    series = BoundedSeries("synthetic", 1.0, x, spec.eps)
    return SynthResult(series, y, noise[nb:], nus, theta_path[nb:], spec)


def write_synthetic_farm(path, result: SynthResult, capacity_mw: float = 100.0, start: str = "2020-01-01") -> None:
    """Write a simulated series in the farm CSV schema (zero BAV/OAV)."""
    index = pd.date_range(start, periods=len(result.series), freq="30min", tz="UTC")
    write_farm_csv(path, index, result.series.values * capacity_mw)


def synth_corpus(
    out_dir,
    n_farms: int = 5,
    seed: int = 0,
    start: str = "2020-12-01",
    periods: int = 2976,
    nu: float = 1.0,
    nu_end: float | None = None,
    phi: float = 0.85,
    phi_end: float | None = None,
    sigma2: float = 0.3,
    level: float = 0.35,
    capacity_mw: float = 100.0,
    missing_rate: float = 0.0,
) -> list[SynthResult]:
    """Write ``n_farms`` simulated farm files plus ``manifest.json``.

    Farm ``i`` uses seed ``(seed, i)`` and an AR(1) whose unconditional
    mean sits at ``level`` on the original scale. With ``nu_end`` or
    ``phi_end`` the shape or the persistence drifts linearly.
    """
    import json
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    farms, results = [], []
    for i in range(n_farms):
        fid = f"farm{i:03d}"
        farm_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        th = (float(glogit_forward(level, nu)) * (1 - phi), phi)
        th_end = None if phi_end is None else (th[0] / (1 - phi) * (1 - phi_end), phi_end)
        spec = SynthSpec(
            theta=th,
            sigma2=sigma2,
            seed=farm_seed,
            length=periods,
            nu=nu,
            nu_profile="constant" if nu_end is None else "ramp",
            nu_end=nu_end,
            theta_end=th_end,
            missing_rate=missing_rate,
        )
        res = generate(spec)
        write_synthetic_farm(out / f"{fid}.csv", res, capacity_mw, start)
        farms.append({"id": fid, "file": f"{fid}.csv", "rated_mw": capacity_mw, "seed": farm_seed})
        results.append(res)
    (out / "manifest.json").write_text(json.dumps({"farms": farms, "seed": seed}, indent=1, sort_keys=True) + "\n")
    return results
