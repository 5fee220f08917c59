"""Oracle checks shared by ``latentprice verify`` and the acceptance suite.

Each check returns one or more :class:`CheckResult` objects holding the
measured quantity, its tolerance and a pass flag. Sizes (paths, horizons,
seeds) are arguments, so the command-line battery can run a quicker version
of the same experiments.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataio import EstimationResult, load_dataset, load_result, save_result, write_dataset
from .likelihood import invert_beta
from .model import ModelParams, identifiability_ratio, big_sigma, chi, phi, psi
from .moments import estimate_sigma_bar2, estimate_sigma_hat, solve_epsilon, wide_spread_fraction
from .oracles import bootstrap_particle_filter, simpson_phi, simpson_psi
from .simulate import SimConfig, mean_exit_time_mc, simulate_path
from .zakai import STATS, run_batch, run_filter

# Parameter fixtures. Each is (alpha, beta, sigma2, sigma_bar2).
EXIT_TIME_BATTERY = (
    (1.0, 0.5, 1.0, 2.0),
    (1.0, 1.0, 1.0, 2.0),
    (1.0, 2.0, 1.0, 2.0),
    (2.0, 1.5, 1.0, 1.0),
    (1.0, 4.0, 1.0, 2.0),
)
STATIONARY_GAMMAS = (0.5, 2.0, 5.0)
SIGMA_HAT_THETA = (1.0, 1.0, 0.5, 1.0)
SIGMA_BAR2_THETA = (1.0, 1.0, 0.5, 1.0)
FILTER_THETA = (1.0, 0.1, 0.01, 0.05)
MLE_THETA = (0.5, 0.075, 0.00375, 0.05)
# decoys as multiplicative moves of (alpha2, sigma2); beta follows from Sigma
MLE_DECOYS = ((0.5, 1.0), (2.0, 1.0), (1.0, 0.7))
EPSILON_THETA = (1.0, 2.0, 1.0, 2.0)
PERF_THETA = (1.0, 0.1, 0.01, 0.05)
PERF_BUDGET_S = 900.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    runtime_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        s = f"[{tag}] {self.name}: measured={self.measured:.6g} tolerance={self.tolerance:.6g}"
        if self.detail:
            s += f" ({self.detail})"
        return s + f" [{self.runtime_s:.1f}s]"


def _timed(fn: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    res = fn()
    res.runtime_s = time.perf_counter() - t0
    return res


def _params(t, eps=0.0) -> ModelParams:
    return ModelParams(*t, eps=eps)


def check_exit_time(theta, n_paths: int = 4000, dt_sim: float = 0.01, seed: int = 0, z_max: float = 3.0) -> CheckResult:
    """Mean exit time of ``X`` from (-1, 1) against ``1 / Sigma``."""

    def run():
        p = _params(theta)
        est = mean_exit_time_mc(p, n_paths, dt_sim=dt_sim, seed=seed)
        target = 1.0 / big_sigma(p)
        z = (est.mean - target) / est.stderr
        return CheckResult(
            f"exit time gamma={p.gamma:g}",
            abs(z) <= z_max and est.n_capped == 0,
            abs(z),
            z_max,
            f"MC {est.mean:.4f} +- {est.stderr:.4f} vs 1/Sigma {target:.4f}, {n_paths} paths",
            extra={"mean": est.mean, "stderr": est.stderr, "target": target},
        )

    return _timed(run)


def check_special_functions(zs: Sequence[float] = (0.5, 1.0, 2.0, 5.0, 10.0), tol: float = 1e-8,
                            tol_zero: float = 1e-10) -> CheckResult:
    """Values at 0 and agreement with nested Simpson rules."""

    def run():
        err0 = max(abs(phi(0.0) - 1.0), abs(psi(0.0) - 1.0))
        errs = [max(abs(phi(z) - simpson_phi(z)), abs(psi(z) - simpson_psi(z))) for z in zs]
        worst = max(errs)
        return CheckResult(
            "special functions vs Simpson",
            err0 <= tol_zero and worst <= tol,
            worst,
            tol,
            f"|phi(0)-1|,|psi(0)-1| <= {err0:.1e}; z in {tuple(zs)}",
        )

    return _timed(run)


def stationary_l1(gamma: float, horizon: float = 5e4, seed: int = 0, bins: int = 50,
                  sigma2: float = 1.0, dt_sim: float = 0.001) -> float:
    """L1 distance between the histogram of ``X mod 1`` along one path and ``chi``.

    Euler steps smear the drift jump at the integers, which flattens the
    histogram there; ``dt_sim = 0.01`` already costs about 0.07 in L1 at
    ``gamma = 5``, hence the finer default.
    """
    p = ModelParams(1.0, gamma * sigma2, sigma2, 2.0 * sigma2)
    path = simulate_path(SimConfig(p, horizon, dt_sim=dt_sim, seed=seed, x0="uniform"))
    frac = np.mod(path.latent, 1.0)
    hist, edges = np.histogram(frac, bins=bins, range=(0.0, 1.0), density=True)
    # chi averaged over each bin (Gauss-Legendre, 8 points per bin)
    g, w = np.polynomial.legendre.leggauss(8)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = mid[:, None] + half[:, None] * g[None, :]
    bin_mean = 0.5 * (chi(gamma, pts.ravel()).reshape(pts.shape) * w).sum(axis=1)
    return float(np.sum(np.abs(hist - bin_mean) * (edges[1:] - edges[:-1])))


def check_stationary_density(gamma: float, horizon: float = 5e4, seed: int = 0, tol: float = 0.05) -> CheckResult:
    def run():
        d = stationary_l1(gamma, horizon, seed)
        return CheckResult(f"stationary density gamma={gamma:g}", d <= tol, d, tol, f"T={horizon:g}")

    return _timed(run)


def check_sigma_hat(theta=SIGMA_HAT_THETA, n_seeds: int = 20, horizon: float = 2e4, rel_tol: float = 0.10,
                    seed0: int = 0) -> CheckResult:
    """Average midprice variance estimate against ``Sigma(theta)``."""

    def run():
        p = _params(theta)
        target = big_sigma(p)
        vals = [estimate_sigma_hat(simulate_path(SimConfig(p, horizon, seed=seed0 + k, x0="uniform")))
                for k in range(n_seeds)]
        rel = abs(np.mean(vals) - target) / target
        return CheckResult(
            "Sigma_hat consistency",
            rel <= rel_tol,
            rel,
            rel_tol,
            f"mean {np.mean(vals):.5f} vs Sigma {target:.5f} over {n_seeds} seeds, T={horizon:g}",
        )

    return _timed(run)


def check_sigma_bar2(theta=SIGMA_BAR2_THETA, horizon: float = 1e4, seed: int = 0, rel_tol: float = 0.03) -> CheckResult:
    """Realized variance of the order flow against the true variance rate.

    With unit increments the drift adds at most ``beta^2 / 4`` to the
    expected squared increment, a relative bias of ``beta^2 / (4 sigma_bar2)``
    which is reported alongside.
    """

    def run():
        p = _params(theta)
        path = simulate_path(SimConfig(p, horizon, seed=seed, x0="uniform"))
        est = estimate_sigma_bar2(path)
        rel = abs(est - p.sigma_bar2) / p.sigma_bar2
        bias_bound = p.beta**2 * path.dt_obs / (4.0 * p.sigma_bar2)
        return CheckResult(
            "sigma_bar2 realized variance",
            rel <= rel_tol,
            rel,
            rel_tol,
            f"estimate {est:.5f} vs {p.sigma_bar2:g}; drift bias bound {bias_bound:.2e}",
        )

    return _timed(run)


def check_filter_vs_particles(theta=FILTER_THETA, horizon: float = 500, n_particles: int = 100_000,
                              dt_sim: float = 0.02, seed: int = 7, tol: float = 0.02, **filter_opts) -> CheckResult:
    """Grid filter drift against a bootstrap particle filter on one path."""

    def run():
        p = _params(theta)
        path = simulate_path(SimConfig(p, horizon, seed=seed, x0="uniform"))
        ref = bootstrap_particle_filter(path, p, n_particles, dt_sim, seed=seed + 1).mu
        mu = run_filter(path, p, **filter_opts).mu
        rms = float(np.sqrt(np.mean((mu - ref) ** 2)))
        base = float(np.sqrt(np.mean(ref**2)))
        corr = float(np.corrcoef(mu, ref)[0, 1])
        return CheckResult(
            "filter vs particle filter",
            rms <= tol,
            rms,
            tol,
            f"T={horizon:g}, {n_particles} particles; rms of particle drift {base:.4f}, correlation {corr:.3f}",
            extra={"baseline_rms": base, "corr": corr},
        )

    return _timed(run)


def check_identifiability_ratio(n: int = 200, lo: float = 0.01, hi: float = 20.0, tol: float = 0.05) -> CheckResult:
    """Strict decrease on a grid and a finite limit near zero."""

    def run():
        z = np.linspace(lo, hi, n)
        v = np.array([identifiability_ratio(float(t)) for t in z])
        monotone = bool(np.all(np.diff(v) < 0))
        a, b = identifiability_ratio(1e-3), identifiability_ratio(1e-4)
        rel = abs(a - b) / abs(b)
        return CheckResult(
            "identifiability ratio",
            monotone and rel <= tol and math.isfinite(a) and math.isfinite(b),
            rel,
            tol,
            f"strictly decreasing on {n} points: {monotone}; values {a:.6f}, {b:.6f} at 1e-3, 1e-4",
        )

    return _timed(run)


def decoy_set(theta, moves=MLE_DECOYS) -> list[ModelParams]:
    """``theta`` followed by candidates sharing its ``Sigma``."""
    p = _params(theta)
    target = big_sigma(p)
    out = [p]
    for fa, fs in moves:
        a2, s2 = p.alpha2 * fa, p.sigma2 * fs
        b = invert_beta(a2, s2, p.sigma_bar2, target)
        if b is None or b <= 0:
            raise ValueError(f"decoy ({a2}, {s2}) has no admissible beta")
        out.append(ModelParams.from_alpha2(a2, b, s2, p.sigma_bar2))
    return out


def check_mle_consistency(theta=MLE_THETA, moves=MLE_DECOYS, n_seeds: int = 20, horizon: float = 1e4,
                          min_frac: float = 0.8, seed0: int = 1000, **filter_opts) -> CheckResult:
    """How often the true parameter wins a four-point likelihood contest."""

    def run():
        cands = decoy_set(theta, moves)
        wins, gaps = 0, []
        for k in range(n_seeds):
            path = simulate_path(SimConfig(cands[0], horizon, seed=seed0 + k))
            ll = run_batch(path, cands, **filter_opts).loglik
            wins += int(np.argmax(ll) == 0)
            gaps.append(ll[0] - ll[1:].max())
        frac = wins / n_seeds
        gap = float(np.mean(gaps))
        return CheckResult(
            "MLE picks theta* among decoys",
            frac >= min_frac and gap > 0,
            frac,
            min_frac,
            f"{wins}/{n_seeds} wins, mean gap to best decoy {gap:.2f}",
            extra={"gaps": gaps},
        )

    return _timed(run)


def check_epsilon(theta=EPSILON_THETA, eps: float = 0.1, horizon: float = 5e4, n_seeds: int = 20,
                  band=(0.07, 0.13), min_count: int = 16, seed0: int = 0) -> CheckResult:
    """Spread half-width estimate with the true ``gamma``."""

    def run():
        p = _params(theta, eps)
        ests = []
        for k in range(n_seeds):
            path = simulate_path(SimConfig(p, horizon, seed=seed0 + k, x0="uniform"))
            ests.append(solve_epsilon(wide_spread_fraction(path), p.gamma)[0])
        ests = np.array(ests)
        inside = int(np.sum((ests >= band[0]) & (ests <= band[1])))
        return CheckResult(
            "epsilon estimate",
            inside >= min_count,
            inside,
            min_count,
            f"{inside}/{n_seeds} in [{band[0]}, {band[1]}], range {ests.min():.4f}..{ests.max():.4f}",
        )

    return _timed(run)


def check_performance(theta=PERF_THETA, horizon: float = 16_200, seed: int = 0,
                      budget_s: float = PERF_BUDGET_S, workers: int = 1) -> CheckResult:
    """Full default 100 x 100 grid on a session-length path, with kernel-reuse accounting.

    One kernel must be built per admissible candidate, and every candidate
    must be advanced once per observation step.
    """
    from .pipeline import estimate_session

    def run():
        path = simulate_path(SimConfig(_params(theta), horizon, seed=seed, x0="uniform"))
        builds0, steps0 = STATS["kernel_builds"], STATS["candidate_steps"]
        t0 = time.perf_counter()
        res, _ = estimate_session(path, workers=workers)
        elapsed = time.perf_counter() - t0
        n = res.meta["n_candidates"]
        builds = STATS["kernel_builds"] - builds0
        steps = STATS["candidate_steps"] - steps0
        # worker processes keep their own counters; the result metadata covers them
        counted = workers > 1 or (builds == n and steps == n * (len(path) - 1))
        reuse = res.meta["kernel_builds"] == n and counted
        return CheckResult(
            "full grid performance",
            elapsed <= budget_s and reuse,
            elapsed,
            budget_s,
            f"{n} candidates ({res.meta['excluded']} inadmissible of {n + res.meta['excluded']}), "
            f"{len(path) - 1} steps, kernel builds {res.meta['kernel_builds']}, "
            f"candidate-steps {steps}, {workers} worker(s)",
            extra={"n_candidates": n, "kernel_builds": builds, "candidate_steps": steps},
        )

    return _timed(run)


def check_invert_beta(n: int = 50, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """``Sigma`` at the inverted ``beta`` reproduces the target."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n):
            a2 = rng.uniform(0.5, 4.0)
            sb2 = rng.uniform(0.1, 2.0)
            s2 = rng.uniform(0.05, 0.95) * a2 * sb2
            target = s2 / math.exp(rng.uniform(0.01, 3.0))
            b = invert_beta(a2, s2, sb2, target)
            back = big_sigma(ModelParams.from_alpha2(a2, b, s2, sb2))
            worst = max(worst, abs(back - target) / target)
        return CheckResult("beta inversion round trip", worst <= tol, worst, tol, f"{n} random cases")

    return _timed(run)


def check_data_roundtrip(seed: int = 0) -> CheckResult:
    """Dataset and result files read back exactly."""

    def run():
        import tempfile
        from pathlib import Path

        p = ModelParams(1.0, 1.0, 0.5, 1.0, eps=0.1)
        path = simulate_path(SimConfig(p, 200, seed=seed))
        with tempfile.TemporaryDirectory() as d:
            f = Path(d) / "data.csv"
            write_dataset(path, f)
            back = load_dataset(f)
            same_path = (np.array_equal(back.order_flow, path.order_flow) and np.array_equal(back.bid, path.bid)
                         and np.array_equal(back.ask, path.ask) and np.array_equal(back.latent, path.latent))
            res = EstimationResult(1.0, 0.5, 1.0, 1.0, 0.5, 0.1, surface=np.arange(8.0).reshape(2, 4) / 3.0,
                                   meta={"seed": seed})
            r = Path(d) / "res.txt"
            save_result(res, r)
            first = r.read_bytes()
            save_result(load_result(r), r)
            same_res = first == r.read_bytes()
        ok = same_path and same_res
        return CheckResult("data round trip", ok, float(not ok), 0.0, "dataset and result files")

    return _timed(run)


def quick_battery(seed: int = 0) -> list[CheckResult]:
    """Reduced-size battery used by the command line (a few minutes)."""
    out = [check_special_functions(), check_identifiability_ratio(), check_invert_beta(seed=seed), check_data_roundtrip(seed)]
    for theta in EXIT_TIME_BATTERY[:2]:
        out.append(check_exit_time(theta, n_paths=2000, seed=seed))
    out.append(check_stationary_density(2.0, horizon=5e4, seed=seed))
    out.append(check_sigma_bar2(seed=seed))
    out.append(check_sigma_hat(n_seeds=5, seed0=seed))
    out.append(check_filter_vs_particles(n_particles=20_000, tol=0.025, seed=7 + seed))
    return out


def full_battery(seed: int = 0) -> list[CheckResult]:
    """Acceptance-size battery (tens of minutes on one core)."""
    out = [check_exit_time(t, seed=seed) for t in EXIT_TIME_BATTERY]
    out.append(check_special_functions())
    out += [check_stationary_density(g, seed=seed) for g in STATIONARY_GAMMAS]
    out += [check_sigma_hat(seed0=seed), check_sigma_bar2(seed=seed), check_filter_vs_particles(),
            check_identifiability_ratio(), check_mle_consistency(), check_epsilon(seed0=seed),
            check_performance(seed=seed)]
    return out
