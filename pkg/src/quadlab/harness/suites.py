"""Check suites run over a generated scenario.

Every check yields one CheckResult; exceptions are caught and recorded as
failed checks so one broken identity never hides the others.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .. import backlund as bk
from .. import calg, frameflow as ff, hazzidakis as hz, quadric as qd
from ..errors import SingularityError
from .scenario import Scenario, check_rng

log = logging.getLogger(__name__)

SUITES = ("calg", "quadric", "frameflow", "backlund", "hazzidakis", "commutation")

FD_STEP = 1e-5
METRIC_FD_STEP = 1e-3
ORDER_STEPS = (50, 100)
# the Ricatti flow can be fast; 50 steps is pre-asymptotic for some cases
RICATTI_ORDER_STEPS = (100, 200)
ORDER_TARGET = 4.0
ORDER_SLACK = 0.5
# drift this small is round-off, where step-halving ratios carry no information
ROUNDOFF_DRIFT = 1e-12

TRACE_COLUMNS = (
    "t",
    "prime_integral_res",
    "orth_res_R0",
    "orth_res_R1",
    "pair_res_1",
    "pair_res_2",
    "prime_integral_res_1",
    "dV1_consistency",
)


@dataclass
class CheckResult:
    name: str
    max_residual: float | None
    tol: float
    passed: bool
    signs: dict | None = None
    ms: float = 0.0
    message: str = ""
    suite: str = ""
    singular: bool = False

    def as_json(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        r = d["max_residual"]
        d["max_residual"] = r if r is not None and math.isfinite(r) else None
        return d


@dataclass
class CheckReport:
    case: dict
    checks: list[CheckResult] = field(default_factory=list)
    traces: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def singular(self) -> bool:
        return any(c.singular for c in self.checks)

    def exit_code(self) -> int:
        if self.singular:
            return 3
        return 0 if self.passed else 1

    def failed(self, suite: str | None = None) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed and (suite is None or c.suite == suite)]

    def merge(self, other: "CheckReport", prefix: str = "") -> None:
        for c in other.checks:
            c.name = prefix + c.name
            self.checks.append(c)
        for k, v in other.traces.items():
            self.traces[prefix + k] = v


class _Runner:
    """Collects results; `check` times a callable returning (residual, signs)."""

    def __init__(self, suite: str):
        self.suite = suite
        self.results: list[CheckResult] = []

    def check(self, name: str, tol: float, fn: Callable, message: str = ""):
        t0 = time.perf_counter()
        try:
            out = fn()
            residual, signs = out if isinstance(out, tuple) else (out, None)
            residual = float(residual)
            ok = math.isfinite(residual) and residual <= tol
            res = CheckResult(name, residual, tol, ok, signs, message=message)
        except Exception as exc:  # noqa: BLE001 - every failure becomes a report row
            res = CheckResult(
                name,
                None,
                tol,
                False,
                message=f"{type(exc).__name__}: {exc}",
                singular=isinstance(exc, SingularityError),
            )
            log.debug("check %s.%s raised", self.suite, name, exc_info=True)
        res.ms = (time.perf_counter() - t0) * 1e3
        res.suite = self.suite
        self.results.append(res)
        return res


def _max(values: Iterable[float]) -> float:
    vals = list(values)
    return float(max(vals)) if vals else 0.0


def _observed_order(coarse: float, fine: float) -> tuple[float, dict]:
    """|log2(coarse/fine) - 4|, or 0 when both drifts sit at round-off."""
    info = {"coarse": coarse, "fine": fine}
    if coarse < ROUNDOFF_DRIFT:
        info["order"] = None
        return 0.0, info
    order = math.log2(coarse / max(fine, 1e-300))
    info["order"] = order
    return abs(order - ORDER_TARGET), info


# ---------------------------------------------------------------- calg


def suite_calg(sc: Scenario) -> list[CheckResult]:
    cfg = sc.config
    rng = check_rng(cfg.seed, "calg")
    run = _Runner("calg")
    m = cfg.samples

    def sqrt_branch():
        a = calg.random_complex(rng, m)
        r = calg.principal_sqrt(a)
        bad = np.sum((r.real < 0) | ((r.real == 0) & (r.imag < 0)))
        return float(np.max(np.abs(r * r - a)) + bad)

    def jordan_nilpotent():
        worst = 0.0
        for p in range(1, calg.MAX_JORDAN_SIZE + 1):
            J = calg.sj_block(p)
            worst = max(worst, np.abs(J - J.T).max(), np.abs(np.linalg.matrix_power(J, p)).max())
        return worst

    def jordan_sqrt():
        worst = 0.0
        for p in range(1, calg.MAX_JORDAN_SIZE + 1):
            J = calg.sj_block(p)
            for a in calg.random_complex(rng, m):
                S = calg.sj_sqrt(a, p)
                worst = max(worst, np.abs(S @ S - (a * np.eye(p) + J)).max())
        return worst

    def orthogonal():
        return _max(calg.orthogonality_defect(calg.random_complex_orthogonal(cfg.n, rng)) for _ in range(m))

    run.check("principal_sqrt", cfg.tol_exact, sqrt_branch)
    run.check("jordan_block_nilpotent", cfg.tol_exact, jordan_nilpotent)
    run.check("jordan_sqrt_square", cfg.tol_exact, jordan_sqrt)
    run.check("complex_orthogonal", cfg.tol_exact, orthogonal)
    return run.results


# ---------------------------------------------------------------- quadric


def _random_chart_point(rng, n) -> np.ndarray:
    while True:
        V = calg.random_complex(rng, n, 0.1, 1.0)
        if abs(V @ V + 1) > 0.1:
            return V


def chart_metric_fd(V, dV) -> complex:
    """|dX|^2 by a fourth-order stencil; the step shrinks near the chart pole."""
    dX = bk.flow_derivative(qd.chart_X, V, dV, METRIC_FD_STEP * abs(V @ V + 1))
    return complex(dX @ dX)


def tangency_curve(spec, z, V0, d, w):
    """(V0 + t d, partner on the fixed ray w), a smooth curve on the tangency variety."""

    def curve(t):
        V0t = V0 + t * d
        return V0t, qd.tangency_partner(spec, z, V0t, w)

    return curve


def suite_quadric(sc: Scenario) -> list[CheckResult]:
    cfg = sc.config
    spec = sc.spec
    n = spec.n
    rng = check_rng(cfg.seed, "quadric")
    run = _Runner("quadric")
    m = cfg.samples
    Vs = [_random_chart_point(rng, n) for _ in range(m)]
    dVs = [calg.random_complex(rng, n) for _ in range(m)]

    def unit_sphere():
        return _max(abs(calg.bnorm2(qd.chart_X(V)) - 1) for V in Vs)

    def metric_fd():
        return _max(abs(chart_metric_fd(V, dV) - qd.chart_metric_factor(V, dV)) for V, dV in zip(Vs, dVs))

    def on_base():
        return _max(abs(qd.confocal_eval(spec, 0, qd.x0_point(spec, V))) for V in Vs)

    run.check("chart_unit_sphere", cfg.tol_exact, unit_sphere)
    run.check("chart_metric_fd", cfg.tol_ode, metric_fd)
    run.check("x0_on_quadric", cfg.tol_exact, on_base)

    for k, p in enumerate(sc.params):
        z = p.z

        def membership(z=z):
            return _max(abs(qd.confocal_eval(spec, z, qd.ivory(spec, z, qd.x0_point(spec, V)))) for V in Vs)

        def distance(z=z):
            worst = 0.0
            for V, W in zip(Vs, Vs[1:] + Vs[:1]):
                P, Q = qd.x0_point(spec, V), qd.x0_point(spec, W)
                lhs = calg.bnorm2(qd.ivory(spec, z, P) - Q)
                rhs = calg.bnorm2(qd.ivory(spec, z, Q) - P)
                worst = max(worst, abs(lhs - rhs))
            return worst

        def forms(z=z):
            worst = 0.0
            for V0 in Vs:
                V1 = qd.tangency_point(spec, z, V0, rng)
                f1, f2, f3 = qd.tangency_residuals(spec, z, V0, V1)
                scale = (V0 @ V0 + 1) * (V1 @ V1 + 1)
                worst = max(worst, abs(f1), abs(f2 / scale), abs(f3), abs(f2 / scale - f1))
            return worst

        def differential(z=z):
            worst = 0.0
            for V0, d in list(zip(Vs, dVs))[: max(1, m // 10)]:
                w = calg.random_complex(rng, n)
                curve = tangency_curve(spec, z, V0, 0.1 * d, w)
                worst = max(worst, qd.tangency_differential_check(spec, z, curve, [0.0, 0.5, 1.0]))
            return worst

        run.check(f"ivory_membership[z{k}]", cfg.tol_alg, membership)
        run.check(f"ivory_distance_symmetry[z{k}]", cfg.tol_alg, distance)
        run.check(f"tangency_forms[z{k}]", cfg.tol_alg, forms)
        run.check(f"tangency_differential[z{k}]", cfg.tol_ode, differential)
    return run.results


# ---------------------------------------------------------------- frameflow


def prime_integral_rate(spec, state, path, t) -> complex:
    """Analytic d/dt of the prime integral along the state velocity."""
    Vd, Ld, _ = ff.state_velocity(spec, state, path, t)
    G = qd.chart_G(state.V)
    Gd = np.append(2 * Vd, 2 * (state.V @ Vd))
    return complex(2 * state.Lam @ Ld + 2 * np.sum(G * Gd / spec.a))


def base_trace(tr: ff.Trajectory) -> np.ndarray:
    rows = np.full((tr.times.size, len(TRACE_COLUMNS)), np.nan)
    rows[:, 0] = tr.times
    rows[:, 1] = tr.prime_res
    rows[:, 2] = tr.orth_res
    return rows


def suite_frameflow(sc: Scenario, traces: dict | None = None) -> list[CheckResult]:
    cfg = sc.config
    spec, st, path = sc.spec, sc.state0, sc.path
    rng = check_rng(cfg.seed, "frameflow")
    run = _Runner("frameflow")
    ts = np.linspace(0, path.T, 5)

    run.check("initial_prime_integral", cfg.tol_exact, lambda: abs(ff.prime_integral_residual(spec, st)))
    run.check("initial_orthogonality", cfg.tol_exact, lambda: calg.orthogonality_defect(st.R))

    def omega_cancel():
        worst = 0.0
        for t in ts:
            om = ff.omega_along(path, t)
            for _ in range(10):
                L = calg.random_complex(rng, spec.n)
                worst = max(worst, abs(L @ om @ L))
        return worst

    def rate():
        return _max(abs(prime_integral_rate(spec, st, path, t)) for t in ts)

    def trajectory():
        tr = ff.integrate_path(spec, st, path, cfg.steps)
        if traces is not None:
            traces["base"] = base_trace(tr)
        return max(tr.prime_drift, tr.orth_drift)

    def order():
        coarse, fine = (ff.integrate_path(spec, st, path, k).prime_drift for k in ORDER_STEPS)
        return _observed_order(coarse, fine)

    def fundamental_form():
        g = ff.first_fundamental_form(spec, st)
        J = st.R * st.Lam[None, :]
        cols = [
            (qd.x0_point(spec, st.V + FD_STEP * J[:, j]) - qd.x0_point(spec, st.V - FD_STEP * J[:, j])) / (2 * FD_STEP)
            for j in range(spec.n)
        ]
        Jx = np.column_stack(cols)
        return float(np.abs(Jx.T @ Jx - g).max() / max(1.0, np.abs(g).max()))

    run.check("omega_skew_cancellation", cfg.tol_exact, omega_cancel)
    run.check("prime_integral_rate", cfg.tol_exact * 10, rate)
    run.check("integrated_drift", cfg.tol_ode, trajectory)
    run.check("step_halving_order", ORDER_SLACK, order, "|log2(drift ratio) - 4| on the prime integral")
    run.check("first_fundamental_form_fd", cfg.tol_ode, fundamental_form)
    return run.results


# ---------------------------------------------------------------- backlund


def backlund_trace(tr: bk.BacklundTrajectory) -> np.ndarray:
    rows = base_trace(tr.base)
    rows[:, 3] = tr.orth_R1
    rows[:, 4] = tr.pair_res_1
    rows[:, 5] = tr.pair_res_2
    rows[:, 6] = tr.prime_res_1
    rows[:, 7] = tr.dv1_consistency
    return rows


def _pair_norms(spec, pair) -> float:
    r1, r2 = bk.pair_residuals(spec, pair)
    return max(float(np.linalg.norm(r1)), float(np.linalg.norm(r2)))


def suite_backlund(sc: Scenario, traces: dict | None = None) -> list[CheckResult]:
    cfg = sc.config
    spec, st, path = sc.spec, sc.state0, sc.path
    n = spec.n
    rng = check_rng(cfg.seed, "backlund")
    run = _Runner("backlund")

    def z_zero_limits():
        return max(abs(bk.aux_U0(spec, 0, st.V) + 2), float(np.abs(bk.aux_W0(spec, 0, st.V)).max()))

    run.check("aux_z0_limits", cfg.tol_exact, z_zero_limits)

    for k, (param, pseed) in enumerate(zip(sc.params, sc.pair_seeds)):
        tag = f"[z{k}]"
        cache: dict = {}

        def pair(param=param, pseed=pseed, cache=cache):
            if "pair" not in cache:
                cache["pair"] = bk.seed_pair(spec, param, st, pseed)
            return cache["pair"]

        def aux_fd(param=param):
            dV = calg.random_complex(rng, n)
            hi, lo = bk.aux(spec, param, st.V + FD_STEP * dV), bk.aux(spec, param, st.V - FD_STEP * dV)
            a0 = bk.aux(spec, param, st.V)
            dVe = spec.embed(dV)
            rP = np.abs((hi.P0 - lo.P0) / (2 * FD_STEP) - 2 * a0.M0 @ dVe).max()
            rU = abs((hi.U0 - lo.U0) / (2 * FD_STEP) - 2 * a0.W0 @ dVe)
            return max(float(rP), rU)

        def consistency():
            return pair().info["consistency"]

        def seeded_residuals():
            return _pair_norms(spec, pair())

        def seeded_frame():
            return calg.orthogonality_defect(pair().state1.R)

        def seeded_prime():
            return abs(ff.prime_integral_residual(spec, pair().state1))

        def symmetry():
            p = pair()
            r1, r2 = bk.pair_residuals(spec, p)
            swapped = bk.BacklundPair(p.state1, p.state0, p.param.flipped())
            s1, s2 = bk.pair_residuals(spec, swapped)
            return max(np.abs(s1 - r2).max(), np.abs(s2 - r1).max())

        def stabilizer():
            p = pair()
            R1 = p.state1.R
            V1a, _ = bk.algebraic_step(spec, param, st, R1)
            V1b, _ = bk.algebraic_step(spec, param, st, R1 @ bk.stabilizer_element(st.Lam, rng))
            return float(np.abs(V1a - V1b).max())

        def inversion():
            p = pair()
            V0r, L0r = bk.invert_pair(spec, p)
            return max(np.abs(V0r - st.V).max(), np.abs(L0r - st.Lam).max())

        def ricatti_dual(param=param):
            worst = 0.0
            for t in np.linspace(0, path.T, 5):
                R1 = calg.random_complex_orthogonal(n, rng)
                a = bk.ricatti_rhs(spec, param, st, path, t, R1)
                b = bk.ricatti_rhs_expanded(spec, param, st, path, t, R1)
                worst = max(worst, np.abs(a - b).max() / max(1.0, np.abs(a).max()))
            return worst

        def ricatti_quadratic(param=param):
            R1 = pair().state1.R
            E = calg.random_complex(rng, (n, n))
            g = [bk.ricatti_rhs(spec, param, st, path, 0.3, R1 + 0.1 * e * E) for e in (-1, 0, 1, 2)]
            third = g[3] - 3 * g[2] + 3 * g[1] - g[0]
            return float(np.abs(third).max() / max(1.0, np.abs(g[1]).max()))

        def trajectory(param=param):
            tr = bk.integrate_backlund(spec, param, st, path, pair().state1.R, cfg.steps)
            cache["trajectory"] = tr
            if traces is not None:
                traces[f"z{k}"] = backlund_trace(tr)
            mon = tr.max_monitors()
            return max(mon.values()), None

        def order(param=param):
            coarse, fine = (
                bk.integrate_backlund(spec, param, st, path, pair().state1.R, s, limit=np.inf).orth_R1.max()
                for s in RICATTI_ORDER_STEPS
            )
            return _observed_order(coarse, fine)

        run.check(f"aux_derivatives_fd{tag}", cfg.tol_ode, aux_fd)
        run.check(f"seed_consistency{tag}", cfg.tol_alg, consistency)
        run.check(f"seed_pair_residuals{tag}", cfg.tol_alg, seeded_residuals)
        run.check(f"seed_frame_orthogonal{tag}", cfg.tol_alg, seeded_frame)
        run.check(f"seed_prime_integral_1{tag}", cfg.tol_alg, seeded_prime)
        run.check(f"pair_swap_symmetry{tag}", cfg.tol_exact, symmetry)
        run.check(f"stabilizer_invariance{tag}", cfg.tol_alg, stabilizer)
        run.check(f"inversion{tag}", cfg.tol_alg, inversion)
        run.check(f"ricatti_dual_forms{tag}", cfg.tol_exact, ricatti_dual)
        run.check(f"ricatti_quadratic{tag}", cfg.tol_alg, ricatti_quadratic)
        run.check(f"trajectory_monitors{tag}", cfg.tol_ode, trajectory)
        if sc.config.path != "zero":
            run.check(f"orth_R1_order{tag}", ORDER_SLACK, order, "|log2(drift ratio) - 4| on R1 orthogonality")
    return run.results


# ---------------------------------------------------------------- hazzidakis


def suite_hazzidakis(sc: Scenario) -> list[CheckResult]:
    cfg = sc.config
    spec, st, path = sc.spec, sc.state0, sc.path
    rng = check_rng(cfg.seed, "hazzidakis")
    run = _Runner("hazzidakis")
    hmap = hz.transform_spec(spec)
    tol13 = cfg.tol_exact / 10

    def involution():
        back = hz.transform_spec(hmap.target).target
        return float(np.abs(back.a - spec.a).max())

    def z_involution():
        back = hz.transform_spec(hmap.target)
        return _max(abs(hz.z_map(back, hz.z_map(hmap, p.z)) - p.z) for p in sc.params)

    def constraint():
        return _max(hz.constraint_identity(hmap, p.z) for p in sc.params)

    def resolvent_identity():
        return _max(hz.confocal_parameter_identity(hmap, p.z) for p in sc.params)

    def homography_membership():
        worst = 0.0
        for p in sc.params:
            zt = hz.z_map(hmap, p.z)
            for _ in range(cfg.samples // 5 + 1):
                V = _random_chart_point(rng, spec.n)
                x = qd.ivory(spec, p.z, qd.x0_point(spec, V))
                worst = max(worst, abs(qd.confocal_eval(hmap.target, zt, hz.homography(hmap, x))))
        return worst

    def chart():
        m = hz.chart_correspondence(hmap, st.V)
        half = hz.chart_correspondence(hmap, st.V / 2)
        same = bool(np.array_equal(m.sigma, half.sigma) and m.branch == half.branch)
        signs = {"sigma": m.sigma.tolist(), "branch": m.branch, "stable_at_half": same}
        return max(m.residual, half.residual), signs

    def transport():
        tilde, _ = hz.transform_state(hmap, st)
        return abs(ff.prime_integral_residual(hmap.target, tilde))

    def omega_preserved():
        _, tpath = hz.transform_state(hmap, st, path)
        return _max(float(np.abs(ff.omega_along(tpath, t) - ff.omega_along(path, t)).max()) for t in (0.0, 0.5, 1.0))

    run.check("parameter_involution", tol13, involution)
    run.check("z_map_involution", tol13, z_involution)
    run.check("constraint_identity", tol13, constraint)
    run.check("resolvent_identity", cfg.tol_exact, resolvent_identity)
    run.check("amatrix_identity", cfg.tol_exact, lambda: hz.amatrix_identity(hmap))
    run.check("homography_membership", cfg.tol_alg, homography_membership)
    run.check("chart_correspondence", cfg.tol_alg, chart)
    run.check("prime_integral_transport", cfg.tol_exact, transport)
    run.check("omega_preserved", tol13, omega_preserved)
    return run.results


# ---------------------------------------------------------------- commutation


def suite_commutation(sc: Scenario) -> list[CheckResult]:
    cfg = sc.config
    spec, st, path = sc.spec, sc.state0, sc.path
    run = _Runner("commutation")
    hmap = hz.transform_spec(spec)
    tol = 10 * cfg.tol_alg

    for k, (param, pseed) in enumerate(zip(sc.params, sc.pair_seeds)):
        cache: dict = {}

        def seeded(param=param, pseed=pseed):
            cache["pair"] = bk.seed_pair(spec, param, st, pseed)
            r = hz.commutation_check(hmap, cache["pair"])
            return r.residual, r.signs()

        def transported(param=param):
            tr = bk.integrate_backlund(spec, param, st, path, cache["pair"].state1.R, cfg.steps)
            r = hz.commutation_check(hmap, tr.pair_at(tr.times.size - 1))
            return r.residual, r.signs()

        run.check(f"tilde_pair[z{k}]", tol, seeded)
        if "pair" in cache:
            run.check(f"tilde_pair_at_T[z{k}]", tol, transported)
    return run.results


_SUITE_FUNCS = {
    "calg": suite_calg,
    "quadric": suite_quadric,
    "frameflow": suite_frameflow,
    "backlund": suite_backlund,
    "hazzidakis": suite_hazzidakis,
    "commutation": suite_commutation,
}


def case_descriptor(sc: Scenario) -> dict:
    cfg = sc.config
    return {
        "n": sc.spec.n,
        "a": [[float(x.real), float(x.imag)] for x in sc.spec.a],
        "z": [[float(p.z.real), float(p.z.imag)] for p in sc.params],
        "seed": cfg.seed,
        "steps": cfg.steps,
        "T": cfg.T,
        "tol_alg": cfg.tol_alg,
        "tol_ode": cfg.tol_ode,
        "tol_exact": cfg.tol_exact,
        "path": cfg.path,
        "fault": cfg.fault,
        "retries": dict(sc.retries),
    }


def resolve_suites(names: Iterable[str]) -> list[str]:
    names = list(names)
    if "all" in names:
        return list(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    return names


def run_suite(sc: Scenario, suites: Iterable[str] = ("all",), *, trace: bool = False) -> CheckReport:
    report = CheckReport(case_descriptor(sc))
    traces: dict | None = {} if trace else None
    for name in resolve_suites(suites):
        fn = _SUITE_FUNCS[name]
        kwargs = {"traces": traces} if name in ("frameflow", "backlund") else {}
        try:
            report.checks.extend(fn(sc, **kwargs))
        except Exception as exc:  # noqa: BLE001 - suite setup failure becomes a failed row
            report.checks.append(
                CheckResult(
                    f"{name}_setup",
                    None,
                    0.0,
                    False,
                    message=f"{type(exc).__name__}: {exc}",
                    suite=name,
                    singular=isinstance(exc, SingularityError),
                )
            )
    if traces:
        report.traces = traces
    return report
