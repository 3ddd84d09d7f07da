"""Case configuration and deterministic scenario generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..backlund import aux_U0, integrate_backlund, seed_pair
from ..calg import principal_sqrt, random_complex
from ..errors import ConfigError, DomainError, GenerationError, QuadlabError
from ..frameflow import DeformationState, PathData, admissible_state, integrate_path, random_path, zero_path
from ..quadric import ConfocalParam, QuadricSpec, chart_G

log = logging.getLogger(__name__)

FAULTS = ("none", "r0_orth", "u0_singular")
PATHS = ("random", "zero")

# screening keeps generated cases inside a bounded chart region, away from
# the chart's point at infinity and from vanishing U0; a coarse dry run must
# stay below SCREEN_LIMIT, which leaves RK4 at 1000 steps ~1e4 times smaller
SCREEN_STEPS = 100
SCREEN_LIMIT = 1e-3
CHART_BOUND = 4.0
CHART_MARGIN = 0.05
U0_MARGIN = 0.05
MAX_RETRIES = 50

PATH_AMPLITUDE = 0.3
SKEW_SCALE = 0.3

# independent random streams, so an explicit `a` or `z` never shifts the rest
STREAMS = ("spec", "state", "path", "z")


@dataclass(frozen=True)
class CaseConfig:
    n: int = 2
    a: tuple[complex, ...] | None = None
    z: tuple[complex, ...] | None = None
    z_count: int = 5
    seed: int = 0
    steps: int = 1000
    T: float = 1.0
    tol_alg: float = 1e-9
    tol_ode: float = 1e-6
    tol_exact: float = 1e-12
    samples: int = 100
    path: str = "random"
    fault: str = "none"

    def validate(self) -> "CaseConfig":
        if not 2 <= self.n <= 4:
            raise ConfigError(f"n must be in 2..4, got {self.n}")
        if self.a is not None:
            if len(self.a) != self.n + 1:
                raise ConfigError(f"a needs n+1 = {self.n + 1} entries, got {len(self.a)}")
            try:
                QuadricSpec(np.array(self.a))
            except DomainError as exc:
                raise ConfigError(str(exc)) from exc
        if self.z is not None:
            if not self.z:
                raise ConfigError("z list is empty")
            for z in self.z:
                if abs(z) < 1e-3:
                    raise ConfigError(f"z={z} is within 1e-3 of 0")
                if self.a is not None and min(abs(z - aj) for aj in self.a) < 1e-3:
                    raise ConfigError(f"z={z} is within 1e-3 of a semiaxis parameter")
        if self.z_count < 1 or self.steps < 1 or self.samples < 1:
            raise ConfigError("z_count, steps and samples must be >= 1")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if min(self.tol_alg, self.tol_ode, self.tol_exact) <= 0:
            raise ConfigError("tolerances must be positive")
        if self.path not in PATHS:
            raise ConfigError(f"path must be one of {PATHS}")
        if self.fault not in FAULTS:
            raise ConfigError(f"fault must be one of {FAULTS}")
        return self


def _parse_complex_list(text: str) -> tuple[complex, ...]:
    try:
        return tuple(complex(tok.strip().replace(" ", "")) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex list {text!r}") from exc


_CASTS = {
    "n": int,
    "seed": int,
    "steps": int,
    "z_count": int,
    "samples": int,
    "T": float,
    "tol_alg": float,
    "tol_ode": float,
    "tol_exact": float,
    "a": _parse_complex_list,
    "z": _parse_complex_list,
    "path": str,
    "fault": str,
}


def parse_config(text: str, **overrides) -> CaseConfig:
    """Flat key=value text; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CASTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CASTS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    return CaseConfig(**values).validate()


def dump_config(cfg: CaseConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        if isinstance(val, tuple):
            val = ",".join(repr(complex(v)) for v in val)
        lines.append(f"{f.name}={val}")
    return "\n".join(lines) + "\n"


@dataclass
class Scenario:
    config: CaseConfig
    spec: QuadricSpec
    state0: DeformationState
    path: PathData
    params: list[ConfocalParam]
    pair_seeds: list[int]
    retries: dict[str, int] = field(default_factory=dict)

    def resolved_config(self) -> CaseConfig:
        """Config with the generated a and z written out explicitly."""
        return replace(
            self.config,
            a=tuple(complex(x) for x in self.spec.a),
            z=tuple(p.z for p in self.params),
        )


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def check_rng(seed: int, suite: str) -> np.random.Generator:
    """Sampling stream for property checks, fixed per (seed, suite)."""
    key = sum(ord(c) * 31**i for i, c in enumerate(suite)) % (2**31)
    return np.random.default_rng([seed, key])


def _random_spec(n: int, rng) -> QuadricSpec:
    for _ in range(MAX_RETRIES):
        a = random_complex(rng, n + 1)
        gaps = np.abs(a[:, None] - a[None, :]) + np.eye(n + 1) * 10
        if gaps.min() >= 0.1:
            return QuadricSpec(a)
    raise GenerationError("could not sample separated semiaxis parameters")


def _in_chart(V) -> bool:
    return bool(np.max(np.abs(V)) <= CHART_BOUND and abs(V @ V + 1) >= CHART_MARGIN)


def _base_ok(spec, state, path) -> bool:
    try:
        tr = integrate_path(spec, state, path, SCREEN_STEPS, limit=SCREEN_LIMIT)
    except QuadlabError:
        return False
    return all(_in_chart(s.V) for s in tr.states)


def _pair_ok(spec, state, path, param, pair_seed) -> bool:
    try:
        pair = seed_pair(spec, param, state, pair_seed)
        tr = integrate_backlund(spec, param, state, path, pair.state1.R, SCREEN_STEPS, limit=SCREEN_LIMIT)
    except QuadlabError:
        return False
    for k in range(SCREEN_STEPS + 1):
        V0, V1 = tr.base.states[k].V, tr.V1[k]
        if not _in_chart(V1):
            return False
        if abs(aux_U0(spec, param.z, V0)) < U0_MARGIN or abs(aux_U0(spec, param.z, V1)) < U0_MARGIN:
            return False
    return True


def pair_seed(seed: int, z: complex, attempt: int = 0) -> int:
    """Partner-frame seed fixed by (seed, z, attempt), so explicit z lists replay."""
    bits = np.array([z.real, z.imag]).view(np.uint64)
    ss = np.random.SeedSequence([seed, int(bits[0]), int(bits[1]), attempt])
    return int(ss.generate_state(1)[0])


def _random_z(spec: QuadricSpec, rng) -> complex:
    for _ in range(MAX_RETRIES):
        z = complex(random_complex(rng))
        if abs(z) >= 1e-3 and np.min(np.abs(spec.a - z)) >= 1e-3:
            return z
    raise GenerationError("could not sample an admissible z")


def gen_case(config: CaseConfig) -> Scenario:
    """Deterministic scenario; inadmissible draws are resampled and counted."""
    config.validate()
    rs = _streams(config.seed)
    retries = {"spec": 0, "path": 0, "z": 0, "pair": 0}
    n = config.n

    spec = QuadricSpec(np.array(config.a)) if config.a is not None else _random_spec(n, rs["spec"])
    state = admissible_state(spec, rs["state"])

    if config.path == "zero":
        path = zero_path(n, config.T)
    else:
        for attempt in range(MAX_RETRIES):
            path = random_path(n, rs["path"], T=config.T, skew_scale=SKEW_SCALE).scaled(PATH_AMPLITUDE, 1.0)
            if _base_ok(spec, state, path):
                break
            retries["path"] += 1
            if attempt % 5 == 4:
                state = admissible_state(spec, rs["state"])
        else:
            raise GenerationError("no admissible path found")

    explicit_z = config.z is not None
    z_values = list(config.z) if explicit_z else [None] * config.z_count
    params, pair_seeds = [], []
    screen = config.fault == "none"
    for zv in z_values:
        z, attempt = zv, 0
        for _ in range(MAX_RETRIES):
            if not explicit_z:
                z = _random_z(spec, rs["z"])
            if np.min(np.abs(spec.a - z)) < 1e-3 or abs(z) < 1e-3:
                raise ConfigError(f"z={z} is within 1e-3 of a semiaxis parameter or 0")
            param = ConfocalParam.principal(z)
            pseed = pair_seed(config.seed, param.z, attempt)
            if not screen or _pair_ok(spec, state, path, param, pseed):
                break
            if explicit_z:
                attempt += 1
                retries["pair"] += 1
            else:
                retries["z"] += 1
        else:
            raise GenerationError(f"no admissible Backlund seed for z={zv}")
        params.append(param)
        pair_seeds.append(pseed)

    if any(retries.values()):
        log.info("gen_case seed=%d reseeded %s", config.seed, retries)
    scenario = Scenario(config, spec, state, path, params, pair_seeds, retries)
    return apply_fault(scenario)


def apply_fault(scenario: Scenario) -> Scenario:
    fault = scenario.config.fault
    st = scenario.state0
    n = st.n
    if fault == "r0_orth":
        E = np.zeros((n, n), dtype=complex)
        E[0, -1] = 1e-2
        scenario.state0 = DeformationState(st.V, st.Lam, st.R + E)
    elif fault == "u0_singular":
        # |V|^2 = (s+1)/(s-1) makes U0 vanish at the first z
        s = principal_sqrt(1 - scenario.params[0].z / scenario.spec.a_last)
        target = (s + 1) / (s - 1)
        V = st.V * principal_sqrt(target / (st.V @ st.V))
        G = chart_G(V)
        lam2 = -np.sum(G * G / scenario.spec.a)
        Lam = st.Lam * principal_sqrt(lam2 / (st.Lam @ st.Lam))
        scenario.state0 = DeformationState(V, Lam, st.R)
    return scenario
