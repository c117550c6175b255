"""Run configuration and artifact serialization.

Configurations are single YAML documents with four sections (``model``,
``mcmc``, ``solver``, ``io``) plus optional ``benchmark`` and
``hyperparameters`` sections.  Parsing is strict: unknown keys are
rejected so a typo in a prior bound cannot silently corrupt inference.

This module also owns the JSON schema for kernel hyperparameters (used by
the posterior-sample JSONL stream) and the tabular data reader.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .basis import BasisFunctions, basis_from_spec, natural_cubic_basis, polynomial_basis
from .errors import ConfigError, DataValidationError
from .kernels import (
    ConstantCore,
    HeteroskedasticNoise,
    HomoskedasticNoise,
    KernelHyperparameters,
    ParametricNonstationary,
    SparseKernelParams,
    StationaryMatern,
)
from .mcmc import McmcConfig
from .model import Dataset, ModelSpec, PriorSpec, SolverOptions

__all__ = [
    "RunConfig",
    "load_config",
    "theta_to_dict",
    "theta_from_dict",
    "read_table",
    "write_csv_atomic",
    "write_text_atomic",
    "config_fingerprint",
]

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# config sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSection:
    core: str = "matern"
    smoothness: float = 1.5
    sparse: bool = True
    n1: int = 2
    n2: int = 2
    basis_type: str = "natural_cubic"
    basis_columns: int = 4
    noise: str = "infer"  # infer | fixed | column
    fixed_tau2: float = 0.0
    coordinate_bounds: Optional[list] = None  # default: data range
    d0: Optional[float] = None
    dr: Optional[float] = None
    tau2_upper: Optional[float] = None
    s0_upper: float = 1e5
    reg_variance_upper: float = 1e5
    beta_variance: float = 100.0**2
    core_variance: Optional[float] = None  # pin the Matern core variance
    core_variance_upper: Optional[float] = None  # default: 4 * var(z)
    core_length_upper: Optional[float] = None


@dataclass(frozen=True)
class McmcSection:
    iterations: int = 2000
    seed: int = 0
    burn_in_fraction: float = 0.8
    thin: int = 1
    warmup: int = 200
    adapt_interval: int = 50
    initial_scale: float = 0.1
    adapt: bool = True


@dataclass(frozen=True)
class SolverSection:
    method: str = "auto"
    dense_threshold: int = 5000
    probes: int = 30
    steps: int = 50
    slq_seed: int = 0
    minres_tol: float = 1e-8
    minres_max_iter_factor: int = 10
    batch_size: int = 512
    workers: int = 0  # 0 means: use available hardware parallelism


@dataclass(frozen=True)
class IoSection:
    output_dir: str = "."


@dataclass(frozen=True)
class BenchmarkSection:
    scenarios: tuple = ("S1", "S2", "S3", "S4")
    models: tuple = ("M1", "M3", "M4")
    replicates: int = 20
    mcmc_iterations: int = 2000
    prediction_draws: int = 150


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    mcmc: McmcSection = field(default_factory=McmcSection)
    solver: SolverSection = field(default_factory=SolverSection)
    io: IoSection = field(default_factory=IoSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    hyperparameters: Optional[dict] = None  # fixed theta for kernel-export
    raw: dict = field(default_factory=dict, compare=False)

    # -- derived objects ---------------------------------------------------

    def model_spec(self, dim: int, domain_bounds: np.ndarray) -> ModelSpec:
        m = self.model
        basis = None
        if m.core == "nonstationary":
            lo, hi = float(domain_bounds[0, 0]), float(domain_bounds[0, 1])
            if m.basis_type == "natural_cubic":
                basis = natural_cubic_basis(m.basis_columns, lo, hi)
            elif m.basis_type == "polynomial":
                basis = polynomial_basis(m.basis_columns, lo, hi)
            else:
                raise ConfigError(f"unknown basis type {m.basis_type!r}")
        return ModelSpec(
            core=m.core,
            smoothness=m.smoothness,
            sparse=m.sparse,
            n1=m.n1,
            n2=m.n2,
            basis=basis,
            infer_noise=(m.noise == "infer"),
            fixed_tau2=m.fixed_tau2,
            core_variance=m.core_variance,
        )

    def priors(self, data: Dataset) -> PriorSpec:
        m = self.model
        if m.coordinate_bounds is not None:
            bounds = np.atleast_2d(np.asarray(m.coordinate_bounds, dtype=float))
        else:
            bounds = np.column_stack([data.x.min(axis=0), data.x.max(axis=0)])
            span = bounds[:, 1] - bounds[:, 0]
            span = np.where(span > 0, span, 1.0)
            bounds = np.column_stack([bounds[:, 0] - 0.05 * span, bounds[:, 1] + 0.05 * span])
        var = float(np.var(data.z)) if data.n > 1 else 1.0
        tau2_upper = m.tau2_upper if m.tau2_upper is not None else max(2.0 * var, 1e-6)
        if m.core_variance_upper is not None:
            core_variance_upper = m.core_variance_upper
        else:
            core_variance_upper = max(4.0 * var, 1e-3)
        return PriorSpec.for_domain(
            coordinate_bounds=bounds,
            tau2_upper=tau2_upper,
            d0=m.d0,
            dr=m.dr,
            s0_upper=m.s0_upper,
            reg_variance_upper=m.reg_variance_upper,
            beta_variance=m.beta_variance,
            core_variance_upper=core_variance_upper,
            core_length_upper=m.core_length_upper if m.core_length_upper is not None else 0.0,
        )

    def mcmc_config(self, **overrides) -> McmcConfig:
        c = self.mcmc
        kwargs = dict(
            warmup=c.warmup,
            adapt_interval=c.adapt_interval,
            initial_scale=c.initial_scale,
            adapt=c.adapt,
            thin=c.thin,
            burn_in_fraction=c.burn_in_fraction,
        )
        kwargs.update(overrides)
        return McmcConfig(**kwargs)

    def solver_options(self, workers_override: Optional[int] = None) -> SolverOptions:
        s = self.solver
        workers = workers_override if workers_override is not None else s.workers
        if workers == 0:
            env = os.environ.get("SPARSEGP_WORKERS")
            workers = int(env) if env else (os.cpu_count() or 1)
        return SolverOptions(
            method=s.method,
            dense_threshold=s.dense_threshold,
            probes=s.probes,
            steps=s.steps,
            slq_seed=s.slq_seed,
            minres_tol=s.minres_tol,
            minres_max_iter_factor=s.minres_max_iter_factor,
            batch_size=s.batch_size,
            workers=workers,
        )


_SECTIONS = {
    "model": ModelSection,
    "mcmc": McmcSection,
    "solver": SolverSection,
    "io": IoSection,
    "benchmark": BenchmarkSection,
}


def _build_section(cls, data: dict, prefix: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{prefix}.{sorted(unknown)[0]}'")
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list) and f.name in ("scenarios", "models"):
            value = tuple(value)
        coerced[f.name] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{prefix}' section: {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse and strictly validate a YAML run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    unknown = set(raw) - set(_SECTIONS) - {"hyperparameters"}
    if unknown:
        raise ConfigError(f"unknown section '{sorted(unknown)[0]}'")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if section is None:
            section = {}
        if not isinstance(section, dict):
            raise ConfigError(f"section '{name}' must be a mapping")
        kwargs[name] = _build_section(cls, section, name)
    hyper = raw.get("hyperparameters")
    if hyper is not None and not isinstance(hyper, dict):
        raise ConfigError("section 'hyperparameters' must be a mapping")
    return RunConfig(hyperparameters=hyper, raw=raw, **kwargs)


def config_fingerprint(config: RunConfig) -> str:
    """Stable SHA-256 of the parsed configuration."""
    canonical = json.dumps(config.raw, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# hyperparameter JSON schema
# ---------------------------------------------------------------------------


def theta_to_dict(theta: KernelHyperparameters) -> dict:
    """Serialize hyperparameters to plain JSON types (schema documented in README)."""
    core = theta.core
    if isinstance(core, ConstantCore):
        core_d = {"type": "constant", "value": core.value}
    elif isinstance(core, StationaryMatern):
        core_d = {
            "type": "matern",
            "variance": core.variance,
            "length_scale": core.length_scale,
            "smoothness": core.smoothness,
        }
    elif isinstance(core, ParametricNonstationary):
        if not isinstance(core.sigma_basis, BasisFunctions):
            raise ConfigError("only serializable basis functions can be written to JSON")
        core_d = {
            "type": "nonstationary",
            "log_sigma0": core.log_sigma0,
            "log_Sigma0": core.log_Sigma0,
            "sigma_coeffs": core.sigma_coeffs.tolist(),
            "Sigma_coeffs": core.Sigma_coeffs.tolist(),
            "reg_variance_sigma": core.reg_variance_sigma,
            "reg_variance_Sigma": core.reg_variance_Sigma,
            "smoothness": core.smoothness,
            "basis": core.sigma_basis.spec,
        }
    else:
        raise ConfigError(f"unknown core kernel {type(core).__name__}")

    sp = theta.sparse
    r0 = sp.wendland_radius
    sparse_d = {
        "scale": sp.scale,
        "wendland_radius": (float(r0) if np.ndim(r0) == 0 else np.asarray(r0).tolist()),
        "centroids": sp.centroids.tolist(),
        "amplitudes": sp.amplitudes.tolist(),
        "shapes": sp.shapes.tolist(),
        "radii": sp.radii.tolist(),
        "inclusion_probs": sp.inclusion_probs.tolist(),
        "dim": sp.dim,
    }
    if isinstance(theta.noise, HomoskedasticNoise):
        noise_d = {"type": "homoskedastic", "tau2": theta.noise.tau2}
    else:
        noise_d = {"type": "heteroskedastic", "tau2": theta.noise.tau2.tolist()}
    return {"core": core_d, "sparse": sparse_d, "noise": noise_d}


def theta_from_dict(d: dict) -> KernelHyperparameters:
    """Rebuild hyperparameters from their JSON form."""
    core_d = d["core"]
    kind = core_d["type"]
    if kind == "constant":
        core = ConstantCore(value=core_d.get("value", 1.0))
    elif kind == "matern":
        core = StationaryMatern(
            variance=core_d["variance"],
            length_scale=core_d["length_scale"],
            smoothness=core_d.get("smoothness", 1.5),
        )
    elif kind == "nonstationary":
        basis = basis_from_spec(core_d["basis"])
        core = ParametricNonstationary(
            log_sigma0=core_d["log_sigma0"],
            log_Sigma0=core_d["log_Sigma0"],
            sigma_coeffs=np.asarray(core_d["sigma_coeffs"], dtype=float),
            Sigma_coeffs=np.asarray(core_d["Sigma_coeffs"], dtype=float),
            sigma_basis=basis,
            Sigma_basis=basis,
            reg_variance_sigma=core_d.get("reg_variance_sigma", 1.0),
            reg_variance_Sigma=core_d.get("reg_variance_Sigma", 1.0),
            smoothness=core_d.get("smoothness", 1.5),
        )
    else:
        raise ConfigError(f"unknown core kernel type {kind!r}")

    sp_d = d["sparse"]
    r0 = sp_d["wendland_radius"]
    if isinstance(r0, str) or r0 is None:
        raise ConfigError("wendland_radius must be a number or list")
    if isinstance(r0, list):
        r0 = np.asarray(r0, dtype=float)
    else:
        r0 = float(r0) if not math.isinf(float(r0)) else math.inf
    cent = np.asarray(sp_d["centroids"], dtype=float)
    if cent.size == 0:
        cent = cent.reshape(0, 0, int(sp_d.get("dim", 1)))
    sparse = SparseKernelParams(
        scale=sp_d["scale"],
        wendland_radius=r0,
        centroids=cent,
        amplitudes=np.asarray(sp_d["amplitudes"], dtype=float).reshape(cent.shape[:2]),
        shapes=np.asarray(sp_d["shapes"], dtype=float).reshape(cent.shape[:2]),
        radii=np.asarray(sp_d["radii"], dtype=float).reshape(cent.shape[:2]),
        inclusion_probs=np.asarray(sp_d["inclusion_probs"], dtype=float).reshape(cent.shape[:2]),
    )
    noise_d = d.get("noise", {"type": "homoskedastic", "tau2": 0.0})
    if noise_d["type"] == "homoskedastic":
        noise = HomoskedasticNoise(tau2=noise_d["tau2"])
    else:
        noise = HeteroskedasticNoise(tau2=np.asarray(noise_d["tau2"], dtype=float))
    return KernelHyperparameters(core=core, sparse=sparse, noise=noise)


# ---------------------------------------------------------------------------
# tabular data
# ---------------------------------------------------------------------------


def read_table(path):
    """Read a delimited data file with header columns x1..xd, z, w1..wp, tau2.

    Rows with a missing ``z`` are dropped (with a logged count); any other
    non-numeric field is a validation error naming the offending row.
    Returns ``(x, z, w, tau2_or_None, n_dropped)``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header_line = fh.readline().strip()
            if not header_line:
                raise DataValidationError(f"{path}: empty file")
            names = [c.strip() for c in header_line.split(",")]
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise DataValidationError(f"cannot read data file {path}: {exc}") from exc

    x_cols = _prefixed(names, "x")
    w_cols = _prefixed(names, "w")
    if not x_cols:
        raise DataValidationError(f"{path}: no coordinate columns x1..xd found")
    has_z = "z" in names
    z_idx = names.index("z") if has_z else None
    tau_idx = names.index("tau2") if "tau2" in names else None

    known = {names.index(c) for c in x_cols} | {names.index(c) for c in w_cols}
    known |= {z_idx} if has_z else set()
    known |= {tau_idx} if tau_idx is not None else set()
    unknown = [names[i] for i in range(len(names)) if i not in known]
    if unknown:
        raise DataValidationError(f"{path}: unknown columns {unknown}")

    x_idx = [names.index(c) for c in x_cols]
    w_idx = [names.index(c) for c in w_cols]
    xs, zs, ws, taus = [], [], [], []
    dropped = 0
    for r, row in enumerate(rows, start=2):  # data starts at line 2
        fields = [f.strip() for f in row.split(",")]
        if len(fields) != len(names):
            raise DataValidationError(f"{path}: row {r} has {len(fields)} fields, expected {len(names)}")
        if has_z and fields[z_idx] in ("", "NA", "nan", "NaN"):
            dropped += 1
            continue
        try:
            xs.append([float(fields[i]) for i in x_idx])
            ws.append([float(fields[i]) for i in w_idx])
            if has_z:
                zs.append(float(fields[z_idx]))
            if tau_idx is not None:
                taus.append(float(fields[tau_idx]))
        except ValueError as exc:
            raise DataValidationError(f"{path}: non-numeric value in row {r}: {exc}") from exc
    if dropped:
        logger.info("%s: dropped %d rows with missing z", path, dropped)
    n = len(xs)
    x = np.asarray(xs, dtype=float).reshape(n, len(x_idx))
    z = np.asarray(zs, dtype=float) if has_z else None
    w = np.asarray(ws, dtype=float).reshape(n, len(w_idx))
    tau2 = np.asarray(taus, dtype=float) if tau_idx is not None else None
    return x, z, w, tau2, dropped


def _prefixed(names, prefix):
    cols = []
    k = 1
    while f"{prefix}{k}" in names:
        cols.append(f"{prefix}{k}")
        k += 1
    return cols


# ---------------------------------------------------------------------------
# atomic writers (no partial primary outputs on failure)
# ---------------------------------------------------------------------------


def write_text_atomic(path, text: str) -> None:
    path = str(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv_atomic(path, header, rows) -> None:
    """CSV with shortest round-trip float formatting (byte-reproducible)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")
