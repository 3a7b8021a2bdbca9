"""
Run configuration schemas for the cusp command line.

Config files are JSON or YAML; every section rejects unknown keys.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from geometry.maps import DiskGeometry
from models.dirichlet import FourierBoundary, analyze_boundary
from models.medium import INCLUSION1, INCLUSION2, MATRIX, ConfigError, MediumParams, TruncationPolicy
from models.potential import PiecewiseField, QuadratureSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class MediumConfig(_Section):
    a0: float = 1.0
    b0: float = 1.0
    R0: float = 3.0

    @field_validator('a0', 'b0', 'R0')
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (np.isfinite(v) and v > 0):
            raise ValueError('must be positive and finite')
        return v

    def build(self) -> MediumParams:
        return MediumParams(a0=self.a0, b0=self.b0, R0=self.R0)


class GeometryConfig(_Section):
    r1: float = 1.0
    r2: float = 1.0

    @field_validator('r1', 'r2')
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError('radii must be positive')
        return v

    def build(self) -> DiskGeometry:
        return DiskGeometry(self.r1, self.r2)


class TruncationConfig(_Section):
    mode: Literal['tail-target', 'fixed-K'] = 'tail-target'
    k_max: int = Field(4000, ge=1)
    tail_tol: float = 1e-12
    solve_tol: float = 1e-10
    n_quad: int = 1024

    @field_validator('tail_tol', 'solve_tol')
    @classmethod
    def _tol(cls, v: float) -> float:
        if not v > 0:
            raise ValueError('tolerances must be positive')
        return v

    @field_validator('n_quad')
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v < 256 or v & (v - 1):
            raise ValueError('n_quad must be a power of two >= 256')
        return v

    def build(self) -> TruncationPolicy:
        return TruncationPolicy(mode=self.mode, k_max=self.k_max, tail_tol=self.tail_tol)


class QuadratureConfig(_Section):
    n_radial: int = Field(48, ge=2)
    n_angular: int = Field(96, ge=2)
    n_strip_s: int = Field(32, ge=2)
    n_strip_u: int = Field(48, ge=2)
    n_patch_radial: int = Field(16, ge=2)
    n_patch_angular: int = Field(32, ge=2)
    patch_radius: float = 0.25
    patch_min: float = 1e-3
    tol: float = 1e-6
    max_refinements: int = Field(1, ge=1, le=4)
    n_boundary: int = 512

    def build(self) -> QuadratureSpec:
        return QuadratureSpec(**self.model_dump(exclude={'n_boundary'}))


class BoundaryConfig(_Section):
    """g on |x| = R0: trig modes in theta, or raw samples on the uniform grid."""

    type: Literal['fourier', 'samples'] = 'fourier'
    cos: Dict[int, float] = Field(default_factory=dict)
    sin: Dict[int, float] = Field(default_factory=dict)
    data: List[float] = Field(default_factory=list)

    @model_validator(mode='after')
    def _consistent(self) -> 'BoundaryConfig':
        if self.type == 'samples':
            n = len(self.data)
            if n < 256 or n & (n - 1):
                raise ValueError('samples need a power-of-two length >= 256')
        if any(l < 0 for l in list(self.cos) + list(self.sin)):
            raise ValueError('mode numbers must be non-negative')
        return self

    def theta_function(self):
        if self.type == 'samples':
            data = np.asarray(self.data, dtype=float)
            n = len(data)

            def g(theta):
                idx = np.rint(np.asarray(theta) * n / (2.0 * np.pi)).astype(int) % n
                return data[idx]

            return g

        def g(theta):
            theta = np.asarray(theta, dtype=float)
            out = np.zeros_like(theta)
            for l, c in self.cos.items():
                out += c * np.cos(l * theta)
            for l, c in self.sin.items():
                out += c * np.sin(l * theta)
            return out

        return g

    def build(self, R0: float) -> FourierBoundary:
        if self.type == 'samples':
            return analyze_boundary(self.data, R0)
        return FourierBoundary.from_modes(R0, self.cos, self.sin)


class RhsConfig(_Section):
    """Piecewise-constant vector field f, one (f1, f2) pair per bulk region."""

    inclusion1: Optional[List[float]] = None
    inclusion2: Optional[List[float]] = None
    matrix: Optional[List[float]] = None

    @field_validator('inclusion1', 'inclusion2', 'matrix')
    @classmethod
    def _pair(cls, v):
        if v is not None and len(v) != 2:
            raise ValueError('field values are (f1, f2) pairs')
        return v

    def build(self) -> PiecewiseField:
        values = {}
        for region, v in ((INCLUSION1, self.inclusion1), (INCLUSION2, self.inclusion2), (MATRIX, self.matrix)):
            if v is not None and (v[0] or v[1]):
                values[region] = complex(v[0], v[1])
        return PiecewiseField.constant(values) if values else PiecewiseField.zero()


class OutputConfig(_Section):
    directory: str = './output'
    prefix: str = 'cusp'
    grid: int = Field(64, ge=2)


class OracleConfig(_Section):
    h: float = 1.0 / 128
    method: Literal['direct', 'cg'] = 'direct'
    norm: Literal['L2', 'Linf'] = 'L2'
    stride: int = Field(1, ge=1)


class RunConfig(_Section):
    medium: MediumConfig = Field(default_factory=MediumConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    rhs: RhsConfig = Field(default_factory=RhsConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 42

    def config_hash(self) -> str:
        """First 16 hex chars of the SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]

    def header(self, **extra: Any) -> Dict[str, Any]:
        lines = {
            'config_hash': self.config_hash(),
            'tail_tol': repr(self.truncation.tail_tol),
        }
        lines.update(extra)
        return lines

    def output_path(self, stem: str, suffix: str = 'csv') -> Path:
        out = Path(self.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        return out / f"{self.output.prefix}_{stem}.{suffix}"


def _deep_update(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_update(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read a JSON or YAML config and apply flag overrides on top.

    Raises:
        ConfigError: unreadable file or a document that is not a mapping
        pydantic.ValidationError: schema violations
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        with open(path, 'r') as f:
            text = f.read()
        raw = json.loads(text) if path.suffix == '.json' else yaml.safe_load(text)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"Config {path} must contain a mapping at top level")
    if overrides:
        raw = _deep_update(raw, overrides)
    return RunConfig.model_validate(raw)
