"""
Pydantic schemas: degree distributions, design bundles, run configurations,
BER reports and run manifests.
"""
import hashlib
import json
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (DESIGN_V_MAX, DESIGN_DELTA, DESIGN_ROUNDS, BP_MAX_ITER, BLOCKLENGTH,
                    FRAME_ERROR_TARGET, FRAME_BUDGET, DEFAULT_THREADS, OPT_SEED_GRID,
                    OPT_SEED_KEEP, OPT_SWEEPS, SNR_CONVENTION, TOOL_VERSION)
from gmac.errors import DesignError
from gmac.numerics import wilson_interval

# Published fractions are rounded to four decimals
RENORMALIZE_TOL = 1e-3


class DegreeDistribution(BaseModel):
    """Edge-perspective lambda(x) with a concentrated check degree d_c."""
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    lambdas: Dict[int, float] = Field(alias="lambda")
    d_c: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_fractions(self):
        if not self.lambdas:
            raise ValueError("lambda needs at least one degree")
        if min(self.lambdas) < 2:
            raise ValueError("variable degrees start at 2")
        if any(v < -1e-12 for v in self.lambdas.values()):
            raise ValueError("edge fractions must be nonnegative")
        total = sum(self.lambdas.values())
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValueError(f"edge fractions sum to {total:.6f}, not 1")
        cleaned = {int(j): max(0.0, v) / total for j, v in sorted(self.lambdas.items()) if v > 1e-12}
        object.__setattr__(self, "lambdas", cleaned)
        return self

    @classmethod
    def regular(cls, degree, d_c):
        return cls(lambdas={degree: 1.0}, d_c=d_c)

    @classmethod
    def from_vector(cls, degrees, fractions, d_c, floor=1e-9):
        """Build from LP output, dropping fractions below floor."""
        fractions = np.clip(np.asarray(fractions, dtype=float), 0.0, None)
        keep = fractions > floor
        fractions = fractions[keep] / fractions[keep].sum()
        return cls(lambdas={int(j): float(v) for j, v in zip(np.asarray(degrees)[keep], fractions)}, d_c=d_c)

    @property
    def degrees(self):
        return np.array(sorted(self.lambdas), dtype=int)

    @property
    def fractions(self):
        return np.array([self.lambdas[j] for j in sorted(self.lambdas)])

    @property
    def max_degree(self):
        return max(self.lambdas)

    def edges_per_node(self):
        """Sum_j lambda_j / j."""
        return float(np.sum(self.fractions / self.degrees))

    def node_perspective(self) -> Dict[int, float]:
        weights = self.fractions / self.degrees
        weights = weights / weights.sum()
        return {int(j): float(w) for j, w in zip(self.degrees, weights)}

    def design_rate(self):
        rate = 1.0 - (1.0 / self.d_c) / self.edges_per_node()
        if rate <= 0.0:
            raise DesignError(f"Design rate {rate:.4f} is not positive (check degree {self.d_c} too small)")
        return rate


class LevelDesign(BaseModel):
    """One designed code: {user, level, dsnr_db, constellation, d_c, lambda, design_rate}."""
    model_config = ConfigDict(populate_by_name=True)

    user: int = Field(ge=1, le=2)
    level: int = Field(ge=1)
    dsnr_db: float
    constellation: str
    d_c: int = Field(ge=2)
    lambdas: Dict[int, float] = Field(alias="lambda")
    design_rate: Optional[float] = None

    @model_validator(mode="after")
    def _fill_rate(self):
        if self.design_rate is None:
            self.design_rate = self.distribution().design_rate()
        return self

    @classmethod
    def from_distribution(cls, dd: DegreeDistribution, user, level, dsnr_db, constellation):
        return cls(user=user, level=level, dsnr_db=dsnr_db, constellation=constellation,
                   d_c=dd.d_c, lambdas=dict(dd.lambdas), design_rate=dd.design_rate())

    def distribution(self) -> DegreeDistribution:
        return DegreeDistribution(lambdas=self.lambdas, d_c=self.d_c)


class DesignBundle(BaseModel):
    """All level codes of one constellation at one design SNR."""
    id: Optional[str] = None
    constellation: str
    points: Optional[Dict] = None
    dsnr_db: float
    snr_convention: str = SNR_CONVENTION
    order: List[int] = Field(default_factory=lambda: [1, 2])
    capacities: List[float] = Field(default_factory=list)
    codes: List[LevelDesign]
    traces: Dict[str, List[Dict]] = Field(default_factory=dict)
    failures: Dict[str, str] = Field(default_factory=dict)
    notes: Optional[str] = None

    @property
    def levels(self):
        return sorted({c.level for c in self.codes})

    @property
    def sum_rate(self):
        return float(sum(c.design_rate for c in self.codes))

    @property
    def sum_capacity(self):
        return float(sum(self.capacities))

    def code(self, user, level) -> LevelDesign:
        for c in self.codes:
            if c.user == user and c.level == level:
                return c
        raise DesignError(f"Bundle has no code for user {user}, level {level}")

    def summary(self):
        return {"id": self.id, "constellation": self.constellation, "dsnr_db": self.dsnr_db,
                "sum_rate": round(self.sum_rate, 4), "sum_capacity": round(self.sum_capacity, 4)}


# --- Run configurations -------------------------------------------------------

class CapacityConfig(BaseModel):
    constellations: List[str] = Field(default_factory=lambda: ["MC", "SP", "OPT"])
    snr_db: List[float] = Field(default_factory=lambda: [10.0, 18.0])
    convention: str = SNR_CONVENTION
    order: Optional[List[int]] = None

    @field_validator("snr_db", "constellations")
    @classmethod
    def _nonempty(cls, value):
        if not value:
            raise ValueError("must not be empty")
        return value


class OptimizeConfig(BaseModel):
    snr_db: float
    L: int = Field(default=2, ge=1)
    convention: str = SNR_CONVENTION
    seed_grid: int = Field(default=OPT_SEED_GRID, ge=1)
    keep: int = Field(default=OPT_SEED_KEEP, ge=1)
    sweeps: int = Field(default=OPT_SWEEPS, ge=1)
    seed: int = 0
    threads: int = Field(default=DEFAULT_THREADS, ge=1)


class DesignConfig(BaseModel):
    constellation: str
    snr_db: float
    convention: str = SNR_CONVENTION
    order: Optional[List[int]] = None
    dc: Optional[List[int]] = None              # fixed check degree per level
    dc_range: Tuple[int, int] = (4, 12)         # searched when dc is not given
    v_max: int = Field(default=DESIGN_V_MAX, ge=3)
    delta: float = Field(default=DESIGN_DELTA, gt=0.0, le=0.1)
    rounds: int = Field(default=DESIGN_ROUNDS, ge=1)
    threads: int = Field(default=DEFAULT_THREADS, ge=1)

    @field_validator("dc_range")
    @classmethod
    def _ordered(cls, value):
        lo, hi = value
        if lo < 2 or hi < lo:
            raise ValueError("dc_range must satisfy 2 <= low <= high")
        return value


class ConstructConfig(BaseModel):
    bundle: str
    n: int = Field(default=BLOCKLENGTH, ge=100)
    seed: int = 0


class SimConfig(BaseModel):
    """Monte-Carlo run; the channel constellation may differ from the design one."""
    bundle: str
    graphs_dir: Optional[str] = None
    channel_constellation: Optional[str] = None
    snr_db: List[float]
    convention: str = SNR_CONVENTION
    frames: int = Field(default=FRAME_BUDGET, ge=1)
    error_target: int = Field(default=FRAME_ERROR_TARGET, ge=1)
    max_iter: int = Field(default=BP_MAX_ITER, ge=1)
    seed: int = 0
    genie: bool = False
    threads: int = Field(default=DEFAULT_THREADS, ge=1)

    @field_validator("snr_db")
    @classmethod
    def _nonempty(cls, value):
        if not value:
            raise ValueError("SNR list must not be empty")
        return value


def config_hash(config: BaseModel):
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# --- Reports ------------------------------------------------------------------------

class ComponentStats(BaseModel):
    """Counts for one (snr, user, level)."""
    snr_db: float
    user: int
    level: int
    bit_errors: int = 0
    bits: int = 0
    frame_errors: int = 0
    frames: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self):
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def ber_interval(self):
        """Wilson 95% interval, reported while fewer than 100 errors are seen."""
        if self.bit_errors >= 100:
            return None
        return wilson_interval(self.bit_errors, self.bits)


class BerReport(BaseModel):
    channel_constellation: str
    design: str
    components: List[ComponentStats] = Field(default_factory=list)
    runtime_s: float = 0.0
    seed: int = 0

    @property
    def snr_points(self):
        return sorted({c.snr_db for c in self.components})

    def at(self, snr_db):
        return [c for c in self.components if math.isclose(c.snr_db, snr_db)]

    def averaged(self) -> Dict[float, float]:
        """BER averaged over users and levels per SNR."""
        return {snr: float(np.mean([c.ber for c in self.at(snr)])) for snr in self.snr_points}

    def averaged_fer(self) -> Dict[float, float]:
        return {snr: float(np.mean([c.fer for c in self.at(snr)])) for snr in self.snr_points}

    def to_json(self):
        payload = self.model_dump(mode="json")
        payload["averaged"] = [{"snr_db": s, "ber": b} for s, b in self.averaged().items()]
        return payload


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: Optional[int] = None
    tool_version: str = TOOL_VERSION
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = Field(default_factory=list)
    status: str = "ok"
