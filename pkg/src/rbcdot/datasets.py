"""Seeded instance generators for the experiment families."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .core import CostMatrix, OTInstance
from .working_set import make_rng

SCHEMA = "rbcdot.instance/1"

FAMILIES = (
    "hist-1d-normal", "hist-1d-shuffled", "cloud-2d", "cloud-3d", "cloud-gauss-3d",
    "cloud-curve", "cloud-cylinder-spiral", "large-1d",
)

# Covariance-like maps of the 3-d affine families.
SIGMA_3D = {
    "ds4": np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]]),
    "ds5": np.array([[1.0, 0.8, 0.64], [0.8, 1.0, 0.8], [0.64, 0.8, 1.0]]),
}

# Stand-in for the simulated 2-d invariant measure: a fixed 4-component mixture.
MIXTURE_2D = {
    "means": np.array([[-np.pi / 2, -np.pi / 2], [np.pi / 2, np.pi / 2],
                       [-np.pi / 2, np.pi / 2], [np.pi / 2, -np.pi / 2]]),
    "scales": np.array([0.35, 0.35, 0.6, 0.6]),
    "weights": np.array([0.35, 0.35, 0.15, 0.15]),
}


@dataclass
class DatasetSpec:
    family: str
    n: int
    seed: int = 0
    p_exp: float = 2.0
    variant: Optional[str] = None
    shuffle_seed: Optional[int] = None
    lazy_cost: Optional[bool] = None

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")


@dataclass
class GeneratedInstance:
    instance: OTInstance
    source: np.ndarray
    target: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def c_max(self) -> float:
        return self.instance.cost.raw_max


def sqrtm_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def hist_centers(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return (i - (n + 1) / 2) / ((n - 1) / 2)


def _uniform(n):
    return np.full(n, 1.0 / n)


def _normalize(w):
    w = np.asarray(w, dtype=np.float64)
    return w / w.sum()


def _mixture_2d(rng, n):
    comp = rng.choice(4, size=n, p=MIXTURE_2D["weights"])
    pts = MIXTURE_2D["means"][comp] + rng.standard_normal((n, 2)) * MIXTURE_2D["scales"][comp, None]
    # wrap onto the periodic cell [-pi, pi]^2
    return (pts + np.pi) % (2 * np.pi) - np.pi


def generate(spec: DatasetSpec) -> GeneratedInstance:
    spec.validate()
    n, fam = spec.n, spec.family
    rng = make_rng(spec.seed)
    meta = {"family": fam, "n": n, "seed": spec.seed, "p_exp": spec.p_exp}
    if fam in ("hist-1d-normal", "hist-1d-shuffled"):
        y = hist_centers(n)
        r1 = _normalize(norm.pdf(y))
        if fam == "hist-1d-shuffled":
            sseed = spec.seed if spec.shuffle_seed is None else spec.shuffle_seed
            r1 = r1[make_rng(sseed).permutation(n)]
            meta["shuffle_seed"] = sseed
        src, dst, r2 = y[:, None], y[:, None], _uniform(n)
    elif fam == "large-1d":
        x = np.linspace(-1.0, 1.0, n)
        xt = x[rng.permutation(n)] + rng.uniform(-0.5, 0.5, size=n)
        src, dst = x[:, None], xt[:, None]
        r1, r2 = _uniform(n), _normalize(norm.pdf(xt))
    elif fam == "cloud-2d":
        src = rng.uniform(-np.pi, np.pi, size=(n, 2))
        dst = _mixture_2d(rng, n)
        meta["substitution"] = "target is a synthetic 4-component Gaussian mixture"
        r1 = r2 = _uniform(n)
    elif fam == "cloud-3d":
        src = rng.uniform(-1.0, 1.0, size=(n, 3))
        dst = rng.standard_normal((n, 3))
        r1 = r2 = _uniform(n)
    elif fam == "cloud-gauss-3d":
        key = spec.variant or "ds4"
        root = sqrtm_psd(SIGMA_3D[key])
        src = rng.uniform(0, 1, size=(n, 3)) @ root.T
        dst = 2.0 * rng.uniform(0, 1, size=(n, 3)) @ root.T - 1.0
        meta["variant"] = key
        r1 = r2 = _uniform(n)
    elif fam == "cloud-curve":
        key = spec.variant or "ds6"
        if key == "ds6":
            S = np.array([[1, 0, 1, 1], [0, 1, 1, -1]], dtype=float).T
            src = rng.uniform(0, 2 * np.pi, size=(n, 2)) @ S.T
            dst = rng.uniform(-1, 1, size=(n, 2)) @ S.T
        elif key == "ds7":
            ones = np.ones(10)
            src = rng.uniform(0, 2 * np.pi, size=(n, 1)) * ones
            dst = rng.uniform(-1, 1, size=(n, 1)) * np.arange(1, 11) + ones
        else:
            raise ValueError(f"unknown cloud-curve variant {key!r}")
        meta["variant"] = key
        r1 = r2 = _uniform(n)
    else:  # cloud-cylinder-spiral
        th = rng.uniform(0, 2 * np.pi, n)
        h = rng.uniform(0, 2, n)
        src = np.column_stack([np.cos(th), np.sin(th), h])
        t = rng.uniform(0, 1, n)
        dst = np.column_stack([t * np.cos(4 * np.pi * t), t * np.sin(4 * np.pi * t), 2 * t])
        r1 = r2 = _uniform(n)
    lazy = spec.lazy_cost if spec.lazy_cost is not None else n >= 4000
    cost = CostMatrix.from_points(src, dst, spec.p_exp, normalize=True, lazy=lazy)
    meta["c_max"] = cost.raw_max
    return GeneratedInstance(OTInstance(cost, r1, r2), np.asarray(src), np.asarray(dst), meta)


def cost_from_points(src, dst, p_exp: float = 2.0) -> CostMatrix:
    """Normalized ``||src_i - dst_j||**p_exp``."""
    return CostMatrix.from_points(src, dst, p_exp, normalize=True)


def to_json(gen: GeneratedInstance, spec: Optional[DatasetSpec] = None) -> str:
    """Serialize points and weights; the cost is recomputed on load."""
    doc = {
        "schema": SCHEMA,
        "spec": asdict(spec) if spec is not None else None,
        "metadata": gen.metadata,
        "p_exp": gen.instance.cost.p_exp,
        "source": gen.source.tolist(),
        "target": gen.target.tolist(),
        "r1": gen.instance.r1.tolist(),
        "r2": gen.instance.r2.tolist(),
    }
    return json.dumps(doc)


def from_json(text: str) -> GeneratedInstance:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    src = np.asarray(doc["source"], dtype=np.float64)
    dst = np.asarray(doc["target"], dtype=np.float64)
    lazy = src.shape[0] >= 4000
    cost = CostMatrix.from_points(src, dst, doc["p_exp"], normalize=True, lazy=lazy)
    inst = OTInstance(cost, np.asarray(doc["r1"]), np.asarray(doc["r2"]))
    return GeneratedInstance(inst, src, dst, doc.get("metadata", {}))
