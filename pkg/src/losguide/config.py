"""Weight and tolerance bundles shared by scenarios, subproblems and the driver."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Weights:
    """Subproblem objective weights.

    ``virtual_buffer`` only enters the discrete-time baseline; ``eps_licq``
    bounds the per-interval growth of the violation integral.
    """

    objective: float = 1.0
    trust_region: float = 5.0
    virtual_control: float = 1e2
    virtual_buffer: float = 1e2
    eps_licq: float = 1e-4

    def __post_init__(self):
        if self.trust_region <= 0 or self.virtual_control <= 0:
            raise ValueError("trust_region and virtual_control weights must be positive")
        if self.objective < 0 or self.virtual_buffer < 0 or self.eps_licq < 0:
            raise ValueError("weights must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Tolerances:
    eps_tr: float = 1e-3
    eps_vc: float = 1e-6
    eps_vb: float = 1e-6
    k_max: int = 200
    # nonlinear defect of the accepted reference; the violation integral is
    # held to the per-interval LICQ cap instead
    eps_defect: float = 1e-4

    def __post_init__(self):
        if min(self.eps_tr, self.eps_vc, self.eps_vb, self.eps_defect) <= 0:
            raise ValueError("convergence tolerances must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")

    def as_dict(self) -> dict:
        return asdict(self)


# Default weight sweep: objective weight x trust-region weight.
DEFAULT_WEIGHT_SETS = {
    f"obj{o:g}_tr{t:g}": Weights(objective=o, trust_region=t)
    for o in (0.1, 1.0, 10.0)
    for t in (0.5, 5.0)
}
