"""Manifold configuration."""

from dataclasses import dataclass
import math

from .._validation import check_choice, check_positive
from ..exceptions import ConfigurationError

KINDS = ("torus", "sphere")
VARIANTS = ("hodge", "bochner", "deformation")

# Multiple of Ric added to the Hodge Laplacian on divergence-free fields.
_RIC_MULTIPLE = {"hodge": 0, "bochner": 1, "deformation": 2}


@dataclass(frozen=True)
class ManifoldConfig:
    """Backend selection: unit-square flat torus or unit round sphere.

    Parameters
    ----------
    kind : {"torus", "sphere"}
    cutoff : float
        Strict upper bound on the retained eigenvalues of sqrt(-Laplacian).
    laplacian_variant : {"hodge", "bochner", "deformation"}
        Vector Laplacian used in the viscous term.
    """

    kind: str
    cutoff: float
    laplacian_variant: str = "hodge"

    def __post_init__(self):
        check_choice(self.kind, "kind", KINDS)
        check_choice(self.laplacian_variant, "laplacian_variant", VARIANTS)
        check_positive(self.cutoff, "cutoff")
        if not self.cutoff > self.lambda1:
            raise ConfigurationError(
                f"cutoff {self.cutoff!r} must exceed lambda1 = {self.lambda1!r} "
                f"on the {self.kind} (otherwise only the constant mode survives)"
            )

    @property
    def lambda1(self):
        return 2.0 * math.pi if self.kind == "torus" else math.sqrt(2.0)

    @property
    def ric_shift(self):
        """Constant c with Delta_M = Delta_H + c on divergence-free fields.

        Ric vanishes on the flat torus; on the unit sphere Ric is the
        identity on vector fields.
        """
        if self.kind == "torus":
            return 0.0
        return float(_RIC_MULTIPLE[self.laplacian_variant])

    @property
    def harmonic_dim(self):
        """First Betti number: dimension of the harmonic vector fields."""
        return 2 if self.kind == "torus" else 0

    def with_variant(self, variant):
        return ManifoldConfig(self.kind, self.cutoff, variant)

    def to_dict(self):
        return {
            "kind": self.kind,
            "cutoff": self.cutoff,
            "laplacian_variant": self.laplacian_variant,
        }
